"""Residual and invariant checks behind the ``verify`` command."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import leads as _leads
from .config import RunConfig
from .leads import ExceptionalEnergyError
from .model import band, lead_vectors, open_channels
from .scattering import (
    NearSingularError,
    friedrichs_params,
    friedrichs_reference_t,
    scattering_residuals,
    t_matrix,
)
from .transport import positivity_verdict, transport

log = logging.getLogger(__name__)

RECIPROCITY_TOL = 1e-10
FRIEDRICHS_TOL = 1e-8
SOKHOTSKI_TOL = 1e-10


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def _is_friedrichs(model) -> bool:
    try:
        friedrichs_params(model)
    except ValueError:
        return False
    return True


def run_checks(cfg: RunConfig) -> list[Check]:
    model = cfg.model
    tol = cfg.options["tol_scatter"]
    tq = cfg.options["tol_quad"]
    energies = [E for E in cfg.energies if open_channels(model, E)]
    if not energies:
        log.warning("event=no_open_channels grid=%s", ":".join(map(str, cfg.options["grid"])))

    worst = dict(optical=0.0, unitarity=0.0, normality=0.0, rowcol=0.0)
    recip = 0.0
    friedrichs = 0.0
    fparams = friedrichs_params(model) if _is_friedrichs(model) else None
    for E in energies:
        try:
            T = t_matrix(model, E, tol_pole=cfg.options["tol_pole"], cond_max=cfg.options["cond_max"])
        except (ExceptionalEnergyError, NearSingularError) as exc:
            log.warning("event=exceptional_energy E=%r reason=%s", float(E), type(exc).__name__)
            continue
        r = scattering_residuals(T)
        for key in worst:
            worst[key] = max(worst[key], getattr(r, key))
        a = np.abs(T.entries)
        if len(model.leads) == 2 or model.is_real:
            recip = max(recip, float(np.max(np.abs(a - a.T))))
        if fparams is not None and len(T.channels) == 2:
            friedrichs = max(friedrichs, float(np.max(np.abs(T.entries - friedrichs_reference_t(fparams, E)))))

    checks = [Check(f"{k}_residual", v, tol) for k, v in worst.items()]
    if len(model.leads) == 2 or model.is_real:
        checks.append(Check("reciprocity", recip, RECIPROCITY_TOL))
    if fparams is not None:
        checks.append(Check("friedrichs_agreement", friedrichs, FRIEDRICHS_TOL))

    sok = 0.0
    for ld in model.leads:
        lo, hi = band(ld)
        vecs = [(1.0,)] + list(lead_vectors(model, ld.id))
        for E in np.linspace(lo, hi, 23)[1:-1]:
            for f in vecs:
                r = _leads.lead_resolvent(ld, E, f, f)
                fe = _leads.generalized_fourier(ld, E, f)
                sok = max(sok, abs(r.imag - np.pi * abs(fe) ** 2) / max(1.0, abs(r)))
    checks.append(Check("sokhotski", sok, SOKHOTSKI_TOL))

    if cfg.states:
        res = transport(model, cfg.states, tq, tol_pole=cfg.options["tol_pole"])
        jscale = max(float(np.max(np.abs(res.charge_currents))), 1e-300)
        escale = max(float(np.max(np.abs(res.energy_currents))), 1e-300)
        checks.append(Check("charge_conservation", res.charge_balance / jscale, 10 * tq))
        checks.append(Check("energy_conservation", res.energy_balance / escale, 10 * tq))
        sscale = max(1.0, abs(res.sigma_direct))
        checks.append(
            Check("entropy_routes_currents_vs_direct", abs(res.sigma_from_currents - res.sigma_direct), 10 * tq * sscale)
        )
        if model.is_real:
            checks.append(
                Check("entropy_routes_symmetrized_vs_direct", abs(res.sigma_symmetrized - res.sigma_direct), 10 * tq * sscale)
            )
        verdict = positivity_verdict(model, cfg.states, tq, result=res)
        checks.append(Check("entropy_positivity", 0.0 if verdict.holds else 1.0, 0.0))
    return checks
