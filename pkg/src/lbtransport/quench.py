"""Finite-size quench: couple truncated leads to the scatterer at t=0 and
follow the exact one-particle dynamics.

The initial one-particle density is block diagonal, Fermi-Dirac on every
lead and a constant occupation on the scatterer.  Currents are traces of
the evolved density against commutators with the coupling, evaluated in the
eigenbasis of the full finite Hamiltonian, so every time point is exact up
to round-off.  The only approximation is the lead length, which is why the
averaging window has to close before the fastest wave returns from the
far end of a lead.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.special import expit

from .model import ReservoirState, SystemModel
from .quadrature import TOL_QUAD
from .scattering import all_bound_states
from .transport import _states_by_lead, transport

log = logging.getLogger(__name__)

ECHO_SAFETY = 0.8
SITE_MARGIN = 10

__all__ = [
    "FiniteSystem",
    "QuenchReport",
    "WindowError",
    "build_finite",
    "finite_hamiltonian",
    "echo_bound",
    "transient_current",
    "current_series",
    "steady_compare",
    "standard_window",
]


class WindowError(ValueError):
    pass


@dataclass
class FiniteSystem:
    model: SystemModel
    L: int
    states: dict
    scatterer_occupation: float
    offsets: dict  # lead id -> first index of the lead block
    h0: np.ndarray
    v: np.ndarray
    f0: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    def lead_slice(self, lead_id: int) -> slice:
        o = self.offsets[lead_id]
        return slice(o, o + self.L)

    @property
    def scatterer_slice(self) -> slice:
        return slice(0, self.model.scatterer.dim)

    def projector_diag(self, lead_id: int | None) -> np.ndarray:
        p = np.zeros(self.dim)
        p[self.scatterer_slice if lead_id is None else self.lead_slice(lead_id)] = 1.0
        return p


def _place(vec, n) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    out[: len(vec)] = vec
    return out


def finite_hamiltonian(model: SystemModel, L: int) -> tuple[np.ndarray, np.ndarray, dict]:
    """Dense ``H0`` and ``V`` with ``L`` sites per lead, plus the lead block offsets.

    Index order: scatterer first, then each lead (site 1 first) in
    ``model.leads`` order.
    """
    M = model.scatterer.dim
    D = M + L * len(model.leads)
    offsets = {ld.id: M + i * L for i, ld in enumerate(model.leads)}
    h0 = np.zeros((D, D), dtype=complex)
    h0[:M, :M] = model.scatterer.array
    for ld in model.leads:
        idx = np.arange(offsets[ld.id], offsets[ld.id] + L)
        h0[idx, idx] = ld.onsite
        h0[idx[:-1], idx[1:]] = ld.hopping
        h0[idx[1:], idx[:-1]] = ld.hopping

    v = np.zeros((D, D), dtype=complex)
    for c in model.couplings:
        o = offsets[c.lead]
        blk = c.strength * np.outer(_place(c.scatterer_vector, M), _place(c.lead_vector, L).conj())
        v[:M, o : o + L] += blk
        v[o : o + L, :M] += blk.conj().T
    for c in model.contacts:
        oj, ok = offsets[c.leads[0]], offsets[c.leads[1]]
        blk = c.strength * np.outer(_place(c.vector_j, L), _place(c.vector_k, L).conj())
        v[oj : oj + L, ok : ok + L] += blk
        v[ok : ok + L, oj : oj + L] += blk.conj().T
    return h0, v, offsets


def build_finite(
    model: SystemModel,
    L: int,
    states,
    scatterer_occupation: float = 0.0,
) -> FiniteSystem:
    """Dense truncated realization with ``L`` sites per lead (open far ends).

    The initial density is ``f_FD(H_j)`` on every truncated lead, built in
    the lead's own eigenbasis, and ``scatterer_occupation`` times the
    identity on the scatterer.  ``H0 + V`` is diagonalized once.
    """
    L = int(L)
    need = max((max(ld.coupling_sites, default=0) for ld in model.leads), default=0) + SITE_MARGIN
    if L < need:
        raise ValueError(f"lead length L={L} too small; need at least {need}")
    if not 0.0 <= scatterer_occupation <= 1.0:
        raise ValueError("scatterer occupation must lie in [0, 1]")
    by_lead = _states_by_lead(model, states)
    M = model.scatterer.dim
    h0, v, offsets = finite_hamiltonian(model, L)

    f0 = np.zeros_like(h0)
    f0[:M, :M] = scatterer_occupation * np.eye(M)
    for ld in model.leads:
        o = offsets[ld.id]
        w, U = eigh_tridiagonal(np.full(L, ld.onsite), np.full(L - 1, ld.hopping))
        occ = expit(-by_lead[ld.id].x(w))
        f0[o : o + L, o : o + L] = (U * occ) @ U.T

    H = h0 + v
    if np.all(H.imag == 0):
        lam, U = eigh(H.real)
    else:
        lam, U = eigh(H)
    return FiniteSystem(model, L, by_lead, scatterer_occupation, offsets, h0, v, f0, lam, U)


def echo_bound(fin: FiniteSystem) -> float:
    """Latest time before the fastest wave (speed ``2t``) returns from the far ends."""
    t_max = max(ld.hopping for ld in fin.model.leads)
    return ECHO_SAFETY * fin.L / (2 * t_max)


def standard_window(fin: FiniteSystem, t_end: float | None = None) -> tuple[float, float]:
    """``[T2/2, T2]`` with ``T2`` the echo bound (or ``t_end`` if smaller)."""
    T2 = echo_bound(fin) if t_end is None else min(t_end, echo_bound(fin))
    return (0.5 * T2, T2)


def _rotated(fin: FiniteSystem, A: np.ndarray) -> np.ndarray:
    """``U^H A U`` using only the rows/columns on which ``A`` is supported."""
    I = np.flatnonzero(np.any(A != 0, axis=0) | np.any(A != 0, axis=1))
    if len(I) == 0:
        return np.zeros((fin.dim, fin.dim), dtype=complex)
    Ui = fin.eigvecs[I, :]
    return Ui.conj().T @ A[np.ix_(I, I)] @ Ui


def _observables(fin: FiniteSystem) -> dict:
    """Eigenbasis kernels ``C = F~ * A~^T`` for every current observable (cached)."""
    if "kernels" in fin._cache:
        return fin._cache["kernels"]
    U = fin.eigvecs
    Ft = U.conj().T @ fin.f0 @ U
    kern = {}
    for ld in fin.model.leads:
        p = fin.projector_diag(ld.id)
        comm_n = fin.v * p[None, :] - p[:, None] * fin.v  # [V, P_k]
        hk = fin.h0 * np.outer(p, p)
        comm_e = fin.v @ hk - hk @ fin.v  # [V, P_k H0 P_k]
        kern[("charge", ld.id)] = Ft * _rotated(fin, comm_n).T
        kern[("energy", ld.id)] = Ft * _rotated(fin, comm_e).T
    pS = fin.projector_diag(None)
    H = fin.h0 + fin.v
    comm_s = H * pS[None, :] - pS[:, None] * H  # [H, P_S]
    kern[("scatterer", None)] = Ft * _rotated(fin, comm_s).T
    fin._cache["kernels"] = kern
    return kern


def _trace_series(fin: FiniteSystem, C: np.ndarray, times: np.ndarray) -> np.ndarray:
    """``Tr(rho(t) A)`` for all ``times`` given the kernel ``C = F~ * A~^T``."""
    u = np.exp(-1j * np.outer(times, fin.eigvals))
    return np.sum((u @ C) * u.conj(), axis=1)


@dataclass
class CurrentSeries:
    times: np.ndarray
    charge: dict
    energy: dict
    scatterer_rate: np.ndarray
    max_imag: float

    @property
    def balance_residual(self) -> float:
        """max_t |sum_k j_k(t) + e dN_S/dt|; exactly zero for exact dynamics."""
        tot = sum(self.charge.values()) + self.scatterer_rate
        return float(np.max(np.abs(tot)))


def current_series(fin: FiniteSystem, times) -> CurrentSeries:
    """Charge and energy currents out of every lead at the given times.

    ``j_k = i e Tr(rho(t) [V, P_k])`` and ``Phi_k = -i Tr(rho(t) [V, P_k H0 P_k])``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    e = fin.model.charge
    kern = _observables(fin)
    charge, energy = {}, {}
    max_imag = 0.0
    for ld in fin.model.leads:
        jn = 1j * e * _trace_series(fin, kern[("charge", ld.id)], times)
        je = -1j * _trace_series(fin, kern[("energy", ld.id)], times)
        max_imag = max(max_imag, float(np.max(np.abs(jn.imag))), float(np.max(np.abs(je.imag))))
        charge[ld.id] = jn.real
        energy[ld.id] = je.real
    rate = 1j * e * _trace_series(fin, kern[("scatterer", None)], times)
    max_imag = max(max_imag, float(np.max(np.abs(rate.imag))))
    return CurrentSeries(times, charge, energy, rate.real, max_imag)


def transient_current(fin: FiniteSystem, k: int, t: float) -> tuple[float, float]:
    """Charge and energy current out of lead ``k`` at time ``t``."""
    s = current_series(fin, [t])
    return float(s.charge[k][0]), float(s.energy[k][0])


@dataclass
class QuenchReport:
    L: int
    window: tuple[float, float]
    series: CurrentSeries
    mean_charge: dict
    mean_energy: dict
    band_charge: dict
    band_energy: dict
    lb_charge: dict
    lb_energy: dict
    rel_dev_charge: dict
    rel_dev_energy: dict
    bound_states: list
    warnings: list

    @property
    def max_rel_deviation(self) -> float:
        return max(list(self.rel_dev_charge.values()) + list(self.rel_dev_energy.values()))

    def summary(self) -> dict:
        key = lambda d: {str(k): v for k, v in d.items()}  # noqa: E731
        return {
            "lead_length": self.L,
            "window": list(self.window),
            "samples": int(len(self.series.times)),
            "mean_charge_current": key(self.mean_charge),
            "mean_energy_current": key(self.mean_energy),
            "fluctuation_band_charge": key(self.band_charge),
            "fluctuation_band_energy": key(self.band_energy),
            "landauer_buttiker_charge": key(self.lb_charge),
            "landauer_buttiker_energy": key(self.lb_energy),
            "relative_deviation_charge": key(self.rel_dev_charge),
            "relative_deviation_energy": key(self.rel_dev_energy),
            "balance_residual": self.series.balance_residual,
            "bound_states": self.bound_states,
            "warnings": self.warnings,
        }


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def steady_compare(
    fin: FiniteSystem,
    window: tuple[float, float] | None = None,
    samples: int = 201,
    tol_quad: float = TOL_QUAD,
) -> QuenchReport:
    """Average the quench currents over ``window`` and compare with Landauer-Buttiker."""
    T1, T2 = standard_window(fin) if window is None else map(float, window)
    bound = echo_bound(fin)
    if not 0 <= T1 < T2:
        raise WindowError(f"window [{T1}, {T2}] must satisfy 0 <= T1 < T2")
    if T2 > bound:
        raise WindowError(f"window end T2={T2} exceeds the echo bound {bound} for L={fin.L}")
    times = np.linspace(T1, T2, int(samples))
    series = current_series(fin, times)
    lb = transport(fin.model, fin.states, tol_quad)
    ids = fin.model.lead_ids
    lb_c = {lid: float(lb.charge_currents[i]) for i, lid in enumerate(ids)}
    lb_e = {lid: float(lb.energy_currents[i]) for i, lid in enumerate(ids)}
    mean_c = {lid: float(np.mean(series.charge[lid])) for lid in ids}
    mean_e = {lid: float(np.mean(series.energy[lid])) for lid in ids}
    band_c = {lid: float(np.ptp(series.charge[lid])) for lid in ids}
    band_e = {lid: float(np.ptp(series.energy[lid])) for lid in ids}
    bs = all_bound_states(fin.model)
    warnings = []
    if bs:
        msg = f"event=bound_states count={len(bs)} energies={','.join(f'{e:.10g}' for e in bs)}"
        warnings.append(msg)
        log.warning("%s note=quasi-periodic component expected", msg)
    return QuenchReport(
        L=fin.L,
        window=(T1, T2),
        series=series,
        mean_charge=mean_c,
        mean_energy=mean_e,
        band_charge=band_c,
        band_energy=band_e,
        lb_charge=lb_c,
        lb_energy=lb_e,
        rel_dev_charge={lid: _rel(mean_c[lid], lb_c[lid]) for lid in ids},
        rel_dev_energy={lid: _rel(mean_e[lid], lb_e[lid]) for lid in ids},
        bound_states=bs,
        warnings=warnings,
    )
