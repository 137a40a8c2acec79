"""Landauer-Buttiker currents and entropy production of a multi-terminal model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .model import ReservoirState, SystemModel, open_channels
from .quadrature import TOL_QUAD, QuadratureResult, integrate_spectral
from .scattering import TOL_POLE, _reducer, t_matrix_batch

log = logging.getLogger(__name__)

CHANNEL_FLOOR = 1e-10
POSITIVITY_FLOOR = 1e-12

__all__ = [
    "fermi_dirac",
    "TransportResult",
    "PositivityVerdict",
    "transport",
    "charge_currents",
    "energy_currents",
    "particle_currents",
    "entropy_production",
    "positivity_verdict",
]


def fermi_dirac(state: ReservoirState, E):
    """Occupation ``1 / (1 + exp(beta (E - mu)))``; safe for any ``beta (E - mu)``."""
    out = expit(-state.x(E))
    return float(out) if np.ndim(out) == 0 else out


def _states_by_lead(model: SystemModel, states) -> dict[int, ReservoirState]:
    if isinstance(states, Mapping):
        out = dict(states)
    else:
        states = list(states)
        if len(states) != len(model.leads):
            raise ValueError(f"need one reservoir state per lead ({len(model.leads)}), got {len(states)}")
        out = dict(zip(model.lead_ids, states))
    missing = set(model.lead_ids) - set(out)
    if missing:
        raise ValueError(f"no reservoir state for leads {sorted(missing)}")
    return out


@dataclass
class TransportResult:
    lead_ids: tuple[int, ...]
    states: dict
    charge_currents: np.ndarray
    energy_currents: np.ndarray
    particle_currents: np.ndarray
    sigma_from_currents: float
    sigma_direct: float
    sigma_symmetrized: float
    channel_weights: dict
    quadrature: QuadratureResult
    excluded: list = field(default_factory=list)

    @property
    def entropy_production(self) -> float:
        return self.sigma_direct

    @property
    def route_deviation(self) -> float:
        """Largest pairwise deviation among the three entropy-production routes."""
        s = (self.sigma_from_currents, self.sigma_direct, self.sigma_symmetrized)
        return max(abs(a - b) for a in s for b in s)

    @property
    def charge_balance(self) -> float:
        return float(abs(np.sum(self.charge_currents)))

    @property
    def energy_balance(self) -> float:
        return float(abs(np.sum(self.energy_currents)))


def _shift_singular(model, E, channels, batch, tol_pole):
    """Re-evaluate flagged nodes at slightly displaced energies."""
    red = _reducer(model)
    step = 4 * tol_pole * red.h_scale
    bad = np.flatnonzero(batch.singular)
    moved = []
    for i in bad:
        for sign in (1.0, -1.0, 2.0, -2.0):
            Ei = E[i] + sign * step
            if tuple(open_channels(model, Ei)) != tuple(channels):
                continue
            b = t_matrix_batch(model, [Ei], channels, tol_pole=tol_pole, check=False)
            if not b.singular[0]:
                batch.entries[i] = b.entries[0]
                moved.append((float(E[i]), float(Ei)))
                break
        else:
            batch.entries[i] = 0.0
            moved.append((float(E[i]), None))
    return moved


def transport(
    model: SystemModel,
    states: Sequence[ReservoirState] | Mapping[int, ReservoirState],
    tol_quad: float = TOL_QUAD,
    *,
    tol_pole: float = TOL_POLE,
) -> TransportResult:
    """All currents, the three entropy-production routes and channel weights in one pass.

    ``states`` lists one :class:`ReservoirState` per lead in ``model.leads``
    order, or maps lead ids to states.
    """
    by_lead = _states_by_lead(model, states)
    ids = model.lead_ids
    N = len(ids)
    pos = {lid: i for i, lid in enumerate(ids)}
    beta = np.array([by_lead[l].beta for l in ids])
    mu = np.array([by_lead[l].mu for l in ids])
    excluded: list = []
    ncomp = 2 * N + 2 + N * N

    def integrand(E: np.ndarray, channels: tuple) -> np.ndarray:
        out = np.zeros((len(E), ncomp))
        if len(E) == 0 or len(channels) < 2:
            return out
        batch = t_matrix_batch(model, E, channels, tol_pole=tol_pole, check=False)
        if np.any(batch.singular):
            for orig, new in _shift_singular(model, E, channels, batch, tol_pole):
                excluded.append((orig, new))
                log.warning("event=exceptional_node E=%r shifted_to=%r", orig, new)
        idx = np.array([pos[c] for c in channels])
        W = np.abs(batch.entries) ** 2
        X = beta[idx][None, :] * (E[:, None] - mu[idx][None, :])
        F = expit(-X)
        diff = F[:, :, None] - F[:, None, :]  # f_k - f_j
        particle = 2 * np.pi * np.sum(diff * W, axis=2)
        out[:, idx] = particle
        out[:, N + idx] = E[:, None] * particle
        out[:, 2 * N] = -2 * np.pi * np.sum(diff * X[:, :, None] * W, axis=(1, 2))
        out[:, 2 * N + 1] = np.pi * np.sum(-diff * (X[:, :, None] - X[:, None, :]) * W, axis=(1, 2))
        flat = (idx[:, None] * N + idx[None, :]).ravel()
        out[:, 2 * N + 2 + flat] = W.reshape(len(E), -1)
        return out

    red = _reducer(model)
    points = sorted(set(mu.tolist()) | set(red.h_eigs.tolist()))
    q = integrate_spectral(model, integrand, tol_quad, min_channels=2, points=points)
    vals = np.asarray(q.value, dtype=float).reshape(ncomp)
    q.excluded = excluded

    particle = vals[:N]
    energy = vals[N : 2 * N]
    sigma_a = float(-np.sum(beta * (energy - mu * particle)))
    weights = {
        (ids[k], ids[j]): float(vals[2 * N + 2 + k * N + j]) for k in range(N) for j in range(N)
    }
    return TransportResult(
        lead_ids=ids,
        states=by_lead,
        charge_currents=-model.charge * particle,
        energy_currents=energy,
        particle_currents=particle,
        sigma_from_currents=sigma_a,
        sigma_direct=float(vals[2 * N]),
        sigma_symmetrized=float(vals[2 * N + 1]),
        channel_weights=weights,
        quadrature=q,
        excluded=excluded,
    )


def charge_currents(model, states, tol_quad: float = TOL_QUAD) -> np.ndarray:
    return transport(model, states, tol_quad).charge_currents


def energy_currents(model, states, tol_quad: float = TOL_QUAD) -> np.ndarray:
    return transport(model, states, tol_quad).energy_currents


def particle_currents(model, states, tol_quad: float = TOL_QUAD) -> np.ndarray:
    return transport(model, states, tol_quad).particle_currents


def entropy_production(model, states, tol_quad: float = TOL_QUAD) -> TransportResult:
    """Entropy production by all three routes; see ``TransportResult.sigma_*``."""
    return transport(model, states, tol_quad)


@dataclass(frozen=True)
class PositivityVerdict:
    nontrivial_channels: tuple[tuple[int, int], ...]
    distinct_state_pairs: tuple[tuple[int, int], ...]
    predicted_strict_positive: bool
    sigma: float
    holds: bool

    @property
    def witnesses(self) -> tuple[tuple[int, int], ...]:
        return tuple(p for p in self.nontrivial_channels if p in self.distinct_state_pairs)


def positivity_verdict(
    model: SystemModel,
    states,
    tol_quad: float = TOL_QUAD,
    *,
    channel_floor: float = CHANNEL_FLOOR,
    positivity_floor: float = POSITIVITY_FLOOR,
    result: TransportResult | None = None,
) -> PositivityVerdict:
    """Check strict positivity of the entropy production against its prediction.

    A channel pair ``(k, j)``, ``k != j``, scatters nontrivially when
    ``int |T_kj(E)|^2 dE`` exceeds ``channel_floor``.  Strict positivity is
    predicted when such a pair joins reservoirs in different states.
    ``holds`` is False when the prediction is not met, or when the entropy
    production is negative beyond round-off.
    """
    res = result if result is not None else transport(model, states, tol_quad)
    ids = res.lead_ids
    nontrivial = tuple(
        (k, j) for k in ids for j in ids if k != j and res.channel_weights[(k, j)] > channel_floor
    )
    st = res.states
    distinct = tuple(
        (k, j) for k in ids for j in ids if k != j and (st[k].beta, st[k].mu) != (st[j].beta, st[j].mu)
    )
    predicted = any(p in distinct for p in nontrivial)
    sigma = res.sigma_direct
    holds = sigma > positivity_floor if predicted else sigma >= -max(positivity_floor, 10 * tol_quad)
    return PositivityVerdict(nontrivial, distinct, predicted, sigma, bool(holds))
