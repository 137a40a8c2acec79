"""Reference models used by the tests, the shipped configs and ``verify``."""
from __future__ import annotations

import numpy as np

from .model import ReservoirState, SystemModel, band, validate_model

__all__ = [
    "friedrichs_model",
    "perfect_chain",
    "aharonov_bohm_model",
    "bound_state_model",
    "random_model",
    "random_ensemble",
    "random_states",
    "in_band_energies",
]


def _chain(lead_id: int, onsite: float = 0.0, hopping: float = 1.0) -> dict:
    return {"id": lead_id, "onsite": onsite, "hopping": hopping}


def friedrichs_model(
    eps_s: float = 0.25,
    v1: float = 0.6,
    v2: float = 0.6,
    *,
    hopping: float = 1.0,
    onsite: float = 0.0,
) -> SystemModel:
    """Single level between two identical chains, each touching site 1.

    The defaults are the standard quench test model: an off-centre, fairly
    broad resonance, so both the charge and the energy current are nonzero
    for symmetric bias.
    """
    couplings = [
        {"lead": lid, "strength": v, "scatterer_vector": [1.0], "lead_vector": {1: 1.0}}
        for lid, v in ((1, v1), (2, v2))
        if v > 0
    ]
    return validate_model(
        {
            "scatterer": {"matrix": [[eps_s]]},
            "leads": [_chain(1, onsite, hopping), _chain(2, onsite, hopping)],
            "couplings": couplings,
        }
    )


def perfect_chain() -> SystemModel:
    """Friedrichs model with ``v = t`` and ``eps_s = eps``: one infinite chain, ``|S_12| = 1`` on the whole band."""
    return friedrichs_model(0.0, 1.0, 1.0)


def aharonov_bohm_model(phase: float = np.pi / 3, contact: float = 0.5) -> SystemModel:
    """Three-terminal dot with a direct 1-2 contact carrying the phase ``exp(i phase)``.

    The loop dot -> lead 1 -> lead 2 -> dot encloses the phase, which breaks
    time-reversal symmetry, so ``|T_12| != |T_21|`` in general.
    """
    return validate_model(
        {
            "scatterer": {"matrix": [[0.2]]},
            "leads": [_chain(1), _chain(2), _chain(3)],
            "couplings": [
                {"lead": lid, "strength": 0.7, "scatterer_vector": [1.0], "lead_vector": {1: 1.0}}
                for lid in (1, 2, 3)
            ],
            "contacts": [
                {
                    "leads": [1, 2],
                    "strength": contact,
                    "vector_j": {1: [np.cos(phase), np.sin(phase)]},
                    "vector_k": {1: 1.0},
                }
            ],
        }
    )


def bound_state_model(eps_s: float = 3.0, v: float = 2.0) -> SystemModel:
    """Level above the band coupled strongly enough to bind a state on each side of the band."""
    return friedrichs_model(eps_s, v, v)


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    return z / np.linalg.norm(z)


def _random_orthonormal(rng: np.random.Generator, n: int, k: int, real: bool = False) -> np.ndarray:
    z = rng.normal(size=(n, k))
    if not real:
        z = z + 1j * rng.normal(size=(n, k))
    q, _ = np.linalg.qr(z)
    return q[:, :k]


def random_model(
    rng: np.random.Generator,
    n_leads: int | None = None,
    dim: int | None = None,
    *,
    real: bool = False,
    contacts: bool | None = None,
    max_support: int = 3,
) -> SystemModel:
    """Random valid model with heterogeneous bands, up to two couplings per lead
    and optionally one direct contact."""
    N = int(rng.integers(2, 5)) if n_leads is None else n_leads
    M = int(rng.integers(1, 5)) if dim is None else dim
    a = rng.normal(size=(M, M)) + (0 if real else 1j) * rng.normal(size=(M, M))
    h = 0.5 * (a + a.conj().T) / np.sqrt(2 * M)
    pair = lambda z: [float(np.real(z)), float(np.imag(z))]  # noqa: E731
    leads = [_chain(i + 1, float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0.6, 1.4))) for i in range(N)]
    couplings = []
    for ld in leads:
        m = int(rng.integers(1, min(2, M) + 1))
        S = _random_orthonormal(rng, M, m, real)
        support = int(rng.integers(m, max_support + 1))
        F = _random_orthonormal(rng, support, m, real)
        for l in range(m):
            couplings.append(
                {
                    "lead": ld["id"],
                    "strength": float(rng.uniform(0.2, 1.0)),
                    "scatterer_vector": [pair(z) for z in S[:, l]],
                    "lead_vector": {str(n + 1): pair(z) for n, z in enumerate(F[:, l])},
                }
            )
    add_contact = bool(rng.integers(0, 2)) if contacts is None else contacts
    cts = []
    if add_contact:
        j, k = (int(x) + 1 for x in rng.choice(N, size=2, replace=False))
        gj = _random_orthonormal(rng, 2, 1, real)[:, 0]
        gk = _random_orthonormal(rng, 2, 1, real)[:, 0]
        cts.append(
            {
                "leads": [j, k],
                "strength": float(rng.uniform(0.1, 0.6)),
                "vector_j": {str(n + 1): pair(z) for n, z in enumerate(gj)},
                "vector_k": {str(n + 1): pair(z) for n, z in enumerate(gk)},
            }
        )
    return validate_model(
        {
            "scatterer": {"matrix": [[pair(z) for z in row] for row in h]},
            "leads": leads,
            "couplings": couplings,
            "contacts": cts,
        }
    )


def random_ensemble(seed: int = 20060315, size: int = 50, *, real: bool = False) -> list[SystemModel]:
    """Deterministic ensemble; ``N`` cycles through 2, 3, 4 so every size is represented."""
    rng = np.random.default_rng(seed)
    return [random_model(rng, n_leads=2 + i % 3, real=real) for i in range(size)]


def random_states(rng: np.random.Generator, model: SystemModel) -> list[ReservoirState]:
    return [ReservoirState(float(rng.uniform(1.0, 10.0)), float(rng.uniform(-0.5, 0.5))) for _ in model.leads]


def in_band_energies(model: SystemModel, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Energies with at least one open channel, kept away from band edges.

    Random uniform draws when ``rng`` is given, an even grid otherwise.
    """
    edges = sorted({e for ld in model.leads for e in band(ld)})
    lo, hi = edges[0], edges[-1]
    gap = 1e-6 * (hi - lo)
    out: list[float] = []
    candidates = rng.uniform(lo, hi, size=20 * n) if rng is not None else np.linspace(lo, hi, 20 * n + 2)[1:-1]
    for E in candidates:
        if any(abs(E - e) < gap for e in edges):
            continue
        if any(band(ld)[0] < E < band(ld)[1] for ld in model.leads):
            out.append(float(E))
    if rng is None:
        idx = np.linspace(0, len(out) - 1, n).round().astype(int)
        return np.array(out)[idx]
    return np.array(out[:n])
