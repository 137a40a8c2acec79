"""On-shell transition matrix by exact finite-rank reduction.

The coupling ``V`` lives on a finite subspace spanned by its rank factors.
With an orthonormal basis ``B`` of that subspace, ``V = B v B^H`` and the
Lippmann-Schwinger equation collapses to the small linear system

    (1 + v G0(E)) w_k = v p_k,        T_jk(E) = <p_j, w_k>

where ``G0 = B^H (H0 - E - i0)^-1 B`` and ``p_k = B^H psi0_{k,E}``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import leads as _leads
from .leads import ExceptionalEnergyError
from .model import LeadSpec, SystemModel, band, band_edges, lead_vectors, open_channels

log = logging.getLogger(__name__)

TOL_SCATTER = 1e-9
TOL_POLE = 1e-8
COND_MAX = 1e12

SCATTERER = "S"

__all__ = [
    "CouplingSubspace",
    "TMatrix",
    "SMatrix",
    "ScatteringInconsistency",
    "NearSingularError",
    "Residuals",
    "coupling_subspace",
    "g0_matrix",
    "t_matrix",
    "t_matrix_batch",
    "s_matrix",
    "scattering_residuals",
    "FriedrichsParams",
    "friedrichs_params",
    "friedrichs_reference_t",
    "bound_states",
    "gap_windows",
]


class ScatteringInconsistency(RuntimeError):
    pass


class NearSingularError(ArithmeticError):
    def __init__(self, energy: float, cond: float):
        super().__init__(f"near-singular at E={energy!r} (condition number {cond:.3e})")
        self.energy = energy
        self.cond = cond


@dataclass(frozen=True)
class CouplingSubspace:
    """Orthonormal basis of the span of all rank factors, grouped by location.

    ``blocks`` maps a location (``"S"`` or a lead id) to ``(slice, B)`` where
    ``B`` has orthonormal columns (scatterer components, or lead sites from 1)
    and ``slice`` locates those columns in ``v_matrix``.
    """

    blocks: dict
    v_matrix: np.ndarray
    labels: tuple = ()

    @property
    def dim(self) -> int:
        return self.v_matrix.shape[0]


def _span_basis(vectors: list[np.ndarray], tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``span(vectors)``.

    Distinct vectors that are already orthonormal are used as they are, so
    the basis is made of the rank factors themselves in the common case.
    """
    distinct: list[np.ndarray] = []
    for v in vectors:
        if not any(v.shape == u.shape and np.allclose(v, u, rtol=0, atol=1e-12) for u in distinct):
            distinct.append(v)
    mat = np.column_stack(distinct)
    gram = mat.conj().T @ mat
    if np.max(np.abs(gram - np.eye(len(distinct)))) <= 1e-12:
        return mat
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, s > tol * s[0]]


def _padded(vec, n) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    out[: len(vec)] = vec
    return out


def coupling_subspace(model: SystemModel) -> CouplingSubspace:
    M = model.scatterer.dim
    raw: dict = {}
    if model.couplings:
        raw[SCATTERER] = [np.asarray(c.scatterer_vector, dtype=complex) for c in model.couplings]
    for lid in model.lead_ids:
        vecs = list(lead_vectors(model, lid))
        if vecs:
            n = max(len(v) for v in vecs)
            raw[lid] = [_padded(v, n) for v in vecs]

    blocks = {}
    labels = []
    start = 0
    for loc in [SCATTERER, *model.lead_ids]:
        if loc not in raw:
            continue
        B = _span_basis(raw[loc])
        blocks[loc] = (slice(start, start + B.shape[1]), B)
        labels.extend((loc, i) for i in range(B.shape[1]))
        start += B.shape[1]

    v = np.zeros((start, start), dtype=complex)

    def coords(loc, vec):
        sl, B = blocks[loc]
        return sl, B.conj().T @ _padded(vec, B.shape[0])

    def add(loc_a, a, loc_b, b, strength):
        # strength * (|a><b| + |b><a|)
        sa, ca = coords(loc_a, a)
        sb, cb = coords(loc_b, b)
        block = strength * np.outer(ca, cb.conj())
        v[sa, sb] += block
        v[sb, sa] += block.conj().T

    for c in model.couplings:
        add(SCATTERER, c.scatterer_vector, c.lead, c.lead_vector, c.strength)
    for c in model.contacts:
        add(c.leads[0], c.vector_j, c.leads[1], c.vector_k, c.strength)
    assert M >= 1
    v.flags.writeable = False
    return CouplingSubspace(blocks=blocks, v_matrix=v, labels=tuple(labels))


class _Reducer:
    """Per-model cache of the pieces that do not depend on energy."""

    def __init__(self, model: SystemModel):
        self.model = model
        self.sub = coupling_subspace(model)
        h = model.scatterer.array
        self.h_eigs, W = np.linalg.eigh(h)
        self.h_scale = max(1.0, float(np.max(np.abs(self.h_eigs)))) if len(self.h_eigs) else 1.0
        if SCATTERER in self.sub.blocks:
            _, Bs = self.sub.blocks[SCATTERER]
            self.s_proj = W.conj().T @ Bs  # eigenbasis coordinates of the s-basis
            coupled = np.linalg.norm(self.s_proj, axis=1) > 1e-12
        else:
            self.s_proj = None
            coupled = np.zeros(len(self.h_eigs), dtype=bool)
        # levels the leads can reach; decoupled levels never enter the lead dynamics
        self.coupled_eigs = self.h_eigs[coupled]

    def pole_distance(self, E: np.ndarray) -> np.ndarray:
        if self.s_proj is None:
            return np.full(E.shape, np.inf)
        return np.min(np.abs(E[:, None] - self.h_eigs[None, :]), axis=1)

    def g0(self, E: np.ndarray) -> np.ndarray:
        d = self.sub.dim
        G = np.zeros((len(E), d, d), dtype=complex)
        for loc, (sl, B) in self.sub.blocks.items():
            if loc == SCATTERER:
                inv = 1.0 / (self.h_eigs[None, :] - E[:, None])
                G[:, sl, sl] = np.einsum("ia,ni,ib->nab", self.s_proj.conj(), inv, self.s_proj)
            else:
                R = _leads.resolvent_matrix(self.model.lead(loc), E, B.shape[0])
                G[:, sl, sl] = B.conj().T[None] @ R @ B[None]
        return G

    def p_vectors(self, E: np.ndarray, channels: Sequence[int]) -> np.ndarray:
        P = np.zeros((len(E), self.sub.dim, len(channels)), dtype=complex)
        for col, lid in enumerate(channels):
            if lid not in self.sub.blocks:
                continue
            sl, B = self.sub.blocks[lid]
            psi = _leads.eigenfunctions(self.model.lead(lid), E, B.shape[0])
            P[:, sl, col] = psi @ B.conj()
        return P


_REDUCERS: dict[int, tuple[SystemModel, _Reducer]] = {}


def _reducer(model: SystemModel) -> _Reducer:
    hit = _REDUCERS.get(id(model))
    if hit is not None and hit[0] is model:
        return hit[1]
    red = _Reducer(model)
    if len(_REDUCERS) > 64:
        _REDUCERS.clear()
    _REDUCERS[id(model)] = (model, red)
    return red


def _check_exceptional(model: SystemModel, red: _Reducer, E: np.ndarray, tol_pole: float) -> np.ndarray:
    """Boolean mask of energies in the exceptional set."""
    bad = red.pole_distance(E) <= tol_pole * red.h_scale
    for ld in model.leads:
        for edge in band(ld):
            bad |= np.abs(E - edge) <= _leads.EDGE_TOL * max(1.0, abs(edge)) * 4
    return bad


def g0_matrix(model: SystemModel, E: float, *, tol_pole: float = TOL_POLE) -> np.ndarray:
    """Free resolvent ``(H0 - E - i0)^-1`` compressed to the coupling basis."""
    red = _reducer(model)
    Ea = np.array([float(E)])
    if _check_exceptional(model, red, Ea, tol_pole)[0]:
        raise ExceptionalEnergyError(f"exceptional energy: E={E!r}", float(E))
    return red.g0(Ea)[0]


@dataclass(frozen=True)
class TMatrix:
    E: float
    channels: tuple[int, ...]
    entries: np.ndarray
    cond: float = 1.0

    def element(self, j: int, k: int) -> complex:
        return complex(self.entries[self.channels.index(j), self.channels.index(k)])


@dataclass(frozen=True)
class SMatrix:
    E: float
    channels: tuple[int, ...]
    entries: np.ndarray
    unitarity_residual: float = 0.0


@dataclass
class TBatch:
    """T matrices on a set of energies sharing one open-channel set."""

    energies: np.ndarray
    channels: tuple[int, ...]
    entries: np.ndarray  # (n, m, m)
    cond: np.ndarray
    singular: np.ndarray = field(default=None)


def t_matrix_batch(
    model: SystemModel,
    energies,
    channels: Sequence[int] | None = None,
    *,
    tol_pole: float = TOL_POLE,
    cond_max: float = COND_MAX,
    check: bool = True,
) -> TBatch:
    """Vectorized T(E) for energies that share the open-channel set ``channels``.

    With ``check=False`` near-singular energies are reported through
    ``TBatch.singular`` instead of raising.
    """
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    if channels is None:
        channels = open_channels(model, float(E[0])) if len(E) else ()
    channels = tuple(channels)
    m = len(channels)
    red = _reducer(model)
    d = red.sub.dim
    exc = _check_exceptional(model, red, E, tol_pole)
    if check and np.any(exc):
        bad = float(E[exc][0])
        raise ExceptionalEnergyError(f"exceptional energy: E={bad!r}", bad)
    if d == 0 or m == 0:
        z = np.zeros((len(E), m, m), dtype=complex)
        return TBatch(E, channels, z, np.ones(len(E)), np.zeros(len(E), bool))

    # exceptional nodes are only flagged; their entries stay zero
    T = np.zeros((len(E), m, m), dtype=complex)
    cond = np.full(len(E), np.inf)
    ok = ~exc
    if ok.any():
        Es = E[ok]
        v = red.sub.v_matrix
        A = np.eye(d)[None] + v[None] @ red.g0(Es)
        P = red.p_vectors(Es, channels)
        c = np.linalg.cond(A)
        good = np.isfinite(c)
        W = np.zeros_like(P)
        W[good] = np.linalg.solve(A[good], v[None] @ P[good])
        T[ok] = np.conj(np.swapaxes(P, 1, 2)) @ W
        cond[ok] = c
    singular = exc | ~np.isfinite(cond) | (cond > cond_max)
    if check and np.any(singular):
        i = int(np.flatnonzero(singular)[0])
        raise NearSingularError(float(E[i]), float(cond[i]))
    return TBatch(E, channels, T, cond, singular)


def t_matrix(
    model: SystemModel,
    E: float,
    *,
    tol_pole: float = TOL_POLE,
    cond_max: float = COND_MAX,
) -> TMatrix:
    """On-shell transition matrix over the channels open at ``E``."""
    channels = open_channels(model, float(E))
    if not channels:
        raise _leads.ChannelClosedError(f"no open channels at E={E!r}")
    b = t_matrix_batch(model, [E], channels, tol_pole=tol_pole, cond_max=cond_max)
    return TMatrix(float(E), channels, b.entries[0], float(b.cond[0]))


def s_matrix(T: TMatrix, tol: float = TOL_SCATTER) -> SMatrix:
    S = np.eye(len(T.channels)) - 2j * np.pi * T.entries
    res = float(np.max(np.abs(S @ S.conj().T - np.eye(len(T.channels))), initial=0.0))
    if res > tol:
        raise ScatteringInconsistency(f"scattering inconsistency at E={T.E!r}: unitarity residual {res:.3e}")
    return SMatrix(T.E, T.channels, S, res)


@dataclass(frozen=True)
class Residuals:
    optical: float
    normality: float
    rowcol: float
    unitarity: float

    def max(self) -> float:
        return max(self.optical, self.normality, self.rowcol, self.unitarity)


def scattering_residuals(T) -> Residuals:
    """Max-norm residuals of the optical theorem, normality and the row/column sum rule.

    Accepts a :class:`TMatrix` or a bare square array (or a stack of them).
    """
    t = np.asarray(T.entries if isinstance(T, (TMatrix, TBatch)) else T, dtype=complex)
    if t.size == 0:
        return Residuals(0.0, 0.0, 0.0, 0.0)
    th = np.conj(np.swapaxes(t, -1, -2))
    tth = t @ th
    opt = t - th + 2j * np.pi * tth
    nor = tth - th @ t
    a2 = np.abs(t) ** 2
    rowcol = a2.sum(axis=-1) - a2.sum(axis=-2)
    eye = np.eye(t.shape[-1])
    S = eye - 2j * np.pi * t
    uni = S @ np.conj(np.swapaxes(S, -1, -2)) - eye
    return Residuals(
        float(np.max(np.abs(opt))),
        float(np.max(np.abs(nor))),
        float(np.max(np.abs(rowcol))),
        float(np.max(np.abs(uni))),
    )


@dataclass(frozen=True)
class FriedrichsParams:
    """Single-level dot between two leads, coupled through one site vector each."""

    eps_s: float
    leads: tuple[LeadSpec, LeadSpec]
    strengths: tuple[float, float]
    lead_vectors: tuple[tuple[complex, ...], tuple[complex, ...]]
    scatterer_phases: tuple[complex, complex] = (1.0, 1.0)


def friedrichs_params(model: SystemModel) -> FriedrichsParams:
    if model.scatterer.dim != 1 or len(model.leads) != 2 or model.contacts:
        raise ValueError("Friedrichs reference needs M=1, two leads and no direct contact")
    by_lead = {c.lead: c for c in model.couplings}
    if len(by_lead) != len(model.couplings):
        raise ValueError("Friedrichs reference needs at most one coupling per lead")
    ids = model.lead_ids
    strengths, vecs, phases = [], [], []
    for lid in ids:
        c = by_lead.get(lid)
        if c is None:
            strengths.append(0.0)
            vecs.append((1.0,))
            phases.append(1.0)
        else:
            strengths.append(c.strength)
            vecs.append(c.lead_vector)
            phases.append(c.scatterer_vector[0])
    return FriedrichsParams(
        eps_s=float(model.scatterer.matrix[0][0].real),
        leads=(model.lead(ids[0]), model.lead(ids[1])),
        strengths=tuple(strengths),
        lead_vectors=tuple(vecs),
        scatterer_phases=tuple(phases),
    )


def friedrichs_reference_t(params: FriedrichsParams, E: float) -> np.ndarray:
    """Closed-form 2x2 T(E) of the single-level model.

    Eliminating the lead unknowns from the three-component reduced system
    gives

        T_jk = v_j v_k conj(s_j) s_k <psi0_j, f_j> <f_k, psi0_k> / D(E),
        D(E) = E - eps_s + sum_m v_m^2 <f_m, (H_m - E - i0)^-1 f_m>.
    """
    for ld in params.leads:
        _leads.wavenumber(ld, E)  # raises when closed
    fourier = [
        _leads.generalized_fourier(ld, E, f) for ld, f in zip(params.leads, params.lead_vectors)
    ]
    r = [
        _leads.lead_resolvent(ld, E, f, f) if v > 0 else 0.0
        for ld, f, v in zip(params.leads, params.lead_vectors, params.strengths)
    ]
    v = params.strengths
    D = E - params.eps_s + sum(vm * vm * rm for vm, rm in zip(v, r))
    amp_out = [v[j] * np.conj(params.scatterer_phases[j]) * fourier[j] for j in range(2)]
    amp_in = [v[k] * params.scatterer_phases[k] * np.conj(fourier[k]) for k in range(2)]
    return np.array([[amp_out[j] * amp_in[k] / D for k in range(2)] for j in range(2)])


def gap_windows(model: SystemModel, margin: float = 1e-9) -> list[tuple[float, float]]:
    """Energy intervals outside every band that can hold bound states.

    The outer limits come from a crude operator-norm bound on ``H0 + V``.
    """
    h_norm = float(np.max(np.abs(np.linalg.eigvalsh(model.scatterer.array))))
    lead_norm = max(abs(ld.onsite) + 2 * ld.hopping for ld in model.leads)
    v_norm = 2 * sum(c.strength for c in model.couplings) + 2 * sum(c.strength for c in model.contacts)
    reach = max(h_norm, lead_norm) + v_norm + 1.0
    bands = sorted(band(ld) for ld in model.leads)
    merged: list[list[float]] = []
    for lo, hi in bands:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    windows = []
    cursor = -reach
    for lo, hi in merged:
        if lo - margin > cursor:
            windows.append((cursor, lo - margin))
        cursor = hi + margin
    if reach > cursor:
        windows.append((cursor, reach))
    return windows


def _secular(model: SystemModel, red: _Reducer, E: np.ndarray) -> np.ndarray:
    """``det(H_S - E) det(1 + v G0(E))``: real off the bands, zero at bound states, pole-free."""
    d = red.sub.dim
    scat = np.prod(red.coupled_eigs[None, :] - E[:, None], axis=1)
    if d == 0:
        return scat
    # evaluate away from exact scatterer poles, where the product is finite anyway
    G = red.g0(E)
    A = np.eye(d)[None] + red.sub.v_matrix[None] @ G
    return (np.linalg.det(A) * scat).real


def bound_states(model: SystemModel, search_window: tuple[float, float], grid: int = 2000) -> list[float]:
    """Eigenvalues of ``H0 + V`` inside ``search_window`` (which must avoid every band).

    Scatterer levels with no overlap with any coupling vector are eigenvalues
    of ``H`` too, but the leads never see them, so they are not reported.
    """
    a, b = map(float, search_window)
    if not a < b:
        raise ValueError("search window must be an ordered interval")
    for ld in model.leads:
        lo, hi = band(ld)
        if a <= hi and b >= lo:
            raise ValueError(f"search window [{a}, {b}] overlaps the band [{lo}, {hi}] of lead {ld.id}")
    red = _reducer(model)
    xs = np.linspace(a, b, int(grid) + 1)
    # nudge grid points off exact scatterer eigenvalues
    if len(red.coupled_eigs):
        hit = np.min(np.abs(xs[:, None] - red.coupled_eigs[None, :]), axis=1) == 0
        xs[hit] += 1e-7 * (b - a) / grid
    vals = _secular(model, red, xs)
    f = lambda e: float(_secular(model, red, np.array([e]))[0])  # noqa: E731
    roots = []
    for i in range(len(xs) - 1):
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(xs[i]))
        elif fa * fb < 0:
            roots.append(float(brentq(f, xs[i], xs[i + 1], xtol=1e-13, rtol=1e-15)))
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


def all_bound_states(model: SystemModel, grid: int = 2000) -> list[float]:
    out = []
    for w in gap_windows(model):
        out.extend(bound_states(model, w, grid))
    return out


def exceptional_points(model: SystemModel) -> list[float]:
    red = _reducer(model)
    pts = set(band_edges(model))
    if red.s_proj is not None:
        pts.update(float(e) for e in red.h_eigs)
    return sorted(pts)
