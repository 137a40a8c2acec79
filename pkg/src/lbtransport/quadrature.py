"""Band-aware adaptive Gauss-Legendre quadrature over the energy axis.

The energy axis is cut at every band edge, so the set of open channels is
constant on each piece.  On a piece ``[a, b]`` the substitution
``E = c - h cos(theta)`` absorbs the square-root behaviour that every
on-shell quantity has at both ends.  Panels in ``theta`` are bisected until
the two-level Gauss-Legendre error estimate meets the tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import SystemModel, band_edges, open_channels

log = logging.getLogger(__name__)

ORDER = 32
MAX_DEPTH = 30
MAX_PANELS = 8192
TOL_QUAD = 1e-8

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(ORDER)

__all__ = ["QuadratureError", "QuadratureResult", "integrate_spectral", "constant_channel_intervals"]


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, interval: tuple[float, float]):
        super().__init__(message)
        self.interval = interval


@dataclass
class QuadratureResult:
    value: np.ndarray
    error: float
    nodes: int
    panels: int
    excluded: list = field(default_factory=list)

    def __float__(self):
        return float(np.asarray(self.value).reshape(-1)[0])


Integrand = Callable[[np.ndarray, tuple], np.ndarray]


def constant_channel_intervals(model: SystemModel, min_channels: int = 1) -> list[tuple[float, float, tuple]]:
    """Maximal energy intervals with a fixed open-channel set of at least ``min_channels`` leads."""
    edges = band_edges(model)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        ch = open_channels(model, 0.5 * (a + b))
        if len(ch) >= min_channels:
            out.append((a, b, ch))
    return out


def _panel_nodes(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid[:, None] + half[:, None] * _NODES[None, :], half[:, None] * _WEIGHTS[None, :]


def integrate_spectral(
    model: SystemModel,
    integrand: Integrand,
    tol_quad: float = TOL_QUAD,
    *,
    min_channels: int = 1,
    points: Sequence[float] = (),
    max_depth: int = MAX_DEPTH,
    max_panels: int = MAX_PANELS,
    initial_panels: int = 4,
) -> QuadratureResult:
    """Integrate ``integrand(E, channels)`` over all energies with open channels.

    ``integrand`` receives a 1-D array of energies sharing the open-channel
    tuple ``channels`` and returns an array whose first axis runs over the
    energies (extra axes are integrated component-wise).  ``points`` are extra
    energies where the integrand varies sharply (e.g. chemical potentials);
    they seed the panel boundaries.  ``tol_quad`` bounds the summed error
    estimate of every component.
    """
    pieces = constant_channel_intervals(model, min_channels)
    total = None
    err_total = 0.0
    n_nodes = 0
    n_panels = 0
    excluded: list = []
    span = sum(np.pi for _ in pieces) or 1.0

    for a, b, channels in pieces:
        c, h = 0.5 * (a + b), 0.5 * (b - a)

        open_leads = [model.lead(l) for l in channels]

        def f_theta(theta: np.ndarray) -> np.ndarray:
            E = (c - h * np.cos(theta)).ravel()
            # nodes that round onto a band edge carry zero Jacobian; skip them
            inside = np.ones(E.shape, dtype=bool)
            for ld in open_leads:
                inside &= np.abs((E - ld.onsite) / (2 * ld.hopping)) < 1
            if inside.all():
                vals = np.asarray(integrand(E, channels))
            else:
                sub = np.asarray(integrand(E[inside], channels))
                vals = np.zeros((len(E),) + sub.shape[1:], dtype=sub.dtype)
                vals[inside] = sub
            jac = (h * np.sin(theta)).ravel()
            vals = vals * jac.reshape((-1,) + (1,) * (vals.ndim - 1))
            return vals.reshape(theta.shape + vals.shape[1:])

        cuts = [0.0, np.pi]
        for p in points:
            if a < p < b:
                cuts.append(float(np.arccos((c - p) / h)))
        cuts = np.unique(cuts)
        bounds = np.concatenate(
            [np.linspace(t0, t1, initial_panels + 1)[:-1] for t0, t1 in zip(cuts[:-1], cuts[1:])] + [[np.pi]]
        )
        lo_arr, hi_arr = bounds[:-1], bounds[1:]
        depth = np.zeros(len(lo_arr), dtype=int)

        def evaluate(lo_p, hi_p):
            x, w = _panel_nodes(lo_p, hi_p)
            vals = f_theta(x)
            wshape = w.shape + (1,) * (vals.ndim - 2)
            return np.sum(vals * w.reshape(wshape), axis=1)

        # each panel: coarse estimate on itself, refined estimate on its halves
        coarse = evaluate(lo_arr, hi_arr)
        mids = 0.5 * (lo_arr + hi_arr)
        left = evaluate(lo_arr, mids)
        right = evaluate(mids, hi_arr)
        n_nodes += 3 * ORDER * len(lo_arr)
        acc = None
        err_piece = 0.0
        while True:
            fine = left + right
            err = np.abs(fine - coarse)
            err = err.reshape(len(err), -1).max(axis=1) if err.ndim > 1 else err
            budget = tol_quad * (hi_arr - lo_arr) / span
            ok = err <= budget
            if acc is None:
                acc = np.zeros(fine.shape[1:], dtype=fine.dtype)
            acc = acc + fine[ok].sum(axis=0)
            err_piece += float(err[ok].sum())
            n_panels += int(ok.sum())
            if np.all(ok):
                break
            todo = ~ok
            if np.any(depth[todo] >= max_depth) or 2 * todo.sum() > max_panels:
                hit = todo & (depth >= max_depth)
                i = int(np.flatnonzero(hit)[0]) if hit.any() else int(np.argmax(np.where(todo, err, -1)))
                th = (lo_arr[i], hi_arr[i])
                interval = tuple(sorted(float(c - h * np.cos(t)) for t in th))
                raise QuadratureError(
                    f"quadrature failed to converge on [{interval[0]!r}, {interval[1]!r}]", interval
                )
            l_lo, l_hi = lo_arr[todo], mids[todo]
            r_lo, r_hi = mids[todo], hi_arr[todo]
            new_lo = np.concatenate([l_lo, r_lo])
            new_hi = np.concatenate([l_hi, r_hi])
            new_coarse = np.concatenate([left[todo], right[todo]])
            new_depth = np.concatenate([depth[todo], depth[todo]]) + 1
            new_mid = 0.5 * (new_lo + new_hi)
            left = evaluate(new_lo, new_mid)
            right = evaluate(new_mid, new_hi)
            n_nodes += 2 * ORDER * len(new_lo)
            lo_arr, hi_arr, mids, coarse, depth = new_lo, new_hi, new_mid, new_coarse, new_depth
        total = acc if total is None else total + acc
        err_total += err_piece

    if total is None:
        probe = np.asarray(integrand(np.array([]), ()))
        total = np.zeros(probe.shape[1:])
    return QuadratureResult(np.asarray(total), err_total, n_nodes, n_panels, excluded)
