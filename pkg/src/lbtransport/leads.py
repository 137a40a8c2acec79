"""Spectral data of a semi-infinite nearest-neighbour chain.

The chain ``H = eps sum |n><n| + t sum (|n><n+1| + h.c.)`` on sites
``n >= 1`` has dispersion ``E = eps + 2t cos k`` and real, energy-normalized
generalized eigenfunctions ``sin(kn) / sqrt(pi t sin k)``.

Resolvent convention: :func:`lead_resolvent` returns matrix elements of
``(H - E - i0)^-1``.  That is minus the retarded Green's function, so its
diagonal has a non-negative imaginary part inside the band.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import LeadSpec, band

__all__ = [
    "ChannelClosedError",
    "ExceptionalEnergyError",
    "LeadSpectralPoint",
    "wavenumber",
    "eigenfunction_amplitude",
    "generalized_fourier",
    "lead_resolvent",
    "decay_factor",
    "resolvent_matrix",
]

EDGE_TOL = 1e-13


class ChannelClosedError(ValueError):
    pass


class ExceptionalEnergyError(ValueError):
    """Energy in the discrete exceptional set (band edge or scatterer pole)."""

    def __init__(self, message: str, energy: float):
        super().__init__(message)
        self.energy = energy


@dataclass(frozen=True)
class LeadSpectralPoint:
    lead: int
    E: float
    k: float
    velocity_factor: float


def _reduced(lead: LeadSpec, E):
    return (np.asarray(E, dtype=float) - lead.onsite) / (2 * lead.hopping)


def wavenumber(lead: LeadSpec, E: float) -> LeadSpectralPoint:
    c = float(_reduced(lead, E))
    if not -1 < c < 1:
        lo, hi = band(lead)
        raise ChannelClosedError(f"channel closed: E={E!r} not inside band [{lo}, {hi}] of lead {lead.id}")
    k = float(np.arccos(c))
    return LeadSpectralPoint(lead.id, float(E), k, 2 * lead.hopping * np.sin(k))


def _k_array(lead: LeadSpec, E) -> np.ndarray:
    c = _reduced(lead, E)
    if np.any(np.abs(c) >= 1):
        raise ChannelClosedError(f"channel closed on lead {lead.id}")
    return np.arccos(c)


def eigenfunction_amplitude(lead: LeadSpec, E, n):
    """Amplitude ``psi_E(n)`` of the energy-normalized eigenfunction."""
    k = _k_array(lead, E)
    return np.sin(k * n) / np.sqrt(np.pi * lead.hopping * np.sin(k))


def eigenfunctions(lead: LeadSpec, E, n_sites: int) -> np.ndarray:
    """Eigenfunction amplitudes on sites ``1..n_sites``, shape ``(len(E), n_sites)``."""
    k = np.atleast_1d(_k_array(lead, E))
    n = np.arange(1, n_sites + 1)
    return np.sin(np.outer(k, n)) / np.sqrt(np.pi * lead.hopping * np.sin(k))[:, None]


def generalized_fourier(lead: LeadSpec, E, f: Sequence[complex]):
    """``<psi_E, f> = sum_n psi_E(n) f(n)`` for a vector given densely from site 1."""
    f = np.asarray(f, dtype=complex)
    psi = eigenfunctions(lead, E, len(f))
    out = psi @ f
    return out if np.ndim(E) else complex(out[0])


def decay_factor(lead: LeadSpec, E) -> np.ndarray:
    """Root ``lam`` of ``lam + 1/lam = (E - eps)/t`` with ``|lam| < 1`` after ``E -> E + i0``.

    Inside the band this is ``exp(-ik)``; outside it is real with modulus < 1.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    c = _reduced(lead, E)
    if np.any(np.abs(np.abs(c) - 1) <= EDGE_TOL):
        bad = E[np.abs(np.abs(c) - 1) <= EDGE_TOL][0]
        raise ExceptionalEnergyError(f"exceptional energy: E={bad!r} is a band edge of lead {lead.id}", float(bad))
    lam = np.empty(E.shape, dtype=complex)
    inside = np.abs(c) < 1
    lam[inside] = np.exp(-1j * np.arccos(c[inside]))
    out = ~inside
    co = c[out]
    lam[out] = co - np.sign(co) * np.sqrt(co * co - 1)
    return lam


def resolvent_matrix(lead: LeadSpec, E, n_sites: int) -> np.ndarray:
    """``(H - E - i0)^-1`` restricted to sites ``1..n_sites``; shape ``(len(E), n, n)``.

    Uses the image form ``G_mn = (lam^|m-n| - lam^(m+n)) / (t (1/lam - lam))``
    of the retarded Green's function and flips its sign.
    """
    lam = decay_factor(lead, E)
    n = np.arange(1, n_sites + 1)
    diff = np.abs(n[:, None] - n[None, :])
    tot = n[:, None] + n[None, :]
    lam_ = lam[:, None, None]
    g_ret = (lam_ ** diff - lam_ ** tot) / (lead.hopping * (1 / lam_ - lam_))
    return -g_ret


def lead_resolvent(lead: LeadSpec, E: float, f: Sequence[complex], g: Sequence[complex]) -> complex:
    """``<f, (H - E - i0)^-1 g>`` for vectors given densely from site 1."""
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    n = max(len(f), len(g))
    fp = np.zeros(n, complex)
    gp = np.zeros(n, complex)
    fp[: len(f)] = f
    gp[: len(g)] = g
    R = resolvent_matrix(lead, E, n)[0]
    return complex(fp.conj() @ R @ gp)
