"""Brute-force reference computations that share no code with the package.

Everything here works on explicit finite truncations of the leads, so the
only approximations are the truncation length and (where used) a small
imaginary shift of the energy.
"""
import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded


def chain_spectral_weights(onsite, hopping, L):
    """Eigenvalues of an L-site open chain and the weights |<site 1|n>|^2."""
    w, U = eigh_tridiagonal(np.full(L, float(onsite)), np.full(L - 1, float(hopping)), lapack_driver="stemr")
    return w, U[0, :] ** 2


def truncated_resolvent(onsite, hopping, E, f, g, L=10_000, eta=1e-3):
    """<f, (H_L - E - i eta)^-1 g> for an L-site chain by a banded solve."""
    f = np.zeros(L, complex) + np.pad(np.asarray(f, complex), (0, L - len(f)))
    g = np.zeros(L, complex) + np.pad(np.asarray(g, complex), (0, L - len(g)))
    ab = np.zeros((3, L), dtype=complex)
    ab[0, 1:] = hopping
    ab[1, :] = onsite - E - 1j * eta
    ab[2, :-1] = hopping
    x = solve_banded((1, 1), ab, g)
    return np.vdot(f, x)


def friedrichs_chain(eps_s, v1, v2, L, onsite=0.0, hopping=1.0):
    """Friedrichs model as one tridiagonal chain: lead 1 reversed, dot, lead 2.

    Returns the diagonal and off-diagonal of a (2L+1)-site Jacobi matrix.
    """
    d = np.full(2 * L + 1, float(onsite))
    d[L] = eps_s
    e = np.full(2 * L, float(hopping))
    e[L - 1] = v1
    e[L] = v2
    return d, e


def friedrichs_out_of_band(eps_s, v, L=2000, lo=-2.0, hi=2.0, margin=1e-3):
    """Eigenvalues of the truncated Friedrichs chain outside [lo - margin, hi + margin]."""
    d, e = friedrichs_chain(eps_s, v, v, L)
    w = eigh_tridiagonal(d, e, eigvals_only=True)
    return np.sort(w[(w < lo - margin) | (w > hi + margin)])


def zero_temperature_particle_current(mu1, mu2):
    """Perfect transmission, T = 0: particle current out of lead 1 in units hbar = 1."""
    return (mu1 - mu2) / (2 * np.pi)


def sparse_hamiltonian(model, L):
    """Sparse H0 + V with L sites per lead, assembled straight from the model fields."""
    from scipy.sparse import coo_matrix

    M = model.scatterer.dim
    off = {ld.id: M + i * L for i, ld in enumerate(model.leads)}
    rows, cols, vals = [], [], []

    def put(i, j, x):
        rows.append(i)
        cols.append(j)
        vals.append(x)

    h = np.asarray(model.scatterer.matrix, dtype=complex)
    for i in range(M):
        for j in range(M):
            if h[i, j] != 0:
                put(i, j, h[i, j])
    for ld in model.leads:
        o = off[ld.id]
        for n in range(L):
            put(o + n, o + n, ld.onsite)
            if n + 1 < L:
                put(o + n, o + n + 1, ld.hopping)
                put(o + n + 1, o + n, ld.hopping)
    for c in model.couplings:
        for a, s in enumerate(c.scatterer_vector):
            for n, f in enumerate(c.lead_vector):
                x = c.strength * s * np.conj(f)
                if x != 0:
                    put(a, off[c.lead] + n, x)
                    put(off[c.lead] + n, a, np.conj(x))
    for c in model.contacts:
        j, k = c.leads
        for n, g in enumerate(c.vector_j):
            for m, gg in enumerate(c.vector_k):
                x = c.strength * g * np.conj(gg)
                if x != 0:
                    put(off[j] + n, off[k] + m, x)
                    put(off[k] + m, off[j] + n, np.conj(x))
    D = M + L * len(model.leads)
    return coo_matrix((vals, (rows, cols)), shape=(D, D)).tocsr()


def _arrow_order(model, L):
    """Permutation putting each lead far end first and the scatterer last.

    In this order Gaussian elimination of ``H - s`` produces no fill-in.
    """
    M = model.scatterer.dim
    perm = []
    for i in range(len(model.leads)):
        o = M + i * L
        perm.extend(range(o + L - 1, o - 1, -1))
    perm.extend(range(M))
    return np.array(perm)


def eigen_count_below(H, s):
    """Number of eigenvalues of the Hermitian sparse ``H`` below ``s`` (Sylvester inertia)."""
    from scipy.sparse import identity
    from scipy.sparse.linalg import splu

    A = (H - s * identity(H.shape[0], format="csc")).tocsc()
    lu = splu(A, permc_spec="NATURAL", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    assert np.all(lu.perm_r == np.arange(H.shape[0])), "pivoting would invalidate the inertia count"
    return int(np.sum(lu.U.diagonal().real < 0))


def out_of_band_eigenvalues(model, L=2000, margin=1e-3, xtol=1e-12):
    """Eigenvalues of the L-site truncation lying outside every band by more than ``margin``.

    Bisection on the inertia count, so no eigenvalue can be missed.
    """
    H = sparse_hamiltonian(model, L)
    p = _arrow_order(model, L)
    H = H[p][:, p].tocsc()
    reach = float(np.max(np.abs(H).sum(axis=1))) + 1.0
    bands = sorted((ld.onsite - 2 * ld.hopping - margin, ld.onsite + 2 * ld.hopping + margin) for ld in model.leads)
    gaps, cursor = [], -reach
    for a, b in bands:
        if a > cursor:
            gaps.append((cursor, a))
        cursor = max(cursor, b)
    gaps.append((cursor, reach))

    out = []
    count = lambda x: eigen_count_below(H, x)  # noqa: E731
    stack = [(a, b, count(a), count(b)) for a, b in gaps]
    while stack:
        a, b, na, nb = stack.pop()
        if nb == na:
            continue
        if b - a <= xtol:
            out.extend([0.5 * (a + b)] * (nb - na))
            continue
        m = 0.5 * (a + b)
        nm = count(m)
        stack.append((a, m, na, nm))
        stack.append((m, b, nm, nb))
    return np.sort(out)
