"""Hot per-grid-point kernels, each in a numba and a pure-numpy flavour.

All kernels work on flattened grids: a field with ``C`` components over ``P``
grid points is a ``(C, P)`` array, and periodic neighbours come from a
``(n, 2, P)`` index table (``[:, 0]`` forward, ``[:, 1]`` backward) built by
:func:`neighbour_table`.  The public names dispatch on ``_accel.USE_NUMBA``;
the ``*_numpy`` / ``*_numba`` variants are exported for tests and benchmarks.
"""

import numpy as np

from . import _accel
from ._accel import njit, prange


def neighbour_table(shape):
    """Forward/backward periodic neighbour indices of a row-major grid."""
    n = len(shape)
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    table = np.empty((n, 2, idx.size), dtype=np.int64)
    for a in range(n):
        table[a, 0] = np.roll(idx, -1, axis=a).ravel()
        table[a, 1] = np.roll(idx, 1, axis=a).ravel()
    return table


# --------------------------------------------------------------------------
# first and second centred differences


def gradient_numpy(field, nbr, dx):
    n = nbr.shape[0]
    out = np.empty((n,) + field.shape)
    for a in range(n):
        out[a] = (field[:, nbr[a, 0]] - field[:, nbr[a, 1]]) / (2.0 * dx)
    return out


@njit(parallel=True)
def gradient_numba(field, nbr, dx):
    n = nbr.shape[0]
    C, P = field.shape
    out = np.empty((n, C, P))
    inv = 1.0 / (2.0 * dx)
    for p in prange(P):
        for a in range(n):
            fwd = nbr[a, 0, p]
            bwd = nbr[a, 1, p]
            for c in range(C):
                out[a, c, p] = (field[c, fwd] - field[c, bwd]) * inv
    return out


def hessian_numpy(u, nbr, dx):
    n = nbr.shape[0]
    out = np.empty((n, n, u.size))
    for a in range(n):
        f, b = nbr[a, 0], nbr[a, 1]
        out[a, a] = (u[f] - 2.0 * u + u[b]) / dx**2
        for c in range(a + 1, n):
            fc, bc = nbr[c, 0], nbr[c, 1]
            cross = (u[fc[f]] - u[bc[f]] - u[fc[b]] + u[bc[b]]) / (4.0 * dx**2)
            out[a, c] = cross
            out[c, a] = cross
    return out


@njit(parallel=True)
def hessian_numba(u, nbr, dx):
    n = nbr.shape[0]
    P = u.shape[0]
    out = np.empty((n, n, P))
    idx2 = 1.0 / (dx * dx)
    for p in prange(P):
        for a in range(n):
            f = nbr[a, 0, p]
            b = nbr[a, 1, p]
            out[a, a, p] = (u[f] - 2.0 * u[p] + u[b]) * idx2
            for c in range(a + 1, n):
                cross = (
                    u[nbr[c, 0, f]] - u[nbr[c, 1, f]] - u[nbr[c, 0, b]] + u[nbr[c, 1, b]]
                ) * (0.25 * idx2)
                out[a, c, p] = cross
                out[c, a, p] = cross
    return out


# --------------------------------------------------------------------------
# principal curvatures: eigenvalues of g^{-1} h, pointwise


def _spectra2_numpy(g, h):
    det_g = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    tr = (g[1, 1] * h[0, 0] + g[0, 0] * h[1, 1] - g[0, 1] * h[1, 0] - g[1, 0] * h[0, 1]) / det_g
    det = (h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]) / det_g
    half = 0.5 * tr
    disc = np.sqrt(np.maximum(half * half - det, 0.0))
    return np.stack([half - disc, half + disc], axis=-1)


def spectra_numpy(g, h):
    """Ascending eigenvalues of ``g^{-1} h`` for ``(n, n, P)`` fields."""
    n = g.shape[0]
    if n == 2:
        return _spectra2_numpy(g, h)
    gp = np.moveaxis(g, -1, 0)
    hp = np.moveaxis(h, -1, 0)
    low = np.linalg.cholesky(gp)
    linv = np.linalg.inv(low)
    b = linv @ hp @ np.swapaxes(linv, -1, -2)
    b = 0.5 * (b + np.swapaxes(b, -1, -2))
    return np.linalg.eigvalsh(b)


@njit
def _reduce_numba(g, h, p, n, b, low, y):
    """b = L^{-1} h L^{-T} with g = L L^T, for grid point p (low, y: scratch)."""
    for i in range(n):
        for j in range(i + 1):
            acc = g[i, j, p]
            for k in range(j):
                acc -= low[i, k] * low[j, k]
            if i == j:
                low[i, i] = np.sqrt(acc)
            else:
                low[i, j] = acc / low[j, j]
    # y = L^{-1} h (column by column), then b = y L^{-T} (row by row)
    for c in range(n):
        for i in range(n):
            acc = h[i, c, p]
            for k in range(i):
                acc -= low[i, k] * y[k, c]
            y[i, c] = acc / low[i, i]
    for r in range(n):
        for i in range(n):
            acc = y[r, i]
            for k in range(i):
                acc -= low[i, k] * b[r, k]
            b[r, i] = acc / low[i, i]
    for i in range(n):
        for j in range(i):
            m = 0.5 * (b[i, j] + b[j, i])
            b[i, j] = m
            b[j, i] = m


@njit
def _jacobi_eigvals(a, n, out):
    """Eigenvalues of the symmetric matrix ``a`` (destroyed) by cyclic Jacobi."""
    for _ in range(60):
        off = 0.0
        scale = 0.0
        for i in range(n):
            scale += a[i, i] * a[i, i]
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if off <= 1e-32 * (scale + off) or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    for i in range(n):  # insertion sort, n is tiny
        x = a[i, i]
        j = i - 1
        while j >= 0 and out[j] > x:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = x


@njit
def _spectra2_point(g, h, p, out):
    det_g = g[0, 0, p] * g[1, 1, p] - g[0, 1, p] * g[1, 0, p]
    tr = (
        g[1, 1, p] * h[0, 0, p]
        + g[0, 0, p] * h[1, 1, p]
        - g[0, 1, p] * h[1, 0, p]
        - g[1, 0, p] * h[0, 1, p]
    ) / det_g
    det = (h[0, 0, p] * h[1, 1, p] - h[0, 1, p] * h[1, 0, p]) / det_g
    half = 0.5 * tr
    d = half * half - det
    disc = np.sqrt(d) if d > 0.0 else 0.0
    out[p, 0] = half - disc
    out[p, 1] = half + disc


_CHUNK = 256


@njit(parallel=True)
def spectra_numba(g, h):
    n = g.shape[0]
    P = g.shape[2]
    out = np.empty((P, n))
    chunks = (P + _CHUNK - 1) // _CHUNK
    for c in prange(chunks):
        lo = c * _CHUNK
        hi = min(P, lo + _CHUNK)
        if n == 2:
            for p in range(lo, hi):
                _spectra2_point(g, h, p, out)
        else:
            b = np.empty((n, n))
            low = np.zeros((n, n))
            y = np.empty((n, n))
            row = np.empty(n)
            for p in range(lo, hi):
                _reduce_numba(g, h, p, n, b, low, y)
                _jacobi_eigvals(b, n, row)
                for i in range(n):
                    out[p, i] = row[i]
    return out


# --------------------------------------------------------------------------
# regularized curvature response: kappa -> kappa + eps*H, then H, H2, sqrt H2


def response_numpy(kappa, eps):
    H = kappa.sum(axis=-1)
    kt = kappa + eps * H[..., None]
    Ht = kt.sum(axis=-1)
    H2t = 0.5 * (Ht * Ht - (kt * kt).sum(axis=-1))
    return np.sqrt(np.maximum(H2t, 0.0)), Ht, H2t


@njit(parallel=True)
def response_numba(kappa, eps):
    P, n = kappa.shape
    F = np.empty(P)
    Hs = np.empty(P)
    H2s = np.empty(P)
    for p in prange(P):
        H = 0.0
        for i in range(n):
            H += kappa[p, i]
        Ht = 0.0
        sq = 0.0
        for i in range(n):
            k = kappa[p, i] + eps * H
            Ht += k
            sq += k * k
        H2 = 0.5 * (Ht * Ht - sq)
        Hs[p] = Ht
        H2s[p] = H2
        F[p] = np.sqrt(H2) if H2 > 0.0 else 0.0
    return F, Hs, H2s


IMPLEMENTATIONS = {
    "numpy": {
        "gradient": gradient_numpy,
        "hessian": hessian_numpy,
        "spectra": spectra_numpy,
        "response": response_numpy,
    },
    "numba": {
        "gradient": gradient_numba,
        "hessian": hessian_numba,
        "spectra": spectra_numba,
        "response": response_numba,
    },
}


def backend():
    return "numba" if _accel.USE_NUMBA else "numpy"


def gradient(field, nbr, dx):
    """Centred first differences of a ``(C, P)`` field -> ``(n, C, P)``."""
    field = np.ascontiguousarray(field, dtype=np.float64)
    return IMPLEMENTATIONS[backend()]["gradient"](field, nbr, dx)


def hessian(u, nbr, dx):
    """Centred second differences of a flat scalar field -> ``(n, n, P)``."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    return IMPLEMENTATIONS[backend()]["hessian"](u, nbr, dx)


def spectra(g, h):
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    return IMPLEMENTATIONS[backend()]["spectra"](g, h)


def response(kappa, eps):
    """``(sqrt H2(k~), H(k~), H2(k~))`` with ``k~ = kappa + eps*H(kappa)``."""
    kappa = np.ascontiguousarray(kappa, dtype=np.float64)
    return IMPLEMENTATIONS[backend()]["response"](kappa, float(eps))
