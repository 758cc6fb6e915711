"""Discrete geometry of space-like graphs {x0 = u(x)} over the flat torus.

Fields live on a periodic grid with ``N`` points per axis and are stored
flattened, ``(P,)`` for scalars and ``(n, n, P)`` for tensors.  All
derivatives are second-order centred differences.  The normal is always the
past-directed one, ``nu = -vt e^{-psi} (1, sigma^{ij} u_j)``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .ambient import christoffel_fd, ricci_fd
from .errors import NotSpacelike, OutOfDomain

# states with sigma^{ij} u_i u_j above this are treated as light-like
SPACELIKE_GUARD = 1.0 - 1e-6


class TorusGrid:
    """Uniform periodic grid on [0, L)^n."""

    def __init__(self, n, points, period=1.0):
        if n not in (2, 3):
            raise ValueError("only n = 2 or 3 is supported")
        if points < 8:
            raise ValueError("need at least 8 points per axis")
        if period <= 0:
            raise ValueError("period must be positive")
        self.n = int(n)
        self.points = int(points)
        self.period = float(period)

    @property
    def dx(self):
        return self.period / self.points

    @property
    def shape(self):
        return (self.points,) * self.n

    @property
    def size(self):
        return self.points**self.n

    @cached_property
    def neighbours(self):
        return kernels.neighbour_table(self.shape)

    @cached_property
    def coords(self):
        """Flattened coordinate arrays ``(n, P)``; axis ``i`` is ``x^{i+1}``."""
        axis = np.arange(self.points) * self.dx
        mesh = np.meshgrid(*([axis] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh])

    def sample(self, fn):
        """Evaluate ``fn(*coords)`` on the grid and return a flat field."""
        out = np.asarray(fn(*self.coords), dtype=float)
        return np.broadcast_to(out, (self.size,)).copy()

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and (self.n, self.points, self.period) == (
            other.n, other.points, other.period)

    def __repr__(self):
        return f"TorusGrid(n={self.n}, points={self.points}, period={self.period:g})"


class GraphState:
    """Grid function ``u`` (time values of the graph).  Treated as immutable."""

    def __init__(self, grid, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            u = np.full(grid.size, float(u))
        u = u.reshape(grid.size).copy()
        u.setflags(write=False)
        self.grid = grid
        self.u = u
        self.cache = None

    def with_u(self, u):
        return GraphState(self.grid, u)

    @property
    def field(self):
        return self.u.reshape(self.grid.shape)


@dataclass
class GeometryCache:
    eps: float
    Du: np.ndarray          # (n, P)
    v: np.ndarray           # (P,)
    vt: np.ndarray          # 1/v
    psi: np.ndarray
    psi_t: np.ndarray
    psi_x: np.ndarray       # (n, P)
    g: np.ndarray           # (n, n, P)
    ginv: np.ndarray
    christoffel: np.ndarray  # (n, n, n, P) as [k, i, j]
    h: np.ndarray
    kappa: np.ndarray       # (P, n) unregularized, ascending
    normal: np.ndarray      # (n+1, P) contravariant, past-directed
    F: np.ndarray           # sqrt H2 of the regularized spectrum
    H_reg: np.ndarray
    H2_reg: np.ndarray

    @property
    def marginH(self):
        return float(self.H_reg.min())

    @property
    def marginH2(self):
        return float(self.H2_reg.min())


def _check_state(state, spec):
    if state.grid.n != spec.n:
        raise ValueError("grid and spacetime dimensions differ")
    if not np.all(np.isfinite(state.u)):
        raise OutOfDomain("graph contains non-finite values")
    spec.check_time(state.u)


def _slope(Du, sigma_inv):
    up = np.einsum("ij,jp->ip", sigma_inv, Du)
    return up, np.einsum("ip,ip->p", Du, up)


def _christoffel_from_metric(g, ginv, grid):
    n, P = grid.n, grid.size
    dg = kernels.gradient(g.reshape(n * n, P), grid.neighbours, grid.dx).reshape(n, n, n, P)
    # dg[c, a, b] = d_c g_ab;  lowered Gamma_lij = (d_i g_lj + d_j g_li - d_l g_ij) / 2
    low = 0.5 * (np.einsum("iljp->lijp", dg) + np.einsum("jlip->lijp", dg) - dg)
    return np.einsum("klp,lijp->kijp", ginv, low)


def build_cache(state, spec, eps=0.0):
    """Assemble the full discrete geometry of ``graph u``.

    The second fundamental form uses the time component of the Gauss formula:
    e^{-psi} v^{-1} h_ij = -u_{;ij} - psi_t u_i u_j - psi_j u_i - psi_i u_j
    - psi_t sigma_ij, with the covariant Hessian taken w.r.t. the induced
    metric (Christoffels from differencing the assembled g field).
    """
    _check_state(state, spec)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    grid = state.grid
    n, nbr, dx = grid.n, grid.neighbours, grid.dx
    u = state.u
    Du = kernels.gradient(u[None, :], nbr, dx)[:, 0]
    up, s2 = _slope(Du, spec.sigma_inv)
    if s2.max() >= SPACELIKE_GUARD:
        raise NotSpacelike(f"graph is not space-like (max |Du|^2 = {s2.max():.6g})")
    v = np.sqrt(1.0 - s2)
    vt = 1.0 / v

    psi, psi_t, psi_x = spec.psi_derivs(u, list(grid.coords))
    psi_t = np.broadcast_to(psi_t, u.shape)
    psi_x = np.broadcast_to(psi_x, (n,) + u.shape)
    e2 = np.exp(2.0 * psi)

    sigma = spec.sigma[:, :, None]
    g = e2 * (sigma - Du[:, None, :] * Du[None, :, :])
    ginv = (spec.sigma_inv[:, :, None] + up[:, None, :] * up[None, :, :] / (v * v)) / e2

    gam = _christoffel_from_metric(g, ginv, grid)
    hess = kernels.hessian(u, nbr, dx)
    cov_hess = hess - np.einsum("kijp,kp->ijp", gam, Du)
    rhs = (
        -cov_hess
        - psi_t * Du[:, None, :] * Du[None, :, :]
        - psi_x[None, :, :] * Du[:, None, :]
        - psi_x[:, None, :] * Du[None, :, :]
        - psi_t * sigma
    )
    h = np.exp(psi) * v * rhs
    h = 0.5 * (h + np.swapaxes(h, 0, 1))

    kappa = kernels.spectra(g, h)
    F, H_reg, H2_reg = kernels.response(kappa, eps)

    normal = np.empty((n + 1,) + u.shape)
    scale = -vt * np.exp(-psi)
    normal[0] = scale
    normal[1:] = scale * up

    return GeometryCache(float(eps), Du, v, vt, psi, psi_t, psi_x, g, ginv, gam, h,
                         kappa, normal, F, H_reg, H2_reg)


def ensure_cache(state, spec, eps=0.0):
    c = state.cache
    if c is None or c.eps != eps:
        c = build_cache(state, spec, eps)
        state.cache = c
    return c


@dataclass(frozen=True)
class Admissibility:
    admissible: bool
    marginH: float
    marginH2: float


def admissibility(cache):
    """Admissible iff the regularized spectrum lies in Gamma_2 at every point."""
    mH, mH2 = cache.marginH, cache.marginH2
    return Admissibility(bool(mH > 0 and mH2 > 0), mH, mH2)


def invariant_report(cache, spec):
    """Maximum deviations of the pointwise identities the cache must satisfy."""
    n = cache.g.shape[0]
    eye = np.eye(n)[:, :, None]
    prod = np.einsum("ijp,jkp->ikp", cache.ginv, cache.g)
    e2 = np.exp(2.0 * cache.psi)
    vt2 = 1.0 + e2 * np.einsum("ijp,ip,jp->p", cache.ginv, cache.Du, cache.Du)
    eta_nu = -np.exp(cache.psi) * cache.normal[0]
    return {
        "inverse_metric": float(np.abs(prod - eye).max()),
        "tilt_squared": float(np.abs(vt2 - cache.vt**2).max()),
        "tilt_from_normal": float(np.abs(eta_nu - cache.vt).max()),
        "h_symmetry": float(np.abs(cache.h - np.swapaxes(cache.h, 0, 1)).max()),
        "v_min": float(cache.v.min()),
    }


# --------------------------------------------------------------------------
# oracles (independent code paths used by tests and diagnostics)


def _embedding_points(state):
    return np.concatenate([state.u[None, :], state.grid.coords])


def _tangents(Du):
    n, P = Du.shape
    x = np.zeros((n + 1, n, P))  # x[alpha, i] = d_i x^alpha
    x[0] = Du
    for i in range(n):
        x[i + 1, i] = 1.0
    return x


def _oracle_normal(spec, points, Du):
    """Past-directed unit normal from ambient orthogonality alone."""
    gbar = spec.metric(points)
    gbar_inv = np.moveaxis(np.linalg.inv(np.moveaxis(gbar, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    co = np.concatenate([np.ones_like(Du[:1]), -Du])  # annihilates every tangent
    nu = np.einsum("abp,bp->ap", gbar_inv, co)
    norm2 = np.einsum("abp,ap,bp->p", gbar, nu, nu)
    nu = nu / np.sqrt(-norm2)
    nu = np.where(nu[0] > 0, -nu, nu)
    return nu, gbar


def embedding_oracle_h(state, spec):
    """h_ij = -gbar(nu, x_ij + Gammabar(x_i, x_j)) using every ambient component.

    Ambient Christoffels come from differencing the metric; the normal is
    obtained from orthogonality to the discrete tangents, so nothing here
    shares code with :func:`build_cache` beyond the difference stencils.
    """
    _check_state(state, spec)
    grid = state.grid
    Du = kernels.gradient(state.u[None, :], grid.neighbours, grid.dx)[:, 0]
    _, s2 = _slope(Du, spec.sigma_inv)
    if s2.max() >= SPACELIKE_GUARD:
        raise NotSpacelike("graph is not space-like")
    pts = _embedding_points(state)
    nu, gbar = _oracle_normal(spec, pts, Du)
    gam = christoffel_fd(spec, pts)
    xt = _tangents(Du)
    second = np.zeros((grid.n + 1, grid.n, grid.n, grid.size))
    second[0] = kernels.hessian(state.u, grid.neighbours, grid.dx)
    second = second + np.einsum("abcp,bip,cjp->aijp", gam, xt, xt)
    return -np.einsum("abp,bp,aijp->ijp", gbar, nu, second)


def weingarten_mismatch(state, spec):
    """Max |D_i nu - h_i^k x_k| with D the ambient covariant derivative."""
    cache = build_cache(state, spec)
    grid = state.grid
    n, P = grid.n, grid.size
    pts = _embedding_points(state)
    nu = cache.normal
    dnu = kernels.gradient(nu, grid.neighbours, grid.dx)  # (n, n+1, P): [i, alpha]
    gam = christoffel_fd(spec, pts)
    xt = _tangents(cache.Du)
    lhs = np.einsum("iap->aip", dnu) + np.einsum("abcp,bp,cip->aip", gam, nu, xt)
    mixed = np.einsum("ikp,kjp->ijp", cache.ginv, cache.h)  # h^i_j
    rhs = np.einsum("kip,akp->aip", mixed, xt)
    return float(np.abs(lhs - rhs).max())


def tilt_ratio(cache, spec):
    """Pointwise max over g-unit tangents xi of |x_* xi|_ref / vt.

    The reference metric is e^{2 psi}(dx0^2 + sigma); the ratio stays bounded
    by a constant independent of the graph.
    """
    e2 = np.exp(2.0 * cache.psi)
    Du = cache.Du
    ref = e2 * (spec.sigma[:, :, None] + Du[:, None, :] * Du[None, :, :])
    top = kernels.spectra(cache.g, ref)[:, -1]
    return np.sqrt(top) / cache.vt


@dataclass
class GaussReport:
    intrinsic: np.ndarray
    extrinsic: np.ndarray
    max_mismatch: float
    relative_mismatch: float


def intrinsic_scalar_curvature(cache, grid):
    """Scalar curvature of the induced metric by differencing its Christoffels."""
    n, P = grid.n, grid.size
    gam = cache.christoffel
    dgam = kernels.gradient(gam.reshape(n**3, P), grid.neighbours, grid.dx).reshape(n, n, n, n, P)
    # dgam[m, k, i, j] = d_m Gamma^k_ij
    ric = (
        np.einsum("kkijp->ijp", dgam)
        - np.einsum("jkikp->ijp", dgam)
        + np.einsum("kklp,lijp->ijp", gam, gam)
        - np.einsum("kjlp,likp->ijp", gam, gam)
    )
    return np.einsum("ijp,ijp->p", cache.ginv, ric)


def gauss_equation_diagnostic(state, spec):
    """Compare intrinsic R with -(H^2 - |A|^2) + Rbar + 2 Ricbar(nu, nu) (n = 2)."""
    if state.grid.n != 2:
        raise ValueError("the Gauss-equation diagnostic is implemented for n = 2")
    cache = build_cache(state, spec)
    grid = state.grid
    R = intrinsic_scalar_curvature(cache, grid)
    H = cache.kappa.sum(axis=1)
    A2 = (cache.kappa**2).sum(axis=1)
    pts = _embedding_points(state)
    ric = ricci_fd(spec, pts)
    gbar = spec.metric(pts)
    gbar_inv = np.moveaxis(np.linalg.inv(np.moveaxis(gbar, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    Rbar = np.einsum("abp,abp->p", gbar_inv, ric)
    ric_nn = np.einsum("abp,ap,bp->p", ric, cache.normal, cache.normal)
    ext = -(H * H - A2) + Rbar + 2.0 * ric_nn
    diff = np.abs(R - ext)
    scale = max(1.0, float(np.abs(Rbar).max()), float(np.abs(H * H - A2).max()))
    return GaussReport(R, ext, float(diff.max()), float(diff.max()) / scale)
