"""Conformally split spacetimes  ds^2 = e^{2 psi} (-dx0^2 + sigma_ij dx^i dx^j).

The spatial fibre is a flat torus of period ``L`` in every axis and ``sigma``
is a constant positive definite matrix.  ``psi`` comes from a built-in family
(analytic derivatives) or from an expression (fourth-order central
differences).  Points are arrays with the time coordinate first; batched
points carry the coordinate axis first, ``(n+1, ...)``.
"""

from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg

from .errors import OutOfDomain
from .expr import Expression

# fourth-order central first-difference weights at offsets -2..2
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_OFFSETS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


class PowerLaw:
    """psi = -beta log x0; coordinate slices are umbilic with kappa = beta x0^(beta-1)."""

    def __init__(self, beta):
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)

    def __call__(self, x0, xs):
        x0 = np.asarray(x0, dtype=float)
        psi = -self.beta * np.log(x0)
        psi_t = -self.beta / x0
        psi_x = np.zeros((len(xs),) + np.shape(psi))
        return psi, psi_t, psi_x

    def describe(self):
        return f"power_law(beta={self.beta:g})"


def _bump(x0, a, b):
    """Smooth bump supported in (a, b), equal to 1 at the midpoint, and its derivative."""
    s = (2.0 * np.asarray(x0, dtype=float) - a - b) / (b - a)
    inside = np.abs(s) < 1.0
    one_minus = np.where(inside, 1.0 - s * s, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / one_minus), 0.0)
    ds = 2.0 / (b - a)
    dval = np.where(inside, val * (-2.0 * s / one_minus**2) * ds, 0.0)
    return val, dval


class PerturbedPowerLaw(PowerLaw):
    """psi = -beta log x0 + A cos(2 pi x1 / L) bump(x0)."""

    def __init__(self, beta, amplitude, period, interval):
        super().__init__(beta)
        self.amplitude = float(amplitude)
        self.period = float(period)
        self.interval = tuple(interval)

    def __call__(self, x0, xs):
        psi, psi_t, psi_x = super().__call__(x0, xs)
        if self.amplitude == 0.0:
            return psi, psi_t, psi_x
        k = 2.0 * math.pi / self.period
        bump, dbump = _bump(x0, *self.interval)
        c = np.cos(k * xs[0])
        psi = psi + self.amplitude * c * bump
        psi_t = psi_t + self.amplitude * c * dbump
        psi_x = psi_x.copy()
        psi_x[0] = -self.amplitude * k * np.sin(k * xs[0]) * bump
        return psi, psi_t, psi_x

    def describe(self):
        return f"perturbed_power_law(beta={self.beta:g}, amplitude={self.amplitude:g})"


class Flat:
    """psi = 0 (Minkowski space with a flat torus fibre)."""

    beta = 0.0

    def __call__(self, x0, xs):
        shape = np.broadcast(np.asarray(x0), *[np.asarray(x) for x in xs]).shape
        zero = np.zeros(shape)
        return zero, zero.copy(), np.zeros((len(xs),) + shape)

    def describe(self):
        return "minkowski"


class ExpressionPsi:
    """psi from an expression in x0, x1, ...; derivatives by 4th-order differences."""

    def __init__(self, expression, step=1e-4):
        self.expression = expression if isinstance(expression, Expression) else Expression(expression)
        if "vt" in self.expression.names:
            raise ValueError("psi may not depend on vt")
        self.step = step

    def value(self, x0, xs):
        env = {"x0": x0}
        for i, x in enumerate(xs):
            env[f"x{i + 1}"] = x
        shape = np.broadcast(np.asarray(x0), *[np.asarray(x) for x in xs]).shape
        return np.broadcast_to(np.asarray(self.expression(**env), dtype=float), shape)

    def __call__(self, x0, xs):
        x0 = np.asarray(x0, dtype=float)
        xs = [np.asarray(x, dtype=float) for x in xs]
        psi = self.value(x0, xs)
        h0 = self.step * np.maximum(1.0, np.abs(x0))
        psi_t = sum(w * self.value(x0 + o * h0, xs) for w, o in zip(_D1, _OFFSETS) if w) / h0
        psi_x = []
        for i in range(len(xs)):
            hi = self.step * np.maximum(1.0, np.abs(xs[i]))
            acc = 0.0
            for w, o in zip(_D1, _OFFSETS):
                if w:
                    shifted = list(xs)
                    shifted[i] = xs[i] + o * hi
                    acc = acc + w * self.value(x0, shifted)
            psi_x.append(acc / hi)
        return np.array(psi), psi_t, np.array(psi_x).reshape((len(xs),) + psi.shape)

    def describe(self):
        return f"psi = {self.expression.text}"


@dataclass(frozen=True)
class ChristoffelTime:
    """Time components of the ambient connection at one point."""

    g000: float
    gi00: np.ndarray
    gij0: np.ndarray


class SpacetimeSpec:
    """Immutable description of the ambient Lorentzian manifold."""

    def __init__(self, psi, n=2, sigma=None, time_interval=(0.5, 2.0), period=1.0):
        if n < 2:
            raise ValueError("spatial dimension must be >= 2")
        self.psi = psi
        self.n = int(n)
        sigma = np.eye(n) if sigma is None else np.asarray(sigma, dtype=float)
        if sigma.ndim == 1:
            sigma = np.diag(sigma)
        if sigma.shape != (n, n) or not np.allclose(sigma, sigma.T):
            raise ValueError("sigma must be a symmetric n x n matrix")
        if np.linalg.eigvalsh(sigma).min() <= 0:
            raise ValueError("sigma must be positive definite")
        self.sigma = sigma
        self.sigma_inv = np.linalg.inv(sigma)
        a, b = map(float, time_interval)
        if not a < b:
            raise ValueError("time interval must satisfy a < b")
        self.time_interval = (a, b)
        if period <= 0:
            raise ValueError("period must be positive")
        self.period = float(period)

    # constructors for the built-in families

    @classmethod
    def power_law(cls, beta, **kw):
        a, _ = kw.get("time_interval", (0.5, 2.0))
        if a <= 0:
            raise ValueError("power-law family needs a positive time interval")
        return cls(PowerLaw(beta), **kw)

    @classmethod
    def perturbed_power_law(cls, beta, amplitude, **kw):
        interval = kw.get("time_interval", (0.5, 2.0))
        period = kw.get("period", 1.0)
        if interval[0] <= 0:
            raise ValueError("power-law family needs a positive time interval")
        return cls(PerturbedPowerLaw(beta, amplitude, period, interval), **kw)

    @classmethod
    def minkowski(cls, **kw):
        return cls(Flat(), **kw)

    @classmethod
    def from_expression(cls, text, **kw):
        return cls(ExpressionPsi(text), **kw)

    def describe(self):
        return self.psi.describe()

    # evaluation

    def check_time(self, x0):
        a, b = self.time_interval
        x0 = np.asarray(x0)
        if np.any(~np.isfinite(x0)) or np.any(x0 < a) or np.any(x0 > b):
            raise OutOfDomain(f"time coordinate outside [{a:g}, {b:g}]")

    def psi_derivs(self, x0, xs):
        """Return ``(psi, d psi/dx0, d psi/dx^i)`` broadcast over the inputs."""
        return self.psi(x0, xs)

    def metric(self, points):
        """Ambient metric at points ``(n+1, ...)`` -> ``(n+1, n+1, ...)``."""
        points = np.asarray(points, dtype=float)
        psi = self.psi(points[0], list(points[1:]))[0]
        m = self.n + 1
        out = np.zeros((m, m) + psi.shape)
        conf = np.exp(2.0 * psi)
        out[0, 0] = -conf
        for i in range(self.n):
            for j in range(self.n):
                out[i + 1, j + 1] = conf * self.sigma[i, j]
        return out

    def reference_metric(self, points):
        g = self.metric(points)
        g[0, 0] = -g[0, 0]
        return g

    def validate(self, samples=256, seed=0):
        """Sample psi and its derivatives over the domain; raise on non-finite values."""
        rng = np.random.default_rng(seed)
        a, b = self.time_interval
        x0 = rng.uniform(a, b, samples)
        xs = [rng.uniform(0.0, self.period, samples) for _ in range(self.n)]
        psi, psi_t, psi_x = self.psi(x0, xs)
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(psi_t)) and np.all(np.isfinite(psi_x))):
            raise ValueError("psi or its first derivatives are not finite on the domain")


# --------------------------------------------------------------------------
# operations


def _point(spec, x0, x):
    x = np.zeros(spec.n) if x is None else np.asarray(x, dtype=float).reshape(spec.n)
    spec.check_time(x0)
    return float(x0), x


def christoffel_time_components(spec, x0, x=None):
    """Gamma^0_00 = psi_t, Gamma^0_i0 = psi_i, Gamma^0_ij = psi_t sigma_ij."""
    x0, x = _point(spec, x0, x)
    psi, psi_t, psi_x = spec.psi_derivs(np.array(x0), [np.array(xi) for xi in x])
    psi_t = float(psi_t)
    return ChristoffelTime(psi_t, np.asarray(psi_x, dtype=float).reshape(spec.n), psi_t * spec.sigma)


def slice_curvature(spec, c, x=None):
    """Principal curvature of the slice {x0 = c} for the past-directed normal.

    All principal curvatures coincide: kappa = -e^{-psi} psi_t.
    """
    c, x = _point(spec, c, x)
    psi, psi_t, _ = spec.psi_derivs(np.array(c), [np.array(xi) for xi in x])
    return float(-np.exp(-psi) * psi_t)


def reference_norm(spec, x0, x, vector):
    """Norm of a tangent vector for the Riemannian metric e^{2 psi}(dx0^2 + sigma)."""
    x0, x = _point(spec, x0, x)
    v = np.asarray(vector, dtype=float)
    point = np.concatenate([[x0], x])
    gt = spec.reference_metric(point)
    return float(np.sqrt(max(v @ gt @ v, 0.0)))


def christoffel_fd(spec, points, step=1e-3):
    """All ambient Christoffel symbols Gamma^a_bc by differencing the metric.

    ``points`` is ``(n+1, ...)``; returns ``(n+1, n+1, n+1, ...)`` indexed
    ``[a, b, c]``.  Uses only metric values (never psi derivatives), so it is
    an independent check of the analytic connection.
    """
    points = np.asarray(points, dtype=float)
    m = spec.n + 1
    g = spec.metric(points)
    dg = np.empty((m,) + g.shape)  # dg[c, a, b] = d_c g_ab
    for c in range(m):
        h = step * np.maximum(1.0, np.abs(points[c])) if c == 0 else step
        acc = 0.0
        for w, o in zip(_D1, _OFFSETS):
            if w:
                shifted = points.copy()
                shifted[c] = points[c] + o * h
                acc = acc + w * spec.metric(shifted)
        dg[c] = acc / h
    ginv = np.moveaxis(np.linalg.inv(np.moveaxis(g, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    # lowered: Gamma_dbc = (d_b g_dc + d_c g_db - d_d g_bc) / 2
    low = 0.5 * (
        np.einsum("bdc...->dbc...", dg)
        + np.einsum("cdb...->dbc...", dg)
        - dg
    )
    return np.einsum("ad...,dbc...->abc...", ginv, low)


def riemann_fd(spec, points, step=1e-3):
    """Ambient Riemann tensor R^a_{bcd} by differencing ``christoffel_fd``.

    Convention: R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{ce} G^e_{db}
    - G^a_{de} G^e_{cb}, so Ricci R_bd = R^a_{bad} is positive on spheres.
    """
    points = np.asarray(points, dtype=float)
    m = spec.n + 1
    gam = christoffel_fd(spec, points, step)
    dgam = np.empty((m,) + gam.shape)
    for c in range(m):
        h = step * np.maximum(1.0, np.abs(points[c])) if c == 0 else step
        acc = 0.0
        for w, o in zip(_D1, _OFFSETS):
            if w:
                shifted = points.copy()
                shifted[c] = points[c] + o * h
                acc = acc + w * christoffel_fd(spec, shifted, step)
        dgam[c] = acc / h
    # dgam[c, a, d, b] = d_c Gamma^a_db
    term1 = np.einsum("cadb...->abcd...", dgam)
    term2 = np.einsum("dacb...->abcd...", dgam)
    term3 = np.einsum("ace...,edb...->abcd...", gam, gam)
    term4 = np.einsum("ade...,ecb...->abcd...", gam, gam)
    return term1 - term2 + term3 - term4


def ricci_fd(spec, points, step=1e-3):
    riem = riemann_fd(spec, points, step)
    return np.einsum("abad...->bd...", riem)


@dataclass(frozen=True)
class ConvexCandidate:
    """A function chi(x0, x) on spacetime and its claimed convexity constant."""

    chi: object
    c0: float

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if isinstance(self.chi, str):
            object.__setattr__(self, "chi", Expression(self.chi))

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        if isinstance(self.chi, Expression):
            env = {"x0": points[0]}
            for i in range(1, points.shape[0]):
                env[f"x{i}"] = points[i]
            return np.broadcast_to(np.asarray(self.chi(**env), dtype=float), points.shape[1:])
        return np.asarray(self.chi(points), dtype=float)


@dataclass
class ConvexityReport:
    passed: bool
    margin: float
    samples: int
    c0: float
    worst_point: np.ndarray


def _hessian_fd(fn, points, step):
    m = points.shape[0]
    out = np.empty((m, m) + points.shape[1:])
    hs = [step * np.maximum(1.0, np.abs(points[c])) if c == 0 else np.full(points.shape[1:], step)
          for c in range(m)]
    for a in range(m):
        for b in range(a, m):
            acc = 0.0
            for wa, oa in zip(_D1, _OFFSETS):
                if not wa:
                    continue
                for wb, ob in zip(_D1, _OFFSETS):
                    if not wb:
                        continue
                    shifted = points.copy()
                    shifted[a] = shifted[a] + oa * hs[a]
                    shifted[b] = shifted[b] + ob * hs[b]
                    acc = acc + wa * wb * fn(shifted)
            out[a, b] = out[b, a] = acc / (hs[a] * hs[b])
    return out


def _gradient_fd(fn, points, step):
    m = points.shape[0]
    out = np.empty((m,) + points.shape[1:])
    for c in range(m):
        h = step * np.maximum(1.0, np.abs(points[c])) if c == 0 else step
        acc = 0.0
        for w, o in zip(_D1, _OFFSETS):
            if w:
                shifted = points.copy()
                shifted[c] = points[c] + o * h
                acc = acc + w * fn(shifted)
        out[c] = acc / h
    return out


def check_convex(candidate, spec, samples=200, seed=0, step=1e-2):
    """Check chi_{ab} - c0 gbar_{ab} >= 0 at random points of the domain.

    The covariant Hessian is formed from differenced partials minus the
    connection term; the margin is the smallest eigenvalue of the difference
    measured against the Riemannian reference metric.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    a, b = spec.time_interval
    pts = np.empty((spec.n + 1, samples))
    pts[0] = rng.uniform(a, b, samples)
    pts[1:] = rng.uniform(0.0, spec.period, (spec.n, samples))
    hess = _hessian_fd(candidate, pts, step)
    grad = _gradient_fd(candidate, pts, step)
    gam = christoffel_fd(spec, pts)
    cov = hess - np.einsum("cab...,c...->ab...", gam, grad)
    diff = cov - candidate.c0 * spec.metric(pts)
    ref = spec.reference_metric(pts)
    margins = np.array([
        scipy.linalg.eigh(0.5 * (diff[..., p] + diff[..., p].T), ref[..., p], eigvals_only=True)[0]
        for p in range(samples)
    ])
    worst = int(np.argmin(margins))
    margin = float(margins[worst])
    return ConvexityReport(margin >= -1e-9, margin, samples, candidate.c0, pts[:, worst].copy())
