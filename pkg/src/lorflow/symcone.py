"""Symmetric curvature functions on the Garding cone Gamma_2.

Spectra are numpy arrays whose last axis holds the principal curvatures, so
every function here broadcasts over leading sample/grid axes.  Matrix-valued
operations take a metric ``g`` and a second fundamental form ``h`` as
``(n, n)`` arrays; contravariant results are returned with both indices up.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import NotAdmissible

# relative gap under which two eigenvalues count as equal in the spectral
# Hessian formula (difference quotient replaced by its limit)
EQUAL_EIGEN_RTOL = 1e-8


def as_spectrum(kappa):
    """Validate and return a float array of principal curvatures."""
    k = np.asarray(kappa, dtype=float)
    if k.ndim == 0 or k.shape[-1] < 2:
        raise ValueError("a curvature spectrum needs n >= 2 entries")
    if not np.all(np.isfinite(k)):
        raise ValueError("curvature spectrum contains NaN or inf")
    return k


@dataclass(frozen=True)
class ShapePair:
    """Induced metric ``g`` and second fundamental form ``h`` at one point."""

    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or h.shape != g.shape:
            raise ValueError("g and h must be square matrices of equal size")
        if not (np.allclose(g, g.T) and np.allclose(h, h.T)):
            raise ValueError("g and h must be symmetric")
        if np.linalg.eigvalsh(g).min() <= 0:
            raise ValueError("g must be positive definite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)

    @property
    def n(self):
        return self.g.shape[0]

    @property
    def ginv(self):
        return np.linalg.inv(self.g)

    def spectrum(self):
        return shape_spectrum(self.g, self.h)


# --------------------------------------------------------------------------
# scalar curvature functions


def elementary_symmetric(k, kappa):
    """k-th elementary symmetric polynomial of the spectrum."""
    kappa = as_spectrum(kappa)
    n = kappa.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    e = [np.ones(kappa.shape[:-1])] + [np.zeros(kappa.shape[:-1]) for _ in range(k)]
    for i in range(n):
        ki = kappa[..., i]
        for j in range(min(i + 1, k), 0, -1):
            e[j] = e[j] + ki * e[j - 1]
    return e[k]


def mean_curvature(kappa):
    return np.asarray(kappa, dtype=float).sum(axis=-1)


def h2_value(kappa):
    """H2 = (H^2 - |A|^2) / 2."""
    kappa = np.asarray(kappa, dtype=float)
    H = kappa.sum(axis=-1)
    return 0.5 * (H * H - (kappa * kappa).sum(axis=-1))


def h2_gradient(kappa):
    """Partial derivatives of H2 with respect to each kappa_i: H - kappa_i."""
    kappa = np.asarray(kappa, dtype=float)
    return kappa.sum(axis=-1, keepdims=True) - kappa


def in_gamma2(kappa):
    """Membership in Gamma_2, decided by H > 0 and H2 > 0."""
    kappa = np.asarray(kappa, dtype=float)
    return (kappa.sum(axis=-1) > 0) & (h2_value(kappa) > 0)


def _require_gamma2(kappa):
    ok = in_gamma2(kappa)
    if not np.all(ok):
        raise NotAdmissible("spectrum outside Gamma_2")


def sqrt_h2(kappa):
    kappa = as_spectrum(kappa)
    _require_gamma2(kappa)
    return np.sqrt(h2_value(kappa))


def sqrt_h2_gradient(kappa):
    kappa = as_spectrum(kappa)
    _require_gamma2(kappa)
    F = np.sqrt(h2_value(kappa))
    return h2_gradient(kappa) / (2.0 * F[..., None])


def sqrt_h2_hessian(kappa):
    """Second partials of sqrt(H2) in kappa, shape ``(..., n, n)``."""
    kappa = as_spectrum(kappa)
    _require_gamma2(kappa)
    n = kappa.shape[-1]
    F = np.sqrt(h2_value(kappa))[..., None, None]
    grad = sqrt_h2_gradient(kappa)
    off = 1.0 - np.eye(n)
    return off / (2.0 * F) - grad[..., :, None] * grad[..., None, :] / F


def h2_hessian(kappa):
    n = np.asarray(kappa).shape[-1]
    return np.broadcast_to(1.0 - np.eye(n), np.asarray(kappa).shape + (n,)).copy()


def regularize(kappa, eps):
    """The linear map kappa_i -> kappa_i + eps * H."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    kappa = np.asarray(kappa, dtype=float)
    return kappa + eps * kappa.sum(axis=-1, keepdims=True)


def regularized_sqrt_h2(kappa, eps):
    return sqrt_h2(regularize(kappa, eps))


def regularized_sqrt_h2_gradient(kappa, eps):
    """Gradient of kappa -> sqrt(H2)(kappa + eps*H) by the chain rule."""
    grad = sqrt_h2_gradient(regularize(kappa, eps))
    return grad + eps * grad.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# tensor setting


def shape_spectrum(g, h):
    """Ascending eigenvalues of ``g^{-1} h`` via Cholesky reduction."""
    low = np.linalg.cholesky(np.asarray(g, dtype=float))
    linv = np.linalg.inv(low)
    b = linv @ np.asarray(h, dtype=float) @ np.swapaxes(linv, -1, -2)
    return np.linalg.eigvalsh(0.5 * (b + np.swapaxes(b, -1, -2)))


def _pair(pair_or_g, h=None):
    if isinstance(pair_or_g, ShapePair):
        return pair_or_g.g, pair_or_g.h
    return np.asarray(pair_or_g, dtype=float), np.asarray(h, dtype=float)


def f_matrix_derivative(pair_or_g, h=None):
    """F^{ij} = H g^{ij} - h^{ij} for F = H2."""
    g, h = _pair(pair_or_g, h)
    if not in_gamma2(shape_spectrum(g, h)):
        raise NotAdmissible("g^{-1} h has eigenvalues outside Gamma_2")
    ginv = np.linalg.inv(g)
    H = np.trace(ginv @ h)
    return H * ginv - ginv @ h @ ginv


def regularized_matrix_derivative(pair_or_g, h=None, eps=0.0):
    """Derivative of h -> H2(h + eps*H*g), contravariant.

    Equals ``F^{ij}`` at the shifted tensor plus ``eps * (F^{rs} g_rs) g^{ij}``,
    which for H2 is ``eps*(n-1)*(1+eps*n)*H*g^{ij}``.
    """
    g, h = _pair(pair_or_g, h)
    n = g.shape[0]
    ginv = np.linalg.inv(g)
    H = np.trace(ginv @ h)
    shifted = h + eps * H * g
    if not in_gamma2(shape_spectrum(g, shifted)):
        raise NotAdmissible("regularized tensor outside Gamma_2")
    Ht = np.trace(ginv @ shifted)
    base = Ht * ginv - ginv @ shifted @ ginv
    return base + eps * (n - 1) * (1 + eps * n) * H * ginv


def f_second_derivative_action(pair_or_g, eta, h=None):
    """F^{ij,kl} eta_ij eta_kl for F = H2 (independent of h at fixed g)."""
    g = pair_or_g.g if isinstance(pair_or_g, ShapePair) else np.asarray(pair_or_g, dtype=float)
    ginv = np.linalg.inv(g)
    m = ginv @ np.asarray(eta, dtype=float)
    return np.trace(m) ** 2 - np.trace(m @ m)


def eigenframe(g, h):
    """Eigenvalues of ``g^{-1}h`` and the map taking covariant tensors to the
    g-orthonormal eigenframe (``T -> P.T @ T @ P``)."""
    low = np.linalg.cholesky(g)
    linv = np.linalg.inv(low)
    b = linv @ h @ linv.T
    lam, q = np.linalg.eigh(0.5 * (b + b.T))
    return lam, linv.T @ q


def spectral_second_derivative_action(kappa, eta_frame, grad, hess):
    """Quadratic form of a curvature function's matrix Hessian, spectral form.

    ``eta_frame`` is the direction expressed in the orthonormal eigenframe;
    ``grad``/``hess`` are the derivatives in kappa.  Off-diagonal entries use
    the difference quotient (F_i - F_j)/(kappa_i - kappa_j), replaced by its
    limit F_ii - F_ij when the two curvatures coincide.
    """
    kappa = np.asarray(kappa, dtype=float)
    d = np.diag(eta_frame)
    total = d @ hess @ d
    n = kappa.size
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            gap = kappa[i] - kappa[j]
            if abs(gap) < EQUAL_EIGEN_RTOL * (1.0 + abs(kappa[i])):
                q = hess[i, i] - hess[i, j]
            else:
                q = (grad[i] - grad[j]) / gap
            total += q * eta_frame[i, j] ** 2
    return total


# --------------------------------------------------------------------------
# randomized verification of the lemma-level identities


def sample_gamma2(rng, n, count, low=-2.0, high=4.0):
    """Rejection-sample ``count`` points of Gamma_2 from the box [low, high]^n."""
    out = []
    have = 0
    while have < count:
        batch = rng.uniform(low, high, size=(max(2 * (count - have), 64), n))
        batch = batch[in_gamma2(batch)]
        out.append(batch)
        have += len(batch)
    return np.concatenate(out)[:count]


def random_metrics(rng, n, count):
    a = rng.normal(size=(count, n, n))
    return a @ np.swapaxes(a, -1, -2) + 0.5 * np.eye(n)


def random_orthogonal(rng, n, count):
    q, r = np.linalg.qr(rng.normal(size=(count, n, n)))
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]


def admissible_tensors(rng, g, kappa):
    """Second fundamental forms whose shape operators w.r.t. ``g`` have
    spectrum ``kappa`` (random eigenbasis)."""
    count, n = kappa.shape
    low = np.linalg.cholesky(g)
    q = random_orthogonal(rng, n, count)
    inner = q @ (kappa[:, :, None] * np.swapaxes(q, -1, -2))
    return low @ inner @ np.swapaxes(low, -1, -2)


@dataclass
class CheckResult:
    name: str
    checked: int = 0
    violations: int = 0
    worst_margin: float = math.inf

    def add(self, margin, tol):
        margin = np.asarray(margin, dtype=float).ravel()
        self.checked += margin.size
        self.violations += int(np.count_nonzero(margin < -tol))
        if margin.size:
            self.worst_margin = min(self.worst_margin, float(margin.min()))


@dataclass
class LemmaReport:
    samples: int
    seed: int
    checks: dict = field(default_factory=dict)
    observations: dict = field(default_factory=dict)

    @property
    def violations(self):
        return sum(c.violations for c in self.checks.values())

    @property
    def passed(self):
        return self.violations == 0

    def lines(self):
        rows = [f"samples={self.samples} seed={self.seed}"]
        for c in self.checks.values():
            status = "PASS" if c.violations == 0 else "FAIL"
            rows.append(
                f"{status} {c.name}: checked={c.checked} violations={c.violations} "
                f"worst_margin={c.worst_margin:.3e}"
            )
        for k, v in self.observations.items():
            rows.append(f"INFO {k}: {v:.6g}")
        return rows


def _rel(x, scale):
    return x / np.maximum(scale, 1e-300)


def verify_lemma_identities(samples=100_000, seed=20011930, n_range=(2, 6)):
    """Randomized check of the curvature-function identities used by the flow.

    Spectra are rejection-sampled from [-2, 4]^n with n drawn uniformly from
    ``n_range``.  Inequalities are checked after normalising the margin by the
    size of the compared terms; a check fails when the normalised margin drops
    below ``-1e-12``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    dims = rng.integers(n_range[0], n_range[1] + 1, size=samples)
    report = LemmaReport(samples=samples, seed=seed)
    names = {
        "norm_bound": "|A|^2 <= H^2",
        "gradient_fd": "H2 gradient vs central FD (rel 1e-6)",
        "gradient_lower_bound": "H*F_i >= F for F=H2",
        "concave_mean_bound": "sqrt(H2) <= F(1..1) H / n",
        "regularized_concavity": "midpoint concavity of regularized sqrt(H2) on matrix pairs",
        "smallest_component_bound": "sum F_i k_i^2 >= sum F_i k_i0^2 / n for F=sqrt(H2)",
        "diagonal_identity": "identity sum_{i!=j} k_i^2 + 2F = (F^j_j)^2 + 2 F^j_j k_j (rel 1e-9)",
        "largest_component_bound": "sum_{i!=n} k_i^2 + 2F <= (n+2) F^n_n k_n",
        "quotient_identity": "difference-quotient summand rewritten over H*F^j_j (rel 1e-9)",
        "uniform_ellipticity": "F_eps,i >= eps/(1+n eps) * sum_k F_eps,k",
    }
    checks = {k: CheckResult(v) for k, v in names.items()}
    quotient_ratio = 0.0
    tiny = 1e-12

    for n in range(n_range[0], n_range[1] + 1):
        count = int(np.count_nonzero(dims == n))
        if count == 0:
            continue
        kappa = sample_gamma2(rng, n, count)
        H = kappa.sum(axis=1)
        A2 = (kappa * kappa).sum(axis=1)
        F = h2_value(kappa)
        Fi = h2_gradient(kappa)

        checks["norm_bound"].add(_rel(H * H - A2, H * H), tiny)

        step = 1e-4 * (1.0 + np.abs(kappa))
        fd = np.empty_like(kappa)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            plus = h2_value(kappa + step[:, i : i + 1] * e)
            minus = h2_value(kappa - step[:, i : i + 1] * e)
            fd[:, i] = (plus - minus) / (2.0 * step[:, i])
        scale = np.abs(Fi).max(axis=1, keepdims=True)
        checks["gradient_fd"].add(1e-6 - np.abs(fd - Fi) / scale, 0.0)

        checks["gradient_lower_bound"].add(_rel(H[:, None] * Fi - F[:, None], H[:, None] * Fi + F[:, None]), tiny)

        root = np.sqrt(F)
        bound = math.sqrt(n * (n - 1) / 2.0) * H / n
        checks["concave_mean_bound"].add(_rel(bound - root, bound), tiny)

        # concavity on matrix pairs, eps log-uniform in [1e-3, 1]
        eps = 10.0 ** rng.uniform(-3, 0, size=count)
        g = random_metrics(rng, n, count)
        k2 = sample_gamma2(rng, n, count)
        h1 = admissible_tensors(rng, g, kappa)
        h2 = admissible_tensors(rng, g, k2)

        def reg_root(h):
            lam = shape_spectrum(g, h)
            return np.sqrt(h2_value(lam + eps[:, None] * lam.sum(axis=1, keepdims=True)))

        f1, f2, fm = reg_root(h1), reg_root(h2), reg_root(0.5 * (h1 + h2))
        checks["regularized_concavity"].add(_rel(fm - 0.5 * (f1 + f2), fm), 1e-10)

        sg = Fi / (2.0 * root[:, None])
        lhs = (sg * kappa**2).sum(axis=1)
        kmin = kappa.min(axis=1)
        rhs = sg.sum(axis=1) * kmin**2 / n
        checks["smallest_component_bound"].add(_rel(lhs - rhs, lhs + rhs), tiny)
        neg = kappa < 0
        if np.any(neg):
            rhs_neg = sg.sum(axis=1, keepdims=True) * kappa**2 / n
            m = _rel(lhs[:, None] - rhs_neg, lhs[:, None] + rhs_neg)
            checks["smallest_component_bound"].add(m[neg], tiny)

        for j in range(n):
            others = A2 - kappa[:, j] ** 2
            left = others + 2 * F
            right = Fi[:, j] ** 2 + 2 * Fi[:, j] * kappa[:, j]
            checks["diagonal_identity"].add(1e-9 - np.abs(left - right) / np.maximum(np.abs(left), np.abs(right)), 0.0)

        order = np.argsort(kappa, axis=1)
        ks = np.take_along_axis(kappa, order, axis=1)
        Fs = np.take_along_axis(Fi, order, axis=1)
        left = (ks[:, :-1] ** 2).sum(axis=1) + 2 * F
        right = (n + 2) * Fs[:, -1] * ks[:, -1]
        checks["largest_component_bound"].add(_rel(right - left, right + left), tiny)

        for j in range(n):
            Fj = Fi[:, j]
            for i in range(n):
                if i == j:
                    continue
                q_lhs = 1.0 / Fj + (1.0 - Fi[:, i] / Fj) / H
                q_rhs = (H - kappa[:, j] + kappa[:, i]) / (H * Fj)
                checks["quotient_identity"].add(
                    1e-9 - np.abs(q_lhs - q_rhs) / np.maximum(np.abs(q_lhs), np.abs(q_rhs)), 0.0
                )
            summand = ((H[:, None] - kappa[:, j : j + 1] + kappa) / (H * Fj)[:, None]) ** 2
            summand[:, j] = 0.0
            quotient_ratio = max(quotient_ratio, float((F * summand.sum(axis=1)).max()))

        kt = kappa + eps[:, None] * H[:, None]
        gt = h2_gradient(kt) / (2.0 * np.sqrt(h2_value(kt))[:, None])
        geps = gt + eps[:, None] * gt.sum(axis=1, keepdims=True)
        total = geps.sum(axis=1, keepdims=True)
        floor = eps[:, None] / (1 + n * eps[:, None]) * total
        checks["uniform_ellipticity"].add(_rel(geps - floor, geps + floor), tiny)

    report.checks = checks
    report.observations["quotient_bound_max_ratio"] = quotient_ratio
    return report
