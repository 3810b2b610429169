"""
Exact Gaussian-process regression for tree leaves.

Two kernel families are supported, both on standardized features:

    rbf      k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2))
    lin-rbf  k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2)) + v * x'x

with a constant prior mean and Gaussian observation noise.  The prior mean,
kernel hyperparameters and noise are fitted jointly by Adam ascent on the
log marginal likelihood using analytic gradients.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .exceptions import InvalidInput, NumericalError

RBF = "rbf"
LINEAR_PLUS_RBF = "lin-rbf"
KERNEL_FAMILIES = (RBF, LINEAR_PLUS_RBF)

NOISE_MIN = 1e-8
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class KernelParams:
    family: str
    log_lengthscale: float
    log_signal_var: float
    log_noise_var: float
    prior_mean: float
    log_linear_var: float = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise InvalidInput(f"unknown kernel family {self.family!r}")
        if (self.family == LINEAR_PLUS_RBF) != (self.log_linear_var is not None):
            raise InvalidInput("log_linear_var must be set iff family is lin-rbf")

    @property
    def lengthscale(self):
        return float(np.exp(self.log_lengthscale))

    @property
    def signal_var(self):
        return float(np.exp(self.log_signal_var))

    @property
    def noise_var(self):
        return max(float(np.exp(self.log_noise_var)), NOISE_MIN)

    @property
    def linear_var(self):
        return 0.0 if self.log_linear_var is None else float(np.exp(self.log_linear_var))

    def to_vector(self):
        """Pack into the optimizer layout [mean, log_l, log_s2, log_sn2(, log_v)]."""
        v = [self.prior_mean, self.log_lengthscale, self.log_signal_var, self.log_noise_var]
        if self.family == LINEAR_PLUS_RBF:
            v.append(self.log_linear_var)
        return np.array(v, dtype=float)

    @classmethod
    def from_vector(cls, family, theta):
        theta = [float(t) for t in theta]
        return cls(
            family=family,
            prior_mean=theta[0],
            log_lengthscale=theta[1],
            log_signal_var=theta[2],
            log_noise_var=theta[3],
            log_linear_var=theta[4] if family == LINEAR_PLUS_RBF else None,
        )


def _sqdist(A, B):
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def kernel_matrix(params, A, B=None):
    """Gram matrix between rows of ``A`` and ``B`` (``B`` defaults to ``A``)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    K = params.signal_var * np.exp(-0.5 * _sqdist(A, B) / params.lengthscale ** 2)
    if params.family == LINEAR_PLUS_RBF:
        K = K + params.linear_var * (A @ B.T)
    return K


def kernel_diag(params, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    k = np.full(A.shape[0], params.signal_var)
    if params.family == LINEAR_PLUS_RBF:
        k = k + params.linear_var * (A * A).sum(1)
    return k


def kernel_eval(params, x, x_prime):
    """Scalar kernel value k(x, x')."""
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(x_prime, dtype=float).ravel()
    diff = x - xp
    val = params.signal_var * np.exp(-0.5 * float(diff @ diff) / params.lengthscale ** 2)
    if params.family == LINEAR_PLUS_RBF:
        val += params.linear_var * float(x @ xp)
    return float(val)


def robust_cholesky(A):
    """Lower Cholesky factor of ``A``, escalating diagonal jitter on failure.

    Jitter starts at 1e-8 * mean(diag(A)) and grows tenfold up to 1e-2 * mean(diag).
    Returns ``(L, jitter)``.
    """
    try:
        return cholesky(A, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    if not np.all(np.isfinite(A)):
        raise NumericalError("non-finite Gram matrix")
    scale = max(float(np.trace(A)) / A.shape[0], np.finfo(float).tiny)
    jitter = 1e-8 * scale
    while jitter <= 1e-2 * scale * (1 + 1e-12):
        try:
            L = cholesky(A + jitter * np.eye(A.shape[0]), lower=True, check_finite=False)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("Cholesky factorization failed after jitter escalation")


@dataclass(frozen=True, eq=False)
class GpLeafModel:
    """A GP conditioned on one leaf's data.

    Kernels are evaluated on ``x - offset``.  The offset is irrelevant to the
    RBF part; for the linear part it puts the origin at the leaf centroid so
    that the slope prior does not also act as a large offset prior.
    """
    X_train: np.ndarray
    y_train: np.ndarray
    params: KernelParams
    chol_L: np.ndarray
    alpha: np.ndarray
    offset: np.ndarray
    jitter: float = 0.0

    @classmethod
    def from_params(cls, X, y, params, offset=None):
        """Condition a GP with fixed hyperparameters on (X, y)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        offset = np.zeros(X.shape[1]) if offset is None else np.asarray(offset, dtype=float)
        Ky = kernel_matrix(params, X - offset) + params.noise_var * np.eye(len(y))
        L, jitter = robust_cholesky(Ky)
        alpha = cho_solve((L, True), y - params.prior_mean, check_finite=False)
        return cls(X, y, params, L, alpha, offset, jitter)

    @property
    def n(self):
        return len(self.y_train)


def gp_log_marginal_likelihood(X, y, params):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    Ky = kernel_matrix(params, X) + params.noise_var * np.eye(len(y))
    L, _ = robust_cholesky(Ky)
    r = y - params.prior_mean
    a = solve_triangular(L, r, lower=True, check_finite=False)
    return float(-0.5 * a @ a - np.log(np.diag(L)).sum() - 0.5 * len(y) * _LOG_2PI)


def lml_and_grad(X, y, family, theta):
    """Log marginal likelihood and its gradient in the packed parameter layout."""
    params = KernelParams.from_vector(family, theta)
    n = len(y)
    D2 = _sqdist(X, X)
    Krbf = params.signal_var * np.exp(-0.5 * D2 / params.lengthscale ** 2)
    Ky = Krbf + params.noise_var * np.eye(n)
    if family == LINEAR_PLUS_RBF:
        G = X @ X.T
        Ky = Ky + params.linear_var * G
    L, _ = robust_cholesky(Ky)
    r = y - params.prior_mean
    alpha = cho_solve((L, True), r, check_finite=False)
    lml = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI

    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty(len(theta))
    grad[0] = alpha.sum()
    grad[1] = 0.5 * np.sum(W * (Krbf * D2 / params.lengthscale ** 2))
    grad[2] = 0.5 * np.sum(W * Krbf)
    # clamped noise has no gradient
    if np.exp(theta[3]) > NOISE_MIN:
        grad[3] = 0.5 * params.noise_var * np.trace(W)
    else:
        grad[3] = 0.0
    if family == LINEAR_PLUS_RBF:
        grad[4] = 0.5 * params.linear_var * np.sum(W * G)
    return float(lml), grad


def initial_params(X, y, family):
    """Median-heuristic initialization."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    d = np.sqrt(_sqdist(X, X)[np.triu_indices(len(X), k=1)])
    d = d[d > 0]
    ls = float(np.median(d)) if d.size else 1.0
    var_y = float(np.var(y))
    return KernelParams(
        family=family,
        log_lengthscale=np.log(ls),
        log_signal_var=np.log(max(var_y, 1e-4)),
        log_noise_var=np.log(max(0.1 * var_y, 1e-6)),
        prior_mean=float(np.mean(y)),
        log_linear_var=np.log(0.1) if family == LINEAR_PLUS_RBF else None,
    )


def fit_gp(X, y, family=RBF, gp_iters=75, gp_learning_rate=0.1, rng=None, center=True):
    """Fit an exact GP by Adam ascent on the log marginal likelihood.

    The prior mean is stepped in units of the target standard deviation so
    the optimizer is insensitive to the target scale.  The best parameters
    seen (including the initialization) are returned, so the final marginal
    likelihood is never below the initial one.  ``rng`` is accepted for
    interface symmetry; the fit is deterministic.  With ``center`` the inputs
    are offset by their mean (see ``GpLeafModel``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 2:
        raise InvalidInput("fit_gp needs at least 2 points")
    if family not in KERNEL_FAMILIES:
        raise InvalidInput(f"unknown kernel family {family!r}")
    offset = X.mean(axis=0) if center else np.zeros(X.shape[1])
    Xc = X - offset

    theta = initial_params(Xc, y, family).to_vector()
    y_bar = float(np.mean(y))
    y_sd = float(np.std(y)) or 1.0
    # optimizer coordinates: prior mean as (m - y_bar) / y_sd
    phi = theta.copy()
    phi[0] = (theta[0] - y_bar) / y_sd

    def unpack(p):
        t = p.copy()
        t[0] = y_bar + y_sd * p[0]
        return t

    best_theta, best_lml = theta.copy(), -np.inf
    m = np.zeros_like(phi)
    v = np.zeros_like(phi)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, gp_iters + 1):
        theta = unpack(phi)
        try:
            lml, g = lml_and_grad(Xc, y, family, theta)
        except NumericalError:
            if t == 1:
                raise
            break
        if lml > best_lml:
            best_theta, best_lml = theta, lml
        g[0] *= y_sd
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        phi = phi + gp_learning_rate * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        # keep the log-parameters in a sane box
        phi[1:] = np.clip(phi[1:], -20.0, 20.0)
    if gp_iters > 0:
        theta = unpack(phi)
        try:
            lml, _ = lml_and_grad(Xc, y, family, theta)
        except NumericalError:
            lml = -np.inf
        if lml > best_lml:
            best_theta = theta
    return GpLeafModel.from_params(X, y, KernelParams.from_vector(family, best_theta), offset)


def gp_predict(model, x):
    """Posterior mean and latent-function variance (noise excluded).

    ``x`` may be a single point (returns two floats) or a matrix of points
    (returns two arrays).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xs = np.atleast_2d(x) - model.offset
    Ks = kernel_matrix(model.params, model.X_train - model.offset, Xs)
    mean = model.params.prior_mean + Ks.T @ model.alpha
    V = solve_triangular(model.chol_L, Ks, lower=True, check_finite=False)
    var = np.maximum(kernel_diag(model.params, Xs) - (V * V).sum(0), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def with_params(model, **changes):
    """Refit the factorization after changing hyperparameters."""
    return GpLeafModel.from_params(model.X_train, model.y_train,
                                   replace(model.params, **changes), model.offset)
