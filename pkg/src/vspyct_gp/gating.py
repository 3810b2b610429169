"""
Support-aware gating between a leaf's constant prototype and its GP.

A leaf's training support is a Mahalanobis ball around the centroid of the
training inputs routed to it.  Inside the ball the leaf predicts its
prototype with a small noise floor; outside it hands over, smoothly, to the
GP posterior.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .exceptions import InvalidInput
from .gp import gp_predict

TAU_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class SupportRegion:
    centroid: np.ndarray
    cov: np.ndarray  # regularized covariance, Sigma + reg * I
    reg: float
    n_points: int
    inv_cov: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        L = cholesky(self.cov, lower=True)
        inv = cho_solve((L, True), np.eye(len(self.centroid)))
        object.__setattr__(self, "inv_cov", 0.5 * (inv + inv.T))


def fit_support(X_leaf, reg):
    """Centroid and regularized inverse covariance of a leaf's inputs."""
    X = np.atleast_2d(np.asarray(X_leaf, dtype=float))
    n, d = X.shape
    if n < 1:
        raise InvalidInput("support needs at least one point")
    if not reg > 0:
        raise InvalidInput("covariance regularization must be positive")
    centroid = X.mean(axis=0)
    if n > 1:
        Xc = X - centroid
        cov = Xc.T @ Xc / (n - 1)
    else:
        cov = np.zeros((d, d))
    return SupportRegion(centroid, cov + reg * np.eye(d), float(reg), n)


def support_reg(X_leaf, rel_reg, floor=1e-9):
    """Absolute ridge for a leaf covariance: rel_reg * mean variance, floored."""
    X = np.atleast_2d(np.asarray(X_leaf, dtype=float))
    if len(X) < 2:
        return floor
    return max(rel_reg * float(np.mean(np.var(X, axis=0, ddof=1))), floor)


def mahalanobis(region, x):
    """Mahalanobis distance of ``x`` (vector or rows of a matrix) to the centroid."""
    x = np.asarray(x, dtype=float)
    diff = x - region.centroid
    if diff.ndim == 1:
        return float(np.sqrt(max(diff @ region.inv_cov @ diff, 0.0)))
    q = np.einsum("ij,jk,ik->i", diff, region.inv_cov, diff)
    return np.sqrt(np.maximum(q, 0.0))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def gate_weight(d, tau, T):
    """sigmoid((d - tau) / T): 0 deep inside the support, 1 far outside."""
    return sigmoid((np.asarray(d, dtype=float) - tau) / T)


@dataclass(frozen=True, eq=False)
class Leaf:
    id: int
    train_indices: np.ndarray
    prototype: float
    gp: object  # GpLeafModel or None
    support: SupportRegion
    tau: float
    temperature: float
    noise_floor: float

    def __post_init__(self):
        if not (self.tau > 0 and self.temperature > 0 and self.noise_floor > 0):
            raise InvalidInput("tau, temperature and noise floor must be positive")


def gated_predict(leaf, x, baseline=False):
    """Gated (mean, variance, weight) at standardized input(s) ``x``.

    With ``baseline=True`` (or no GP at the leaf) the gate is forced shut and
    the prototype with the noise floor is returned.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xs = np.atleast_2d(x)
    n = len(Xs)
    if baseline or leaf.gp is None:
        mean = np.full(n, leaf.prototype)
        var = np.full(n, leaf.noise_floor)
        w = np.zeros(n)
    else:
        w = np.atleast_1d(gate_weight(mahalanobis(leaf.support, Xs), leaf.tau, leaf.temperature))
        mu, s2 = gp_predict(leaf.gp, Xs)
        mean = (1.0 - w) * leaf.prototype + w * mu
        var = (1.0 - w) * leaf.noise_floor + w * s2
    if single:
        return float(mean[0]), float(var[0]), float(w[0])
    return mean, var, w


def percentile_inclusive(values, q):
    """Linear interpolation between closest ranks (numpy's default method)."""
    return float(np.percentile(np.asarray(values, dtype=float), q, method="linear"))


def leaf_distances(tree, X_std):
    """Mahalanobis distance of every training row to its own leaf centroid."""
    out = []
    for leaf in tree.leaves:
        idx = leaf.train_indices
        if len(idx):
            out.append(np.atleast_1d(mahalanobis(leaf.support, X_std[idx])))
    return np.concatenate(out) if out else np.empty(0)


def calibrate_tau(tree, dataset, q=99.0):
    """Global support threshold: the q-th percentile of in-leaf training distances."""
    X = np.asarray(dataset.features, dtype=float)
    if len(X) < 2:
        raise InvalidInput("tau calibration needs at least 2 training points")
    d = leaf_distances(tree, tree.standardize(X))
    return max(percentile_inclusive(d, q), TAU_FLOOR)
