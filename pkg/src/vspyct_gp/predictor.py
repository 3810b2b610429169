"""
Monte-Carlo predictive distribution.

Each of M samples routes the input through freshly sampled splits and takes
the gated leaf prediction; the samples are combined with the law of total
variance.
"""
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInput
from .gating import gated_predict
from .kernels import route_samples


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: float
    variance: float
    functional_component: float
    routing_component: float
    mean_gate_weight: float
    leaf_histogram: dict = field(default_factory=dict)

    @property
    def std(self):
        return float(np.sqrt(self.variance))


def aggregate_samples(means, variances, weights=None, leaf_ids=None):
    """Combine per-sample gated moments: E[v] + Var(mu) with an M-1 divisor."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    M = len(means)
    # identical samples (collapsed routing) must give exactly zero spread,
    # which the rounded mean of M equal numbers does not guarantee
    y_hat = float(means[0]) if np.all(means == means[0]) else float(means.mean())
    functional = float(variances.mean())
    routing = float(((means - y_hat) ** 2).sum() / (M - 1)) if M > 1 else 0.0
    hist = {}
    if leaf_ids is not None:
        hist = {int(k): int(v) for k, v in sorted(Counter(np.asarray(leaf_ids).tolist()).items())}
    return PredictiveDistribution(
        mean=y_hat,
        variance=functional + routing,
        functional_component=functional,
        routing_component=routing,
        mean_gate_weight=0.0 if weights is None else float(np.mean(weights)),
        leaf_histogram=hist,
    )


def _predict_standardized(tree, xs, M, rng, baseline):
    noise = rng.standard_normal((M, tree.n_internal, tree.n_features + 1))
    leaf_ids = route_samples(tree.routing_arrays, xs, noise)
    uniq, inverse = np.unique(leaf_ids, return_inverse=True)
    gated = np.array([gated_predict(tree.leaves[k], xs, baseline) for k in uniq])
    mu, v, w = gated[inverse].T
    return aggregate_samples(mu, v, w, leaf_ids)


def _check_M(M):
    if M is None or int(M) < 1:
        raise InvalidInput("number of Monte-Carlo samples must be >= 1")
    return int(M)


def predict(tree, x_raw, M=None, rng=None, baseline=False):
    """Predictive distribution at one raw input."""
    M = _check_M(tree.config.mc_samples if M is None else M)
    x = np.asarray(x_raw, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise InvalidInput("x must be a finite vector")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return _predict_standardized(tree, tree.standardize(x), M, rng, baseline)


def predict_baseline(tree, x_raw, M=None, rng=None):
    """Same as ``predict`` with every gate forced shut (prototype leaves)."""
    return predict(tree, x_raw, M, rng, baseline=True)


def row_rng(seed, row):
    """Independent stream for row ``row`` of a batch."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(row)]))


def predict_batch(tree, X, M=None, seed=0, baseline=False, threads=1):
    """``predict`` for every row, each with its own (seed, row) stream."""
    M = _check_M(tree.config.mc_samples if M is None else M)
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return []
    X = np.atleast_2d(X)
    if X.shape[1] != tree.n_features:
        raise InvalidInput(f"expected {tree.n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("X contains non-finite values")
    Xs = tree.standardize(X)

    def one(i):
        return _predict_standardized(tree, Xs[i], M, row_rng(seed, i), baseline)

    if threads and threads > 1 and len(X) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(X))))
    return [one(i) for i in range(len(X))]


def batch_arrays(preds):
    """Column arrays from a list of PredictiveDistribution."""
    cols = ("mean", "variance", "functional_component", "routing_component", "mean_gate_weight")
    return {c: np.array([getattr(p, c) for p in preds], dtype=float) for c in cols}
