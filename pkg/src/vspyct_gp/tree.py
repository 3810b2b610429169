"""
Variational oblique regression tree.

Each internal node carries a factorized Gaussian posterior over the oblique
split ``(w, b)``; a sample is routed left when ``sigmoid(w'x + b) <= 0.5``.
Splits are learned greedily, depth first, by maximizing an ELBO whose data
term is a soft-membership weighted target variance.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .exceptions import InvalidInput
from .gating import Leaf, calibrate_tau, fit_support, sigmoid, support_reg
from .gp import KERNEL_FAMILIES, RBF, fit_gp
from .kernels import train_split

logger = logging.getLogger(__name__)

INIT_LOG_STD = -2.0
RIDGE_ALPHA = 1.0
MIN_GAIN = 1e-12


@dataclass(frozen=True, eq=False)
class SplitPosterior:
    w_mean: np.ndarray
    w_log_std: np.ndarray
    b_mean: float
    b_log_std: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.w_log_std)) and np.isfinite(self.b_log_std)):
            raise InvalidInput("posterior log-std values must be finite")
        if np.shape(self.w_mean) != np.shape(self.w_log_std):
            raise InvalidInput("w_mean and w_log_std differ in shape")

    @property
    def dim(self):
        return len(self.w_mean)


@dataclass(frozen=True)
class SplitParams:
    w: np.ndarray
    b: float


@dataclass(frozen=True, eq=False)
class InternalNode:
    posterior: SplitPosterior
    left: int
    right: int


@dataclass(frozen=True)
class LeafNode:
    leaf_id: int


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 5
    min_samples_split: int = 10
    vi_epochs: int = 500
    learning_rate: float = 0.01
    mc_samples: int = 50
    tau: object = "auto"  # "auto" or a positive float
    temperature: float = 0.25
    noise_floor: float = None  # None: 1e-4 * var(y)
    kernel_family: str = RBF
    gp_iters: int = 75
    gp_learning_rate: float = 0.1
    min_leaf_gp: int = 5
    cov_reg: float = 1e-6  # relative to the mean feature variance of a leaf
    seed: int = 0
    threads: int = None

    def __post_init__(self):
        problems = []
        if self.max_depth < 1:
            problems.append("max_depth must be >= 1")
        if self.min_samples_split < 2:
            problems.append("min_samples_split must be >= 2")
        if self.mc_samples < 1:
            problems.append("mc_samples must be >= 1")
        if not self.temperature > 0:
            problems.append("temperature must be > 0")
        if self.noise_floor is not None and not self.noise_floor > 0:
            problems.append("noise_floor must be > 0")
        if not self.cov_reg > 0:
            problems.append("cov_reg must be > 0")
        if self.kernel_family not in KERNEL_FAMILIES:
            problems.append(f"kernel_family must be one of {KERNEL_FAMILIES}")
        if self.tau != "auto" and not (isinstance(self.tau, (int, float)) and self.tau > 0):
            problems.append("tau must be 'auto' or a positive number")
        if self.vi_epochs < 0 or self.gp_iters < 0:
            problems.append("iteration counts must be non-negative")
        if problems:
            raise InvalidInput("; ".join(problems))


@dataclass(frozen=True, eq=False)
class RoutingArrays:
    left: np.ndarray
    right: np.ndarray
    leaf_of: np.ndarray
    split_of: np.ndarray
    W_mean: np.ndarray
    W_std: np.ndarray
    b_mean: np.ndarray
    b_std: np.ndarray
    depth: int

    @property
    def n_internal(self):
        return len(self.b_mean)


@dataclass(eq=False)
class Tree:
    nodes: list
    leaves: list
    config: TreeConfig
    feature_mean: np.ndarray
    feature_std: np.ndarray
    y_max: float
    y_mean: float
    y_min: float = None
    internal_ids: list = field(init=False, repr=False)

    def __post_init__(self):
        self.internal_ids = [i for i, n in enumerate(self.nodes) if isinstance(n, InternalNode)]

    @property
    def n_features(self):
        return len(self.feature_mean)

    @property
    def n_internal(self):
        return len(self.internal_ids)

    def standardize(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise InvalidInput(f"expected {self.n_features} features, got {X.shape[-1]}")
        return (X - self.feature_mean) / self.feature_std

    def depth(self):
        best = 0
        stack = [(0, 0)]
        while stack:
            i, d = stack.pop()
            node = self.nodes[i]
            if isinstance(node, InternalNode):
                stack += [(node.left, d + 1), (node.right, d + 1)]
            else:
                best = max(best, d)
        return best

    @property
    def tau(self):
        return self.leaves[0].tau

    @cached_property
    def routing_arrays(self):
        n = len(self.nodes)
        d = self.n_features
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        leaf_of = np.full(n, -1, dtype=np.int64)
        split_of = np.full(n, -1, dtype=np.int64)
        k = len(self.internal_ids)
        W_mean = np.zeros((k, d))
        W_std = np.zeros((k, d))
        b_mean = np.zeros(k)
        b_std = np.zeros(k)
        for j, i in enumerate(self.internal_ids):
            node = self.nodes[i]
            left[i], right[i], split_of[i] = node.left, node.right, j
            p = node.posterior
            W_mean[j] = p.w_mean
            W_std[j] = np.exp(p.w_log_std)
            b_mean[j] = p.b_mean
            b_std[j] = np.exp(p.b_log_std)
        for i, node in enumerate(self.nodes):
            if isinstance(node, LeafNode):
                leaf_of[i] = node.leaf_id
        return RoutingArrays(left, right, leaf_of, split_of, W_mean, W_std, b_mean, b_std, self.depth())


def validate_tree(tree):
    """Check the node arena is a proper binary tree with one LeafRef per leaf."""
    seen = set()
    leaf_refs = []
    stack = [0]
    while stack:
        i = stack.pop()
        if i in seen:
            raise InvalidInput("node graph has a cycle or shared child")
        seen.add(i)
        node = tree.nodes[i]
        if isinstance(node, InternalNode):
            if node.left == node.right:
                raise InvalidInput("internal node with identical children")
            stack += [node.left, node.right]
        else:
            leaf_refs.append(node.leaf_id)
    if len(seen) != len(tree.nodes):
        raise InvalidInput("unreachable nodes in arena")
    if sorted(leaf_refs) != list(range(len(tree.leaves))):
        raise InvalidInput("every leaf must be referenced exactly once")


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------

def sample_split(posterior, rng):
    """Draw (w, b) from the split posterior."""
    z = rng.standard_normal(posterior.dim + 1)
    w = posterior.w_mean + np.exp(posterior.w_log_std) * z[:-1]
    b = posterior.b_mean + np.exp(posterior.b_log_std) * z[-1]
    return SplitParams(w, float(b))


def _initial_direction(X, y):
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    w = np.linalg.solve(Xc.T @ Xc + RIDGE_ALPHA * np.eye(X.shape[1]), Xc.T @ yc)
    scale = np.std(Xc @ w)
    if not np.isfinite(scale) or scale < 1e-12:
        return np.zeros(X.shape[1])
    return w / scale


def fit_split(X, y, config, rng):
    """Learn the variational posterior of one oblique split.

    ``X`` must already be standardized.  Targets are standardized inside the
    node so the data term is scale free; the KL term to a standard-normal
    prior is weighted by 1/n.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    sd = y.std()
    ys = (y - y.mean()) / (sd if sd > 0 else 1.0)
    w0 = _initial_direction(X, ys)
    mu0 = np.append(w0, -w0 @ X.mean(axis=0))
    s0 = np.full(d + 1, INIT_LOG_STD)
    eps = rng.standard_normal((config.vi_epochs, d + 1))
    mu, s = train_split(X, ys, mu0, s0, eps, config.learning_rate, 1.0 / n)
    return SplitPosterior(mu[:d].copy(), s[:d].copy(), float(mu[d]), float(s[d]))


def mean_goes_left(posterior, X):
    """Hard routing with posterior-mean parameters (rho <= 0.5 goes left)."""
    z = np.asarray(X, dtype=float) @ posterior.w_mean + posterior.b_mean
    return np.atleast_1d(sigmoid(z)) <= 0.5


def _sse(y):
    return float(((y - y.mean()) ** 2).sum()) if len(y) else 0.0


def split_gain(y, go_left):
    """Reduction in summed squared deviation from a hard partition."""
    yl, yr = y[go_left], y[~go_left]
    return _sse(y) - (_sse(yl) + _sse(yr))


# --------------------------------------------------------------------------
# routing
# --------------------------------------------------------------------------

def route(tree, x, rng):
    """Route one raw input to a leaf, sampling each visited split."""
    xs = tree.standardize(np.asarray(x, dtype=float))
    i = 0
    while isinstance(tree.nodes[i], InternalNode):
        node = tree.nodes[i]
        p = sample_split(node.posterior, rng)
        z = float(p.w @ xs + p.b)
        rho = 1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z))
        i = node.left if rho <= 0.5 else node.right
    return tree.nodes[i].leaf_id


def route_mean(tree, X_std):
    """Leaf ids of standardized rows under posterior-mean routing."""
    X_std = np.atleast_2d(X_std)
    out = np.empty(len(X_std), dtype=np.int64)
    stack = [(0, np.arange(len(X_std)))]
    while stack:
        i, idx = stack.pop()
        node = tree.nodes[i]
        if isinstance(node, InternalNode):
            gl = mean_goes_left(node.posterior, X_std[idx])
            stack += [(node.left, idx[gl]), (node.right, idx[~gl])]
        else:
            out[idx] = node.leaf_id
    return out


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------

def _as_xy(dataset):
    X = np.asarray(dataset.features, dtype=float)
    y = np.asarray(dataset.target, dtype=float).ravel()
    if X.ndim != 2 or len(X) == 0 or X.shape[1] == 0:
        raise InvalidInput("dataset must be a non-empty 2-D feature matrix")
    if len(y) != len(X):
        raise InvalidInput("features and target differ in length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInput("dataset contains non-finite values")
    return X, y


def grow_structure(Xs, y, config):
    """Greedy depth-first growth.  Returns (nodes, leaf index sets)."""
    rng = np.random.default_rng(config.seed)
    nodes = []
    leaf_sets = []

    def grow(idx, depth):
        node_id = len(nodes)
        nodes.append(None)
        yi = y[idx]
        if depth < config.max_depth and len(idx) >= config.min_samples_split and _sse(yi) > 0:
            post = fit_split(Xs[idx], yi, config, rng)
            gl = mean_goes_left(post, Xs[idx])
            if 0 < gl.sum() < len(idx) and split_gain(yi, gl) > MIN_GAIN * _sse(yi):
                left = grow(idx[gl], depth + 1)
                right = grow(idx[~gl], depth + 1)
                nodes[node_id] = InternalNode(post, left, right)
                return node_id
        nodes[node_id] = LeafNode(len(leaf_sets))
        leaf_sets.append(idx)
        return node_id

    grow(np.arange(len(y)), 0)
    return nodes, leaf_sets


def default_noise_floor(y):
    return max(1e-4 * float(np.var(y)), 1e-10)


def _build_leaf(leaf_id, idx, Xs, y, config, family, tau, noise_floor):
    Xl, yl = Xs[idx], y[idx]
    support = fit_support(Xl, support_reg(Xl, config.cov_reg))
    gp = None
    if len(idx) >= max(config.min_leaf_gp, 2):
        gp = fit_gp(Xl, yl, family, config.gp_iters, config.gp_learning_rate)
    return Leaf(leaf_id, idx, float(yl.mean()), gp, support, tau, config.temperature, noise_floor)


def build_leaves(leaf_sets, Xs, y, config, family=None, tau=1.0, noise_floor=None):
    family = family or config.kernel_family
    noise_floor = noise_floor or config.noise_floor or default_noise_floor(y)
    threads = config.threads or os.cpu_count() or 1
    jobs = [(i, idx) for i, idx in enumerate(leaf_sets)]

    def one(job):
        return _build_leaf(job[0], job[1], Xs, y, config, family, tau, noise_floor)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def fit_tree(dataset, config=None):
    """Fit structure, leaf GPs and support regions; calibrate tau if 'auto'."""
    config = config or TreeConfig()
    X, y = _as_xy(dataset)
    if len(y) < 1:
        raise InvalidInput("empty dataset")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    Xs = (X - mean) / std

    nodes, leaf_sets = grow_structure(Xs, y, config)
    tau0 = 1.0 if config.tau == "auto" else float(config.tau)
    leaves = build_leaves(leaf_sets, Xs, y, config, tau=tau0)
    tree = Tree(nodes, leaves, config, mean, std, float(y.max()), float(y.mean()), float(y.min()))
    if config.tau == "auto":
        tree = with_tau(tree, calibrate_tau(tree, dataset))
    logger.debug("fitted tree: depth %d, %d leaves", tree.depth(), len(tree.leaves))
    return tree


def with_tau(tree, tau):
    """Copy of ``tree`` with every leaf's support threshold set to ``tau``."""
    leaves = [replace(leaf, tau=float(tau)) for leaf in tree.leaves]
    return Tree(tree.nodes, leaves, tree.config, tree.feature_mean, tree.feature_std,
                tree.y_max, tree.y_mean, tree.y_min)


def with_kernel(tree, dataset, family):
    """Refit the leaf GPs of ``tree`` with another kernel family, same structure."""
    X, y = _as_xy(dataset)
    Xs = tree.standardize(X)
    leaf_sets = [leaf.train_indices for leaf in tree.leaves]
    config = replace(tree.config, kernel_family=family)
    leaves = build_leaves(leaf_sets, Xs, y, config, family, tau=tree.tau,
                          noise_floor=tree.leaves[0].noise_floor)
    return Tree(tree.nodes, leaves, config, tree.feature_mean, tree.feature_std,
                tree.y_max, tree.y_mean, tree.y_min)
