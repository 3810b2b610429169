"""
JSON model files.

Floats are written with Python's shortest round-trip repr, so a reloaded
tree reproduces the original predictions bit for bit.  Derived quantities
(Cholesky factors, inverse covariances, routing arrays) are recomputed on
load rather than stored.
"""
import json
from dataclasses import asdict

import numpy as np

from .exceptions import InvalidInput
from .gating import Leaf, SupportRegion
from .gp import GpLeafModel, KernelParams
from .tree import InternalNode, LeafNode, SplitPosterior, Tree, TreeConfig, validate_tree

FORMAT_VERSION = 1


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _node_dict(node):
    if isinstance(node, LeafNode):
        return {"kind": "leaf", "leaf_id": int(node.leaf_id)}
    p = node.posterior
    return {
        "kind": "split",
        "left": int(node.left),
        "right": int(node.right),
        "w_mean": _floats(p.w_mean),
        "w_log_std": _floats(p.w_log_std),
        "b_mean": float(p.b_mean),
        "b_log_std": float(p.b_log_std),
    }


def _gp_dict(gp):
    if gp is None:
        return None
    return {
        "hyperparameters": asdict(gp.params),
        "offset": _floats(gp.offset),
        "X_train": _floats(gp.X_train),
        "y_train": _floats(gp.y_train),
    }


def _leaf_dict(leaf):
    s = leaf.support
    return {
        "id": int(leaf.id),
        "train_indices": np.asarray(leaf.train_indices, dtype=int).tolist(),
        "prototype": float(leaf.prototype),
        "tau": float(leaf.tau),
        "temperature": float(leaf.temperature),
        "noise_floor": float(leaf.noise_floor),
        "support": {
            "centroid": _floats(s.centroid),
            "covariance": _floats(s.cov),
            "reg": float(s.reg),
            "n_points": int(s.n_points),
        },
        "gp": _gp_dict(leaf.gp),
    }


def tree_to_dict(tree, feature_names=None, target_name=None):
    return {
        "format_version": FORMAT_VERSION,
        "config": asdict(tree.config),
        "standardizer": {"mean": _floats(tree.feature_mean), "std": _floats(tree.feature_std)},
        "target_stats": {"max": tree.y_max, "mean": tree.y_mean, "min": tree.y_min},
        "feature_names": list(feature_names) if feature_names is not None else None,
        "target_name": target_name,
        "nodes": [_node_dict(n) for n in tree.nodes],
        "leaves": [_leaf_dict(leaf) for leaf in tree.leaves],
    }


def _node_from(d):
    if d["kind"] == "leaf":
        return LeafNode(int(d["leaf_id"]))
    post = SplitPosterior(np.array(d["w_mean"], dtype=float), np.array(d["w_log_std"], dtype=float),
                          float(d["b_mean"]), float(d["b_log_std"]))
    return InternalNode(post, int(d["left"]), int(d["right"]))


def _leaf_from(d):
    s = d["support"]
    support = SupportRegion(np.array(s["centroid"], dtype=float), np.array(s["covariance"], dtype=float),
                            float(s["reg"]), int(s["n_points"]))
    gp = None
    if d["gp"] is not None:
        g = d["gp"]
        gp = GpLeafModel.from_params(np.array(g["X_train"], dtype=float), np.array(g["y_train"], dtype=float),
                                     KernelParams(**g["hyperparameters"]), np.array(g["offset"], dtype=float))
    return Leaf(int(d["id"]), np.array(d["train_indices"], dtype=int), float(d["prototype"]), gp, support,
                float(d["tau"]), float(d["temperature"]), float(d["noise_floor"]))


def tree_from_dict(d):
    """Rebuild a Tree; returns (tree, feature_names, target_name)."""
    if d.get("format_version") != FORMAT_VERSION:
        raise InvalidInput(f"unsupported model format_version {d.get('format_version')!r}")
    try:
        std = d["standardizer"]
        stats = d["target_stats"]
        tree = Tree(
            [_node_from(n) for n in d["nodes"]],
            [_leaf_from(leaf) for leaf in d["leaves"]],
            TreeConfig(**d["config"]),
            np.array(std["mean"], dtype=float),
            np.array(std["std"], dtype=float),
            stats["max"], stats["mean"], stats["min"],
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"malformed model file: {exc!r}") from exc
    validate_tree(tree)
    return tree, d.get("feature_names"), d.get("target_name")


def dumps(tree, feature_names=None, target_name=None):
    return json.dumps(tree_to_dict(tree, feature_names, target_name), indent=1, allow_nan=False) + "\n"


def save_model(tree, path, feature_names=None, target_name=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(tree, feature_names, target_name))


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, ValueError) as exc:
        raise InvalidInput(f"cannot read model {path}: {exc}") from exc
    return tree_from_dict(d)
