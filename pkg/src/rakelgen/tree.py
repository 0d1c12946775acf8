"""From-scratch CART-style binary decision trees.

Greedy top-down induction: at each node every (feature, midpoint-threshold)
candidate is scored by impurity decrease, vectorized across all features at
once. Ties are broken by lowest feature index, then lowest threshold, which
makes training fully deterministic. An impure node is split even when the best
achievable decrease is zero (the classic XOR situation), so an unlimited-depth
tree memorizes any consistent training set; nodes whose feature columns are all
constant become majority leaves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ValidationError

CRITERIA = ("gini", "entropy")


@dataclass(frozen=True)
class TreeConfig:
    """Hyperparameters for tree induction.

    ``seed`` is carried for reproducibility bookkeeping; the learner itself is
    deterministic and does not consume it.
    """

    max_depth: int | None = None
    min_samples_leaf: int = 1
    split_criterion: str = "gini"
    seed: int = 0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1 or None")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if self.split_criterion not in CRITERIA:
            raise ValidationError(f"split_criterion must be one of {CRITERIA}")


@dataclass(frozen=True)
class Leaf:
    label: int
    distribution: tuple[tuple[int, int], ...]  # (class label, count), sorted by label


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"  # values <= threshold
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class DecisionTree:
    root: TreeNode
    n_features: int
    config: TreeConfig


def impurity(labels, criterion: str = "gini") -> float:
    """Gini or entropy impurity of a label multiset."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    _, counts = np.unique(labels, return_counts=True)
    return float(_impurity_from_counts(counts[None, :], criterion)[0])


def split_gain(left_labels, right_labels, criterion: str = "gini") -> float:
    """Impurity decrease of splitting the pooled labels into the two given halves."""
    left = np.asarray(left_labels)
    right = np.asarray(right_labels)
    parent = np.concatenate([left, right])
    n = parent.size
    weighted = (
        left.size * impurity(left, criterion) + right.size * impurity(right, criterion)
    ) / n
    return impurity(parent, criterion) - weighted


def _impurity_from_counts(counts: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity from class-count rows; counts has shape (..., n_classes)."""
    if criterion not in CRITERIA:
        raise ValidationError(
            f"split_criterion must be one of {CRITERIA}, got {criterion!r}"
        )
    totals = counts.sum(axis=-1, keepdims=True)
    totals = np.maximum(totals, 1)
    p = counts / totals
    if criterion == "gini":
        return 1.0 - (p * p).sum(axis=-1)
    logp = np.log2(np.where(p > 0, p, 1.0))
    return -(p * logp).sum(axis=-1)


def _leaf(codes: np.ndarray, classes: np.ndarray) -> Leaf:
    counts = np.bincount(codes, minlength=len(classes))
    # argmax returns the first maximum; classes are sorted, so ties go to the
    # smallest class label
    label = int(classes[int(np.argmax(counts))])
    dist = tuple(
        (int(classes[c]), int(counts[c])) for c in range(len(classes)) if counts[c] > 0
    )
    return Leaf(label=label, distribution=dist)


def _best_split(X: np.ndarray, codes: np.ndarray, n_classes: int, cfg: TreeConfig):
    """Best (feature, threshold) over all candidates, or None when no valid cut exists."""
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = codes[order]  # (n, d)

    onehot = np.zeros((n, d, n_classes))
    onehot[np.arange(n)[:, None], np.arange(d)[None, :], ys] = 1.0
    cum = np.cumsum(onehot, axis=0)

    left = cum[:-1]  # counts left of a cut between sorted rows i and i+1
    right = cum[-1][None, :, :] - left
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left

    weighted = (
        n_left * _impurity_from_counts(left, cfg.split_criterion)
        + n_right * _impurity_from_counts(right, cfg.split_criterion)
    ) / n

    total_counts = np.bincount(codes, minlength=n_classes)
    parent = float(_impurity_from_counts(total_counts[None, :], cfg.split_criterion)[0])
    gains = parent - weighted  # (n-1, d)

    valid = xs[:-1] != xs[1:]
    msl = cfg.min_samples_leaf
    if msl > 1:
        valid = valid & (n_left >= msl) & (n_right >= msl)
    gains = np.where(valid, gains, -np.inf)

    # feature-major flattening: the first maximum has the lowest feature index,
    # then the lowest threshold
    flat = gains.T.ravel()
    pos = int(np.argmax(flat))
    if flat[pos] == -np.inf:
        return None
    feature, cut = divmod(pos, n - 1)
    lo, hi = xs[cut, feature], xs[cut + 1, feature]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:  # midpoint collapsed onto the upper value
        threshold = lo
    return feature, float(threshold)


def _grow(X: np.ndarray, codes: np.ndarray, classes: np.ndarray, depth: int, cfg: TreeConfig) -> TreeNode:
    n = len(codes)
    counts = np.bincount(codes, minlength=len(classes))
    if counts.max() == n:
        return _leaf(codes, classes)
    if cfg.max_depth is not None and depth >= cfg.max_depth:
        return _leaf(codes, classes)
    if n < 2 * cfg.min_samples_leaf:
        return _leaf(codes, classes)
    best = _best_split(X, codes, len(classes), cfg)
    if best is None:
        return _leaf(codes, classes)
    feature, threshold = best
    mask = X[:, feature] <= threshold
    return Split(
        feature=feature,
        threshold=threshold,
        left=_grow(X[mask], codes[mask], classes, depth + 1, cfg),
        right=_grow(X[~mask], codes[~mask], classes, depth + 1, cfg),
    )


def train_tree(X, y, config: TreeConfig = TreeConfig()) -> DecisionTree:
    """Induce a tree from feature rows X and integer class labels y."""
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        raise ValidationError("empty training set")
    try:
        X = np.asarray(X, dtype=float)
    except ValueError:
        raise ValidationError("inconsistent feature vector lengths") from None
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError(f"feature rows {X.shape} do not match {y.size} labels")
    classes, codes = np.unique(y, return_inverse=True)
    root = _grow(X, codes, classes, 0, config)
    return DecisionTree(root=root, n_features=X.shape[1], config=config)


def predict_tree(tree: DecisionTree, x) -> int:
    """Deterministic root-to-leaf descent; returns the leaf's majority label."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != tree.n_features:
        raise ValidationError(
            f"feature vector has length {x.size}, tree expects {tree.n_features}"
        )
    node = tree.root
    while isinstance(node, Split):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.label


def tree_stats(tree: DecisionTree) -> dict:
    """Node/leaf counts and depth, for training summaries."""

    def walk(node, depth):
        if isinstance(node, Leaf):
            return 1, 1, depth
        ln, ll, ld = walk(node.left, depth + 1)
        rn, rl, rd = walk(node.right, depth + 1)
        return ln + rn + 1, ll + rl, max(ld, rd)

    nodes, leaves, depth = walk(tree.root, 0)
    return {"nodes": nodes, "leaves": leaves, "depth": depth}


def node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {
            "kind": "leaf",
            "label": node.label,
            "dist": [list(pair) for pair in node.distribution],
        }
    return {
        "kind": "split",
        "feature": node.feature,
        "threshold": node.threshold,
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(data: dict) -> TreeNode:
    if data["kind"] == "leaf":
        return Leaf(
            label=int(data["label"]),
            distribution=tuple((int(c), int(n)) for c, n in data["dist"]),
        )
    return Split(
        feature=int(data["feature"]),
        threshold=float(data["threshold"]),
        left=node_from_dict(data["left"]),
        right=node_from_dict(data["right"]),
    )


def tree_to_dict(tree: DecisionTree) -> dict:
    return {"n_features": tree.n_features, "root": node_to_dict(tree.root)}


def tree_from_dict(data: dict, config: TreeConfig) -> DecisionTree:
    return DecisionTree(
        root=node_from_dict(data["root"]),
        n_features=int(data["n_features"]),
        config=config,
    )
