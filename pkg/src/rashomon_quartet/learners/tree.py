from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..synth import Dataset
from . import _kernels
from .base import Model, register

LEAF = _kernels.LEAF


@dataclass(frozen=True, eq=False)
class TreeStructure:
    """Flat binary tree. Node 0 is the root; ``feature[i] == LEAF`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go to ``left``. ``value`` is the mean
    training target of the node, ``count`` its training rows (with bootstrap
    multiplicity) and ``sse`` its training sum of squared deviations.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    sse: np.ndarray
    depth: np.ndarray

    _FIELDS = ("feature", "threshold", "left", "right", "value", "count", "sse", "depth")
    _INT_FIELDS = frozenset({"feature", "left", "right", "count", "depth"})

    @classmethod
    def grow(cls, X, y, sample, max_depth, min_split, min_leaf=1, mtry=None, rng_seed=0):
        p = X.shape[1]
        arrays = _kernels.grow_tree(
            np.ascontiguousarray(X, dtype=np.float64),
            np.ascontiguousarray(y, dtype=np.float64),
            np.ascontiguousarray(sample, dtype=np.int64),
            -1 if max_depth is None else int(max_depth),
            int(min_split),
            int(min_leaf),
            p if mtry is None else int(mtry),
            int(rng_seed),
        )
        return cls(*arrays)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        _kernels.predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value, out)
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        _kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right, out)
        return out

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in self._FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeStructure":
        return cls(
            *(np.asarray(d[k], dtype=np.int64 if k in cls._INT_FIELDS else np.float64) for k in cls._FIELDS)
        )


@register
class TreeModel(Model):
    family = "tree"
    default_label = "decision tree"

    def __init__(self, feature_names, tree: TreeStructure, max_depth, min_split, min_leaf=1, label=None, meta=None):
        super().__init__(feature_names, label, meta)
        self.tree = tree
        self.max_depth = max_depth
        self.min_split = min_split
        self.min_leaf = min_leaf

    def _predict(self, X):
        return self.tree.predict(X)

    def split_features(self) -> list[str]:
        """Feature name of every internal node, in node order."""
        return [self.feature_names[f] for f in self.tree.feature if f != LEAF]

    def report(self) -> str:
        t = self.tree
        lines = [f"{self.label}: max_depth={self.max_depth}, min_split={self.min_split}"]

        def walk(node, indent):
            pad = "  " * indent
            if t.feature[node] == LEAF:
                lines.append(f"{pad}[{node}] leaf: n={t.count[node]}, mean={t.value[node]:.4f}")
                return
            name = self.feature_names[t.feature[node]]
            lines.append(f"{pad}[{node}] {name} <= {t.threshold[node]:.4f} (n={t.count[node]})")
            walk(t.left[node], indent + 1)
            lines.append(f"{pad}[{node}] {name} > {t.threshold[node]:.4f}")
            walk(t.right[node], indent + 1)

        walk(0, 0)
        return "\n".join(lines)

    def _params(self):
        return {
            "max_depth": self.max_depth,
            "min_split": self.min_split,
            "min_leaf": self.min_leaf,
            "tree": self.tree.to_dict(),
        }

    @classmethod
    def _from_params(cls, feature_names, label, meta, params):
        return cls(
            feature_names,
            TreeStructure.from_dict(params["tree"]),
            params["max_depth"],
            params["min_split"],
            params.get("min_leaf", 1),
            label,
            meta,
        )


def fit_tree(
    train: Dataset, max_depth: int | None = 3, min_split: int = 250, min_leaf: int = 1, label: str | None = None
) -> TreeModel:
    """Greedy variance-reduction regression tree.

    A node is split only if it has at least ``min_split`` rows and lies above
    ``max_depth``; the split is the (feature, midpoint threshold) pair with
    the largest SSE reduction, ties going to the lower feature index and then
    the lower threshold.
    """
    X, y = train.X, train.y
    tree = TreeStructure.grow(X, y, np.arange(X.shape[0]), max_depth, min_split, min_leaf)
    return TreeModel(train.feature_names, tree, max_depth, min_split, min_leaf, label, {"n_train": X.shape[0]})
