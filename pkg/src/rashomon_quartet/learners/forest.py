from __future__ import annotations

import numpy as np

from .._parallel import pmap
from ..rng import substream
from ..synth import DEFAULT_SEED, Dataset
from .base import Model, register
from .tree import TreeStructure


def default_mtry(p: int) -> int:
    return max(1, p // 3)


def oob_predictions(trees, inbag: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row mean over the trees whose bootstrap sample left that row out.

    Returns (predictions, number of out-of-bag trees per row); rows with no
    out-of-bag tree get NaN.
    """
    n = X.shape[0]
    total = np.zeros(n)
    k = np.zeros(n, dtype=np.int64)
    for t, tree in enumerate(trees):
        out = inbag[t] == 0
        if out.any():
            total[out] += tree.predict(np.ascontiguousarray(X[out]))
            k[out] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        pred = np.where(k > 0, total / np.maximum(k, 1), np.nan)
    return pred, k


@register
class ForestModel(Model):
    family = "forest"
    default_label = "random forest"

    def __init__(self, feature_names, trees, inbag, mtry, min_node, oob_mse, label=None, meta=None):
        super().__init__(feature_names, label, meta)
        self.trees = list(trees)
        # inbag[t, i] = how often training row i was drawn for tree t
        self.inbag = np.asarray(inbag, dtype=np.int64)
        self.mtry = mtry
        self.min_node = min_node
        self.oob_mse = oob_mse

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X) -> np.ndarray:
        X = self.as_matrix(X)
        return np.stack([t.predict(X) for t in self.trees]) if X.shape[0] else np.empty((self.n_trees, 0))

    def _predict(self, X):
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)

    def report(self) -> str:
        sizes = [t.n_nodes for t in self.trees]
        return (
            f"{self.label}: {self.n_trees} trees, mtry={self.mtry}, min_node={self.min_node}\n"
            f"mean nodes per tree: {np.mean(sizes):.1f}\n"
            f"out-of-bag MSE: {self.oob_mse:.6f}"
        )

    def _params(self):
        return {
            "mtry": self.mtry,
            "min_node": self.min_node,
            "oob_mse": self.oob_mse if np.isfinite(self.oob_mse) else None,
            "inbag": self.inbag.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def _from_params(cls, feature_names, label, meta, params):
        return cls(
            feature_names,
            [TreeStructure.from_dict(t) for t in params["trees"]],
            params["inbag"],
            params["mtry"],
            params["min_node"],
            float("nan") if params["oob_mse"] is None else params["oob_mse"],
            label,
            meta,
        )


def fit_forest(
    train: Dataset,
    n_trees: int = 100,
    mtry: int | None = None,
    min_node: int = 5,
    seed: int = DEFAULT_SEED,
    bootstrap: bool = True,
    n_threads: int | None = None,
    label: str | None = None,
) -> ForestModel:
    """Bagged unpruned regression trees with ``mtry`` features tried per split.

    Tree ``t`` draws its bootstrap sample and its split-sampling seed from
    substream ``forest/tree/t`` of ``seed``, so the fitted forest does not
    depend on ``n_threads``. ``bootstrap=False`` trains every tree on the
    full data (a debugging switch; OOB error is then undefined).
    """
    X, y = train.X, train.y
    n, p = X.shape
    if n < 2:
        raise ValueError("a forest needs at least 2 training rows")
    mtry = default_mtry(p) if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")

    def grow(t):
        rng = substream(seed, f"forest/tree/{t}")
        if bootstrap:
            sample = rng.integers(0, n, size=n)
        else:
            sample = np.arange(n)
        split_seed = int(rng.integers(1, 2**63, dtype=np.int64))
        tree = TreeStructure.grow(X, y, np.sort(sample), None, min_node, 1, mtry, split_seed)
        return tree, np.bincount(sample, minlength=n)

    grown = pmap(grow, range(n_trees), n_threads)
    trees = [g[0] for g in grown]
    inbag = np.stack([g[1] for g in grown])
    oob_pred, k = oob_predictions(trees, inbag, X)
    covered = k > 0
    oob_mse = float(np.mean((y[covered] - oob_pred[covered]) ** 2)) if covered.any() else float("nan")
    meta = {"seed": int(seed), "n_train": n, "n_trees": n_trees, "bootstrap": bool(bootstrap)}
    return ForestModel(train.feature_names, trees, inbag, mtry, min_node, oob_mse, label, meta)
