"""Model-agnostic explanations.

Partial dependence profiles (optionally with percentile-bootstrap bands),
permutation importance and residual tables. None of these refit a model;
they only call ``predict``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .evaluation import score
from .rng import substream
from .synth import DEFAULT_SEED, Dataset

DEFAULT_GRID_SIZE = 101
MISSING = "NA"


@dataclass(frozen=True, eq=False)
class PDProfile:
    model: str
    feature: str
    grid: np.ndarray
    pd: np.ndarray
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    n_boot: int = 0
    ci_level: float | None = None
    replicates: np.ndarray | None = None  # (n_boot, len(grid)), kept for diagnostics

    @property
    def has_ci(self) -> bool:
        return self.ci_lo is not None


@dataclass(frozen=True)
class FeatureImportance:
    feature: str
    baseline_rmse: float
    permuted_rmse: float  # mean over permutations
    importance: float  # mean of (permuted - baseline); exactly 0 when predictions never change


@dataclass(frozen=True)
class ImportanceReport:
    model: str
    features: tuple[FeatureImportance, ...]
    n_permutations: int
    seed: int

    def importance(self) -> dict[str, float]:
        return {f.feature: f.importance for f in self.features}

    def ranking(self) -> list[str]:
        """Features from most to least important."""
        return [f.feature for f in sorted(self.features, key=lambda f: -f.importance)]


@dataclass(frozen=True, eq=False)
class ResidualTable:
    row: np.ndarray
    labels: tuple[str, ...]
    residuals: np.ndarray  # (n_rows, n_models)

    def column(self, label: str) -> np.ndarray:
        return self.residuals[:, self.labels.index(label)]


def quantile_grid(values: np.ndarray, grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Equally spaced quantiles of ``values``, duplicates removed."""
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    probs = np.linspace(0.0, 1.0, grid_size) if grid_size > 1 else np.array([0.5])
    return np.unique(np.quantile(values, probs))


def prediction_matrix(model, X: np.ndarray, j: int, grid: np.ndarray) -> np.ndarray:
    """(n_rows, len(grid)) predictions with column ``j`` overwritten by each grid value."""
    n, g = X.shape[0], grid.shape[0]
    big = np.repeat(X[None, :, :], g, axis=0)  # (g, n, p)
    big[:, :, j] = grid[:, None]
    return model.predict(big.reshape(g * n, X.shape[1])).reshape(g, n).T


def _feature_matrix(model, data: Dataset, feature: str) -> tuple[np.ndarray, int]:
    if data.n_rows == 0:
        raise ValueError("explanation data is empty")
    names = tuple(model.feature_names)
    if feature not in names:
        raise KeyError(f"unknown feature {feature!r}; model uses {list(names)}")
    X = model.as_matrix(data)
    return X, names.index(feature)


def pdp(model, data: Dataset, feature: str, grid_size: int = DEFAULT_GRID_SIZE, grid=None) -> PDProfile:
    """Partial dependence of ``model`` on ``feature`` averaged over all rows of ``data``."""
    X, j = _feature_matrix(model, data, feature)
    grid = quantile_grid(X[:, j], grid_size) if grid is None else np.asarray(grid, dtype=np.float64)
    P = prediction_matrix(model, X, j, grid)
    return PDProfile(model.label, feature, grid, P.mean(axis=0))


def pdp_ci(
    model,
    data: Dataset,
    feature: str,
    n_boot: int = 100,
    ci_level: float = 0.95,
    seed: int = DEFAULT_SEED,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> PDProfile:
    """Partial dependence with point-wise percentile bootstrap bands.

    Rows of ``data`` are resampled with replacement ``n_boot`` times (the
    model is not refit) and the profile is recomputed on the fixed grid of
    the original data. Band edges are empirical quantiles (inverse-CDF
    definition) at (1 - ci_level)/2 and (1 + ci_level)/2. The resamples come
    from substream ``explain/bootstrap`` and so are shared by every model and
    feature explained with the same seed and data.
    """
    if n_boot < 2:
        raise ValueError("n_boot must be >= 2")
    if not 0.0 < ci_level < 1.0:
        raise ValueError("ci_level must lie in (0, 1)")
    X, j = _feature_matrix(model, data, feature)
    n = X.shape[0]
    grid = quantile_grid(X[:, j], grid_size)
    P = prediction_matrix(model, X, j, grid)
    rng = substream(seed, "explain/bootstrap")
    reps = np.empty((n_boot, grid.shape[0]))
    for b in range(n_boot):
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
        reps[b] = counts @ P / n
    lo = np.quantile(reps, (1.0 - ci_level) / 2.0, axis=0, method="inverted_cdf")
    hi = np.quantile(reps, (1.0 + ci_level) / 2.0, axis=0, method="inverted_cdf")
    return PDProfile(model.label, feature, grid, P.mean(axis=0), lo, hi, n_boot, ci_level, reps)


def _rmse(y, pred) -> float:
    return score(y, pred).rmse


def permutation_importance(
    model,
    test: Dataset,
    n_permutations: int = 1,
    seed: int = DEFAULT_SEED,
    permutation: Callable[[np.random.Generator, int], np.ndarray] | None = None,
) -> ImportanceReport:
    """RMSE increase after shuffling one feature column at a time, over all rows.

    Shuffle ``b`` of feature ``j`` draws from substream
    ``explain/permutation/<j>/<b>``. ``permutation`` replaces the shuffle
    (``lambda rng, n: np.arange(n)`` gives the identity, a debugging hook).
    """
    if test.n_rows == 0:
        raise ValueError("test data is empty")
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    permute = permutation or (lambda rng, n: rng.permutation(n))
    X = model.as_matrix(test)
    y = test.y
    n = X.shape[0]
    baseline = _rmse(y, model.predict(X))
    out = []
    for j, name in enumerate(model.feature_names):
        rmses = np.empty(n_permutations)
        for b in range(n_permutations):
            perm = permute(substream(seed, f"explain/permutation/{j}/{b}"), n)
            Xp = X.copy()
            Xp[:, j] = X[perm, j]
            rmses[b] = _rmse(y, model.predict(Xp))
        out.append(FeatureImportance(name, baseline, float(rmses.mean()), float(np.mean(rmses - baseline))))
    return ImportanceReport(model.label, tuple(out), n_permutations, int(seed))


def residual_table(models: Sequence, test: Dataset) -> ResidualTable:
    if test.n_rows == 0:
        raise ValueError("test data is empty")
    labels = tuple(m.label for m in models)
    if len(set(labels)) != len(labels):
        raise ValueError("model labels must be unique")
    res = np.column_stack([test.y - m.predict(test) for m in models]) if models else np.empty((test.n_rows, 0))
    return ResidualTable(np.arange(1, test.n_rows + 1), labels, res)


def residual_correlation(rt: ResidualTable) -> np.ndarray:
    """Pearson correlations between residual columns.

    A column with zero variance has undefined correlation with everything,
    itself included; those entries are NaN.
    """
    R = rt.residuals - rt.residuals.mean(axis=0)
    ss = np.sqrt(np.sum(R * R, axis=0))
    k = R.shape[1]
    C = np.full((k, k), np.nan)
    for a in range(k):
        for b in range(a, k):
            if ss[a] > 0 and ss[b] > 0:
                c = 1.0 if a == b else float(np.dot(R[:, a], R[:, b]) / (ss[a] * ss[b]))
                C[a, b] = C[b, a] = min(1.0, max(-1.0, c))
    return C


# --- CSV exports (';' separated, 17 significant digits) ----------------------


def _f(v) -> str:
    return format(float(v), ".17g")


def format_pdp_csv(profiles: Sequence[PDProfile]) -> str:
    buf = io.StringIO()
    buf.write("model;feature;grid;pd;ci_lo;ci_hi\n")
    for p in profiles:
        for i in range(p.grid.shape[0]):
            lo = _f(p.ci_lo[i]) if p.has_ci else MISSING
            hi = _f(p.ci_hi[i]) if p.has_ci else MISSING
            buf.write(f"{p.model};{p.feature};{_f(p.grid[i])};{_f(p.pd[i])};{lo};{hi}\n")
    return buf.getvalue()


def parse_pdp_csv(text: str) -> list[PDProfile]:
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != "model;feature;grid;pd;ci_lo;ci_hi":
        raise ValueError("not a partial dependence export (bad header)")
    groups: dict[tuple[str, str], list[list[str]]] = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = ln.split(";")
        if len(cells) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, found {len(cells)}")
        groups.setdefault((cells[0], cells[1]), []).append(cells[2:])
    out = []
    for (model, feature), rows in groups.items():
        a = np.array([[float(c) for c in r[:2]] for r in rows])
        has_ci = rows[0][2] != MISSING
        ci = np.array([[float(c) for c in r[2:]] for r in rows]) if has_ci else None
        out.append(
            PDProfile(model, feature, a[:, 0], a[:, 1], None if ci is None else ci[:, 0], None if ci is None else ci[:, 1])
        )
    return out


def format_importance_csv(reports: Sequence[ImportanceReport]) -> str:
    buf = io.StringIO()
    buf.write("model;feature;baseline_rmse;permuted_rmse;importance\n")
    for r in reports:
        for f in r.features:
            buf.write(f"{r.model};{f.feature};{_f(f.baseline_rmse)};{_f(f.permuted_rmse)};{_f(f.importance)}\n")
    return buf.getvalue()


def format_residuals_csv(rt: ResidualTable) -> str:
    buf = io.StringIO()
    buf.write(";".join(["row", *rt.labels]) + "\n")
    for i in range(rt.residuals.shape[0]):
        buf.write(";".join([str(int(rt.row[i])), *(_f(v) for v in rt.residuals[i])]) + "\n")
    return buf.getvalue()


def parse_residuals_csv(text: str) -> ResidualTable:
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise ValueError("empty residual export")
    head = lines[0].split(";")
    if head[0] != "row" or len(head) < 2:
        raise ValueError("not a residual export (bad header)")
    rows, vals = [], []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = ln.split(";")
        if len(cells) != len(head):
            raise ValueError(f"line {lineno}: expected {len(head)} fields, found {len(cells)}")
        rows.append(int(cells[0]))
        vals.append([float(c) for c in cells[1:]])
    res = np.array(vals, dtype=np.float64).reshape(len(rows), len(head) - 1)
    return ResidualTable(np.array(rows, dtype=np.int64), tuple(head[1:]), res)
