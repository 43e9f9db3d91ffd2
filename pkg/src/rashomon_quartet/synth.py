"""Synthetic correlated regression data and its CSV format.

Features are equicorrelated standard normals; the target is

    y = sin(theta1 * (x1 + theta2 * x2)) + eps,   eps ~ N(0, sigma_eps**2)

With theta1=0.6, theta2=1/3 this is sin((3*x1 + x2) / 5). ``sigma_eps`` is a
standard deviation: the default 1/3 is what makes a test RMSE near 0.354
attainable (a noise SD of sqrt(1/3) would put the floor at 0.577).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import MAX_SEED, standard_normal, substream

DEFAULT_SEED = 1568


class CsvFormatError(ValueError):
    """Malformed dataset file. ``line`` is 1-based (the header is line 1)."""

    def __init__(self, message: str, line: int, path: str | os.PathLike | None = None):
        self.line = line
        self.path = None if path is None else str(path)
        where = f"{self.path}:" if self.path else "line "
        super().__init__(f"{where}{line}: {message}")


@dataclass(frozen=True)
class GenConfig:
    theta1: float = 0.6
    theta2: float = 1.0 / 3.0
    rho: float = 0.9
    sigma_eps: float = 1.0 / 3.0
    n_features: int = 3
    n_train: int = 1000
    n_test: int = 10000
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.sigma_eps >= 0.0:
            raise ValueError(f"sigma_eps must be >= 0, got {self.sigma_eps}")
        if self.n_features < 2:
            raise ValueError("n_features must be >= 2 (the target uses x1 and x2)")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for name in ("theta1", "theta2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def to_dict(self) -> dict:
        return {
            "theta1": self.theta1,
            "theta2": self.theta2,
            "rho": self.rho,
            "sigma_eps": self.sigma_eps,
            "n_features": self.n_features,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric table with named columns and one designated target column."""

    column_names: tuple[str, ...]
    target_name: str
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        names = tuple(self.column_names)
        object.__setattr__(self, "column_names", names)
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(names):
            raise ValueError(
                f"rows must be a 2-D array with {len(names)} columns, got shape {rows.shape}"
            )
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        if self.target_name not in names:
            raise ValueError(f"target {self.target_name!r} is not a column")
        if not np.all(np.isfinite(rows)):
            raise ValueError("dataset contains NaN or infinite values")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_xy(cls, X, y, feature_names: Sequence[str] | None = None, target_name: str = "y"):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if feature_names is None:
            feature_names = [f"x{j + 1}" for j in range(X.shape[1])]
        rows = np.column_stack([np.asarray(y, dtype=np.float64), X])
        return cls((target_name, *feature_names), target_name, rows)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def target_index(self) -> int:
        return self.column_names.index(self.target_name)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(c for c in self.column_names if c != self.target_name)

    @property
    def y(self) -> np.ndarray:
        return self.rows[:, self.target_index]

    @property
    def X(self) -> np.ndarray:
        keep = [i for i, c in enumerate(self.column_names) if c != self.target_name]
        return np.ascontiguousarray(self.rows[:, keep])

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}; have {list(self.feature_names)}") from None

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(np.intp)  # [] would otherwise be a float index
        return Dataset(self.column_names, self.target_name, self.rows[idx])

    def target_first(self) -> "Dataset":
        t = self.target_index
        if t == 0:
            return self
        order = [t] + [i for i in range(len(self.column_names)) if i != t]
        return Dataset(tuple(self.column_names[i] for i in order), self.target_name, self.rows[:, order])

    def equals(self, other: "Dataset") -> bool:
        return (
            self.column_names == other.column_names
            and self.target_name == other.target_name
            and self.rows.shape == other.rows.shape
            and bool(np.array_equal(self.rows, other.rows))
        )


def equicorrelation_cholesky(p: int, rho: float) -> np.ndarray:
    """Lower Cholesky factor of the p x p matrix with unit diagonal and ``rho`` elsewhere.

    Built column by column from the closed-form recursion for this structure
    rather than a general factorization: with d_j the j-th diagonal entry,
    every sub-diagonal entry of column j is c_j = (rho - sum_{k<j} c_k**2) / d_j
    and d_{j+1} = sqrt(1 - sum_{k<=j} c_k**2).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1) for a real Cholesky factor, got {rho}")
    L = np.zeros((p, p))
    acc = 0.0  # sum of squared sub-diagonal entries already placed in each lower row
    for j in range(p):
        d = math.sqrt(1.0 - acc)
        L[j, j] = d
        if j + 1 < p:
            c = (rho - acc) / d
            L[j + 1 :, j] = c
            acc += c * c
    return L


def _draw(config: GenConfig, n: int, label: str) -> Dataset:
    rng = substream(config.seed, label)
    p = config.n_features
    Z = standard_normal(rng, (n, p))
    X = Z @ equicorrelation_cholesky(p, config.rho).T
    eps = standard_normal(rng, n) * config.sigma_eps
    y = np.sin(config.theta1 * (X[:, 0] + config.theta2 * X[:, 1])) + eps
    return Dataset.from_xy(X, y)


def generate(config: GenConfig) -> tuple[Dataset, Dataset]:
    """Draw (train, test) from independent substreams of ``config.seed``."""
    return _draw(config, config.n_train, "synth/train"), _draw(config, config.n_test, "synth/test")


def population_target_variance(config: GenConfig) -> float:
    """Var(y) in closed form: Var(sin Z) + sigma_eps**2 for Gaussian Z."""
    s2 = config.theta1**2 * (1 + 2 * config.theta2 * config.rho + config.theta2**2)
    return (1 - math.exp(-2 * s2)) / 2 + config.sigma_eps**2


def population_projection(config: GenConfig) -> np.ndarray:
    """Slopes of the population least-squares fit of y on all features.

    For Gaussian X, Cov(X, sin(a.X)) = Sigma a E[cos(a.X)] (Stein's lemma),
    so the slopes are a * exp(-Var(a.X) / 2) with a = theta1 (1, theta2, 0, ...).
    """
    a = np.zeros(config.n_features)
    a[0], a[1] = config.theta1, config.theta1 * config.theta2
    s2 = config.theta1**2 * (1 + 2 * config.theta2 * config.rho + config.theta2**2)
    return a * math.exp(-s2 / 2)


def projection_montecarlo(config: GenConfig, n: int = 1_000_000) -> np.ndarray:
    """Least-squares slopes on ``n`` fresh draws (substream ``synth/projection``)."""
    d = _draw(config, n, "synth/projection")
    A = np.column_stack([np.ones(n), d.X])
    return np.linalg.lstsq(A, d.y, rcond=None)[0][1:]


def format_csv(d: Dataset) -> str:
    d = d.target_first()
    lines = [";".join(d.column_names)]
    lines.extend(";".join(format(v, ".17g") for v in row) for row in d.rows.tolist())
    return "\n".join(lines) + "\n"


def write_csv(d: Dataset, path) -> None:
    """Semicolon-separated, header first, target column first, LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_csv(d))


def parse_csv(text: str, target: str | None = None, path=None) -> Dataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CsvFormatError("empty file, expected a header row", 1, path)
    header = [h.strip().strip('"') for h in lines[0].rstrip("\r").split(";")]
    if any(h == "" for h in header):
        raise CsvFormatError("header has an empty column name", 1, path)
    if len(set(header)) != len(header):
        raise CsvFormatError("header has duplicate column names", 1, path)
    target = header[0] if target is None else target
    if target not in header:
        raise CsvFormatError(f"target column {target!r} not in header", 1, path)
    width = len(header)
    rows = np.empty((len(lines) - 1, width))
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        cells = line.rstrip("\r").split(";")
        if len(cells) != width:
            raise CsvFormatError(f"expected {width} fields, found {len(cells)}", lineno, path)
        for j, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise CsvFormatError(f"non-numeric value {cell!r} in column {header[j]!r}", lineno, path) from None
            if not math.isfinite(v):
                raise CsvFormatError(f"non-finite value {cell!r} in column {header[j]!r}", lineno, path)
            rows[i, j] = v
    return Dataset(tuple(header), target, rows)


def read_csv(path, target: str | None = None) -> Dataset:
    """Inverse of ``write_csv``; the target defaults to the first column."""
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read(), target=target, path=path)
