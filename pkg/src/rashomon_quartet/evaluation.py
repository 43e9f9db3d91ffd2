"""Test-set performance: R^2 (baselined on the test mean), RMSE and MSE."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .synth import Dataset


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class Scores:
    r2: float
    rmse: float
    mse: float


@dataclass(frozen=True)
class PerfReport:
    scores: dict[str, Scores] = field(default_factory=dict)
    n_test: int = 0

    @property
    def labels(self) -> list[str]:
        return list(self.scores)

    def r2(self) -> dict[str, float]:
        return {k: v.r2 for k, v in self.scores.items()}

    def rmse(self) -> dict[str, float]:
        return {k: v.rmse for k, v in self.scores.items()}

    @property
    def spread(self) -> float:
        """max - min of R^2 across the models."""
        vals = [s.r2 for s in self.scores.values()]
        return max(vals) - min(vals)

    def to_dict(self) -> dict:
        return {
            "models": {k: {"r2": v.r2, "rmse": v.rmse, "mse": v.mse} for k, v in self.scores.items()},
            "n_test": self.n_test,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PerfReport":
        return cls({k: Scores(**v) for k, v in d["models"].items()}, int(d["n_test"]))

    def to_json(self) -> str:
        """Floats written with 17 significant digits."""
        models = ",\n".join(
            f'    {json.dumps(k)}: {{"r2": {v.r2:.17g}, "rmse": {v.rmse:.17g}, "mse": {v.mse:.17g}}}'
            for k, v in self.scores.items()
        )
        return '{\n  "models": {\n' + models + "\n  },\n" + f'  "n_test": {self.n_test}\n' + "}\n"

    def table(self, digits: int = 4) -> str:
        labels = self.labels
        w = max(12, *(len(s) + 2 for s in labels))
        head = "".join(f"{s:>{w}s}" for s in labels)
        r2 = "".join(f"{self.scores[s].r2:>{w}.{digits}f}" for s in labels)
        rmse = "".join(f"{self.scores[s].rmse:>{w}.{digits}f}" for s in labels)
        return f"{'':6s}{head}\n{'R2':6s}{r2}\n{'RMSE':6s}{rmse}\n"


def score(y: np.ndarray, pred: np.ndarray) -> Scores:
    y = np.asarray(y, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if y.shape[0] == 0:
        raise UndefinedMetricError("empty test set")
    if y.shape != pred.shape:
        raise ValueError(f"{pred.shape[0]} predictions for {y.shape[0]} targets")
    mse = float(np.mean((y - pred) ** 2))
    var = float(np.mean((y - y.mean()) ** 2))
    if var == 0.0:
        raise UndefinedMetricError("test targets have zero variance; R^2 is undefined")
    return Scores(r2=1.0 - mse / var, rmse=float(np.sqrt(mse)), mse=mse)


def evaluate(models: Sequence, test: Dataset) -> PerfReport:
    """Score every model on ``test``; report keys are model labels."""
    if test.n_rows == 0:
        raise UndefinedMetricError("empty test set")
    scores = {}
    for m in models:
        if m.label in scores:
            raise ValueError(f"duplicate model label {m.label!r}")
        scores[m.label] = score(test.y, m.predict(test))
    return PerfReport(scores, test.n_rows)
