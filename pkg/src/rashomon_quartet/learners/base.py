from __future__ import annotations

import json
from typing import Any, ClassVar

import numpy as np

from ..synth import Dataset

MODEL_FORMAT = "rashomon-quartet/model"
MODEL_FORMAT_VERSION = 1


class SchemaError(ValueError):
    """Input columns do not match the columns a model was trained on."""


class Model:
    """A fitted regressor. Subclasses implement ``_predict`` and (de)serialization."""

    family: ClassVar[str]
    default_label: ClassVar[str]

    def __init__(self, feature_names, label: str | None = None, meta: dict | None = None):
        self.feature_names = tuple(feature_names)
        self.label = self.default_label if label is None else label
        self.meta = dict(meta or {})

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def as_matrix(self, X) -> np.ndarray:
        if isinstance(X, Dataset):
            missing = [f for f in self.feature_names if f not in X.feature_names]
            if missing:
                raise SchemaError(f"{self.label}: dataset lacks features {missing}")
            order = [X.feature_index(f) for f in self.feature_names]
            return np.ascontiguousarray(X.X[:, order])
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise SchemaError(f"{self.label}: expected a 2-D matrix, got {X.ndim}-D")
        if X.shape[1] != self.n_features:
            raise SchemaError(
                f"{self.label}: expected {self.n_features} columns {list(self.feature_names)}, got {X.shape[1]}"
            )
        return np.ascontiguousarray(X)

    def predict(self, X) -> np.ndarray:
        """Predictions for a matrix with the training columns, or a Dataset."""
        X = self.as_matrix(X)
        if X.shape[0] == 0:
            return np.empty(0)
        return self._predict(X)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def report(self) -> str:
        raise NotImplementedError

    def _params(self) -> dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def _from_params(cls, feature_names, label, meta, params):
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "label": self.label,
            "feature_names": list(self.feature_names),
            "meta": self.meta,
            "params": self._params(),
        }

    def __repr__(self):
        return f"<{type(self).__name__} {self.label!r} on {list(self.feature_names)}>"


_REGISTRY: dict[str, type[Model]] = {}


def register(cls):
    _REGISTRY[cls.family] = cls
    return cls


def model_from_dict(d: dict) -> Model:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model document (format={d.get('format')!r})")
    if d.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model document version {d.get('version')!r}")
    try:
        cls = _REGISTRY[d["family"]]
    except KeyError:
        raise ValueError(f"unknown model family {d.get('family')!r}") from None
    return cls._from_params(d["feature_names"], d["label"], d.get("meta", {}), d["params"])


def dumps_model(m: Model) -> str:
    # json writes floats with repr(), which round-trips binary64 exactly
    return json.dumps(m.to_dict(), separators=(",", ":"), allow_nan=False) + "\n"


def loads_model(text: str) -> Model:
    return model_from_dict(json.loads(text))


def save_model(m: Model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(m))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
