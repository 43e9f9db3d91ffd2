from __future__ import annotations

from typing import Sequence

import numpy as np

from ..rng import standard_normal, substream
from ..synth import DEFAULT_SEED, Dataset
from . import _kernels
from .base import Model, register

# RPROP+ step-size constants
ETA_PLUS = 1.2
ETA_MINUS = 0.5
DELTA_INIT = 0.1
DELTA_MAX = 50.0
DELTA_MIN = 1e-6

DEFAULT_MAX_EPOCHS = 100_000


def layer_offsets(sizes: Sequence[int]) -> np.ndarray:
    offs = [0]
    for nin, nout in zip(sizes[:-2], sizes[1:-1]):
        offs.append(offs[-1] + (nin + 1) * nout)
    return np.asarray(offs, dtype=np.int64)


def n_weights(sizes: Sequence[int]) -> int:
    return sum((nin + 1) * nout for nin, nout in zip(sizes[:-1], sizes[1:]))


def loss_and_gradient(w, sizes, X, y) -> tuple[float, np.ndarray]:
    """Half the sum of squared errors of the flat weight vector ``w``, and its gradient."""
    sizes = np.asarray(sizes, dtype=np.int64)
    grad = np.empty(len(w))
    loss = _kernels.mlp_loss_grad(
        np.ascontiguousarray(w, dtype=np.float64),
        sizes,
        layer_offsets(sizes),
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        grad,
    )
    return float(loss), grad


@register
class NetworkModel(Model):
    family = "network"
    default_label = "neural network"

    def __init__(self, feature_names, sizes, weights, label=None, meta=None):
        super().__init__(feature_names, label, meta)
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self._offsets = layer_offsets(self.sizes)
        if self.weights.shape != (n_weights(self.sizes),):
            raise ValueError(f"expected {n_weights(self.sizes)} weights for layers {self.sizes.tolist()}")

    @property
    def converged(self) -> bool:
        return bool(self.meta.get("converged", False))

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(bias, weight matrix n_in x n_out) for every layer."""
        out = []
        for l in range(len(self.sizes) - 1):
            nin, nout = int(self.sizes[l]), int(self.sizes[l + 1])
            o = int(self._offsets[l])
            out.append((self.weights[o : o + nout], self.weights[o + nout : o + (nin + 1) * nout].reshape(nin, nout)))
        return out

    def _predict(self, X):
        out = np.empty(X.shape[0])
        _kernels.mlp_forward(self.weights, self.sizes, self._offsets, X, out)
        return out

    def report(self) -> str:
        m = self.meta
        lines = [
            f"{self.label}: layers {self.sizes.tolist()}, logistic hidden units, linear output",
            f"epochs={m.get('epochs')}, converged={m.get('converged')}, "
            f"max|grad|={m.get('max_gradient', float('nan')):.4g}, SSE/2={m.get('loss', float('nan')):.4f}",
        ]
        for l, (b, W) in enumerate(self.layers()):
            lines.append(f"layer {l + 1}: bias {np.array2string(b, precision=3)}")
            for j, row in enumerate(W):
                src = self.feature_names[j] if l == 0 else f"h{l}.{j + 1}"
                lines.append(f"  from {src}: {np.array2string(row, precision=3)}")
        return "\n".join(lines)

    def _params(self):
        return {"sizes": self.sizes.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def _from_params(cls, feature_names, label, meta, params):
        return cls(feature_names, params["sizes"], params["weights"], label, meta)


def initial_weights(sizes, seed: int, init: int = 0) -> np.ndarray:
    return standard_normal(substream(seed, f"network/init/{init}"), n_weights(sizes))


def fit_network(
    train: Dataset,
    hidden: Sequence[int] = (8, 4),
    grad_threshold: float = 0.05,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    seed: int = DEFAULT_SEED,
    init: int = 0,
    label: str | None = None,
) -> NetworkModel:
    """Logistic MLP trained by full-batch RPROP+ on half the sum of squared errors.

    Initial weights are N(0, 1) from substream ``network/init/<init>``.
    Training stops once every partial derivative is below ``grad_threshold``
    in absolute value. Hitting ``max_epochs`` first is not an error: the model
    comes back with ``meta["converged"] = False``.
    """
    X, y = train.X, train.y
    if X.shape[0] < 1:
        raise ValueError("need at least one training row")
    sizes = np.asarray([X.shape[1], *hidden, 1], dtype=np.int64)
    w = initial_weights(sizes, seed, init)
    epochs, loss, gmax, converged = _kernels.rprop_plus(
        w,
        sizes,
        layer_offsets(sizes),
        X,
        y,
        float(grad_threshold),
        int(max_epochs),
        ETA_PLUS,
        ETA_MINUS,
        DELTA_INIT,
        DELTA_MAX,
        DELTA_MIN,
    )
    meta = {
        "seed": int(seed),
        "init": int(init),
        "hidden": [int(h) for h in hidden],
        "grad_threshold": float(grad_threshold),
        "max_epochs": int(max_epochs),
        "epochs": int(epochs),
        "loss": float(loss),
        "max_gradient": float(gmax),
        "converged": bool(converged),
        "n_train": int(X.shape[0]),
    }
    return NetworkModel(train.feature_names, sizes, w, label, meta)
