from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..synth import Dataset
from .base import Model, register


class SingularDesignError(np.linalg.LinAlgError):
    """Design matrix (with intercept column) is rank deficient."""


# |R_jj| below this fraction of max |R_jj| counts as a rank deficiency
RANK_TOL = 1e-10


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def qr_coefficients(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares [intercept, beta...] by Householder QR; also returns R."""
    A = _design(X)
    Q, R = np.linalg.qr(A, mode="reduced")
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= RANK_TOL * d.max():
        raise SingularDesignError(
            "design matrix is rank deficient; drop collinear or constant columns"
        )
    return np.linalg.solve(R, Q.T @ y), R


def normal_equation_coefficients(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Same estimate via (A'A) b = A'y. Kept as an independent cross-check of the QR path."""
    A = _design(X)
    return np.linalg.solve(A.T @ A, A.T @ y)


def _nullable(a):
    return [float(v) if np.isfinite(v) else None for v in a]


def _unnull(a):
    return np.array([np.nan if v is None else v for v in a], dtype=float)


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    coefficients: np.ndarray
    standard_errors: np.ndarray  # intercept first, then one per coefficient
    t_statistics: np.ndarray
    p_values: np.ndarray
    residual_variance: float
    df_residual: int


@register
class LinearModel(Model):
    family = "linear"
    default_label = "linear regression"

    def __init__(self, feature_names, fit: LinearFit, label=None, meta=None):
        super().__init__(feature_names, label, meta)
        self.fit = fit

    @property
    def intercept(self) -> float:
        return self.fit.intercept

    @property
    def coefficients(self) -> np.ndarray:
        return self.fit.coefficients

    def _predict(self, X):
        return self.fit.intercept + X @ self.fit.coefficients

    def report(self) -> str:
        f = self.fit
        names = ["(Intercept)", *self.feature_names]
        est = np.concatenate([[f.intercept], f.coefficients])
        lines = [f"{self.label}: ordinary least squares", f"{'':12s}{'Estimate':>12s}{'Std.Error':>12s}{'t value':>10s}{'Pr(>|t|)':>12s}"]
        for i, name in enumerate(names):
            lines.append(
                f"{name:12s}{est[i]:12.5f}{f.standard_errors[i]:12.5f}{f.t_statistics[i]:10.3f}{f.p_values[i]:12.4g}"
            )
        lines.append(f"Residual standard error: {np.sqrt(f.residual_variance):.4f} on {f.df_residual} degrees of freedom")
        return "\n".join(lines)

    def _params(self):
        f = self.fit
        return {
            "intercept": f.intercept,
            "coefficients": f.coefficients.tolist(),
            "standard_errors": f.standard_errors.tolist(),
            "t_statistics": _nullable(f.t_statistics),
            "p_values": _nullable(f.p_values),
            "residual_variance": f.residual_variance,
            "df_residual": f.df_residual,
        }

    @classmethod
    def _from_params(cls, feature_names, label, meta, params):
        fit = LinearFit(
            intercept=float(params["intercept"]),
            coefficients=np.asarray(params["coefficients"], dtype=float),
            standard_errors=np.asarray(params["standard_errors"], dtype=float),
            t_statistics=_unnull(params["t_statistics"]),
            p_values=_unnull(params["p_values"]),
            residual_variance=float(params["residual_variance"]),
            df_residual=int(params["df_residual"]),
        )
        return cls(feature_names, fit, label, meta)


def fit_linear(train: Dataset, label: str | None = None) -> LinearModel:
    """OLS with intercept on every feature, with classical standard errors.

    Raises ``SingularDesignError`` for a rank-deficient design; no
    pseudo-inverse fallback.
    """
    X, y = train.X, train.y
    n, p = X.shape
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} rows to fit {p} coefficients and an intercept, got {n}")
    b, R = qr_coefficients(X, y)
    resid = y - _design(X) @ b
    df = n - p - 1
    sigma2 = float(resid @ resid) / df
    Rinv = np.linalg.solve(R, np.eye(p + 1))
    se = np.sqrt(sigma2 * np.sum(Rinv * Rinv, axis=1))
    # exact fits have se == 0; t and p are left undefined there
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, b / se, np.nan)
    pv = 2.0 * stats.t.sf(np.abs(t), df)
    fit = LinearFit(
        intercept=float(b[0]),
        coefficients=b[1:].copy(),
        standard_errors=se,
        t_statistics=t,
        p_values=pv,
        residual_variance=sigma2,
        df_residual=df,
    )
    return LinearModel(train.feature_names, fit, label, {"n_train": n})
