"""Two one-parameter models that tie exactly in population MSE.

The target is f(x) = sign(x) |x|^alpha with x ~ U[-1, 1]. The competitors are
the slope family y = b1 * x and the stump family y = b0 * sign(x). Population
least squares gives

    b1 = E[x f] / E[x^2] = 3 / (2 + alpha)
    b0 = E[|f|]          = 1 / (1 + alpha)
    mse_linear = 1/(1 + 2 alpha) - 3/(2 + alpha)^2
    mse_stump  = 1/(1 + 2 alpha) - 1/(1 + alpha)^2

and the two errors coincide at alpha = (sqrt(3) - 1)/2. Every closed form
has an adaptive-quadrature twin below, used by the tests as the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .rng import substream
from .synth import DEFAULT_SEED

COUPLE_ALPHA = (math.sqrt(3.0) - 1.0) / 2.0
QUAD_TOL = 1e-12


@dataclass(frozen=True)
class CoupleSpec:
    alpha: float = COUPLE_ALPHA

    def __post_init__(self):
        if not self.alpha > -0.5:
            raise ValueError(f"alpha must exceed -1/2 for f to be square integrable, got {self.alpha}")

    def f(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.sign(x) * np.abs(x) ** self.alpha


def _spec(spec) -> CoupleSpec:
    return spec if isinstance(spec, CoupleSpec) else CoupleSpec(float(spec))


def best_linear(spec) -> tuple[float, float]:
    """(b1, population MSE) of the best y = b1 * x."""
    a = _spec(spec).alpha
    return 3.0 / (2.0 + a), 1.0 / (1.0 + 2.0 * a) - 3.0 / (2.0 + a) ** 2


def best_stump(spec) -> tuple[float, float]:
    """(b0, population MSE) of the best y = b0 * sign(x)."""
    a = _spec(spec).alpha
    return 1.0 / (1.0 + a), 1.0 / (1.0 + 2.0 * a) - 1.0 / (1.0 + a) ** 2


def mse_gap(alpha: float) -> float:
    """mse_linear - mse_stump; negative means the slope model wins."""
    return best_linear(alpha)[1] - best_stump(alpha)[1]


def find_couple_exponent(lo: float = 0.0, hi: float = 1.0, xtol: float = 1e-12) -> float:
    """Root of ``mse_gap`` on (lo, hi) by Brent's method."""
    return optimize.brentq(mse_gap, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


# --- quadrature oracle ------------------------------------------------------
# Every integrand is even in x, so the mean over U[-1, 1] equals the integral
# over [0, 1], where the target is x**alpha. Substituting x = t**s with
# s = 2 / (1 + 2 alpha) turns the x**(2 alpha) endpoint behaviour into t**1,
# so plain adaptive quadrature converges for every alpha > -1/2.


def _integrate01(alpha: float, g) -> float:
    s = 2.0 / (1.0 + 2.0 * alpha)
    val, _ = integrate.quad(
        lambda t: g(t**s) * s * t ** (s - 1.0) if t > 0 else 0.0,
        0.0,
        1.0,
        epsabs=QUAD_TOL,
        epsrel=QUAD_TOL,
        limit=500,
    )
    return val


def quad_best_linear(spec) -> tuple[float, float]:
    a = _spec(spec).alpha
    b1 = _integrate01(a, lambda x: x**a * x) / _integrate01(a, lambda x: x * x)
    return b1, _integrate01(a, lambda x: (x**a - b1 * x) ** 2)


def quad_best_stump(spec) -> tuple[float, float]:
    a = _spec(spec).alpha
    b0 = _integrate01(a, lambda x: x**a)
    return b0, _integrate01(a, lambda x: (x**a - b0) ** 2)


@dataclass(frozen=True)
class CoupleMonteCarlo:
    b1: float
    b0: float
    mse_linear: float
    mse_stump: float


def couple_montecarlo(spec, n: int, seed: int = DEFAULT_SEED) -> CoupleMonteCarlo:
    """Fit b1, b0 by sample least squares on n draws; score both on n fresh draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    spec = _spec(spec)
    fit_x = substream(seed, "couple/fit").uniform(-1.0, 1.0, n)
    test_x = substream(seed, "couple/test").uniform(-1.0, 1.0, n)
    fy = spec.f(fit_x)
    b1 = float(fit_x @ fy / (fit_x @ fit_x))
    s = np.sign(fit_x)
    b0 = float(s @ fy / (s @ s)) if np.any(s) else 0.0
    ty = spec.f(test_x)
    return CoupleMonteCarlo(
        b1=b1,
        b0=b0,
        mse_linear=float(np.mean((ty - b1 * test_x) ** 2)),
        mse_stump=float(np.mean((ty - b0 * np.sign(test_x)) ** 2)),
    )


def couple_table(alphas) -> list[dict]:
    rows = []
    for a in alphas:
        b1, ml = best_linear(a)
        b0, ms = best_stump(a)
        rows.append({"alpha": float(a), "b1": b1, "b0": b0, "mse_linear": ml, "mse_stump": ms})
    return rows
