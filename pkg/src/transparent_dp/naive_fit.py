"""Ordinary least squares and the exact bias of naive fits to noisy data.

Fitting the textbook regression to privatized pairs ignores the additive
noise, so the slope is attenuated, the intercept drifts, and the residual
variance is inflated.  The closed forms for all three limits live here next
to the estimator they describe.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesignError

__all__ = [
    "METHODS",
    "FitResult",
    "ols",
    "attenuation_limit",
    "intercept_limit",
    "residual_variance_inflated",
]

METHODS = ("naive", "mcem", "abc")


@dataclass(frozen=True)
class FitResult:
    """Point estimates and covariance for a two-parameter regression fit."""

    beta0_hat: float
    beta1_hat: float
    covariance: np.ndarray
    residual_variance: float
    method: str
    n: int

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (2, 2):
            raise ValueError(f"covariance must be 2x2, got shape {cov.shape}")
        # An all-NaN matrix is the explicit "covariance unavailable" sentinel.
        if not (np.isnan(cov).all() or np.allclose(cov, cov.T)):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "covariance", cov)
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.residual_variance < 0:
            raise ValueError("residual_variance must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(
            {
                "method": self.method,
                "n": self.n,
                "beta0": self.beta0_hat,
                "beta1": self.beta1_hat,
                "cov": self.covariance.tolist(),
                "resid_var": self.residual_variance,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        obj = json.loads(text)
        return cls(
            beta0_hat=float(obj["beta0"]),
            beta1_hat=float(obj["beta1"]),
            covariance=np.asarray(obj["cov"], dtype=float),
            residual_variance=float(obj["resid_var"]),
            method=obj["method"],
            n=int(obj["n"]),
        )


def ols(x, y) -> FitResult:
    """Fit y = beta0 + beta1 x by least squares.

    Parameters
    ----------
    x, y : array_like
        Paired observations, equal lengths, n >= 3.

    Returns
    -------
    FitResult
        Slope, intercept, classical covariance s^2 (X'X)^{-1} with the
        residual mean square s^2 on n - 2 degrees of freedom, method "naive".

    Raises
    ------
    DegenerateDesignError
        If x is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 observations, got {n}")

    x_bar = x.mean()
    y_bar = y.mean()
    sxx = float(np.sum((x - x_bar) ** 2))
    if sxx == 0.0:
        raise DegenerateDesignError("x is constant; slope undefined")
    sxy = float(np.sum((x - x_bar) * (y - y_bar)))

    beta1 = sxy / sxx
    beta0 = y_bar - beta1 * x_bar

    resid = y - beta0 - beta1 * x
    s_sq = float(np.sum(resid**2)) / (n - 2)

    # (X'X)^{-1} for the design [1, x]; det = n * sxx.
    sum_x = float(np.sum(x))
    sum_xx = float(np.sum(x**2))
    det = n * sxx
    xtx_inv = np.array([[sum_xx, -sum_x], [-sum_x, float(n)]]) / det

    return FitResult(
        beta0_hat=beta0,
        beta1_hat=beta1,
        covariance=s_sq * xtx_inv,
        residual_variance=s_sq,
        method="naive",
        n=n,
    )


def attenuation_limit(var_x: float, sigma_u_sq: float, beta1: float) -> float:
    """Large-sample limit of the naive slope under regressor noise.

    Parameters
    ----------
    var_x : float
        Population variance of the confidential regressor, positive.
    sigma_u_sq : float
        Variance of the additive noise on x, nonnegative.
    beta1 : float
        True slope.

    Returns
    -------
    float
        var_x / (var_x + sigma_u_sq) * beta1; equals beta1 when the noise
        variance is zero and shrinks toward 0 as it grows.
    """
    if not (math.isfinite(var_x) and var_x > 0):
        raise ValueError(f"var_x must be positive, got {var_x!r}")
    if sigma_u_sq < 0:
        raise ValueError("sigma_u_sq must be nonnegative")
    return var_x / (var_x + sigma_u_sq) * beta1


def intercept_limit(
    mean_x: float,
    var_x: float,
    sigma_u_sq: float,
    beta0: float,
    beta1: float,
) -> float:
    """Large-sample limit of the naive intercept under regressor noise.

    Returns beta0 + (1 - gamma) * mean_x * beta1 with gamma the attenuation
    factor var_x / (var_x + sigma_u_sq).  The drift vanishes when the
    regressor is centered or the noise is absent.
    """
    if not (math.isfinite(var_x) and var_x > 0):
        raise ValueError(f"var_x must be positive, got {var_x!r}")
    if sigma_u_sq < 0:
        raise ValueError("sigma_u_sq must be nonnegative")
    gamma = var_x / (var_x + sigma_u_sq)
    return beta0 + (1.0 - gamma) * mean_x * beta1


def residual_variance_inflated(
    sigma_sq: float,
    beta1: float,
    sigma_u_sq: float,
    sigma_v_sq: float,
) -> float:
    """Large-sample naive residual variance under noise on both coordinates.

    Returns sigma_sq + beta1^2 * sigma_u_sq + sigma_v_sq.
    """
    for name, val in (("sigma_sq", sigma_sq), ("sigma_u_sq", sigma_u_sq),
                      ("sigma_v_sq", sigma_v_sq)):
        if val < 0:
            raise ValueError(f"{name} must be nonnegative, got {val!r}")
    return sigma_sq + beta1**2 * sigma_u_sq + sigma_v_sq
