"""Augmented Dickey-Fuller unit-root test (constant, no trend).

The lag length is picked by minimum AIC over a common estimation sample, then
the chosen regression is re-estimated on the longest sample available for it.
Critical values come from MacKinnon's (2010) response surface for the
constant-only case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSeriesError, InsufficientDataError

# response-surface coefficients b0 + b1/T + b2/T^2 + b3/T^3, one regressor, constant only
_TAU_C = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}
MIN_OBS = 20


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lag: int
    n_obs: int
    critical_5pct: float
    critical_values: dict[str, float]
    significance: float = 0.05

    @property
    def stationary(self) -> bool:
        return self.statistic < self.critical_values[_label(self.significance)]


def _label(level: float) -> str:
    return f"{round(level * 100):d}%"


def critical_value(level: float, nobs: int) -> float:
    try:
        b = _TAU_C[level]
    except KeyError:
        raise ValueError(f"significance must be one of {sorted(_TAU_C)}, got {level}") from None
    inv = 1.0 / nobs
    return b[0] + b[1] * inv + b[2] * inv ** 2 + b[3] * inv ** 3


def default_max_lag(n: int) -> int:
    """Schwert's rule ``floor(12 * (n / 100) ** 0.25)``, capped for tiny samples."""
    return min(int(math.floor(12.0 * (n / 100.0) ** 0.25)), n // 2 - 2)


def _design(x: np.ndarray, dx: np.ndarray, lags: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    # rows t = start .. len(dx)-1: regress dx[t] on [1, x[t], dx[t-1], ..., dx[t-lags]]
    t = np.arange(start, len(dx))
    cols = [np.ones(len(t)), x[t]]
    cols += [dx[t - k] for k in range(1, lags + 1)]
    return np.column_stack(cols), dx[t]


def _ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return beta, resid, float(resid @ resid)


def _aic(ssr: float, nobs: int, k: int) -> float:
    llf = -nobs / 2.0 * (math.log(2 * math.pi) + math.log(ssr / nobs) + 1.0)
    return -2.0 * llf + 2.0 * k


def adf_test(series: Sequence, max_lag: int | None = None, autolag: bool = True,
             significance: float = 0.05) -> AdfResult:
    """ADF t-ratio on the lagged level, with AIC lag selection up to ``max_lag``.

    With ``autolag=False`` exactly ``max_lag`` lagged differences are used.
    """
    x = np.asarray([float(v) for v in series], dtype=float)
    n = len(x)
    if n < 3:
        raise InsufficientDataError(f"ADF needs more observations, got {n}")
    if np.ptp(x) == 0:
        raise DegenerateSeriesError("degenerate series: all values are equal")
    # the t-ratio is location- and scale-free; standardising first keeps the
    # regression well conditioned for tiny or far-from-zero series
    x = (x - x.mean()) / x.std()
    if max_lag is None:
        max_lag = default_max_lag(n)
    if max_lag < 0 or n - 1 - max_lag < MIN_OBS:
        raise InsufficientDataError(
            f"series too short for ADF: {n} points with max lag {max_lag} leaves "
            f"{n - 1 - max_lag} observations (< {MIN_OBS})"
        )
    dx = np.diff(x)

    if autolag:
        best = None
        for lag in range(max_lag + 1):
            X, y = _design(x, dx, lag, max_lag)
            _, _, ssr = _ols(X, y)
            if ssr <= 0:
                raise DegenerateSeriesError("regression fits perfectly; series is degenerate")
            crit = _aic(ssr, len(y), X.shape[1])
            if best is None or crit < best[0]:
                best = (crit, lag)
        lag = best[1]
    else:
        lag = max_lag

    X, y = _design(x, dx, lag, lag)
    beta, resid, ssr = _ols(X, y)
    nobs, k = X.shape
    if ssr <= 0 or nobs <= k:
        raise DegenerateSeriesError("regression fits perfectly; series is degenerate")
    sigma2 = ssr / (nobs - k)
    cov = sigma2 * np.linalg.pinv(X.T @ X)
    stat = float(beta[1] / math.sqrt(cov[1, 1]))
    crits = {_label(level): critical_value(level, nobs) for level in _TAU_C}
    if _label(significance) not in crits:
        raise ValueError(f"significance must be one of {sorted(_TAU_C)}, got {significance}")
    return AdfResult(stat, lag, nobs, crits["5%"], crits, significance)
