"""Time-series fine structure: classical decomposition, exponential
smoothing, and a small identify / estimate / diagnose loop over ARI(p, d)
models fitted by Yule-Walker.

Undefined edge values of moving averages are NaN throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .nptests import DegenerateTestError, dichotomize, runs_test


def _series(z, min_len: int = 1) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d series")
    if arr.size < min_len:
        raise ValueError(f"series needs at least {min_len} observations, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    return arr


# -- moving averages and decomposition ---------------------------------------


def _ma_weights(window: int) -> np.ndarray:
    if window % 2:
        return np.full(window, 1.0 / window)
    # centred 2xMA: a window-length MA followed by a 2-term MA
    w = np.full(window + 1, 1.0 / window)
    w[0] = w[-1] = 0.5 / window
    return w


def centered_moving_average(z, window: int) -> np.ndarray:
    """Centred moving average aligned with ``z``; NaN where undefined."""
    x = _series(z)
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    if window > x.size:
        raise ValueError(f"window {window} longer than series of length {x.size}")
    w = _ma_weights(window)
    out = np.full(x.size, np.nan)
    half = (w.size - 1) // 2
    valid = np.convolve(x, w, mode="valid")
    out[half:half + valid.size] = valid
    return out


def moving_average(z, window: int) -> np.ndarray:
    """Centred moving average, defined values only.

    Odd windows give ``len(z) - window + 1`` values, even windows (centred
    2xMA) give ``len(z) - window``.
    """
    full = centered_moving_average(z, window)
    return full[~np.isnan(full)]


@dataclass
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    cyclical: np.ndarray
    irregular: np.ndarray
    model: str
    period: int
    seasonal_indices: np.ndarray
    trend_window: int

    @property
    def defined(self) -> np.ndarray:
        return ~(np.isnan(self.trend) | np.isnan(self.cyclical) | np.isnan(self.irregular))

    def reconstruct(self) -> np.ndarray:
        if self.model == "additive":
            return ((self.trend + self.seasonal) + self.cyclical) + self.irregular
        return ((self.trend * self.seasonal) * self.cyclical) * self.irregular

    def to_dict(self) -> dict:
        def clean(a):
            return [None if math.isnan(v) else float(v) for v in a]

        return {
            "model": self.model,
            "period": self.period,
            "trend_window": self.trend_window,
            "seasonal_indices": [float(v) for v in self.seasonal_indices],
            "trend": clean(self.trend),
            "seasonal": clean(self.seasonal),
            "cyclical": clean(self.cyclical),
            "irregular": clean(self.irregular),
        }


def _phase_means(values: np.ndarray, period: int) -> np.ndarray:
    phase = np.arange(values.size) % period
    means = np.empty(period)
    for j in range(period):
        v = values[phase == j]
        v = v[~np.isnan(v)]
        if v.size == 0:
            raise ValueError(f"no defined values for seasonal phase {j}")
        means[j] = v.mean()
    return means


def _exact_remainder(z: np.ndarray, partial: np.ndarray) -> np.ndarray:
    """Remainder ``r`` with ``partial + r == z`` bit for bit wherever possible."""
    r = z - partial
    for _ in range(8):
        back = partial + r
        bad = (back != z) & ~np.isnan(back)
        if not bad.any():
            break
        r[bad] = np.nextafter(r[bad], np.where(back[bad] < z[bad], np.inf, -np.inf))
    return r


def _check_period(x: np.ndarray, period: int, trend_window: int | None) -> int:
    if period < 2:
        raise ValueError(f"period must be >= 2, got {period}")
    if x.size < 3 * period:
        raise ValueError(f"series of length {x.size} shorter than 3 periods of {period}")
    tw = 2 * period + 1 if trend_window is None else trend_window
    if tw > x.size:
        raise ValueError(f"trend window {tw} longer than the series")
    return tw


def decompose_additive(z, period: int, trend_window: int | None = None) -> Decomposition:
    """Z = trend + seasonal + cyclical + irregular.

    The period-length moving average carries trend and cycle together; a
    longer moving average (default ``2*period + 1``) of the deseasonalised
    series is taken as the trend and the difference as the cycle.
    """
    x = _series(z)
    tw = _check_period(x, period, trend_window)
    trend_cycle = centered_moving_average(x, period)
    indices = _phase_means(x - trend_cycle, period)
    indices -= indices.mean()
    seasonal = indices[np.arange(x.size) % period]
    trend = centered_moving_average(x - seasonal, tw)
    cyclical = trend_cycle - trend
    irregular = _exact_remainder(x, (trend + seasonal) + cyclical)
    return Decomposition(trend, seasonal, cyclical, irregular, "additive", period, indices, tw)


def decompose_multiplicative(z, period: int, trend_window: int | None = None) -> Decomposition:
    """Z = trend * seasonal * cyclical * irregular, by ratio to moving average."""
    x = _series(z)
    if np.any(x <= 0):
        raise ValueError("multiplicative model requires positive data")
    tw = _check_period(x, period, trend_window)
    trend_cycle = centered_moving_average(x, period)
    indices = _phase_means(x / trend_cycle, period)
    indices /= indices.mean()
    seasonal = indices[np.arange(x.size) % period]
    trend = centered_moving_average(x / seasonal, tw)
    cyclical = trend_cycle / trend
    irregular = x / ((trend * seasonal) * cyclical)
    return Decomposition(trend, seasonal, cyclical, irregular, "multiplicative", period,
                         indices, tw)


# -- exponential smoothing -------------------------------------------------


@dataclass
class SmoothingState:
    """One-parameter exponential smoother; ``last_forecast`` is the forecast
    for the next, not yet seen, observation."""

    w: float
    last_forecast: float
    history_len: int = 0

    def __post_init__(self):
        if not 0.0 < self.w < 1.0:
            raise ValueError(f"weighting factor must lie in (0, 1), got {self.w}")

    def update(self, value: float) -> float:
        self.last_forecast = self.w * value + (1.0 - self.w) * self.last_forecast
        self.history_len += 1
        return self.last_forecast


def exp_smooth_forecast(z, w: float, init: str = "first", init_k: int = 1
                        ) -> tuple[np.ndarray, float]:
    """In-sample one-step forecasts and the next out-of-sample forecast.

    The first forecast is the first observation (``init="first"``) or the
    mean of the first ``init_k`` observations (``init="mean"``).
    """
    x = _series(z)
    if not 0.0 < w < 1.0:
        raise ValueError(f"weighting factor must lie in (0, 1), got {w}")
    if init == "first":
        start = x[0]
    elif init == "mean":
        if not 1 <= init_k <= x.size:
            raise ValueError(f"init_k must lie in [1, {x.size}], got {init_k}")
        start = x[:init_k].mean()
    else:
        raise ValueError(f"init must be 'first' or 'mean', got {init!r}")
    state = SmoothingState(w, float(start))
    fitted = np.empty(x.size)
    for t, value in enumerate(x):
        fitted[t] = state.last_forecast
        state.update(value)
    return fitted, state.last_forecast


# -- correlation structure -------------------------------------------------


def acf(z, max_lag: int) -> np.ndarray:
    """Sample autocorrelations; element ``k`` is lag ``k`` (element 0 is 1)."""
    x = _series(z, 2)
    if not 0 <= max_lag < x.size / 2:
        raise ValueError(f"max_lag must be below half the series length, got {max_lag}")
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0.0 or np.ptp(x) == 0.0:
        raise ValueError("zero variance: autocorrelation undefined for a constant series")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(d[:-k] @ d[k:]) / denom
    return np.clip(out, -1.0, 1.0)


def _durbin_levinson(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial autocorrelations and the last-order AR coefficients."""
    p = r.size - 1
    pac = np.empty(p + 1)
    pac[0] = 1.0
    phi = np.zeros(0)
    for k in range(1, p + 1):
        num = r[k] - phi @ r[k - 1:0:-1] if k > 1 else r[1]
        den = 1.0 - phi @ r[1:k] if k > 1 else 1.0
        kk = num / den
        phi = np.r_[phi - kk * phi[::-1], kk]
        pac[k] = kk
    return np.clip(pac, -1.0, 1.0), phi


def pacf(z, max_lag: int) -> np.ndarray:
    """Partial autocorrelations by Durbin-Levinson; element ``k`` is lag ``k``."""
    return _durbin_levinson(acf(z, max_lag))[0]


@dataclass
class ArModel:
    order: int
    coefficients: np.ndarray
    intercept: float
    residuals: np.ndarray
    sigma2: float
    mean: float = 0.0

    def forecast(self, history, steps: int = 1) -> np.ndarray:
        """Iterated forecasts continuing ``history`` (same scale as the fit)."""
        h = list(_series(history, self.order))
        out = []
        for _ in range(steps):
            lagged = h[::-1][: self.order]
            nxt = self.intercept + float(np.dot(self.coefficients, lagged))
            h.append(nxt)
            out.append(nxt)
        return np.asarray(out)

    def to_dict(self, include_residuals: bool = False) -> dict:
        d = {
            "order": self.order,
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "sigma2": float(self.sigma2),
            "mean": float(self.mean),
            "n_residuals": int(self.residuals.size),
        }
        if include_residuals:
            d["residuals"] = [float(e) for e in self.residuals]
        return d


def _ar_from_coefficients(x: np.ndarray, phi: np.ndarray) -> ArModel:
    p = phi.size
    mu = x.mean()
    d = x - mu
    pred = np.zeros(x.size - p)
    for i in range(p):
        pred += phi[i] * d[p - 1 - i: x.size - 1 - i]
    resid = d[p:] - pred
    return ArModel(p, phi, float(mu * (1.0 - phi.sum())), resid, float(resid.var()), float(mu))


def fit_ar(z, order: int, max_condition: float = 1e10) -> ArModel:
    """Yule-Walker AR(order) fit."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    x = _series(z)
    if x.size < 10 * order:
        raise ValueError(f"series of length {x.size} too short for AR({order}); need {10 * order}")
    r = acf(x, order)
    toeplitz = r[np.abs(np.subtract.outer(np.arange(order), np.arange(order)))]
    cond = np.linalg.cond(toeplitz)
    if not np.isfinite(cond) or cond > max_condition:
        raise ValueError(f"near-singular autocorrelation matrix (condition number {cond:.3g})")
    _, phi = _durbin_levinson(r)
    return _ar_from_coefficients(x, phi)


def _white_noise_model(x: np.ndarray) -> ArModel:
    mu = x.mean()
    resid = x - mu
    return ArModel(0, np.zeros(0), float(mu), resid, float(resid.var()), float(mu))


# -- differencing ----------------------------------------------------------


def difference(z, d: int = 1) -> np.ndarray:
    x = _series(z)
    if d < 1 or x.size <= d:
        raise ValueError(f"need d >= 1 and length > d, got d={d}, length={x.size}")
    return np.diff(x, n=d)


def difference_initials(z, d: int = 1) -> np.ndarray:
    """First value of each intermediate difference, needed to undo ``difference``."""
    x = _series(z)
    return np.array([np.diff(x, n=k)[0] for k in range(d)])


def integrate(dz, initials: Sequence[float]) -> np.ndarray:
    """Invert :func:`difference` given the stored initial values."""
    y = _series(dz)
    for first in reversed(list(initials)):
        y = np.r_[first, first + np.cumsum(y)]
    return y


# -- Box-Jenkins-lite scan -------------------------------------------------


@dataclass
class ScanEntry:
    p: int
    d: int
    model: ArModel | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def adequate(self) -> bool:
        return bool(self.diagnostics.get("adequate", False))

    def rank_key(self) -> tuple:
        if self.model is None:
            return (2, self.p + self.d, self.p, self.d, 0.0)
        return (0 if self.adequate else 1, self.p + self.d, self.p, self.d,
                -self.diagnostics["score"])

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "d": self.d,
            "model": self.model.to_dict() if self.model else None,
            "diagnostics": dict(self.diagnostics),
        }


def residual_diagnostics(resid, lags: int = 20, min_whiteness: float = 0.85,
                         runs_alpha: float = 0.01) -> dict:
    """Whiteness of residuals.

    ``whiteness`` is the fraction of autocorrelations at lags 1..``lags``
    inside +-2/sqrt(n); ``score`` is its minimum with the runs-test
    p-value.  ``adequate`` requires ``whiteness >= min_whiteness`` and a
    runs-test p-value above ``runs_alpha``.
    """
    e = _series(resid, 4)
    n = e.size
    max_lag = min(lags, (n - 1) // 2)
    r = acf(e, max_lag)[1:]
    band = 2.0 / math.sqrt(n)
    whiteness = float(np.mean(np.abs(r) <= band)) if r.size else 1.0
    try:
        runs_p = runs_test(dichotomize(e)).p.value
    except DegenerateTestError:
        runs_p = 0.0
    return {
        "whiteness": whiteness,
        "runs_p": runs_p,
        "score": min(whiteness, runs_p),
        "lags": int(max_lag),
        "adequate": whiteness >= min_whiteness and runs_p > runs_alpha,
    }


def box_jenkins_scan(z, max_p: int = 3, max_d: int = 2, lags: int = 20,
                     min_whiteness: float = 0.85, runs_alpha: float = 0.01) -> list[ScanEntry]:
    """Fit every ARI(p, d) with p <= max_p, d <= max_d and rank them.

    Models whose residuals look white come first, then the most
    parsimonious (smallest p + d, then smallest p, then smallest d), then
    the best whiteness score.  Fit failures are kept as diagnostics and
    ranked last.
    """
    x = _series(z)
    if x.size < 50:
        raise ValueError(f"box_jenkins_scan needs at least 50 observations, got {x.size}")
    entries = []
    for d in range(max_d + 1):
        y = x if d == 0 else difference(x, d)
        for p in range(max_p + 1):
            try:
                model = _white_noise_model(y) if p == 0 else fit_ar(y, p)
                diag = residual_diagnostics(model.residuals, lags, min_whiteness, runs_alpha)
            except ValueError as exc:
                entries.append(ScanEntry(p, d, None, {"error": str(exc), "adequate": False}))
                continue
            entries.append(ScanEntry(p, d, model, diag))
    return sorted(entries, key=ScanEntry.rank_key)
