"""Online multiscale change-point estimation.

At every tick ``k`` the detector compares adjacent window sums of width ``h``
ending at ``k``, for every width that keeps both windows after the last
detection time ``kbar``. A change is declared at ``k - h*`` as soon as the
weighted maximum exceeds ``C_cp * log(N)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import (
    CALIBRATION_STREAM,
    ChangePointRecord,
    EstimationError,
    MonitorConfig,
    MonitorError,
    StreamState,
    seeded_rng,
)


@dataclass(frozen=True)
class ScanResult:
    max_gamma: float
    argmax_scale: int | None
    fired: bool
    record: ChangePointRecord | None = None


def weight(h, k, N: int, beta: float):
    """Multiscale weight ``sqrt(N) / (k**(1-beta) * h**beta * log(1 + k/N))``.

    Accepts scalars or arrays for ``h``.
    """
    if np.any(np.asarray(k) <= N):
        raise MonitorError(f"weights are defined for k > N, got k={k}, N={N}")
    if np.any(np.asarray(h) < 1):
        raise MonitorError(f"window width must be >= 1, got {h}")
    return np.sqrt(N) / (np.power(k, 1.0 - beta) * np.power(h, beta) * np.log1p(k / N))


def admissible_scales(k: int, kbar: int) -> range:
    """Widths ``h`` with ``kbar <= k - 2h + 1``."""
    if k < kbar:
        raise MonitorError(f"current index {k} precedes last detection {kbar}")
    return range(1, (k - kbar + 1) // 2 + 1)


def geometric_scales(hmax: int, ratio: float) -> np.ndarray:
    """Sorted unique widths ``floor(ratio**j) <= hmax``."""
    if hmax < 1:
        return np.zeros(0, dtype=np.int64)
    n = int(math.floor(math.log(hmax) / math.log(ratio))) + 2
    hs = np.unique(np.floor(ratio ** np.arange(n)).astype(np.int64))
    return hs[hs <= hmax]


def _scales(k: int, kbar: int, ratio: float | None) -> np.ndarray:
    hmax = len(admissible_scales(k, kbar))
    if ratio is None:
        return np.arange(1, hmax + 1, dtype=np.int64)
    return geometric_scales(hmax, ratio)


def gamma(h: int, k: int, state: StreamState) -> float:
    """Weighted absolute difference of the two width-``h`` windows ending at ``k``."""
    if h not in admissible_scales(k, state.kbar) or k > state.k:
        raise MonitorError(f"width h={h} is not admissible at k={k} (kbar={state.kbar})")
    left = state.window_sum(k - 2 * h, k - h)
    right = state.window_sum(k - h, k)
    return float(weight(h, k, state.N, state.config.beta) * abs(left - right))


def gamma_profile(state: StreamState, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """All admissible widths at ``k`` and their detector values."""
    k = state.k if k is None else k
    hs = _scales(k, state.kbar, state.config.scale_ratio)
    if hs.size == 0:
        return hs, np.zeros(0)
    S = state.csum
    left = S[k - hs] - S[k - 2 * hs]
    right = S[k] - S[k - hs]
    return hs, weight(hs, k, state.N, state.config.beta) * np.abs(left - right)


@functools.lru_cache(maxsize=8)
def _hpow(beta: float, n: int) -> np.ndarray:
    return np.power(np.arange(1, n + 1, dtype=np.float64), beta)


def _hpow_for(beta: float, hmax: int) -> np.ndarray:
    n = 1024
    while n < hmax:
        n *= 2
    return _hpow(beta, n)


@numba.njit(cache=True)
def _max_gamma(S, k, hmax, hs, use_hs, N, beta, hpow):  # pragma: no cover - compiled
    c = np.sqrt(N) / (k ** (1.0 - beta) * np.log1p(k / N))
    best = -np.inf
    arg = -1
    n = hs.shape[0] if use_hs else hmax
    for i in range(n):
        h = hs[i] if use_hs else i + 1
        d = (S[k - h] - S[k - 2 * h]) - (S[k] - S[k - h])
        g = c / hpow[h - 1] * abs(d)
        if g > best:
            best = g
            arg = h
    return best, arg


_NO_SCALES = np.zeros(0, dtype=np.int64)


def scan_step(state: StreamState, x_new: float) -> ScanResult:
    """Append one observation and run one iteration of the detector.

    On detection a record is appended, ``kbar`` moves to the current index
    and, when a previous detection exists, the segment between the two
    located changes is closed and its mean stored.
    """
    state.append(x_new)
    k = state.k
    cfg = state.config
    hmax = (k - state.kbar + 1) // 2
    if cfg.scale_ratio is None:
        hs, use_hs = _NO_SCALES, False
    else:
        hs, use_hs = geometric_scales(hmax, cfg.scale_ratio), True
    if hmax < 1 or (use_hs and hs.size == 0):
        return ScanResult(-math.inf, None, False)
    # strict '>' in the kernel keeps the first maximiser, i.e. the smallest h
    gmax, h = _max_gamma(
        state._csum, k, hmax, hs, use_hs, state.N, cfg.beta, _hpow_for(cfg.beta, hmax)
    )
    gmax, h = float(gmax), int(h)
    if not gmax > state.cp_constant * math.log(state.N):
        return ScanResult(gmax, h, False)

    rec = ChangePointRecord(theta_hat=(k - h) / state.N, detect_time=k, scale=h)
    if state.records:
        start = state.records[-1].location
        stop = rec.location
        state.segment_means.append(state.ref + state.window_sum(start, stop) / (stop - start))
    state.records.append(rec)
    state.kbar = k
    return ScanResult(gmax, h, True, rec)


@functools.lru_cache(maxsize=32)
def null_maxima(
    N: int, beta: float, grid_size: int, reps: int, seed: int, ratio: float | None = None
) -> np.ndarray:
    """Sorted Monte-Carlo draws of the detector maximum under pure unit noise.

    Each replication is a standard Gaussian partial-sum path of length
    ``grid_size`` (a Brownian path sampled at spacing ``1/N`` and scaled by
    ``sqrt(N)``); the maximum runs over all admissible ``(h, k)`` with
    ``N < k <= grid_size`` and no prior detection.
    """
    rng = seeded_rng(seed, (CALIBRATION_STREAM,))
    S = np.zeros((reps, grid_size + 1))
    np.cumsum(rng.standard_normal((reps, grid_size)), axis=1, out=S[:, 1:])
    hmax = (grid_size - N + 1) // 2
    hs = np.arange(1, hmax + 1) if ratio is None else geometric_scales(hmax, ratio)
    best = _null_max(S, N, beta, hs.astype(np.int64))
    best.sort()
    best.flags.writeable = False
    return best


@numba.njit(cache=True)
def _null_max(S, N, beta, hs):  # pragma: no cover - compiled
    reps, G1 = S.shape
    G = G1 - 1
    out = np.zeros(reps)
    hpow = hs.astype(np.float64) ** beta
    for r in range(reps):
        best = 0.0
        for k in range(N + 1, G + 1):
            c = np.sqrt(N) / (k ** (1.0 - beta) * np.log1p(k / N))
            hm = (k - N + 1) // 2
            for i in range(hs.shape[0]):
                h = hs[i]
                if h > hm:
                    break
                g = c / hpow[i] * abs(S[r, k] - 2.0 * S[r, k - h] + S[r, k - 2 * h])
                if g > best:
                    best = g
        out[r] = best
    return out


def order_statistic(sorted_values: np.ndarray, level: float) -> float:
    """The ``ceil(level * R)``-th smallest value, clamped to ``[1, R]``."""
    R = sorted_values.shape[0]
    idx = math.ceil(level * R - 1e-9)
    idx = min(max(idx, 1), R)
    return float(sorted_values[idx - 1])


def calibrate_cp_constant(
    sigma_hat: float, config: MonitorConfig, false_detection_budget: float = 0.05
) -> float:
    """Threshold constant with ``C_cp * log(N)`` at the null-maximum quantile.

    The pivotal maxima are simulated once per ``(N, beta, horizon, reps,
    seed)`` and cached; the result is exactly linear in ``sigma_hat``.
    """
    if not math.isfinite(sigma_hat) or sigma_hat < 0:
        raise EstimationError(f"cannot calibrate with sigma_hat={sigma_hat!r}")
    if not 0.0 < false_detection_budget < 1.0:
        raise EstimationError(f"budget must lie in (0, 1), got {false_detection_budget!r}")
    maxima = null_maxima(
        config.N, config.beta, config.grid_size, config.mc_reps, config.seed, config.scale_ratio
    )
    return sigma_hat * order_statistic(maxima, 1.0 - false_detection_budget) / math.log(config.N)
