"""Monte-Carlo quantiles of the feasible limit functional.

All functionals are evaluated in pivotal (unit-variance) form on Brownian
paths sampled on the grid ``{j/N : j = 0, ..., H*N}``; the observed-data
quantile is the pivotal quantile times the estimated long-run standard
deviation. Change locations are integer indices, which are exactly grid
points, so the same ensemble can be reused at every recomputation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import (
    ENSEMBLE_STREAM,
    ConfigurationError,
    MonitorConfig,
    MonitorError,
    StreamState,
    seeded_rng,
)
from .cpe import order_statistic


@dataclass(frozen=True)
class LimitEnsemble:
    paths: np.ndarray  # (R, grid_size + 1), paths[:, 0] == 0
    N: int
    horizon: float
    seed: int
    stream_id: int

    @property
    def grid_step(self) -> float:
        return 1.0 / self.N

    @property
    def reps(self) -> int:
        return self.paths.shape[0]

    @property
    def grid_size(self) -> int:
        return self.paths.shape[1] - 1


@dataclass(frozen=True)
class Segment:
    """A closed segment ``(start, stop]`` between two consecutive detections."""

    index: int
    start: int
    stop: int
    deviation: float  # |training mean - segment mean|
    sign: int  # sign(training mean - segment mean), with sign(0) = +1


@dataclass(frozen=True)
class RelevanceSets:
    a_hat: frozenset[int] = frozenset()
    a_tilde: frozenset[int] = frozenset()
    signs: dict[int, int] = field(default_factory=dict)
    segments: tuple[Segment, ...] = ()

    def included(self, mode: str) -> list[Segment]:
        idx = self.a_tilde if mode == "delta-free" else self.a_hat
        return [s for s in self.segments if s.index in idx]


def build_ensemble(config: MonitorConfig) -> LimitEnsemble:
    """Simulate ``mc_reps`` standard Brownian paths on ``[0, horizon]``."""
    G = config.grid_size
    size = config.mc_reps * (G + 1)
    if size > config.max_ensemble_size:
        raise ConfigurationError(
            f"ensemble of {config.mc_reps} x {G + 1} values exceeds the budget of "
            f"{config.max_ensemble_size}; lower mc_reps or horizon"
        )
    rng = seeded_rng(config.seed, (ENSEMBLE_STREAM, config.stream_id))
    paths = np.zeros((config.mc_reps, G + 1))
    inc = rng.standard_normal((config.mc_reps, G))
    inc *= 1.0 / math.sqrt(config.N)
    np.cumsum(inc, axis=1, out=paths[:, 1:])
    paths.flags.writeable = False
    return LimitEnsemble(paths, config.N, config.horizon, config.seed, config.stream_id)


def closed_segments(state: StreamState) -> list[Segment]:
    """Segments between consecutive detections, indexed from 1."""
    N = state.N
    train_c = state.window_sum(0, N) / N
    out = []
    recs = state.records
    for j in range(1, len(recs)):
        a, b = recs[j - 1].location, recs[j].location
        seg_c = state.window_sum(a, b) / (b - a)
        diff = train_c - seg_c
        out.append(Segment(j, a, b, abs(diff), 1 if diff >= 0 else -1))
    return out


def _sets(state: StreamState, delta: float | None) -> RelevanceSets:
    segs = [s for s in closed_segments(state) if s.stop <= state.k]
    slack = math.log(state.N) / math.sqrt(state.N)
    a_hat = frozenset()
    if delta is not None:
        a_hat = frozenset(s.index for s in segs if s.deviation > delta - slack)
    a_tilde = frozenset()
    if segs:
        top = max(s.deviation for s in segs)
        a_tilde = frozenset(s.index for s in segs if s.deviation >= top - slack)
    signs = {s.index: s.sign for s in segs if s.index in a_hat or s.index in a_tilde}
    return RelevanceSets(a_hat, a_tilde, signs, tuple(segs))


def relevance_sets(state: StreamState, config: MonitorConfig | None = None) -> RelevanceSets:
    """Both relevance index sets at the current tick."""
    config = state.config if config is None else config
    return _sets(state, config.delta)


def compute_a_hat(state: StreamState, config: MonitorConfig | None = None) -> RelevanceSets:
    """Closed segments whose deviation exceeds ``delta - log(N)/sqrt(N)``."""
    s = relevance_sets(state, config)
    return RelevanceSets(s.a_hat, frozenset(), {i: s.signs[i] for i in s.a_hat}, s.segments)


def compute_a_tilde(state: StreamState, config: MonitorConfig | None = None) -> RelevanceSets:
    """Closed segments within ``log(N)/sqrt(N)`` of the largest deviation (no delta)."""
    s = _sets(state, None)
    return RelevanceSets(frozenset(), s.a_tilde, dict(s.signs), s.segments)


def l_hat_one(paths: np.ndarray, segments: list[Segment], N: int) -> np.ndarray | float:
    """Past-segment functional, maximised over included segments and grid points.

    For each segment ``[a, b]`` (grid indices) evaluates
    ``s * ((x - a/N) B(1) - (B(x) - B(a/N))) / x`` for ``x = j/N``,
    ``a <= j <= b``. Returns ``-inf`` (per path) when no segment is included.

    The term is formed as ``s * (A(x) - A(a/N)) / x`` with ``A(x) = x B(1) - B(x)``,
    the same floating-point expression :func:`l_hat_two` uses, so a segment
    inside the future domain can never exceed it by rounding.
    """
    P = np.asarray(paths, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    out = np.full(P.shape[0], -np.inf)
    if segments:
        b1 = P[:, N : N + 1]
        for seg in segments:
            if seg.stop >= P.shape[1]:
                raise MonitorError(
                    f"segment end {seg.stop / N:g} lies beyond the simulated horizon"
                )
            j = np.arange(seg.start, seg.stop + 1)
            x = j / N
            a = x * b1 - P[:, j]
            v = (a - a[:, :1]) if seg.sign > 0 else (a[:, :1] - a)
            np.maximum(out, np.max(v / x, axis=1), out=out)
    return float(out[0]) if single else out


def l_hat_two(paths: np.ndarray, start: int, N: int) -> np.ndarray | float:
    """Worst-case future functional from grid index ``start`` to the horizon.

    Maximises ``|(x - t) B(1) - (B(x) - B(t))| / x`` over grid points
    ``start <= t <= x``. Writing ``a(x) = x B(1) - B(x)`` the inner term is
    ``a(x) - a(t)``, so one pass with running extrema of ``a`` suffices.
    """
    P = np.asarray(paths, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    G = P.shape[1] - 1
    if start < N:
        raise MonitorError(f"future functional needs start >= N, got {start}")
    if start > G:
        raise MonitorError(f"start index {start} lies beyond the simulated horizon {G}")
    out = _future_sup(P, start, N)
    return float(out[0]) if single else out


@numba.njit(cache=True)
def _future_sup(P, start, N):  # pragma: no cover - compiled
    R, G1 = P.shape
    out = np.empty(R)
    for r in range(R):
        b1 = P[r, N]
        hi = -np.inf
        lo = np.inf
        best = 0.0
        for j in range(start, G1):
            x = j / N
            a = x * b1 - P[r, j]
            if a > hi:
                hi = a
            if a < lo:
                lo = a
            v = max(hi - a, a - lo) / x
            if v > best:
                best = v
        out[r] = best
    return out


def l_hat_two_naive(path: np.ndarray, start: int, N: int) -> float:
    """Double loop over all grid pairs; reference for :func:`l_hat_two`."""
    B = np.asarray(path, dtype=float)
    b1 = B[N]
    best = -math.inf
    for jx in range(start, B.shape[0]):
        x = jx / N
        for jt in range(start, jx + 1):
            t = jt / N
            v = abs((x - t) * b1 - (B[jx] - B[jt])) / x
            if v > best:
                best = v
    return best


def pivotal_values(
    ensemble: LimitEnsemble, start: int, segments: list[Segment], future: np.ndarray | None = None
) -> np.ndarray:
    """Per-path pivotal statistic ``max(L1, L2)``; ``future`` reuses a computed L2."""
    l2 = l_hat_two(ensemble.paths, start, ensemble.N) if future is None else future
    if not segments:
        return np.array(l2, dtype=float, copy=True)
    return np.maximum(l_hat_one(ensemble.paths, segments, ensemble.N), l2)


def empirical_quantile(values: np.ndarray, level: float) -> float:
    """Higher order statistic ``ceil(level * R)``, no interpolation."""
    return order_statistic(np.sort(np.asarray(values, dtype=float)), level)


def quantile(
    state: StreamState,
    ensemble: LimitEnsemble,
    sets: RelevanceSets,
    alpha: float,
    mode: str = "delta-free",
) -> float:
    """Scaled ``(1 - alpha)`` quantile of the feasible limit functional."""
    vals = pivotal_values(ensemble, state.k_hat, sets.included(mode))
    return state.sigma_hat * empirical_quantile(vals, 1.0 - alpha)
