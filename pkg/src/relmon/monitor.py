"""Sequential test for relevant deviations of the mean from a training benchmark."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from . import cpe
from .core import (
    QUANTILE_MODES,
    ConfigurationError,
    DecisionEvent,
    MonitorConfig,
    StreamState,
    new_stream,
)
from .limit_sim import (
    LimitEnsemble,
    build_ensemble,
    empirical_quantile,
    l_hat_two,
    pivotal_values,
    relevance_sets,
)


@dataclass(frozen=True)
class PsiHatView:
    train_mean: float
    current_mean: float | None  # None when no observation follows the last change
    k_hat: int


def _k_hat_at(state: StreamState, k: int) -> int:
    if k == state.k:
        return state.k_hat
    locs = [r.location for r in state.records if r.detect_time <= k]
    return max(locs[-1], state.N) if locs else state.N


def _deviation(state: StreamState, k: int) -> tuple[float, int]:
    """Signed ``Psi(1) - Psi(k/N)`` in centred units, and the matching ``k_hat``."""
    N = state.N
    kh = _k_hat_at(state, k)
    if k == kh:
        return 0.0, kh
    return state.window_sum(0, N) / N - state.window_sum(kh, k) / (k - kh), kh


def psi_hat(state: StreamState, k: int) -> PsiHatView:
    """Training mean and the mean of everything observed since the last change."""
    if k < 1 or k > state.k:
        raise ConfigurationError(f"k must lie in [1, {state.k}], got {k}")
    if k <= state.N:
        return PsiHatView(state.train_mean, state.train_mean, state.N)
    kh = _k_hat_at(state, k)
    if k == kh:
        return PsiHatView(state.train_mean, None, kh)
    return PsiHatView(state.train_mean, state.ref + state.window_sum(kh, k) / (k - kh), kh)


def gamma_stat(state: StreamState, k: int, delta: float) -> float:
    """Scaled excess ``sqrt(N) (k - k_hat) / k * (|Psi(1) - Psi(k/N)| - delta)``."""
    dev, kh = _deviation(state, k)
    if k == kh:
        return 0.0
    return math.sqrt(state.N) * (k - kh) / k * (abs(dev) - delta)


def delta_max(state: StreamState, k: int, q_tilde: float) -> float:
    """Largest threshold still rejected at ``k``, i.e. ``sup{delta >= 0 : gamma_stat > q}``.

    Clamped to 0 when no threshold is rejected.
    """
    if q_tilde < 0:
        raise ConfigurationError(f"quantile must be >= 0, got {q_tilde}")
    dev, kh = _deviation(state, k)
    if k == kh:
        return 0.0
    return max(0.0, abs(dev) - q_tilde * k / (math.sqrt(state.N) * (k - kh)))


def deviation_sign(state: StreamState, k: int) -> int:
    dev, _ = _deviation(state, k)
    return 1 if dev >= 0 else -1


def refresh_quantiles(state: StreamState, ensemble: LimitEnsemble) -> None:
    """Recompute both quantile flavours from the fixed ensemble."""
    if state.k_hat > ensemble.grid_size:
        raise ConfigurationError(
            f"change located at t={state.k_hat / state.N:g} beyond the simulated horizon "
            f"{ensemble.horizon:g}; increase horizon"
        )
    sets = relevance_sets(state)
    future = l_hat_two(ensemble.paths, state.k_hat, state.N)
    for mode in QUANTILE_MODES:
        vals = pivotal_values(ensemble, state.k_hat, sets.included(mode), future)
        state.pivotal[mode] = vals
        state.quantiles[mode] = state.sigma_hat * empirical_quantile(vals, 1.0 - state.config.alpha)
    state.current_quantile = state.quantiles[state.config.quantile_mode]


def process_observation(
    state: StreamState,
    x_new: float,
    ensemble: LimitEnsemble,
    config: MonitorConfig | None = None,
    timestamp: str | None = None,
) -> DecisionEvent:
    """Ingest one observation and emit the decision for this tick.

    Quantiles are only recomputed when the detector fires; every other tick
    reuses the cached values. Rejection does not end monitoring.
    """
    config = state.config if config is None else config
    res = cpe.scan_step(state, float(x_new))
    if res.fired or state.current_quantile is None:
        refresh_quantiles(state, ensemble)

    k = state.k
    dev, kh = _deviation(state, k)
    if k == kh:
        g = 0.0
        dmax = 0.0
    else:
        scale = math.sqrt(state.N) * (k - kh) / k
        g = scale * (abs(dev) - config.delta)
        qt = state.quantiles["delta-free"]
        dmax = max(0.0, abs(dev) - qt * k / (math.sqrt(state.N) * (k - kh)))
    q = state.quantiles[config.quantile_mode]
    rejected = g > q
    if rejected and state.first_rejection is None:
        state.first_rejection = k
    return DecisionEvent(
        k=k,
        x=float(x_new),
        gamma_stat=g,
        quantile=q,
        rejected=rejected,
        delta_max=dmax,
        deviation_sign=1 if dev >= 0 else -1,
        new_detection=res.record,
        timestamp=timestamp,
    )


class Monitor:
    """Stateful wrapper driving one stream.

    Examples
    --------
    >>> cfg = MonitorConfig(N=100, beta=0.45, delta=1.0)
    >>> mon = Monitor(cfg, training)                      # doctest: +SKIP
    >>> events = mon.run(new_values)                      # doctest: +SKIP
    """

    def __init__(
        self,
        config: MonitorConfig,
        training: Sequence[float] | None = None,
        *,
        state: StreamState | None = None,
        ensemble: LimitEnsemble | None = None,
    ):
        if state is None:
            if training is None:
                raise ConfigurationError("either training data or a state is required")
            state = new_stream(config, training)
        self.config = state.config
        self.state = state
        self.ensemble = build_ensemble(self.config) if ensemble is None else ensemble
        if state.current_quantile is None:
            refresh_quantiles(state, self.ensemble)

    @property
    def stopped(self) -> bool:
        return self.config.stop_on_reject and self.state.first_rejection is not None

    def update(self, x: float, timestamp: str | None = None) -> DecisionEvent:
        return process_observation(self.state, x, self.ensemble, self.config, timestamp)

    def iter_run(
        self, values: Iterable[float], timestamps: Iterable[str | None] | None = None
    ) -> Iterator[DecisionEvent]:
        ts = iter(timestamps) if timestamps is not None else None
        for x in values:
            if self.stopped:
                return
            yield self.update(x, None if ts is None else next(ts))

    def run(self, values: Iterable[float], timestamps=None) -> list[DecisionEvent]:
        return list(self.iter_run(values, timestamps))

    def checkpoint(self) -> str:
        return self.state.to_json()

    @classmethod
    def resume(cls, checkpoint: str) -> "Monitor":
        """Rebuild a monitor from :meth:`checkpoint` output.

        The ensemble is regenerated from the stored seed, so the continued
        run is identical to one that was never interrupted.
        """
        state = StreamState.from_json(checkpoint)
        return cls(state.config, state=state)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.checkpoint())

    @classmethod
    def load(cls, path) -> "Monitor":
        with open(path) as fh:
            return cls.resume(fh.read())

    def summary(self) -> dict:
        s = self.state
        return {
            "k": s.k,
            "train_mean": s.train_mean,
            "sigma2_hat": s.sigma2_hat,
            "cp_constant": s.cp_constant,
            "detections": [r.to_dict() for r in s.records],
            "first_rejection": s.first_rejection,
            "quantiles": dict(s.quantiles),
        }


def dumps_events(events: Iterable[DecisionEvent]) -> str:
    return "".join(json.dumps(e.to_dict()) + "\n" for e in events)
