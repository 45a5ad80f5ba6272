"""Shared domain types, seeded randomness and checkpoint serialization."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

CHECKPOINT_FORMAT = "relmon-checkpoint/1"

QUANTILE_MODES = ("delta-free", "delta-specific")

# Purpose tags for seeded_rng, so calibration, limit ensembles and synthetic
# data never share a random stream.
CALIBRATION_STREAM = 0
ENSEMBLE_STREAM = 1
DATA_STREAM = 2


class MonitorError(Exception):
    """Base class for all errors raised by relmon."""


class ConfigurationError(MonitorError, ValueError):
    pass


class EstimationError(MonitorError, ValueError):
    pass


class DataError(MonitorError, ValueError):
    pass


class DegenerateVarianceWarning(UserWarning):
    """The long-run variance estimate is zero (constant training data)."""


@dataclass(frozen=True)
class MonitorConfig:
    """Tuning knobs of a monitoring run.

    ``cp_constant`` is either a fixed threshold constant or ``"calibrate"``,
    in which case it is derived from the training sample by Monte Carlo with
    false-detection budget ``cp_budget``. ``stream_id`` selects the limit
    ensemble drawn from ``seed`` so that replications can use independent
    ensembles while sharing one calibration.
    """

    N: int
    beta: float = 0.45
    delta: float = 1.0
    alpha: float = 0.05
    cp_constant: float | str = "calibrate"
    cp_budget: float = 0.05
    mc_reps: int = 100
    horizon: float = 20.0
    seed: int = 0
    stream_id: int = 0
    quantile_mode: str = "delta-free"
    stop_on_reject: bool = False
    scale_ratio: float | None = None
    max_ensemble_size: int = 50_000_000

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError(f"N must be an integer >= 2, got {self.N!r}")
        if not 0.0 < self.beta < 0.5:
            raise ConfigurationError(f"beta must lie in (0, 1/2), got {self.beta!r}")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ConfigurationError(f"delta must be finite and >= 0, got {self.delta!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not 0.0 < self.cp_budget < 1.0:
            raise ConfigurationError(f"cp_budget must lie in (0, 1), got {self.cp_budget!r}")
        if isinstance(self.cp_constant, str):
            if self.cp_constant not in ("calibrate", "auto"):
                raise ConfigurationError(
                    f"cp_constant must be a number or 'calibrate', got {self.cp_constant!r}"
                )
        elif not (math.isfinite(self.cp_constant) and self.cp_constant >= 0):
            raise ConfigurationError(f"cp_constant must be >= 0, got {self.cp_constant!r}")
        if self.mc_reps < 1:
            raise ConfigurationError(f"mc_reps must be >= 1, got {self.mc_reps!r}")
        if not self.horizon > 1:
            raise ConfigurationError(f"horizon must exceed 1, got {self.horizon!r}")
        if self.quantile_mode not in QUANTILE_MODES:
            raise ConfigurationError(
                f"quantile_mode must be one of {QUANTILE_MODES}, got {self.quantile_mode!r}"
            )
        if self.scale_ratio is not None and not self.scale_ratio > 1:
            raise ConfigurationError(f"scale_ratio must exceed 1, got {self.scale_ratio!r}")

    @property
    def calibrated(self) -> bool:
        return isinstance(self.cp_constant, str)

    @property
    def grid_size(self) -> int:
        """Number of grid steps of width 1/N covering [0, horizon]."""
        return int(math.floor(self.horizon * self.N + 1e-9))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MonitorConfig":
        return cls(**d)


@dataclass(frozen=True)
class ChangePointRecord:
    """One detected change.

    ``theta_hat`` is the rescaled location, ``detect_time`` the index at which
    the detector fired and ``scale`` the winning window width, so that the last
    pre-change observation sits at index ``detect_time - scale``.
    """

    theta_hat: float
    detect_time: int
    scale: int

    @property
    def location(self) -> int:
        return self.detect_time - self.scale

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta_hat": self.theta_hat,
            "detect_time": self.detect_time,
            "scale": self.scale,
            "location": self.location,
        }


@dataclass
class StreamState:
    """Evolving state of one monitored stream.

    Observations are stored as prefix sums of ``x - ref`` where ``ref`` is the
    first training value; this keeps constant stretches exactly zero. The
    buffer ``_csum`` carries a leading 0, so ``_csum[j]`` is the sum of the
    first ``j`` centred observations.
    """

    config: MonitorConfig
    k: int
    ref: float
    train_mean: float
    sigma2_hat: float
    block_length: int
    n_blocks: int
    cp_constant: float
    kbar: int
    records: list[ChangePointRecord] = field(default_factory=list)
    segment_means: list[float] = field(default_factory=list)
    current_quantile: float | None = None
    quantiles: dict[str, float] = field(default_factory=dict)
    pivotal: dict[str, np.ndarray] = field(default_factory=dict)
    first_rejection: int | None = None
    _csum: np.ndarray = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def sigma_hat(self) -> float:
        return math.sqrt(self.sigma2_hat)

    @property
    def csum(self) -> np.ndarray:
        """Centred prefix sums ``S_0 = 0, S_1, ..., S_k`` (read-only view)."""
        v = self._csum[: self.k + 1]
        v.flags.writeable = False
        return v

    @property
    def prefix_sum(self) -> np.ndarray:
        """Cumulative sums of the raw observations, length ``k``."""
        return self._csum[1 : self.k + 1] + self.ref * np.arange(1, self.k + 1)

    @property
    def theta_k(self) -> float:
        """Most recent change estimate, floored at the end of training."""
        return self.k_hat / self.N

    @property
    def k_hat(self) -> int:
        if self.records:
            return max(self.records[-1].location, self.N)
        return self.N

    def window_sum(self, start: int, stop: int) -> float:
        """Centred sum of observations with indices in ``(start, stop]``."""
        return float(self._csum[stop] - self._csum[start])

    def append(self, x: float) -> None:
        if self.k + 1 >= self._csum.shape[0]:
            grown = np.zeros(2 * self._csum.shape[0])
            grown[: self._csum.shape[0]] = self._csum
            self._csum = grown
        self._csum[self.k + 1] = self._csum[self.k] + (x - self.ref)
        self.k += 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "k": self.k,
            "ref": self.ref,
            "train_mean": self.train_mean,
            "sigma2_hat": self.sigma2_hat,
            "block_length": self.block_length,
            "n_blocks": self.n_blocks,
            "cp_constant": self.cp_constant,
            "kbar": self.kbar,
            "records": [
                {"theta_hat": r.theta_hat, "detect_time": r.detect_time, "scale": r.scale}
                for r in self.records
            ],
            "segment_means": list(self.segment_means),
            "current_quantile": self.current_quantile,
            "quantiles": dict(self.quantiles),
            "pivotal": {m: v.tolist() for m, v in self.pivotal.items()},
            "first_rejection": self.first_rejection,
            "centred_prefix_sums": self._csum[: self.k + 1].tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StreamState":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError(f"unsupported checkpoint format {d.get('format')!r}")
        csum = np.asarray(d["centred_prefix_sums"], dtype=float)
        buf = np.zeros(max(2 * csum.shape[0], 16))
        buf[: csum.shape[0]] = csum
        return cls(
            config=MonitorConfig.from_dict(d["config"]),
            k=int(d["k"]),
            ref=d["ref"],
            train_mean=d["train_mean"],
            sigma2_hat=d["sigma2_hat"],
            block_length=d["block_length"],
            n_blocks=d["n_blocks"],
            cp_constant=d["cp_constant"],
            kbar=d["kbar"],
            records=[ChangePointRecord(**r) for r in d["records"]],
            segment_means=list(d["segment_means"]),
            current_quantile=d["current_quantile"],
            quantiles=dict(d["quantiles"]),
            pivotal={m: np.asarray(v, dtype=float) for m, v in d["pivotal"].items()},
            first_rejection=d["first_rejection"],
            _csum=buf,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StreamState":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DecisionEvent:
    """Per-tick output of the monitor."""

    k: int
    x: float
    gamma_stat: float
    quantile: float
    rejected: bool
    delta_max: float
    deviation_sign: int
    new_detection: ChangePointRecord | None = None
    timestamp: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "timestamp": self.timestamp,
            "x": self.x,
            "gamma_stat": self.gamma_stat,
            "quantile": self.quantile,
            "rejected": self.rejected,
            "delta_max": self.delta_max,
            "deviation_sign": self.deviation_sign,
            "new_detection": None if self.new_detection is None else self.new_detection.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def seeded_rng(seed: int, stream_id: int | Sequence[int] = 0) -> np.random.Generator:
    """Deterministic generator for ``(seed, stream_id)``.

    Distinct stream ids map to distinct ``SeedSequence`` spawn keys, which
    yields statistically independent PCG64 streams.
    """
    key = (stream_id,) if isinstance(stream_id, (int, np.integer)) else tuple(stream_id)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in key))
    return np.random.Generator(np.random.PCG64(ss))


def new_stream(config: MonitorConfig, training: Sequence[float]) -> StreamState:
    """Initialise a stream from its training sample.

    Estimates the long-run variance and resolves the change-point threshold
    constant (calibrating it when requested). Quantiles are left unset; the
    monitor fills them from its limit ensemble.
    """
    from . import cpe, lrv

    x = np.asarray(training, dtype=float)
    if x.ndim != 1 or x.shape[0] != config.N:
        raise ConfigurationError(
            f"training sample must have length N={config.N}, got {x.shape[0] if x.ndim else 0}"
        )
    if not np.all(np.isfinite(x)):
        raise DataError("training sample contains non-finite values")

    ref = float(x[0])
    buf = np.zeros(max(4 * config.N, 16))
    buf[1 : config.N + 1] = np.cumsum(x - ref)
    train_mean = ref + float(buf[config.N]) / config.N

    est = lrv.long_run_variance(x)
    if est.sigma2 == 0.0:
        import warnings

        warnings.warn(
            "training sample has zero long-run variance; quantiles collapse to 0",
            DegenerateVarianceWarning,
            stacklevel=2,
        )
    if config.calibrated:
        c_cp = cpe.calibrate_cp_constant(math.sqrt(est.sigma2), config, config.cp_budget)
    else:
        c_cp = float(config.cp_constant)

    return StreamState(
        config=config,
        k=config.N,
        ref=ref,
        train_mean=train_mean,
        sigma2_hat=est.sigma2,
        block_length=est.block_length,
        n_blocks=est.n_blocks,
        cp_constant=c_cp,
        kbar=config.N,
        _csum=buf,
    )
