"""Synthetic scenarios and the rejection-rate harness.

Every replication draws its data from ``seeded_rng(seed, (DATA_STREAM, rep))``
and its limit ensemble from ``stream_id=rep``; calibration is shared by all
replications of a cell. Cells that differ only in the scenario kind therefore
see the same noise, locations and coin flips, with jump magnitudes coupled
through common uniforms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .core import DATA_STREAM, MonitorConfig, MonitorError, seeded_rng
from .monitor import Monitor

NOISE_MODELS = ("IID", "MA", "AR")
KINDS = ("Interior", "Boundary", "AltI", "AltII", "AltIII")

# (low, high) offsets above delta for the large jumps of each alternative
_ALT_RANGES = {"AltI": (0.1, 1.0), "AltII": (0.5, 1.5), "AltIII": (1.0, 2.0)}

AR_BURN_IN = 1000
MIN_GAP = 90
MAX_ATTEMPTS = 10**6


class GenerationError(MonitorError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    noise: str
    N: int
    horizon_n: int
    change_locations: tuple[int, ...]
    jumps: tuple[float, ...]
    delta: float

    @property
    def max_jump(self) -> float:
        return max(abs(j) for j in self.jumps)

    def mean_path(self) -> np.ndarray:
        """Population mean at indices ``1..horizon_n``; training mean 0."""
        mu = np.zeros(self.horizon_n)
        for loc, d in zip(self.change_locations, self.jumps):
            mu[loc:] = d  # index loc + 1 onwards (1-based)
        return mu

    def first_relevant_change(self) -> int | None:
        for loc, d in zip(self.change_locations, self.jumps):
            if abs(d) > self.delta:
                return loc
        return None


def gen_noise(model: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Noise with marginal variance 1/4.

    IID: ``eta / 2``; MA: ``(eta_i + eta_{i-1} / 2) / sqrt(5)``;
    AR: ``e_i = sqrt(3)/4 * eta_i + e_{i-1} / 2`` after a burn-in from 0.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if model == "IID":
        return 0.5 * rng.standard_normal(n)
    if model == "MA":
        eta = rng.standard_normal(n + 1)
        return (eta[1:] + 0.5 * eta[:-1]) / math.sqrt(5.0)
    if model == "AR":
        from scipy.signal import lfilter

        eta = rng.standard_normal(n + AR_BURN_IN)
        e = lfilter([math.sqrt(3.0) / 4.0], [1.0, -0.5], eta)
        return e[AR_BURN_IN:]
    raise ValueError(f"unknown noise model {model!r}; expected one of {NOISE_MODELS}")


def long_run_variance_of(model: str) -> float:
    """Analytic long-run variance of each noise model."""
    return {"IID": 0.25, "MA": (1.0 + 0.5) ** 2 / 5.0, "AR": (3.0 / 16.0) / 0.25}[model]


def _locations(N: int, rng: np.random.Generator) -> tuple[int, ...]:
    n_changes = int(rng.integers(2, 7))
    for _ in range(MAX_ATTEMPTS):
        locs = np.sort(rng.integers(N + 1, 19 * N, size=n_changes))
        if np.all(np.diff(locs) >= MIN_GAP):
            return tuple(int(v) for v in locs)
    raise GenerationError(f"no admissible change locations after {MAX_ATTEMPTS} attempts")


def _jumps(kind: str, n: int, delta: float, rng: np.random.Generator) -> tuple[float, ...]:
    if kind == "Interior":
        return tuple(0.1 + (delta - 0.2) * rng.random(n))
    if kind == "Boundary":
        return tuple(delta * rng.choice([-1.0, 1.0], size=n))
    if kind in _ALT_RANGES:
        lo, hi = _ALT_RANGES[kind]
        for _ in range(MAX_ATTEMPTS):
            big = rng.random(n) < 0.5
            if big.any():
                break
        else:
            raise GenerationError("could not draw an alternative with a large jump")
        u = rng.random(n)
        large = delta + lo + (hi - lo) * u
        small = 0.1 + (delta - 0.2) * u
        return tuple(np.where(big, large, small))
    raise ValueError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")


def gen_scenario(
    kind: str, noise: str, N: int, delta: float, rng: np.random.Generator
) -> tuple[ScenarioSpec, np.ndarray]:
    """Draw change locations, jump sizes and a noisy series of length ``20 N``.

    The first ``N`` values are the training sample (mean 0).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")
    if kind != "Boundary" and delta <= 0.2:
        raise ValueError(f"{kind} scenarios need delta > 0.2, got {delta}")
    locs = _locations(N, rng)
    jumps = _jumps(kind, len(locs), delta, rng)
    spec = ScenarioSpec(kind, noise, N, 20 * N, locs, jumps, delta)
    data = spec.mean_path() + gen_noise(noise, spec.horizon_n, rng)
    return spec, data


def replication_data(
    kind: str, noise: str, N: int, delta: float, seed: int, rep: int
) -> tuple[ScenarioSpec, np.ndarray]:
    return gen_scenario(kind, noise, N, delta, seeded_rng(seed, (DATA_STREAM, rep)))


@dataclass(frozen=True)
class RunOutcome:
    rejected: bool
    first_rejection: int | None
    n_detections: int
    delay: float | None  # first rejection minus first relevant change


def run_replication(
    config: MonitorConfig, kind: str, noise: str, rep: int
) -> tuple[ScenarioSpec, RunOutcome]:
    """One seeded run of the stop-on-first-rejection test."""
    cfg = replace(config, stream_id=rep, stop_on_reject=True)
    spec, data = replication_data(kind, noise, cfg.N, cfg.delta, cfg.seed, rep)
    mon = Monitor(cfg, data[: cfg.N])
    mon.run(data[cfg.N :])
    fr = mon.state.first_rejection
    rel = spec.first_relevant_change()
    delay = None if fr is None or rel is None else float(fr - rel)
    return spec, RunOutcome(fr is not None, fr, len(mon.state.records), delay)


@dataclass(frozen=True)
class CellResult:
    noise: str
    N: int
    beta: float
    scenario: str
    reps: int
    rejection_rate: float
    mean_detection_delay: float
    outcomes: tuple[RunOutcome, ...] = field(default=(), repr=False)


def run_cell(
    noise: str,
    N: int,
    beta: float,
    kind: str,
    reps: int,
    *,
    seed: int = 0,
    **overrides,
) -> CellResult:
    opts = dict(delta=1.0, alpha=0.05, quantile_mode="delta-specific")
    opts.update(overrides)
    config = MonitorConfig(N=N, beta=beta, seed=seed, **opts)
    outcomes = tuple(run_replication(config, kind, noise, r)[1] for r in range(reps))
    delays = [o.delay for o in outcomes if o.delay is not None]
    return CellResult(
        noise,
        N,
        beta,
        kind,
        reps,
        sum(o.rejected for o in outcomes) / reps,
        float(np.mean(delays)) if delays else math.nan,
        outcomes,
    )


def run_table(
    cells: Iterable[tuple[str, int, float, str]],
    reps: int,
    *,
    seed: int = 0,
    progress=None,
    **overrides,
) -> list[CellResult]:
    """Rejection rates for each ``(noise, N, beta, kind)`` cell."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    out = []
    for noise, N, beta, kind in cells:
        res = run_cell(noise, N, beta, kind, reps, seed=seed, **overrides)
        if progress is not None:
            progress(res)
        out.append(res)
    return out


def full_grid_cells(
    noises: Sequence[str] = NOISE_MODELS,
    Ns: Sequence[int] = (50, 100, 200),
    betas: Sequence[float] = (0.1, 0.3, 0.45),
    kinds: Sequence[str] = KINDS,
) -> list[tuple[str, int, float, str]]:
    """Noise x N x beta x scenario grid; each axis defaults to every value."""
    return [(n, N, b, k) for n in noises for k in kinds for b in betas for N in Ns]


CSV_COLUMNS = ("noise", "N", "beta", "scenario", "reps", "rejection_rate", "mean_detection_delay")


def table_csv(results: Iterable[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow([r.noise, r.N, r.beta, r.scenario, r.reps, f"{r.rejection_rate:.4f}",
                    "" if math.isnan(r.mean_detection_delay) else f"{r.mean_detection_delay:.1f}"])
    return buf.getvalue()


def scenario_csv(data: Sequence[float]) -> str:
    """Series as the two-column CSV accepted by the command line (no timestamps)."""
    lines = ["timestamp,value"] + [f",{float(v)!r}" for v in data]
    return "\n".join(lines) + "\n"
