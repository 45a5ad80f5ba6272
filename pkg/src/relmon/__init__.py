"""Online monitoring of relevant deviations of a piecewise-constant mean."""

from .core import (
    ChangePointRecord,
    ConfigurationError,
    DataError,
    DecisionEvent,
    DegenerateVarianceWarning,
    EstimationError,
    MonitorConfig,
    MonitorError,
    StreamState,
    new_stream,
    seeded_rng,
)
from .limit_sim import LimitEnsemble, build_ensemble
from .lrv import LrvEstimate, long_run_variance
from .monitor import Monitor, process_observation

__all__ = [
    "ChangePointRecord",
    "ConfigurationError",
    "DataError",
    "DecisionEvent",
    "DegenerateVarianceWarning",
    "EstimationError",
    "LimitEnsemble",
    "LrvEstimate",
    "Monitor",
    "MonitorConfig",
    "MonitorError",
    "StreamState",
    "build_ensemble",
    "long_run_variance",
    "new_stream",
    "process_observation",
    "seeded_rng",
]

__version__ = "0.1.0"
