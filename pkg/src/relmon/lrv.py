"""Long-run variance of the training sample by non-overlapping block differences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EstimationError


@dataclass(frozen=True)
class LrvEstimate:
    sigma2: float
    block_length: int
    n_blocks: int


def block_length(N: int) -> int:
    """Block length ``max(1, floor(N ** (1/3)))``, exact on perfect cubes."""
    m = int(round(N ** (1.0 / 3.0)))
    while m**3 > N:
        m -= 1
    while (m + 1) ** 3 <= N:
        m += 1
    return max(1, m)


def long_run_variance(training: Sequence[float]) -> LrvEstimate:
    """Estimate the long-run variance from adjacent block-sum differences.

    The sample is cut into ``n = floor(N / m)`` blocks of length ``m``; the
    estimate averages ``(S_j - S_{j+1})**2 / (2 m)`` over consecutive block
    sums. Trailing observations that do not fill a block are ignored.

    Raises
    ------
    EstimationError
        If fewer than two blocks are available.
    """
    x = np.asarray(training, dtype=float)
    N = x.shape[0]
    if N < 2:
        raise EstimationError(f"need at least 2 observations, got {N}")
    m = block_length(N)
    nb = N // m
    if nb < 2:
        raise EstimationError(
            f"only {nb} block(s) of length {m}; increase the training size"
        )
    sums = x[: nb * m].reshape(nb, m).sum(axis=1)
    d = sums[:-1] - sums[1:]
    sigma2 = float(np.sum(d * d) / (2 * m) / (nb - 1))
    return LrvEstimate(sigma2=sigma2, block_length=m, n_blocks=nb)
