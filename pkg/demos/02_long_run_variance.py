"""
Long-run variance by blocking
=============================

Serial dependence inflates the variance of sums. The blocking estimator
recovers the long-run variance from one training sample.
"""

import numpy as np

from relmon import long_run_variance
from relmon.simlab import gen_noise, long_run_variance_of

n = 10_000
for model in ("IID", "MA", "AR"):
    est = [long_run_variance(gen_noise(model, n, np.random.default_rng([3, s]))).sigma2
           for s in range(20)]
    print(f"{model:3s}  true {long_run_variance_of(model):.3f}  "
          f"average estimate {np.mean(est):.3f}  sd {np.std(est):.3f}")

# the block length grows like the cube root of the sample size
for n in (100, 1000, 10_000):
    lrv = long_run_variance(np.random.default_rng(0).standard_normal(n))
    print(f"n={n}: {lrv.n_blocks} blocks of length {lrv.block_length}")
