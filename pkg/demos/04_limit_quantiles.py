"""
Quantiles from the simulated limit
==================================

Critical values come from Brownian paths drawn once per stream. Each
detection recomputes the functional on the same paths, so the quantile
can only go down.
"""

import numpy as np

from relmon import Monitor, MonitorConfig

N = 100
rng = np.random.default_rng(12)
x = 0.4 * rng.standard_normal(15 * N)
for loc, d in [(300, 0.6), (600, -1.2), (900, 0.8), (1200, 1.5)]:
    x[loc:] += d

for mode in ("delta-free", "delta-specific"):
    mon = Monitor(MonitorConfig(N=N, delta=1.0, mc_reps=400, seed=12, quantile_mode=mode), x[:N])
    qs = [mon.state.current_quantile]
    for v in x[N:]:
        e = mon.update(v)
        if e.new_detection is not None:
            qs.append(e.quantile)
    print(f"{mode:15s}", " -> ".join(f"{q:.3f}" for q in qs))
