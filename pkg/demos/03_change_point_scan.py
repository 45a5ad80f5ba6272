"""
The multiscale change point scan
================================

The detector compares neighbouring windows of every admissible width and
fires when the weighted difference crosses its threshold. Here it runs on
its own, without the relevance test on top.
"""

import numpy as np

from relmon import MonitorConfig, new_stream
from relmon.cpe import gamma_profile, scan_step

N = 200
x = 0.5 * np.random.default_rng(4).standard_normal(10 * N)
x[2 * N:] += 1.0
x[6 * N:] -= 1.5

state = new_stream(MonitorConfig(N=N, seed=4), x[:N])
print(f"threshold C_cp * log N = {state.cp_constant * np.log(N):.3f}")

for v in x[N:]:
    res = scan_step(state, float(v))
    if res.fired:
        r = res.record
        print(f"fired at k={r.detect_time} with h={res.argmax_scale}, "
              f"theta={r.theta_hat:.3f} (true changes at 2.0 and 6.0)")

# the profile over widths at one time shows which scale carries the evidence
state2 = new_stream(MonitorConfig(N=N, cp_constant=1e9), x[:N])
for v in x[N:2 * N + 60]:
    scan_step(state2, float(v))
prof = gamma_profile(state2, state2.k)
h = int(np.argmax(prof)) + 1
print(f"60 points after the first jump the strongest width is h={h}")
