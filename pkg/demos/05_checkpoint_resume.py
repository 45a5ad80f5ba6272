"""
Pausing and resuming a monitor
==============================

A checkpoint stores everything needed to continue, including the RNG
positions, so the resumed log matches an uninterrupted run byte for byte.
"""

import numpy as np

from relmon import Monitor, MonitorConfig
from relmon.monitor import dumps_events

N = 100
x = 0.5 * np.random.default_rng(9).standard_normal(1500)
x[500:] += 2.0

cfg = MonitorConfig(N=N, delta=0.5, seed=9)
full = dumps_events(Monitor(cfg, x[:N]).run(x[N:]))

mon = Monitor(cfg, x[:N])
head = mon.run(x[N:700])
text = mon.checkpoint()
print("checkpoint size:", len(text), "characters")
tail = Monitor.resume(text).run(x[700:])
print("identical:", dumps_events(head + tail) == full)
