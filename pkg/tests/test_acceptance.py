"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (printed at the end of the session)
before asserting. Statistical cells use 200 replications, master seed 2024
and 400 limit paths per quantile update.
"""

import numpy as np
import pytest

from conftest import record
from relmon import ChangePointRecord, Monitor, MonitorConfig, long_run_variance, new_stream
from relmon.cpe import scan_step
from relmon.limit_sim import empirical_quantile, l_hat_two, l_hat_two_naive
from relmon.monitor import delta_max, dumps_events, gamma_stat
from relmon.simlab import gen_noise, replication_data, run_cell

MASTER_SEED = 2024
REPS = 200
MC_REPS = 400

CELLS = [
    ("IID", 100, 0.3, "Interior"),
    ("IID", 200, 0.3, "Boundary"),
    *[("IID", 200, 0.3, k) for k in ("AltI", "AltII", "AltIII")],
    *[("IID", 200, 0.45, k) for k in ("AltI", "AltII", "AltIII")],
    *[("AR", 200, 0.45, k) for k in ("AltI", "AltII", "AltIII")],
]


@pytest.fixture(scope="module")
def table():
    out = {}
    for cell in CELLS:
        res = run_cell(*cell, REPS, seed=MASTER_SEED, mc_reps=MC_REPS)
        out[cell] = res.rejection_rate
        print(f"{cell}: rejection rate {res.rejection_rate:.3f}")
    return out


def test_01_interior(table):
    r = table[("IID", 100, 0.3, "Interior")]
    record("1 interior size", r <= 0.01, f"IID N=100 beta=0.3 Interior rate {r:.3f} (<= 0.01)")
    assert r <= 0.01


def test_02_boundary(table):
    r = table[("IID", 200, 0.3, "Boundary")]
    record("2 boundary size", r <= 0.09, f"IID N=200 beta=0.3 Boundary rate {r:.3f} (<= 0.09)")
    assert r <= 0.09


@pytest.mark.parametrize(
    "cid, cell, lo, hi",
    [
        ("3a power", ("IID", 200, 0.3, "AltIII"), 0.90, 1.0),
        ("3b power", ("IID", 200, 0.45, "AltI"), 0.78, 0.98),
        ("3c power", ("AR", 200, 0.45, "AltI"), 0.77, 0.97),
    ],
)
def test_03_power(table, cid, cell, lo, hi):
    r = table[cell]
    ok = lo <= r <= hi
    record(cid, ok, f"{' '.join(map(str, cell))} rate {r:.3f} (in [{lo}, {hi}])")
    assert ok


def test_04_power_ordering(table):
    bad = []
    for noise, N, beta in {(c[0], c[1], c[2]) for c in CELLS if c[3].startswith("Alt")}:
        r1, r2, r3 = (table[(noise, N, beta, k)] for k in ("AltI", "AltII", "AltIII"))
        if not (r1 <= r2 + 0.03 and r2 <= r3 + 0.03):
            bad.append((noise, N, beta, r1, r2, r3))
    record("4 power ordering", not bad, f"{len(bad)} of 3 groups out of order (slack 0.03)")
    assert not bad


def random_state(rng):
    N = int(rng.integers(5, 60))
    cfg = MonitorConfig(N=N, cp_constant=1e9, mc_reps=1, horizon=50.0)
    s = new_stream(cfg, rng.normal(size=N))
    n = int(rng.integers(1, 20 * N))
    shift = rng.normal(scale=2.0)
    for v in rng.normal(size=n) + shift:
        s.append(float(v))
    if rng.random() < 0.6:
        loc = int(rng.integers(N, s.k))
        s.records.append(ChangePointRecord(loc / N, loc + 1, 1))
    return s


def bisect_delta_max(state, k, q):
    if not gamma_stat(state, k, 0.0) > q:
        return 0.0
    lo = 0.0
    hi = 2.0 * abs(gamma_stat(state, k, 0.0)) + 1.0
    while gamma_stat(state, k, hi) > q:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if gamma_stat(state, k, mid) > q:
            lo = mid
        else:
            hi = mid
    return lo


def test_05_delta_max_bisection():
    rng = np.random.default_rng(505)
    worst = 0.0
    positive = 0
    for _ in range(1000):
        s = random_state(rng)
        q = float(rng.exponential(1.0)) if rng.random() < 0.9 else 0.0
        closed = delta_max(s, s.k, q)
        positive += closed > 0
        worst = max(worst, abs(closed - bisect_delta_max(s, s.k, q)))
    ok = worst <= 1e-9 and positive > 100
    record("5 delta_max closed form", ok, f"max |closed - bisection| {worst:.2e} over 1000 states ({positive} positive)")
    assert ok


def test_06_future_functional_brute_force():
    rng = np.random.default_rng(606)
    N, H = 50, 5
    worst = 0.0
    for _ in range(50):
        P = np.r_[0.0, np.cumsum(rng.normal(scale=N**-0.5, size=H * N))]
        for start in (N, int(rng.integers(N, H * N + 1))):
            worst = max(worst, abs(l_hat_two(P, start, N) - l_hat_two_naive(P, start, N)))
    record("6 future functional", worst <= 1e-12, f"max |fast - double loop| {worst:.2e} on 50 paths")
    assert worst <= 1e-12


def run_events(cfg, train, data, sigma_factor=None):
    state = new_stream(cfg, train)
    if sigma_factor is not None:
        state.sigma2_hat *= sigma_factor**2
    mon = Monitor(cfg, state=state)
    return mon, mon.run(data)


def test_07_pivotality():
    _, x = replication_data("AltII", "IID", 100, 1.0, 707, 0)
    cfg = MonitorConfig(N=100, cp_constant=0.3, mc_reps=200, seed=707)
    _, base = run_events(cfg, x[:100], x[100:])
    ok = True
    # powers of two, so "exactly" is meaningful in floating point
    for c in (0.25, 0.5, 2.0, 4.0):
        _, ev = run_events(cfg, x[:100], x[100:], c)
        qs = np.array([e.quantile for e in ev])
        ref = c * np.array([e.quantile for e in base])
        ok &= [e.new_detection for e in ev] == [e.new_detection for e in base]
        ok &= bool(np.all(qs == ref))
    n_det = sum(e.new_detection is not None for e in base)
    record("7 pivotality", ok, f"quantiles scale exactly by c in (1/4, 1/2, 2, 4) over {n_det} detections")
    assert ok


def test_08_crn_monotonicity():
    violations = updates = 0
    for rep in range(20):
        _, x = replication_data("AltIII", "AR", 100, 1.0, 808, rep)
        cfg = MonitorConfig(N=100, mc_reps=200, seed=808, stream_id=rep, quantile_mode="delta-free")
        mon = Monitor(cfg, x[:100])
        prev = {m: v.copy() for m, v in mon.state.pivotal.items()}
        qprev = dict(mon.state.quantiles)
        for v in x[100:]:
            if mon.update(v).new_detection is None:
                continue
            updates += 1
            for m, cur in mon.state.pivotal.items():
                violations += int(np.sum(cur > prev[m]))
                violations += int(mon.state.quantiles[m] > qprev[m])
                prev[m] = cur.copy()
            qprev = dict(mon.state.quantiles)
    ok = violations == 0 and updates > 20
    record("8 CRN monotonicity", ok, f"{violations} violations across {updates} quantile updates")
    assert ok


def test_09_long_run_variance():
    iid = np.mean([long_run_variance(np.random.default_rng([909, s]).standard_normal(10_000)).sigma2
                   for s in range(20)])
    ma = np.mean([long_run_variance(gen_noise("MA", 10_000, np.random.default_rng([910, s]))).sigma2
                  for s in range(20)])
    ok = 0.9 <= iid <= 1.1 and 0.40 <= ma <= 0.50
    record("9 long-run variance", ok, f"IID average {iid:.4f} (in [0.9, 1.1]); MA average {ma:.4f} (in [0.40, 0.50])")
    assert ok


def test_10_localization():
    N = 200
    good = 0
    for seed in range(100):
        x = 0.5 * np.random.default_rng([1010, seed]).standard_normal(20 * N)
        x[2 * N:] += 1.0
        s = new_stream(MonitorConfig(N=N, seed=1010), x[:N])
        for v in x[N:]:
            scan_step(s, float(v))
        good += len(s.records) == 1 and abs(s.records[0].theta_hat - 2.0) <= 0.15
    ok = good >= 90
    record("10 CPE localization", ok, f"{good}/100 runs with exactly one change within 0.15 of theta=2")
    assert ok


def test_11_empty_state_quantile():
    x = np.random.default_rng(1111).normal(size=300)
    ok = True
    for mode in ("delta-free", "delta-specific"):
        cfg = MonitorConfig(N=100, mc_reps=300, seed=11, quantile_mode=mode)
        mon = Monitor(cfg, x[:100])
        expected = mon.state.sigma_hat * empirical_quantile(l_hat_two(mon.ensemble.paths, 100, 100), 0.95)
        ok &= mon.state.records == [] and mon.state.current_quantile == expected
        ev = mon.update(float(x[100]))
        ok &= ev.new_detection is None and ev.quantile == expected
    record("11 empty-state quantile", ok, "quantile equals sigma_hat times the future-functional quantile from theta=1")
    assert ok


def test_12_checkpoint_resume():
    identical = 0
    cuts = (0, 1, 137, 640, 1500)
    _, x = replication_data("AltII", "MA", 100, 1.0, 1212, 0)
    cfg = MonitorConfig(N=100, delta=0.5, mc_reps=100, seed=1212)
    full = dumps_events(Monitor(cfg, x[:100]).run(x[100:]))
    for cut in cuts:
        mon = Monitor(cfg, x[:100])
        head = mon.run(x[100:100 + cut])
        tail = Monitor.resume(mon.checkpoint()).run(x[100 + cut:])
        identical += dumps_events(head + tail) == full
    ok = identical == len(cuts)
    record("12 checkpoint/resume", ok, f"{identical}/{len(cuts)} resumed logs byte-identical")
    assert ok
