import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from relmon import ChangePointRecord, ConfigurationError, Monitor, MonitorConfig, new_stream
from relmon.monitor import (
    delta_max,
    deviation_sign,
    dumps_events,
    gamma_stat,
    psi_hat,
    refresh_quantiles,
)


def hand_state(N=100, k=200, k_hat=100, level=1.5):
    cfg = MonitorConfig(N=N, cp_constant=1e9, mc_reps=10, horizon=5.0)
    s = new_stream(cfg, np.zeros(N))
    for n in range(N + 1, k + 1):
        s.append(level if n > k_hat else 0.0)
    if k_hat > N:
        s.records.append(ChangePointRecord(k_hat / N, k_hat + 1, 1))
    return s


def test_psi_hat_branches():
    s = hand_state()
    assert psi_hat(s, 50).current_mean == s.train_mean == 0.0
    v = psi_hat(s, 200)
    assert v.current_mean == 1.5 and v.k_hat == 100
    s = hand_state(k=260, k_hat=180)
    assert psi_hat(s, 260).current_mean == 1.5
    # before the change was detected the segment starts at N
    assert psi_hat(s, 180).k_hat == 100
    with pytest.raises(ConfigurationError):
        psi_hat(s, 261)


def test_psi_hat_undefined_right_at_change():
    s = hand_state(k=150, k_hat=150)
    v = psi_hat(s, 150)
    assert v.current_mean is None and v.k_hat == 150
    assert gamma_stat(s, 150, 0.0) == 0.0
    assert delta_max(s, 150, 0.0) == 0.0


def test_gamma_stat_examples():
    s = hand_state()
    assert gamma_stat(s, 200, 1.0) == pytest.approx(2.5, abs=1e-12)
    assert gamma_stat(s, 200, 1.5) == pytest.approx(0.0, abs=1e-12)
    slope = gamma_stat(s, 200, 0.0) - gamma_stat(s, 200, 1.0)
    assert slope == pytest.approx(math.sqrt(100) * 100 / 200, rel=1e-12)
    assert deviation_sign(s, 200) == -1


def test_delta_max_examples():
    s = hand_state()
    assert delta_max(s, 200, 2.5) == pytest.approx(1.0, abs=1e-12)
    assert delta_max(s, 200, 0.0) == pytest.approx(1.5, abs=1e-12)
    assert delta_max(s, 200, 1e6) == 0.0
    with pytest.raises(ConfigurationError):
        delta_max(s, 200, -1.0)


def noisy(N, n, seed, jumps=()):
    rng = np.random.default_rng(seed)
    x = 0.5 * rng.standard_normal(n)
    for loc, d in jumps:
        x[loc:] += d
    return x


def run(x, N, **kw):
    kw.setdefault("mc_reps", 100)
    kw.setdefault("horizon", len(x) / N + 1)
    mon = Monitor(MonitorConfig(N=N, **kw), x[:N])
    return mon, mon.run(x[N:])


def test_event_consistency_and_boundary_identity():
    N = 100
    x = noisy(N, 1500, 1, [(400, 2.0), (800, -1.0), (1100, 1.0)])
    mon, events = run(x, N, delta=0.5)
    assert any(e.rejected for e in events)
    for e in events:
        assert e.rejected == (e.gamma_stat > e.quantile)
        assert e.delta_max >= 0.0
        if e.delta_max > 0:
            assert gamma_stat(mon.state, e.k, e.delta_max) == pytest.approx(e.quantile, abs=1e-9)
    # the quantile only moves on ticks where the detector fires
    for a, b in zip(events, events[1:]):
        if b.new_detection is None:
            assert b.quantile == a.quantile
    assert mon.state.first_rejection == next(e.k for e in events if e.rejected)
    assert events[-1].k == 1500  # rejection does not end monitoring


def test_nested_deltas_share_the_delta_free_quantile():
    N = 100
    x = noisy(N, 1400, 2, [(300, 1.2), (700, 2.5), (1000, 0.3)])
    per_delta = {}
    for d in (0.25, 0.75, 1.5, 2.0):
        _, ev = run(x, N, delta=d)
        per_delta[d] = [e.rejected for e in ev]
    ds = sorted(per_delta)
    for lo, hi in zip(ds, ds[1:]):
        for a, b in zip(per_delta[lo], per_delta[hi]):
            assert a or not b


def test_delta_max_is_threshold_of_rejection():
    N = 100
    x = noisy(N, 1200, 3, [(500, 1.8)])
    mon, events = run(x, N, delta=0.0)
    assert mon.config.quantile_mode == "delta-free"
    checked = 0
    for e in events[::5]:
        if e.delta_max > 0:
            checked += 1
            for f in (0.5, 0.9, 0.999):
                assert gamma_stat(mon.state, e.k, f * e.delta_max) > e.quantile
            assert not gamma_stat(mon.state, e.k, e.delta_max * 1.001 + 1e-12) > e.quantile
    assert checked > 20


def test_noiseless_jump_delta_max_limit():
    N = 50
    x = np.r_[np.zeros(100), np.ones(900)]
    mon, events = run(x, N, delta=0.0, mc_reps=20)
    assert mon.state.first_rejection is not None
    assert [r.location for r in mon.state.records] == [100]
    assert events[-1].delta_max == pytest.approx(1.0, abs=1e-12)
    tail = [e.delta_max for e in events[200:]]
    assert all(abs(v - 1.0) < 1e-12 for v in tail)


def test_stop_on_reject():
    N = 100
    x = noisy(N, 1500, 4, [(400, 3.0)])
    mon, events = run(x, N, stop_on_reject=True)
    assert events[-1].rejected and sum(e.rejected for e in events) == 1
    assert mon.stopped and mon.run([0.0]) == []


def test_checkpoint_resume_identical():
    N = 100
    x = noisy(N, 1600, 5, [(350, 2.0), (700, -1.5), (1200, 0.5)])
    _, full = run(x, N, delta=0.5)
    cfg = MonitorConfig(N=N, delta=0.5, mc_reps=100, horizon=len(x) / N + 1)
    mon = Monitor(cfg, x[:N])
    first = mon.run(x[N:900])
    text = mon.checkpoint()
    rest = Monitor.resume(text).run(x[900:])
    assert dumps_events(first + rest) == dumps_events(full)


def test_scale_equivariance():
    N = 100
    x = noisy(N, 1400, 6, [(300, 1.5), (650, -0.5), (1000, 2.5)])
    c, b = 2.0, 1.0
    m1, e1 = run(x, N, delta=0.75)
    m2, e2 = run(c * x + b, N, delta=c * 0.75)
    assert m2.state.cp_constant == pytest.approx(c * m1.state.cp_constant, rel=1e-12)
    assert [r.detect_time for r in m1.state.records] == [r.detect_time for r in m2.state.records]
    assert [e.rejected for e in e1] == [e.rejected for e in e2]
    np.testing.assert_allclose([e.delta_max for e in e2], [c * e.delta_max for e in e1],
                               rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose([e.quantile for e in e2], [c * e.quantile for e in e1], rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
@example(219)  # a segment term once beat the future term by one ulp
def test_crn_quantiles_nonincreasing(seed):
    rng = np.random.default_rng(seed)
    N = 50
    n = 1000
    locs = np.sort(rng.choice(np.arange(80, 950), size=5, replace=False))
    x = 0.3 * rng.standard_normal(n)
    for loc in locs:
        x[loc:] += rng.choice([-2.0, -1.0, 1.0, 2.0])
    cfg = MonitorConfig(N=N, mc_reps=60, horizon=n / N + 1, seed=seed)
    mon = Monitor(cfg, x[:N])
    prev = {m: v.copy() for m, v in mon.state.pivotal.items()}
    for v in x[N:]:
        ev = mon.update(v)
        if ev.new_detection is not None:
            for m, cur in mon.state.pivotal.items():
                assert np.all(cur <= prev[m])
                prev[m] = cur.copy()


def test_refresh_beyond_horizon_is_reported():
    N = 20
    cfg = MonitorConfig(N=N, cp_constant=0.0, mc_reps=5, horizon=3.0)
    s = new_stream(cfg, np.r_[np.zeros(N - 1), 1.0])
    from relmon import build_ensemble

    ens = build_ensemble(cfg)
    for _ in range(70):
        s.append(0.0)
    s.records.append(ChangePointRecord(65 / N, 66, 1))
    with pytest.raises(ConfigurationError, match="increase horizon"):
        refresh_quantiles(s, ens)


def test_summary_and_save_load(tmp_path):
    N = 60
    x = noisy(N, 600, 7, [(250, 2.0)])
    mon, _ = run(x, N)
    p = tmp_path / "state.json"
    mon.save(p)
    back = Monitor.load(p)
    assert back.summary() == mon.summary()
    assert mon.summary()["detections"][0]["location"] == mon.state.records[0].location


@pytest.mark.slow
def test_pure_noise_rejection_rate():
    N = 100
    base = MonitorConfig(N=N, delta=1.0, seed=31, stop_on_reject=True)
    hits = 0
    for rep in range(200):
        x = noisy(N, 20 * N, 1000 + rep)
        mon = Monitor(replace(base, stream_id=rep), x[:N])
        mon.run(x[N:])
        hits += mon.state.first_rejection is not None
    assert hits / 200 <= 0.05


@pytest.mark.slow
def test_single_large_jump_power():
    N = 200
    base = MonitorConfig(N=N, delta=1.0, seed=32, stop_on_reject=True)
    hits = 0
    for rep in range(200):
        x = noisy(N, 20 * N, 5000 + rep, [(2 * N, 3.0)])
        mon = Monitor(replace(base, stream_id=rep), x[:N])
        mon.run(x[N:])
        hits += mon.state.first_rejection is not None
    assert hits / 200 >= 0.90
