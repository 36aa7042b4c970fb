"""Tests for the dominating growth systems.

Expected values come from closed forms for the stated rates: the first
event from a floor singleton is the minimum of three unit-rate
exponential clocks, so Exp(3); a saturated window never births and its
per-edge firing times form Poisson processes at max(sqrt(x2), 1); the
thinned system accepts a height-h edge's firings at the integrated rate
sqrt(h) * (2 sqrt(T+1) - 2) over [0, T].  The radius tail envelope value
at n = 3, t = 0.01 is the printed arithmetic (0.04)^3 * sqrt(6).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from floorwalk.errors import DomainError, EnvelopeViolation
from floorwalk.growth import (
    ArrowLog,
    GrowthWindow,
    radius_tail_experiment,
    simulate_coupled,
    simulate_pure_growth,
    simulate_slowed_growth,
    tail_csv,
)
from floorwalk.lattice import Cluster


@pytest.fixture(scope="module")
def first_events():
    """First-arrow time (censored at T) and target over 30000 singleton runs."""
    T = 0.3
    times = np.empty(30000)
    targets = []
    for i in range(30000):
        _, log = simulate_pure_growth([(0, 0)], T, (8, 8), 1000 + i)
        if len(log):
            t, _, dst, _ = log.rows[0]
            times[i] = t
            targets.append(dst)
        else:
            times[i] = T
    return T, times, targets


@pytest.fixture(scope="module")
def saturated_log():
    """Arrow log of a fully occupied box, where nothing can ever be born."""
    full = [(a, b) for a in range(-2, 3) for b in range(10)]
    gw, log = simulate_pure_growth(full, 700.0, (2, 9), 13)
    return gw, log, full


def test_zero_horizon_is_identity():
    gw, log = simulate_pure_growth([(0, 0), (1, 1)], 0.0, (5, 5), 3)
    assert sorted(gw.occupied.sites()) == [(0, 0), (1, 1)]
    assert len(log) == 0
    assert gw.t == 0.0
    assert not gw.overflow
    gw2, log2 = simulate_slowed_growth([(0, 0)], 0.0, (5, 5), 3)
    assert gw2.occupied.sites() == [(0, 0)] and len(log2) == 0


def test_first_event_mean_matches_exponential_oracle(first_events):
    # E[min(Exp(3), T)] = (1 - exp(-3T)) / 3; censoring at T keeps the
    # estimate unbiased without waiting out slow runs
    T, times, _ = first_events
    target = (1.0 - math.exp(-3.0 * T)) / 3.0
    se = times.std(ddof=1) / math.sqrt(times.size)
    assert abs(times.mean() - target) <= 4.0 * se


def test_first_event_law_matches_truncated_exponential(first_events):
    T, times, _ = first_events
    sample = times[times < T]
    assert sample.size > 15000
    norm = 1.0 - math.exp(-3.0 * T)
    ks = stats.kstest(sample, lambda x: (1.0 - np.exp(-3.0 * x)) / norm)
    assert ks.pvalue > 0.01


def test_first_event_targets_floor_neighbors_uniformly(first_events):
    _, _, targets = first_events
    assert (0, -1) not in targets
    counts = [targets.count(s) for s in ((1, 0), (-1, 0), (0, 1))]
    assert sum(counts) == len(targets)
    assert stats.chisquare(counts).pvalue > 0.01


def test_saturated_box_never_births(saturated_log):
    gw, log, full = saturated_log
    assert sorted(gw.occupied.sites()) == sorted(full)
    assert all(not born for _, _, _, born in log.rows)
    # the initial configuration sits on the rim, so the run is flagged
    assert gw.overflow


def test_arrow_times_strictly_increase_per_edge(saturated_log):
    _, log, _ = saturated_log
    per = {}
    for t, s, d, _ in log.rows:
        per.setdefault((s, d), []).append(t)
    assert len(per) > 100
    for times in per.values():
        arr = np.array(times)
        assert np.all(np.diff(arr) > 0)


def test_interarrival_law_at_three_heights(saturated_log):
    _, log, _ = saturated_log
    for h, rate in ((0, 1.0), (4, 2.0), (9, 3.0)):
        per = {}
        for t, s, d, _ in log.rows:
            if s[1] == h:
                per.setdefault((s, d), []).append(t)
        gaps = np.concatenate(
            [np.diff(np.array(ts), prepend=0.0) for ts in per.values()]
        )
        assert gaps.size >= 10000
        assert abs(gaps.mean() * rate - 1.0) <= 4.0 / math.sqrt(gaps.size)
        assert stats.kstest(gaps, "expon", args=(0, 1.0 / rate)).pvalue > 0.01


def _replay_subset(log_small, log_big, init_small, init_big):
    """Check occupation inclusion after every distinct event time."""
    s1, s2 = set(init_small), set(init_big)
    assert s1 <= s2
    times = {}
    for t, y in log_small.births():
        times.setdefault(t, ([], []))[0].append(y)
    for t, y in log_big.births():
        times.setdefault(t, ([], []))[1].append(y)
    for t in sorted(times):
        b1, b2 = times[t]
        s1.update(b1)
        s2.update(b2)
        assert s1 <= s2


def test_monotone_coupling_inclusion_at_event_times():
    small = [(0, 0)]
    big = [(0, 0), (1, 0), (0, 1)]
    for seed in range(9000, 9010):
        (g1, l1), (g2, l2) = simulate_coupled([small, big], 3.0, (20, 20), seed)
        _replay_subset(l1, l2, small, big)
        assert set(g1.occupied.sites()) <= set(g2.occupied.sites())


def test_slowed_dominated_by_pure_per_site():
    # inclusion at all times means every slowed birth happens no earlier
    # than the pure birth of the same site
    for seed in range(7000, 7020):
        (gs, ls), (gp, lp) = simulate_coupled(
            [[(0, 0)], [(0, 0)]], 3.0, (20, 20), seed, kinds=["slowed", "pure"]
        )
        pure_born = {y: t for t, y in lp.births()}
        for t, y in ls.births():
            assert y in pure_born and pure_born[y] <= t
        assert set(gs.occupied.sites()) <= set(gp.occupied.sites())


def test_thinning_inactive_at_time_zero():
    # acceptance is 1/sqrt(t+1), so near t = 0 the slowed run reads the
    # stream verbatim: identical logs on this horizon
    (gs, ls), (gp, lp) = simulate_coupled(
        [[(0, 0)], [(0, 0)]], 0.05, (6, 6), 41, kinds=["slowed", "pure"]
    )
    assert ls.rows == lp.rows


def test_thinning_rejects_arrows_at_later_times():
    (gs, ls), (gp, lp) = simulate_coupled(
        [[(0, 0)], [(0, 0)]], 6.0, (24, 24), 41, kinds=["slowed", "pure"]
    )
    assert len(ls) < len(lp)
    assert len(gs.occupied) < len(gp.occupied)


def test_slowed_edge_count_matches_rate_integral():
    # accepted arrows on one fixed edge of height 4 over [0, T]:
    # integral of sqrt(4)/sqrt(t+1) dt = 2 (2 sqrt(T+1) - 2)
    h, T = 4, 2.0
    expect = math.sqrt(h) * (2.0 * math.sqrt(T + 1.0) - 2.0)
    counts = []
    for i in range(300):
        gw, log = simulate_slowed_growth(
            [(0, h), (0, h + 1)], T, (24, 30), 5000 + i
        )
        if gw.overflow:
            continue
        counts.append(len(log.edge_times((0, h), (0, h + 1))))
    counts = np.array(counts, dtype=float)
    assert counts.size >= 270
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - expect) <= 4.0 * se


def test_tail_bound_value_and_monotonicity():
    rows = radius_tail_experiment(0.01, 3, 25000, 77)
    assert [r["n"] for r in rows] == [1, 2, 3]
    assert rows[2]["bound"] == pytest.approx((0.04**3) * math.sqrt(6.0), rel=1e-15)
    emp = [r["empirical"] for r in rows]
    assert all(a >= b for a, b in zip(emp, emp[1:]))
    for r in rows:
        assert r["empirical"] <= r["bound"] + 4.0 * r["stderr"]
        assert r["runs"] == 25000
        assert r["discarded"] == 0
    # the n = 1 comparison is sharp: about 3 percent of runs birth at all
    assert emp[0] > 0.02


def test_tail_zero_time_is_degenerate():
    rows = radius_tail_experiment(0.0, 2, 200, 5)
    for r in rows:
        assert r["empirical"] == 0.0 and r["bound"] == 0.0


def test_tail_precondition_rejects_large_t():
    with pytest.raises(DomainError):
        radius_tail_experiment(0.3, 1, 100, 5)
    with pytest.raises(DomainError):
        radius_tail_experiment(-0.1, 1, 100, 5)
    with pytest.raises(DomainError):
        radius_tail_experiment(0.01, 0, 100, 5)
    with pytest.raises(DomainError):
        radius_tail_experiment(0.01, 1, 0, 5)


def test_overflow_flag_and_frozen_boundary():
    gw, log = simulate_pure_growth([(0, 0)], 8.0, (2, 2), 19)
    assert gw.overflow
    for x1, x2 in gw.occupied:
        assert -2 <= x1 <= 2 and 0 <= x2 <= 2
    for _, (x1, x2), _, _ in log.rows:
        assert -2 <= x1 <= 2 and 0 <= x2 <= 2


def test_rim_start_flags_overflow():
    gw, _ = simulate_pure_growth([(2, 0)], 0.0, (2, 5), 1)
    assert gw.overflow
    gw2, _ = simulate_pure_growth([(0, 5)], 0.0, (2, 5), 1)
    assert gw2.overflow
    gw3, _ = simulate_pure_growth([(0, 0)], 0.0, (2, 5), 1)
    assert not gw3.overflow


def test_validation_errors():
    with pytest.raises(DomainError):
        simulate_pure_growth([], 1.0, (5, 5), 1)
    with pytest.raises(DomainError):
        simulate_pure_growth([(0, -1)], 1.0, (5, 5), 1)
    with pytest.raises(DomainError):
        simulate_pure_growth([(6, 0)], 1.0, (5, 5), 1)
    with pytest.raises(DomainError):
        simulate_pure_growth([(0, 6)], 1.0, (5, 5), 1)
    with pytest.raises(DomainError):
        simulate_pure_growth([(0, 0)], -1.0, (5, 5), 1)
    with pytest.raises(DomainError):
        simulate_pure_growth([(0, 0)], 1.0, (0, 5), 1)
    with pytest.raises(DomainError):
        simulate_pure_growth([(0, 0)], 1.0, 5, 1)
    with pytest.raises(DomainError):
        simulate_pure_growth(Cluster(includes_floor=True), 1.0, (5, 5), 1)
    with pytest.raises(DomainError):
        simulate_coupled([[(0, 0)]], 1.0, (5, 5), 1, kinds=["pure", "pure"])
    with pytest.raises(DomainError):
        simulate_coupled([[(0, 0)]], 1.0, (5, 5), 1, kinds=["fast"])
    with pytest.raises(DomainError):
        simulate_coupled([], 1.0, (5, 5), 1)


def test_deterministic_replay():
    a = simulate_pure_growth([(0, 0)], 2.0, (10, 10), 123)
    b = simulate_pure_growth([(0, 0)], 2.0, (10, 10), 123)
    assert a[1].rows == b[1].rows
    assert a[0].occupied.sites() == b[0].occupied.sites()
    c = simulate_pure_growth([(0, 0)], 2.0, (10, 10), 124)
    assert a[1].rows != c[1].rows


def test_cluster_input_and_snapshot_roundtrip():
    init = Cluster([(0, 0), (1, 0)])
    gw, _ = simulate_pure_growth(init, 1.5, (12, 12), 7)
    assert len(gw.occupied) >= 2
    back = Cluster.from_text(gw.occupied.to_text())
    assert back.sorted_sites() == gw.occupied.sorted_sites()


def test_growth_window_geometry():
    gw = GrowthWindow(Cluster([(0, 0)]), width=3, height=2, t=0.0)
    assert gw.contains((3, 0)) and gw.contains((-3, 2)) and gw.contains((0, 1))
    assert not gw.contains((4, 0)) and not gw.contains((0, 3))
    assert not gw.contains((0, -1))
    assert gw.on_rim((3, 1)) and gw.on_rim((0, 2))
    assert not gw.on_rim((0, 0)) and not gw.on_rim((4, 0))
    assert gw.frozen_boundary


def test_tail_csv_format(tmp_path):
    rows = radius_tail_experiment(0.01, 2, 500, 9)
    path = tmp_path / "tail.csv"
    tail_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,empirical,stderr,bound,runs,discarded"
    assert len(lines) == 3
    for line, row in zip(lines[1:], rows):
        n, emp, se, bound, runs, disc = line.split(",")
        assert int(n) == row["n"] and int(runs) == 500 and int(disc) == 0
        assert float(emp) == row["empirical"]
        assert float(bound) == row["bound"]


def test_arrowlog_edge_times_filters():
    log = ArrowLog(
        rows=[(0.5, (0, 0), (1, 0), True), (0.9, (0, 0), (0, 1), False)]
    )
    assert log.edge_times((0, 0), (1, 0)) == [0.5]
    assert log.edge_times((0, 0), (0, 1)) == [0.9]
    assert log.births() == [(0.5, (1, 0))]


_sites = st.tuples(st.integers(-4, 4), st.integers(0, 4))


@settings(max_examples=30, deadline=None)
@given(
    base=st.sets(_sites, min_size=1, max_size=5),
    extra=st.sets(_sites, max_size=4),
    seed=st.integers(0, 2**32),
)
def test_coupled_inclusion_property(base, extra, seed):
    small = sorted(base)
    big = sorted(base | extra)
    (g1, l1), (g2, l2) = simulate_coupled([small, big], 0.8, (10, 10), seed)
    _replay_subset(l1, l2, small, big)
    assert set(g1.occupied.sites()) <= set(g2.occupied.sites())
    for gw in (g1, g2):
        for site in gw.occupied:
            assert gw.contains(site)
