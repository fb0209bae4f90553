import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gatewalk.bridge import STANDARD_CONSTANTS, map_params, measure_K
from gatewalk.schedule import GateSchedule
from gatewalk.walkers import (
    ConservationError,
    LatticeParams,
    StopRule,
    default_walkers,
    expected_run,
    init_ensemble,
    init_walkers,
    iter_cycles,
    run,
    run_walkers,
    step,
    step_walkers,
)


def params(n=20, sb=3, tb=30, N=2000, seed=0, **kw):
    return LatticeParams(n, GateSchedule(sb, tb, diagnostic=sb == 0), N, seed=seed, **kw)


def test_single_walker_single_site():
    p = LatticeParams(1, GateSchedule(0, 1, diagnostic=True), 1)
    ens = init_ensemble(p)
    assert ens.counts.tolist() == [1]
    assert list(ens.positions) == [1]


def test_init_uniform_concentration():
    ens = init_ensemble(LatticeParams(100, GateSchedule(1, 10), 10**6, seed=3))
    sd = math.sqrt(10**6 * 0.01 * 0.99)
    assert np.all(np.abs(ens.counts - 10**4) < 5 * sd)
    assert ens.absorbed_total == 0 and ens.t == 0
    ens.check_conservation()


def test_init_equal_mode():
    ens = init_ensemble(params(n=7, sb=1, tb=5, N=100, init="equal"))
    assert ens.counts.tolist() == [15, 15, 14, 14, 14, 14, 14]


@pytest.mark.parametrize("kw", [dict(n=0), dict(N=0), dict(init="other"), dict(seed=-1), dict(seed=2**64)])
def test_rejects_invalid(kw):
    base = dict(n=20, N=10, seed=0, init="iid")
    base.update(kw)
    with pytest.raises(ValueError):
        LatticeParams(base["n"], GateSchedule(1, 5), base["N"], seed=base["seed"], init=base["init"])


def test_n_vs_sigma_guard():
    with pytest.raises(ValueError):
        params(n=6, sb=3)
    with pytest.warns(UserWarning):
        p = params(n=6, sb=3, on_violation="warn")
    assert p.tau_over_sigma == 10


def test_default_walkers():
    assert default_walkers(200) == 100_000
    assert default_walkers(10_000) == 500_000


def test_reflecting_wall_and_bounds():
    p = params(n=20, sb=3, tb=30, N=5000, seed=1)
    ens = init_ensemble(p)
    for _ in range(200):
        ens = step(ens, p)
        assert ens.counts.min() >= 0
        ens.check_conservation()
    pos = init_walkers(p)
    for t in range(200):
        pos, _ = step_walkers(pos, t, p)
        assert pos.min() >= 1 and pos.max() <= p.n + 1


def test_step_returns_new_ensemble():
    p = params()
    ens = init_ensemble(p)
    before = ens.counts.copy()
    step(ens, p)
    assert np.array_equal(ens.counts, before) and ens.t == 0


def test_site_one_moves_only_to_one_or_two():
    p = params(n=20, N=10_000)
    pos = np.ones(10_000, dtype=np.int64)
    new, _ = step_walkers(pos, 0, p)
    assert set(np.unique(new)) == {1, 2}


def test_open_gate_bernoulli():
    p = params(n=20, sb=3, tb=30)
    N = 40_000
    pos = np.full(N, 20, dtype=np.int64)
    new, exited = step_walkers(pos, 0, p)
    sd = math.sqrt(N / 4)
    assert abs(exited.sum() - N / 2) < 3 * sd
    assert set(np.unique(new)) == {19, 21}


def test_closed_gate_stays_or_moves_left():
    p = params(n=20, sb=3, tb=30)
    pos = np.full(10_000, 20, dtype=np.int64)
    new, exited = step_walkers(pos, 5, p)
    assert not exited.any()
    assert set(np.unique(new)) == {19, 20}


def test_exited_walkers_stay_frozen():
    p = params(n=20)
    pos = np.full(100, 21, dtype=np.int64)
    new, exited = step_walkers(pos, 0, p)
    assert np.all(new == 21) and not exited.any()


def test_per_walker_streams_are_subset_independent():
    p = params(n=20)
    pos = init_walkers(p)
    ids = np.arange(pos.size, dtype=np.uint64)
    full, _ = step_walkers(pos, 3, p, ids)
    half, _ = step_walkers(pos[::2], 3, p, ids[::2])
    assert np.array_equal(full[::2], half)


def test_closed_cycle_has_no_exits():
    stats = run(params(sb=0, tb=25), StopRule(max_cycles=10))
    assert len(stats) == 10
    assert all(c.F == 0 for c in stats)
    assert all(c.alive == 2000 for c in stats)


def test_zero_cycles():
    assert run(params(), StopRule(max_cycles=0)) == []


def test_cumulative_absorption_increases():
    sc = map_params(STANDARD_CONSTANTS, 200, 30)
    stats = run(LatticeParams(200, GateSchedule(30, sc.tau_bar), 100_000, seed=4), StopRule(0.01))
    absorbed = [100_000 - c.alive for c in stats]
    assert all(b > a for a, b in zip(absorbed, absorbed[1:]))
    assert stats[-1].alive < 1000 <= stats[-2].alive


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 40), st.integers(1, 3), st.integers(0, 30), st.integers(0, 2**64 - 1))
def test_cycle_invariants(n, sb, extra, seed):
    tb = sb + extra
    N = 500
    stats = run(LatticeParams(n, GateSchedule(sb, tb), N, seed=seed), StopRule(0.0, max_cycles=15))
    alive = N
    for c in stats:
        assert 0 <= c.F <= c.U_open <= c.U <= N * tb
        alive -= c.F
        assert c.alive == alive
        assert c.k is None or c.k >= 0


def test_determinism():
    a = run(params(seed=9), StopRule(max_cycles=20))
    b = run(params(seed=9), StopRule(max_cycles=20))
    c = run(params(seed=10), StopRule(max_cycles=20))
    assert a == b and a != c


def test_step_matches_cycle_engine():
    p = params(n=15, sb=2, tb=12, N=3000, seed=2)
    ens = init_ensemble(p)
    for _ in range(12):
        ens = step(ens, p)
    first = run(p, StopRule(max_cycles=1))[0]
    assert (ens.F, ens.U, ens.U_open) == (first.F, first.U, first.U_open)


def test_conservation_error():
    ens = init_ensemble(params())
    ens.counts[0] += 1
    with pytest.raises(ConservationError):
        ens.check_conservation()


def test_expected_engine_conserves_mass():
    cyc = expected_run(30, GateSchedule(3, 40), StopRule(0.05))
    absorbed = np.cumsum([c.F for c in cyc])
    assert np.allclose(absorbed + [c.alive for c in cyc], 1.0, atol=1e-12)


def test_engines_agree_with_expectation():
    p = params(n=20, sb=4, tb=40, N=20_000, seed=6)
    exp = expected_run(20, p.sched, StopRule(max_cycles=5))
    for engine in (run, run_walkers):
        stats = engine(p, StopRule(max_cycles=5))
        for c, e in zip(stats, exp):
            # multinomial exits: standard deviation below sqrt(N * e.F)
            assert abs(c.F - 20_000 * e.F) < 5 * math.sqrt(20_000 * e.F)


def test_measured_K_matches_exact_expectation():
    sc = map_params(STANDARD_CONSTANTS, 200, 30)
    sched = GateSchedule(30, sc.tau_bar)
    stats = run(LatticeParams(200, sched, 100_000, seed=8), StopRule(0.05))
    m = measure_K(stats, sc)
    exp = [c for c in expected_run(200, sched, StopRule(0.05)) if c.alive >= 0.05]
    k_inf = np.mean([c.k for c in exp]) * sc.ell_over_s
    assert abs(m.value - k_inf) < 3 * m.stderr


def _substochastic(n):
    P = np.zeros((n, n))
    P[0, 0] = P[0, 1] = 0.5
    for x in range(1, n - 1):
        P[x, x - 1] = P[x, x + 1] = 0.5
    P[n - 1, n - 2] = 0.5
    return P


def test_open_gate_decay_rate():
    # gate always open: survival decays at the slowest absorbing mode
    n, sb = 50, 20
    stats = run(LatticeParams(n, GateSchedule(sb, sb), 100_000, seed=1), StopRule(0.01))
    t = np.array([(c.cycle + 1) * sb for c in stats], float)
    alive = np.array([c.alive for c in stats], float)
    tail = (alive < 50_000) & (alive > 2_000)
    rate = -np.polyfit(t[tail], np.log(alive[tail]), 1)[0]
    exact = -math.log(max(abs(np.linalg.eigvals(_substochastic(n)))))
    assert rate == pytest.approx(exact, rel=0.03)


def test_discrete_decay_approaches_diffusion_mode():
    gaps = []
    for n in (10, 40, 160):
        exact = -math.log(max(abs(np.linalg.eigvals(_substochastic(n)))))
        cont = (math.pi / (2 * (n + 1))) ** 2 / 2
        gaps.append(abs(exact / cont - 1))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.02


def test_iter_cycles_streams():
    it = iter_cycles(params(), StopRule(max_cycles=3))
    assert [c.cycle for c in it] == [0, 1, 2]
