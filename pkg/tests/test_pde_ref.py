import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gatewalk.bridge import STANDARD_CONSTANTS, ContinuumParams, homogenized_K
from gatewalk.pde_ref import (
    NonFiniteError,
    StabilityError,
    cells_for,
    critical_sigma,
    initial_state,
    load_profile,
    robin_decay_rate,
    solve_alternating,
    solve_robin,
    tau_convergence_study,
)

C = STANDARD_CONSTANTS
TARGET = homogenized_K(C)


def test_closed_gate_conserves_mass():
    run = solve_alternating(C, 0.0, 0.05, M=200, cycles=20)
    for r in run.records:
        assert r.flux_integral == 0
        assert abs(r.mass_end - r.mass_start) / r.mass_start < 1e-6 * (r.t_end - r.t_start)


def test_always_open_drains_monotonically():
    run = solve_alternating(C, 0.05, 0.05, M=200, cycles=160)
    masses = [r.mass_start for r in run.records] + [run.records[-1].mass_end]
    assert all(b < a for a, b in zip(masses, masses[1:]))
    assert all(r.boundary_density_integral == 0 for r in run.records)
    # Dirichlet at L, Neumann at 0: slowest rate D*(pi/2L)**2 = 1/4
    rate = math.log(masses[-11] / masses[-1]) / (10 * 0.05)
    assert rate == pytest.approx(0.25, rel=1e-3)


@pytest.mark.parametrize("scheme", ["implicit", "explicit"])
def test_mass_balance_audit(scheme):
    tau = 0.02
    run = solve_alternating(C, C.mu**2 * tau**2, tau, M=300, cycles=10, scheme=scheme)
    assert run.max_balance_residual < 1e-8


def test_schemes_agree_when_resolved():
    tau = 0.05
    kw = dict(M=200, cycles=20, steps_per_open=200)
    a = solve_alternating(C, C.mu**2 * tau**2, tau, **kw).mean_ratio()
    b = solve_alternating(C, C.mu**2 * tau**2, tau, scheme="explicit", **kw).mean_ratio()
    assert a == pytest.approx(b, rel=0.02)


def test_small_tau_near_homogenized():
    tau = 0.0017
    sigma = C.mu**2 * tau**2
    run = solve_alternating(C, sigma, tau, M=cells_for(sigma, C), cycles=200)
    assert abs(run.mean_ratio() / TARGET - 1) < 0.05
    assert run.max_balance_residual < 1e-8


def test_grid_refinement():
    tau = 0.05
    sigma = C.mu**2 * tau**2
    vals = [solve_alternating(C, sigma, tau, M=M, cycles=20).mean_ratio() for M in (400, 800, 1600)]
    assert abs(vals[1] / vals[0] - 1) < 0.01
    assert abs(vals[2] / vals[1] - 1) < 0.01


def test_convergence_trend_toward_homogenized():
    pts = tau_convergence_study(C, [0.1, 0.03, 0.01, 0.003], cycles=60)
    gaps = [abs(p.ratio - TARGET) for p in pts]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert all(p.max_balance_residual < 1e-8 for p in pts)


def test_subcritical_scaling_closes_the_door():
    pts = tau_convergence_study(C, [0.1, 0.03, 0.01], sigma_rule=lambda t: t**3, cycles=40)
    ratios = [p.ratio for p in pts]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] < 0.25 * TARGET


def test_convergence_study_requires_decreasing_list():
    with pytest.raises(ValueError):
        tau_convergence_study(C, [0.01, 0.1])


def test_critical_sigma_rule():
    assert critical_sigma(C)(0.1) == pytest.approx(0.005)


def test_robin_ratio_is_imposed():
    run = solve_robin(C, M=400, T=2.0, intervals=8)
    for r in run.records:
        assert r.boundary_ratio == pytest.approx(TARGET, rel=1e-6)
    assert run.max_balance_residual < 1e-8


def test_robin_zero_mu_is_neumann():
    cont = ContinuumParams(mu=0.0)
    run = solve_robin(cont, M=200, T=1.0, intervals=4)
    assert all(r.flux_integral == 0 for r in run.records)
    assert run.state.mass == pytest.approx(math.pi, rel=1e-12)


def test_robin_decay_matches_eigenvalue():
    lam = robin_decay_rate(C)
    beta = 2 * C.mu / math.sqrt(C.D * math.pi)
    k = math.sqrt(lam / C.D)
    assert k * math.tan(k * C.L) == pytest.approx(beta, rel=1e-10)
    run = solve_robin(C, M=800, T=12.0, intervals=12, dt=0.002)
    m = [r.mass_end for r in run.records]
    rate = math.log(m[-4] / m[-1]) / 3.0
    assert rate == pytest.approx(lam, rel=0.01)


def test_decay_rate_zero_for_closed_door():
    assert robin_decay_rate(ContinuumParams(mu=0.0)) == 0.0


def test_explicit_stability_violation():
    with pytest.raises(StabilityError):
        solve_robin(C, M=400, T=0.1, dt=1e-3, scheme="explicit")


def test_argument_validation():
    with pytest.raises(ValueError):
        solve_alternating(C, 0.2, 0.1)
    with pytest.raises(ValueError):
        solve_alternating(C, 0.01, 0.1, steps_per_open=5)
    with pytest.raises(ValueError):
        solve_alternating(C, 0.01, 0.1, scheme="cn")
    with pytest.raises(ValueError):
        initial_state(C, 1)


def test_non_finite_initial_profile():
    with pytest.raises(NonFiniteError):
        solve_alternating(C, 0.001, 0.05, u0=lambda x: np.where(x > 1, np.inf, 1.0), M=50, cycles=1)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=4, max_size=12), st.sampled_from([0.02, 0.1]))
def test_nonnegative_profiles_stay_nonnegative(knots, tau):
    xs = np.linspace(0, math.pi, len(knots))
    run = solve_alternating(C, C.mu**2 * tau**2, tau, u0=(xs, np.array(knots)), M=120, cycles=5)
    assert run.state.u.min() >= -1e-12
    assert run.max_balance_residual < 1e-8


def test_load_profile(tmp_path):
    p = tmp_path / "u0.txt"
    p.write_text("# x u0\n3.0 2.0\n0.0 1.0\n")
    xs, us = load_profile(p)
    assert xs.tolist() == [0.0, 3.0] and us.tolist() == [1.0, 2.0]
    st_ = initial_state(C, 4, (xs, us))
    assert st_.u[0] == pytest.approx(1 + (math.pi / 8) / 3)
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n")
    with pytest.raises(ValueError):
        load_profile(bad)


def test_metadata_declares_scheme():
    run = solve_alternating(C, 0.001, 0.05, M=100, cycles=1)
    assert "backward Euler" in run.metadata["scheme"]
    assert "second-order" in run.metadata["flux"]
    assert run.metadata["steps_open"] >= 10
