from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldscope.systems import (
    BlowUpError, ConfigurationError, StateVec, SystemSpec, analytic_solution_hopf_beta0,
    analytic_solution_linear_saddle, analytic_solution_nonlinear_saddle,
    balance_integration_times, closed_form_ld_linear_saddle, equilibria, eval_vector_field,
    hopf_blowup_time, jacobian, slow_manifold_curve, SYSTEM_IDS,
)

finite = st.floats(-3, 3, allow_nan=False)


def hand_field(sid, P, s, t):
    """Independent transcription of the model equations."""
    if sid == "linear_saddle":
        x, y = s
        return [P["lam"] * x, -P["mu"] * y]
    if sid == "nonlinear_saddle":
        x, y = s
        return [P["mu"] * x, P["lam"] * (y - x ** 2)]
    if sid == "hopf":
        x, y = s
        r2 = x * x + y * y
        return [P["beta"] * x - y - P["sigma"] * x * r2, x + P["beta"] * y - P["sigma"] * y * r2]
    if sid == "vanderpol":
        x, y = s
        return [y, -x + P["mu"] * (1 - x ** 2) * y]
    if sid == "bead_hoop":
        phi, om = s
        return [om, ((P["mu"] * math.cos(phi) - 1) * math.sin(phi) - om) / P["eps"]]
    if sid == "vdp_lienard":
        x, w = s
        return [P["mu"] * (w - (x ** 3 / 3 - x)), -x / P["mu"]]
    if sid == "duffing":
        x, y = s
        return [y, P["alpha"] * x - P["beta"] * x ** 3 - P["delta"] * y
                + P["gamma"] * math.cos(P["omega"] * t)]
    x, y, px, py = s
    return [px / P["m1"], py / P["m2"], P["b"] * x - P["a"] * x ** 3 - P["gamma_x"] * px,
            -P["omega"] ** 2 * y - P["gamma_y"] * py]


@pytest.mark.parametrize("sid", sorted(SYSTEM_IDS))
def test_vector_field_matches_hand_transcription(sid):
    rng = np.random.default_rng(7)
    spec = SystemSpec(sid, {"gamma": 0.5} if sid == "duffing" else {})
    for _ in range(100):
        s = rng.uniform(-2, 2, spec.dim)
        t = rng.uniform(-5, 5)
        got = eval_vector_field(spec, StateVec(s, t))
        want = hand_field(sid, spec.params, s, t)
        np.testing.assert_allclose(got, want, rtol=1e-15, atol=1e-15)


def test_vector_field_examples():
    assert list(eval_vector_field(SystemSpec("linear_saddle"), (1, 1))) == [1.0, -2.0]
    duff = SystemSpec("duffing", {"alpha": 1, "beta": 1, "delta": 0.3, "gamma": 0})
    assert list(eval_vector_field(duff, (0, 0))) == [0.0, 0.0]
    dw = SystemSpec("double_well_2dof")
    np.testing.assert_allclose(eval_vector_field(dw, (0, 0, 0.1, 0.2)),
                               (0.1, 0.2, -0.025, -0.05), atol=1e-17)
    # the y-restoring force opposes displacement
    assert eval_vector_field(dw, (0, 0.5, 0, 0))[3] == -0.5


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        SystemSpec("lorenz")
    with pytest.raises(ConfigurationError):
        SystemSpec("hopf", {"omega": 1})
    with pytest.raises(ConfigurationError):
        SystemSpec("vanderpol", {"mu": float("nan")})
    with pytest.raises(ConfigurationError):
        eval_vector_field(SystemSpec("hopf"), (1, 2, 3))
    with pytest.raises(ValueError):
        StateVec((1.0, float("inf")))


def test_spec_properties():
    assert SystemSpec("double_well_2dof").dim == 4
    assert all(SystemSpec(s).dim == 2 for s in SYSTEM_IDS if s != "double_well_2dof")
    assert SystemSpec("duffing", {"gamma": 0}).autonomous
    assert not SystemSpec("duffing", {"gamma": 0.5}).autonomous
    spec = SystemSpec("vanderpol", {"mu": 3})
    assert SystemSpec.from_dict(spec.to_dict()) == spec
    assert spec.with_params(mu=0.1).params["mu"] == 0.1


def test_linear_saddle_solution():
    s = analytic_solution_linear_saddle(1, 2, (1, 1), 0)
    assert tuple(s.coords) == (1.0, 1.0)
    s = analytic_solution_linear_saddle(1, 2, (1, 1), 1)
    np.testing.assert_allclose(s.coords, (2.71828, 0.13534), atol=1e-5)
    s = analytic_solution_linear_saddle(1, 2, (0, 0.7), 3.3)
    assert s.coords[0] == 0.0 and math.isclose(s.coords[1], 0.7 * math.exp(-6.6))


def test_nonlinear_saddle_solution():
    s = analytic_solution_nonlinear_saddle((0, 1), 1)
    np.testing.assert_allclose(s.coords, (0, math.exp(-2)))
    for t in (-1.0, 0.3, 2.0):
        x, y = analytic_solution_nonlinear_saddle((1, 0.5), t).coords
        assert math.isclose(y, 0.5 * x * x)
    # y(0.5) = e/2 + e^-1/2 = cosh(1)
    np.testing.assert_allclose(analytic_solution_nonlinear_saddle((1, 1), 0.5).coords,
                               (1.64872, 1.54308), atol=1e-5)


def test_hopf_beta0_solution():
    assert analytic_solution_hopf_beta0(1, 1, 0, 0) == (1.0, 0.0)
    assert hopf_blowup_time(1, 1) == -0.5
    r, th = analytic_solution_hopf_beta0(1, 1, 0, 4)
    assert math.isclose(r, 1 / 3) and th == 4
    with pytest.raises(BlowUpError):
        analytic_solution_hopf_beta0(1, 1, 0, -0.5)


def _fd_check(spec, sol, ic, t):
    h = 1e-6 * max(1.0, abs(t))
    a = sol(ic, t + h).coords
    b = sol(ic, t - h).coords
    fd = (a - b) / (2 * h)
    f = eval_vector_field(spec, sol(ic, t).coords)
    np.testing.assert_allclose(fd, f, rtol=1e-6, atol=1e-6 * np.abs(f).max())


def test_analytic_solutions_satisfy_ode():
    rng = np.random.default_rng(3)
    lin = SystemSpec("linear_saddle", {"lam": 1, "mu": 2})
    nl = SystemSpec("nonlinear_saddle", {"lam": -2, "mu": 1})
    for _ in range(20):
        ic = rng.uniform(-1, 1, 2)
        t = rng.uniform(-1, 1)
        _fd_check(lin, lambda c, tt: analytic_solution_linear_saddle(1, 2, c, tt), ic, t)
        _fd_check(nl, analytic_solution_nonlinear_saddle, ic, t)
    hopf = SystemSpec("hopf", {"beta": 0, "sigma": 1})
    for _ in range(20):
        r0, th0, t = rng.uniform(0.1, 1), rng.uniform(0, 6), rng.uniform(0, 3)

        def cart(c, tt):
            r, th = analytic_solution_hopf_beta0(1, r0, th0, tt)
            return StateVec((r * math.cos(th), r * math.sin(th)), tt)

        _fd_check(hopf, cart, None, t)


def test_closed_form_ld_examples():
    assert closed_form_ld_linear_saddle(1, 2, 0.5, 8, 8, (0, 0)) == 0.0
    v = closed_form_ld_linear_saddle(1, 2, 0.5, 8, 8, (1, 0))
    assert math.isclose(v, 2 * (math.exp(4) - math.exp(-4)), rel_tol=1e-14)
    assert math.isclose(v, 109.1597, abs_tol=1e-4)
    v11 = closed_form_ld_linear_saddle(1, 2, 0.5, 8, 8, (1, 1))
    want = 2 * (math.exp(4) - math.exp(-4)) + 2 ** -0.5 * 2 * (math.exp(8) - math.exp(-8))
    assert math.isclose(v11, want, rel_tol=1e-14)
    assert round(v11, 1) == 4324.9


@settings(max_examples=60, deadline=None)
@given(finite, finite, st.floats(0.05, 1), st.floats(0, 6), st.floats(0, 6), st.floats(0, 3))
def test_closed_form_ld_symmetry_and_monotonicity(x, y, p, tf, tb, dt):
    f = lambda a, b, c, d: closed_form_ld_linear_saddle(1.0, 2.0, p, c, d, (a, b))  # noqa: E731
    base = f(x, y, tf, tb)
    assert base == f(-x, y, tf, tb) == f(x, -y, tf, tb)
    assert f(x, y, tf + dt, tb) >= base - 1e-12 * abs(base)
    assert f(x, y, tf, tb + dt) >= base - 1e-12 * abs(base)


def test_balance_integration_times():
    assert abs(balance_integration_times(1, 2, 0.5, 8) - 4.3466) <= 5e-4
    assert round(balance_integration_times(1, 2, 0.5, 8), 3) == 4.347
    back = balance_integration_times(2, 1, 0.5, balance_integration_times(1, 2, 0.5, 8))
    assert math.isclose(back, 8.0, rel_tol=1e-14)
    with pytest.raises(ValueError):
        balance_integration_times(-1, 2, 0.5, 8)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 10), st.floats(1e-3, 1), st.floats(0, 100))
def test_balance_equal_rates_is_identity(lam, p, tau):
    assert balance_integration_times(lam, lam, p, tau) == tau


def test_slow_manifold_curves():
    nl = SystemSpec("nonlinear_saddle", {"lam": -1, "mu": -0.05})
    assert math.isclose(slow_manifold_curve(nl, 1.0), 1 / 0.9)
    assert abs(slow_manifold_curve(SystemSpec("vdp_lienard"), math.sqrt(3))) < 1e-15
    bead = SystemSpec("bead_hoop", {"eps": 0.02, "mu": 2.3})
    assert abs(slow_manifold_curve(bead, math.acos(1 / 2.3))) < 1e-15
    with pytest.raises(ConfigurationError):
        slow_manifold_curve(SystemSpec("hopf"), 0.0)


def _tags(spec):
    return {tuple(np.round(e.state.coords, 6)): e.stability for e in equilibria(spec)}


def test_equilibria_duffing_and_bead():
    duff = SystemSpec("duffing", {"alpha": 1, "beta": 1, "delta": 0, "gamma": 0})
    tags = _tags(duff)
    assert tags[(0.0, 0.0)] == "saddle"
    assert tags[(1.0, 0.0)] == tags[(-1.0, 0.0)] == "center"
    damped = SystemSpec("duffing", {"alpha": 1, "beta": 1, "delta": 0.3, "gamma": 0})
    tags = _tags(damped)
    assert tags[(1.0, 0.0)] == tags[(-1.0, 0.0)] == "stable"
    origin = [e for e in equilibria(damped) if not e.state.coords.any()][0]
    np.testing.assert_allclose(np.real(origin.eigenvalues), (0.8612, -1.1612), atol=5e-5)
    bead = SystemSpec("bead_hoop", {"eps": 0.02, "mu": 2.3})
    phi = round(math.acos(1 / 2.3), 6)
    tags = _tags(bead)
    assert tags[(phi, 0.0)] == tags[(-phi, 0.0)] == "stable"
    assert tags[(0.0, 0.0)] == "saddle" and tags[(round(math.pi, 6), 0.0)] == "saddle"
    assert equilibria(SystemSpec("duffing", {"gamma": 0.5})) == []


def test_double_well_origin_is_saddle_focus():
    eq = [e for e in equilibria(SystemSpec("double_well_2dof")) if not e.state.coords.any()][0]
    assert eq.stability == "saddle"
    assert np.sum(np.abs(np.imag(eq.eigenvalues)) > 0) == 2


@pytest.mark.parametrize("sid", sorted(SYSTEM_IDS))
def test_equilibria_are_zeros(sid):
    spec = SystemSpec(sid)
    for e in equilibria(spec):
        assert np.max(np.abs(eval_vector_field(spec, e.state))) <= 1e-12


@pytest.mark.parametrize("sid", sorted(SYSTEM_IDS))
def test_jacobian_matches_finite_differences(sid):
    spec = SystemSpec(sid, {"gamma": 0.5} if sid == "duffing" else {})
    rng = np.random.default_rng(11)
    for _ in range(5):
        s = rng.uniform(-1.5, 1.5, spec.dim)
        J = jacobian(spec, s, 0.3)
        h = 1e-6
        fd = np.column_stack([
            (eval_vector_field(spec, s + h * e, 0.3) - eval_vector_field(spec, s - h * e, 0.3))
            / (2 * h) for e in np.eye(spec.dim)])
        np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-5)
