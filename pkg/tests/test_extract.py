from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldscope import GridSpec2D, LDConfig, SystemSpec, compute_ld_field
from ldscope.extract import (apply_operator, closed_loop, curve_within, extract_ridges,
                             field_exclusion, field_ridges, gradient_norm, inside_polygon,
                             laplacian, polygon_area, ridge_distance, ridge_loop,
                             transition_band)
from ldscope.systems import balance_integration_times, closed_form_ld_linear_saddle


def test_gradient_constant_and_linear():
    assert np.all(gradient_norm(np.full((5, 6), 3.0)) == 0)
    X = np.tile(np.arange(6.0), (5, 1))
    np.testing.assert_allclose(gradient_norm(X), 1.0)
    np.testing.assert_allclose(gradient_norm(2 * X, (2.0, 1.0)), 1.0)
    with pytest.raises(ValueError):
        gradient_norm(np.zeros((1, 5)))


def test_abs_x_spikes_at_zero_column():
    x = np.linspace(-1, 1, 201)
    L = np.tile(np.abs(x), (7, 1))
    h = x[1] - x[0]
    g = gradient_norm(L, (h, h))
    lap = np.abs(laplacian(L, (h, h)))
    # |laplacian| spikes at the kink; the central-difference gradient is 0 there
    assert np.argmax(lap[3]) == 100
    assert np.all(np.delete(lap[3, 1:-1], 99) < 1e-8)
    assert g[3, 100] == 0.0 and np.allclose(np.delete(g[3], 100), 1.0)
    # on an integer-valued |k| layer the second difference is exactly zero off
    # the kink, so the strict threshold isolates the kink column
    K = np.tile(np.abs(np.arange(-100.0, 101.0)), (7, 1))
    r = extract_ridges(K, "laplacian", 90)
    assert set(r.ij[:, 0]) == {100}


def test_gradient_of_abs_x_maximal_at_kink_after_differencing():
    # discrete gradient-of-gradient picks up the jump at x = 0
    x = np.linspace(-1, 1, 201)
    L = np.tile(np.abs(x), (5, 1))
    h = x[1] - x[0]
    jump = gradient_norm(gradient_norm(L, (h, h)), (h, h))
    assert set(np.nonzero(jump[2] == jump[2].max())[0]) <= {99, 101}


def test_laplacian_quadratic_and_linear():
    y, x = np.mgrid[0:6, 0:7].astype(float)
    lap = laplacian(x ** 2 + y ** 2)
    np.testing.assert_allclose(lap[1:-1, 1:-1], 4.0)
    assert np.all(lap[0] == 0) and np.all(lap[:, -1] == 0)
    assert np.allclose(laplacian(3 * x - y + 2)[1:-1, 1:-1], 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1e3, 1e3))
def test_operators_shift_and_translation(seed, c):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(9, 11))
    for op in ("gradient_norm", "laplacian"):
        a = apply_operator(L, op)
        np.testing.assert_allclose(apply_operator(L + c, op), a, atol=1e-9 * (1 + abs(c)))
        # interior translation equivariance
        sh = apply_operator(np.roll(L, 1, axis=1), op)
        np.testing.assert_allclose(sh[2:-2, 3:-2], a[2:-2, 2:-3], atol=1e-12)


def test_unknown_operator():
    with pytest.raises(ValueError):
        apply_operator(np.zeros((3, 3)), "sobel")
    with pytest.raises(ValueError):
        extract_ridges(np.zeros((3, 3)), threshold_percentile=100)


def test_constant_layer_has_no_ridges():
    for op in ("gradient_norm", "laplacian"):
        assert len(extract_ridges(np.ones((20, 20)), op)) == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1, 98), st.floats(0.5, 1.5))
def test_ridges_monotone_in_percentile(seed, q, dq):
    L = np.random.default_rng(seed).normal(size=(15, 13))
    lo = extract_ridges(L, "gradient_norm", q)
    hi = extract_ridges(L, "gradient_norm", min(q + dq, 99.9))
    assert set(map(tuple, hi.ij)) <= set(map(tuple, lo.ij))


def test_ridge_set_sorted_and_consistent():
    L = np.random.default_rng(1).normal(size=(12, 10))
    xs, ys = np.linspace(0, 1, 10), np.linspace(-1, 1, 12)
    r = extract_ridges(L, "laplacian", 80, (xs[1] - xs[0], ys[1] - ys[0]), (xs, ys))
    assert np.array_equal(r.ij, r.ij[np.lexsort((r.ij[:, 1], r.ij[:, 0]))])
    np.testing.assert_array_equal(r.xy[:, 0], xs[r.ij[:, 0]])
    np.testing.assert_array_equal(r.xy[:, 1], ys[r.ij[:, 1]])
    assert np.all(r.values > r.threshold)
    assert np.all((r.ij[:, 0] > 0) & (r.ij[:, 0] < 9))  # laplacian border excluded


def test_exclusion_and_thinning():
    L = np.random.default_rng(3).normal(size=(10, 10))
    ex = np.zeros((10, 10), bool)
    ex[:, :5] = True
    r = extract_ridges(L, "gradient_norm", 50, exclude=ex)
    assert np.all(r.ij[:, 0] >= 5)
    thin = extract_ridges(L, "gradient_norm", 50, exclude=ex, thin=True)
    assert set(map(tuple, thin.ij)) <= set(map(tuple, r.ij))


@pytest.fixture(scope="module")
def saddle_field():
    spec = SystemSpec("linear_saddle", {"lam": 1, "mu": 2})
    g = GridSpec2D(ranges=((-1, 1), (-1, 1)), resolution=(101, 101))
    tb = balance_integration_times(1, 2, 0.5, 8)
    return compute_ld_field(spec, g, LDConfig(0.5, 8, tb))


def test_saddle_forward_ridge_on_stable_axis(saddle_field):
    r = extract_ridges(saddle_field.forward, "gradient_norm", 99, saddle_field.grid.spacing,
                       saddle_field.grid.axes())
    assert len(r) > 0
    assert np.all(np.abs(r.xy[:, 0]) <= saddle_field.grid.spacing[0] + 1e-12)


def test_forward_and_backward_ridges_disjoint_off_origin(saddle_field):
    f = field_ridges(saddle_field, "forward", threshold_percentile=99)
    b = field_ridges(saddle_field, "backward", threshold_percentile=99)
    common = set(map(tuple, f.ij)) & set(map(tuple, b.ij))
    assert all(abs(i - 50) <= 1 and abs(j - 50) <= 1 for i, j in common)
    assert np.all(np.abs(b.xy[:, 1]) <= saddle_field.grid.spacing[1] + 1e-12)


def test_balanced_total_ridges_cover_both_axes(saddle_field):
    r = field_ridges(saddle_field, "total", threshold_percentile=98)
    on_x = np.abs(r.xy[:, 1]) < 0.03
    on_y = np.abs(r.xy[:, 0]) < 0.03
    assert on_x.mean() + on_y.mean() >= 0.99
    assert np.ptp(r.xy[on_x, 0]) > 0.8 and np.ptp(r.xy[on_y, 1]) > 0.8


def test_laplacian_sign_pattern_near_axes():
    # closed-form layer: each axis is a |s|^p cusp (p < 1), concave on both
    # sides, so the laplacian is negative right next to it
    xs = np.linspace(-1, 1, 201)
    X, Y = np.meshgrid(xs, xs)
    L = np.vectorize(lambda x, y: closed_form_ld_linear_saddle(1, 2, 0.5, 8, 8, (x, y)))(X, Y)
    h = xs[1] - xs[0]
    lap = laplacian(L, (h, h))
    for k in (1, 2):
        assert np.all(lap[20:80, 100 - k] < 0) and np.all(lap[20:80, 100 + k] < 0)
        assert np.all(lap[100 - k, 120:180] < 0) and np.all(lap[100 + k, 120:180] < 0)


def test_ridge_distance_on_curve():
    c = np.column_stack([np.linspace(0, 1, 11), np.zeros(11)])
    d = ridge_distance(c, c, k=1, spacing=(0.1, 0.1))
    assert d["mean"] == d["max"] == 0 and d["coverage"] == 1


def test_ridge_distance_shifted_one_cell():
    h = 0.1
    c = np.array([[x, y] for x in np.arange(0, 1.01, h) for y in (0.0,)])
    r = np.array([[0.5 + h, h]])
    d = ridge_distance(r, c, k=1, spacing=(h, h))
    assert d["max"] == pytest.approx(h)  # nearest sample is straight below
    d2 = ridge_distance(np.array([[0.55, h]]), np.array([[0.45, 0.0]]), k=1, spacing=(h, h))
    assert d2["max"] == pytest.approx(np.hypot(h, h))
    assert d2["max_cells"] == pytest.approx(np.sqrt(2))
    assert d2["coverage"] == 1.0


def test_ridge_distance_shifted_curve():
    h = 0.05
    c = np.column_stack([np.linspace(-1, 1, 41), np.zeros(41)])
    r = c + [0, h]
    d = ridge_distance(r, c, k=1, spacing=(h, h))
    assert d["mean"] == pytest.approx(h) and d["coverage"] == 1.0
    d = ridge_distance(c + [0, 3 * h], c, k=2, spacing=(h, h))
    assert d["coverage"] == 0.0


def test_ridge_distance_empty_raises():
    with pytest.raises(ValueError):
        ridge_distance(np.zeros((0, 2)), np.ones((3, 2)))
    with pytest.raises(ValueError):
        ridge_distance(np.ones((3, 2)), np.zeros((0, 2)))


def test_curve_within_grid():
    g = GridSpec2D(ranges=((-1, 1), (-1, 1)), resolution=(3, 3))
    c = np.array([[0, 0], [2, 0], [0.5, -1], [0, 1.01]])
    assert curve_within(c, g).tolist() == [[0, 0], [0.5, -1]]


def test_transition_band():
    m = np.zeros((7, 7), bool)
    m[:, 4:] = True
    band = transition_band(m)
    assert np.array_equal(np.nonzero(band.any(axis=0))[0], [3, 4])
    assert not transition_band(np.ones((4, 4), bool)).any()


def test_field_exclusion_default_keeps_escape_edges(saddle_field):
    f = saddle_field
    f2 = type(f)(f.grid, f.forward, f.backward, f.total, f.escape_mask.copy(), f.valid_mask.copy())
    f2.escape_mask[:, :10] = True
    assert not field_exclusion(f2).any()
    assert field_exclusion(f2, exclude_escape_boundary=True)[:, 9:11].all()
    f2.valid_mask[0, 0] = False
    assert field_exclusion(f2)[:2, :2].all()


def test_closed_loop_circle_and_area():
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    circ = np.column_stack([1 + 0.5 * np.cos(t), -2 + 0.5 * np.sin(t)])
    poly = closed_loop(circ, n_bins=180)
    assert poly.shape == (180, 2)
    assert polygon_area(poly) == pytest.approx(np.pi * 0.25, rel=1e-3)
    assert inside_polygon(poly, [[1, -2]])[0] and not inside_polygon(poly, [[0, 0]])[0]
    with pytest.raises(ValueError):
        closed_loop(circ[:2])


def test_closed_loop_prefers_strongest_point_per_bin():
    t = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = 0.3 * outer
    pts = np.vstack([outer, inner, inner * 0.5])
    vals = np.concatenate([np.full(360, 5.0), np.ones(720)])
    poly = closed_loop(pts, center=(0, 0), n_bins=90, values=vals)
    np.testing.assert_allclose(np.hypot(poly[:, 0], poly[:, 1]), 1.0)
    # the median rule would land on the interior structure instead
    med = closed_loop(pts, center=(0, 0), n_bins=90)
    assert np.hypot(med[:, 0], med[:, 1]).max() < 0.5


def test_ridge_loop_uses_values():
    t = np.linspace(0, 2 * np.pi, 90, endpoint=False)
    xy = np.column_stack([np.cos(t), np.sin(t)])
    from ldscope.extract import RidgeSet
    r = RidgeSet(np.zeros((90, 2), np.int64), xy, np.ones(90), "total", "laplacian", 95.0, 0.0)
    assert polygon_area(ridge_loop(r, (0, 0), 45)) == pytest.approx(np.pi, rel=1e-2)
