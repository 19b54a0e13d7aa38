import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sharkov.errors import DomainError, DomainMismatchError, InvalidArgumentError, InvarianceError
from sharkov.pl_map import (
    Interval,
    IntervalSet,
    PiecewiseLinearMap,
    compose,
    constant,
    format_map,
    identity,
    image,
    image_iter,
    iterate,
    iterate_map,
    iterate_map_on,
    lipschitz_constant,
    load_map,
    maps_equal,
    modulus_of_continuity,
    orbit,
    parse_map,
    preimage,
    random_map,
    save_map,
    sup_distance,
    tent,
)


def test_constructor_validates_nodes():
    with pytest.raises(InvalidArgumentError):
        PiecewiseLinearMap((0.0,), (0.0,))
    with pytest.raises(InvalidArgumentError):
        PiecewiseLinearMap((0.0, 0.0, 1.0), (0.0, 1.0, 0.0))
    with pytest.raises(InvalidArgumentError):
        PiecewiseLinearMap((0.0, 1.0), (0.0,))


@pytest.mark.parametrize("x, expected", [(2 / 7, 4 / 7), (0.5, 1.0), (0.0, 0.0), (0.75, 0.5)])
def test_evaluate_tent(tent_map, x, expected):
    assert tent_map(x) == pytest.approx(expected, abs=1e-15)


def test_evaluate_outside_domain(tent_map):
    with pytest.raises(DomainError):
        tent_map.evaluate(1.5)


def test_iterate_follows_the_period_three_orbit(tent_map):
    assert iterate(tent_map, 3, 2 / 7) == pytest.approx(2 / 7, abs=1e-14)
    assert iterate(tent_map, 0, 0.3) == 0.3
    assert iterate(tent_map, 3, 0.28) == pytest.approx(0.24, abs=1e-14)
    assert orbit(tent_map, 0.28, 3) == pytest.approx([0.28, 0.56, 0.88, 0.24], abs=1e-14)


def test_iterate_reports_escape():
    f = PiecewiseLinearMap((0.0, 1.0), (0.5, 1.5))
    with pytest.raises(InvarianceError) as excinfo:
        iterate(f, 3, 0.8)
    assert excinfo.value.point == pytest.approx(1.3)
    assert excinfo.value.index == 1


def test_compose_with_identity_is_the_map(tent_map, identity_map):
    assert maps_equal(compose(tent_map, identity_map), tent_map)
    assert maps_equal(compose(identity_map, tent_map), tent_map)


def test_compose_refuses_inner_escape():
    outer = identity()
    inner = PiecewiseLinearMap((0.0, 1.0), (0.0, 2.0))
    with pytest.raises(InvarianceError):
        compose(outer, inner)


def test_tent_square_has_four_laps(tent_map):
    square = iterate_map(tent_map, 2)
    assert square.nodes == pytest.approx((0.0, 0.25, 0.5, 0.75, 1.0))
    assert square.values == pytest.approx((0.0, 1.0, 0.0, 1.0, 0.0))
    assert iterate_map(tent_map, 5).segment_count == 32


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_compose_agrees_with_pointwise_evaluation(seed, k, x):
    f = random_map(np.random.default_rng(seed), segments=3)
    # rounding grows by at most the Lipschitz constant per step
    tol = 1e-12 * max(1.0, lipschitz_constant(f)) ** k
    assert iterate_map(f, k)(x) == pytest.approx(iterate(f, k, x), abs=max(tol, 1e-12))


def test_iterate_map_on_matches_full_iterate(tent_map):
    window = Interval(0.2, 0.35)
    local = iterate_map_on(tent_map, 3, window)
    assert (local.a, local.b) == (0.2, 0.35)
    for x in np.linspace(0.2, 0.35, 11):
        assert local(x) == pytest.approx(iterate(tent_map, 3, x), abs=1e-12)


def test_sup_distance(tent_map):
    assert sup_distance(tent_map, tent_map) == 0.0
    assert sup_distance(tent_map, tent_map.shifted(0.04)) == pytest.approx(0.04)
    with pytest.raises(DomainMismatchError):
        sup_distance(tent_map, identity(0.0, 2.0))


def test_sup_distance_is_attained_between_coarse_samples():
    f = PiecewiseLinearMap((0.0, 0.5001, 1.0), (0.0, 1.0, 0.0))
    g = constant(0.0)
    assert sup_distance(f, g) == 1.0


@pytest.mark.parametrize(
    "f, tau, expected",
    [(tent(), 1.0, 0.25), (constant(0.3), 1.0, 0.5), (identity(), 0.2, 0.1)],
)
def test_modulus_of_continuity(f, tau, expected):
    assert modulus_of_continuity(f, tau) == pytest.approx(expected)


def test_lipschitz_constant(tent_map):
    assert lipschitz_constant(tent_map) == 2.0
    assert lipschitz_constant(constant(0.5)) == 0.0


@pytest.mark.parametrize(
    "interval, expected",
    [((0.2, 0.3), (0.4, 0.6)), ((0.4, 0.6), (0.8, 1.0)), ((0.3, 0.3), (0.6, 0.6))],
)
def test_image(tent_map, interval, expected):
    result = image(tent_map, Interval(*interval))
    assert (result.lo, result.hi) == pytest.approx(expected)


def test_image_iter_reports_escape():
    f = PiecewiseLinearMap((0.0, 1.0), (0.5, 1.5))
    with pytest.raises(InvarianceError):
        image_iter(f, 3, Interval(0.0, 0.2))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_sup_distance_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    f, g, h = (random_map(rng, segments=int(rng.integers(1, 6))) for _ in range(3))
    assert sup_distance(f, f) == 0.0
    assert sup_distance(f, g) == sup_distance(g, f)
    assert sup_distance(f, h) <= sup_distance(f, g) + sup_distance(g, h) + 1e-12
    offset = float(rng.uniform(-0.5, 0.5))
    assert sup_distance(f, f.shifted(offset)) == pytest.approx(abs(offset), abs=1e-12)


@given(
    st.integers(0, 2**32 - 1),
    st.floats(0.01, 2.0),
    st.floats(0.0, 1.0),
    st.floats(-0.999, 0.999),
)
@settings(max_examples=200, deadline=None)
def test_modulus_of_continuity_bounds_every_nearby_pair(seed, tau, x, fraction):
    f = random_map(np.random.default_rng(seed), segments=5)
    eta = modulus_of_continuity(f, tau)
    y = min(max(x + fraction * eta, 0.0), 1.0)
    assert abs(x - y) < eta
    assert abs(f(x) - f(y)) < tau / 2


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_image_matches_a_fine_grid_envelope(seed, u, v):
    f = random_map(np.random.default_rng(seed), segments=6)
    lo, hi = min(u, v), max(u, v)
    result = image(f, Interval(lo, hi))
    xs = np.linspace(lo, hi, 4001)
    ys = f.evaluate_many(xs)
    slack = lipschitz_constant(f) * (hi - lo) / 4000 + 1e-12
    assert result.lo <= ys.min() + 1e-12
    assert result.hi >= ys.max() - 1e-12
    assert result.lo >= ys.min() - slack
    assert result.hi <= ys.max() + slack


def test_preimage(tent_map):
    result = preimage(tent_map, Interval(0.4, 0.6))
    np.testing.assert_allclose(result.to_list(), [[0.2, 0.3], [0.7, 0.8]])
    np.testing.assert_allclose(preimage(tent_map, Interval(0.9, 1.0)).to_list(), [[0.45, 0.55]])


def test_interval_set_merges_overlaps():
    merged = IntervalSet.from_intervals([Interval(0.5, 0.7), Interval(0.1, 0.3), Interval(0.25, 0.4)])
    np.testing.assert_allclose(merged.to_list(), [[0.1, 0.4], [0.5, 0.7]])
    assert merged.total_length == pytest.approx(0.5)


def test_interval_membership():
    window = Interval(0.4, 0.6)
    assert window.contains(0.4) and not window.contains(0.4, open=True)
    assert Interval(0.55, 0.9).meets_open(window)
    assert not Interval(0.6, 0.9).meets_open(Interval(0.4, 0.6))
    with pytest.raises(InvalidArgumentError):
        Interval(1.0, 0.0)


def test_map_text_round_trip(tmp_path, tent_map):
    assert format_map(tent_map) == "domain 0 1\nnodes 0 0.5 1\nvalues 0 1 0\n"
    path = tmp_path / "tent.map"
    save_map(tent_map, path)
    assert load_map(path) == tent_map


@pytest.mark.parametrize(
    "text",
    [
        "nodes 0 1\nvalues 0 1\n",
        "domain 0 2\nnodes 0 1\nvalues 0 1\n",
        "domain 0 1\nnodes 0 1\nvalues 0 nan\n",
        "domain 0\nnodes 0 1\nvalues 0 1\n",
    ],
)
def test_parse_map_rejects_bad_text(text):
    with pytest.raises(InvalidArgumentError):
        parse_map(text)
