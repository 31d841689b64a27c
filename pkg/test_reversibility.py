"""Тесты обратимости, потенциала и рационального направления."""

import math
from fractions import Fraction

import numpy as np
import pytest

from environment import (
    Environment,
    TorusDims,
    make_homogeneous,
    make_one_dimensional,
    make_tilted_conductance,
    translate_environment,
)
from errors import (
    NonPositiveProbabilityError,
    NotNearestNeighbourError,
    NotReversibleError,
    ParameterDomainError,
    ScalingOverflowError,
    ZeroGradientError,
)
from reversibility import (
    angle_between,
    approximate_appropriate_direction,
    average_negative_gradient,
    cell_corners,
    check_reversible,
    potential,
    potential_table,
)
from simulator import RngStream


def _non_reversible_env():
    # Перекошенный закон в одной точке тора 2x2 нарушает баланс плакета
    dims = TorusDims((2, 2))
    rng = RngStream(1).generator()
    env = make_tilted_conductance(dims, rng.uniform(0.5, 2.0, size=(2, 2, 2)), [0.0, 0.0])
    laws = dict(env.laws)
    laws[(0, 0)] = make_homogeneous({(1, 0): 0.7, (-1, 0): 0.1, (0, 1): 0.1, (0, -1): 0.1}).laws[(0, 0)]
    return Environment(dims, laws)


def test_homogeneous_walk_is_reversible(counterexample_env):
    verdict = check_reversible(counterexample_env)
    assert verdict["reversible"]
    assert verdict["max_cycle_defect"] <= 1e-12
    np.testing.assert_allclose(average_negative_gradient(counterexample_env), [math.log(2), math.log(2)], atol=1e-14)


def test_parity_gradient(parity_env):
    g = average_negative_gradient(parity_env)
    assert g[0] == pytest.approx(0.5 * math.log(3.5), abs=1e-14)


def test_one_dimensional_always_reversible():
    env = make_one_dimensional([0.9, 0.2, 0.55, 0.4])
    assert check_reversible(env)["reversible"]


def test_simple_random_walk_zero_gradient(srw):
    np.testing.assert_allclose(average_negative_gradient(srw), [0.0, 0.0], atol=1e-15)


def test_tilted_conductance_gradient_is_twice_tilt():
    rng = RngStream(21).generator()
    dims = TorusDims((3, 4))
    h = np.array([0.35, -0.2])
    env = make_tilted_conductance(dims, rng.uniform(0.2, 5.0, size=(2, 3, 4)), h)
    verdict = check_reversible(env)
    assert verdict["reversible"]
    assert verdict["max_cycle_defect"] <= 1e-12
    np.testing.assert_allclose(average_negative_gradient(env), 2 * h, atol=1e-9)


def test_non_reversible_environment():
    env = _non_reversible_env()
    verdict = check_reversible(env)
    assert not verdict["reversible"]
    assert verdict["max_cycle_defect"] > 1e-3
    with pytest.raises(NotReversibleError):
        potential(env)
    with pytest.raises(NotReversibleError):
        average_negative_gradient(env)


def test_requires_nearest_neighbour():
    env = make_homogeneous({(1,): 0.5, (2,): 0.5})
    with pytest.raises(NotNearestNeighbourError):
        check_reversible(env)


def test_requires_positive_unit_steps():
    env = make_one_dimensional([1.0])
    with pytest.raises((NotNearestNeighbourError, NonPositiveProbabilityError)):
        check_reversible(env)


def test_potential_on_closed_cell(parity_env):
    field = potential(parity_env)
    assert field.reversible
    assert field.u[(0,)] == 0.0
    # u(0) - u(1) = log(p_0(+1) / p_1(-1)) = log(0.7 / 0.4)
    assert field.u[(1,)] == pytest.approx(-math.log(0.7 / 0.4), abs=1e-14)
    # За период потенциал падает на M g
    assert field.u[(0,)] - field.u[(2,)] == pytest.approx(2 * field.g[0], abs=1e-14)


def test_potential_2d_corners():
    rng = RngStream(4).generator()
    dims = TorusDims((2, 3))
    h = np.array([0.1, 0.25])
    env = make_tilted_conductance(dims, rng.uniform(0.2, 5.0, size=(2, 2, 3)), h)
    field = potential(env)
    assert len(field.u) == 3 * 4
    for corner in cell_corners(dims):
        expected = -sum(c * gi for c, gi in zip(corner, field.g))
        assert field.u[corner] == pytest.approx(expected, abs=1e-9)


def test_potential_table(parity_env):
    table = potential_table(potential(parity_env))
    assert list(table.columns) == ["x1", "u"]
    assert len(table) == 3
    assert table["u"].iloc[0] == 0.0


def test_angle_between():
    assert angle_between([1, 0], [0, 2]) == pytest.approx(math.pi / 2)
    assert angle_between([1, 1], [2, 2]) == pytest.approx(0.0, abs=1e-15)
    assert angle_between([1, 0], [-1, 0]) == pytest.approx(math.pi)
    # Малые углы без потери точности arccos
    assert angle_between([1, 0], [1, 1e-9]) == pytest.approx(1e-9, rel=1e-6)


def test_direction_approximation():
    dims = TorusDims((1, 1))
    approx = approximate_appropriate_direction([math.log(2), math.log(1.5)], 20, dims)
    assert approx.g_rational == (Fraction(1), Fraction(7, 12))
    assert approx.g1 == (12, 7)
    assert approx.angle_error == pytest.approx(0.0012147, rel=1e-3)
    assert approx.to_dict()["g_rational"] == ["1/1", "7/12"]


def test_direction_multiple_lies_in_sublattice():
    dims = TorusDims((4, 6))
    approx = approximate_appropriate_direction([0.5, -0.25], 10, dims)
    assert approx.g_rational == (Fraction(1), Fraction(-1, 2))
    assert approx.g1 == (12, -6)
    assert approx.angle_error == pytest.approx(0.0, abs=1e-15)


def test_direction_errors():
    dims = TorusDims((1, 1))
    with pytest.raises(ZeroGradientError):
        approximate_appropriate_direction([0.0, 0.0], 10, dims)
    with pytest.raises(ParameterDomainError):
        approximate_appropriate_direction([1.0, 0.0], 0, dims)
    with pytest.raises(ParameterDomainError):
        approximate_appropriate_direction([1.0], 10, dims)


def test_direction_overflow():
    dims = TorusDims((3 * 2 ** 61, 1))
    with pytest.raises(ScalingOverflowError):
        approximate_appropriate_direction([1.0, 0.5], 10, dims)


@pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e4])
def test_direction_depends_only_on_ray(c):
    dims = TorusDims((3, 4))
    g = np.array([math.log(2), -math.log(3)])
    base = approximate_appropriate_direction(g, 20, dims)
    scaled = approximate_appropriate_direction(c * g, 20, dims)
    assert scaled.g1 == base.g1
    assert scaled.g_rational == base.g_rational


def test_gradient_invariant_under_translation():
    rng = RngStream(12).generator()
    dims = TorusDims((3, 2))
    env = make_tilted_conductance(dims, rng.uniform(0.2, 5.0, size=(2, 3, 2)), [0.3, -0.2])
    g = average_negative_gradient(env)
    for shift in [(1, 0), (2, 1), (-1, 3)]:
        np.testing.assert_allclose(average_negative_gradient(translate_environment(env, shift)), g, atol=1e-12)
