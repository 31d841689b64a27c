"""Тесты точных асимптотик: дрейф, фундаментальная матрица, диффузия."""

import math

import numpy as np
import pytest

from asymptotics import (
    analyze,
    asymptotic_direction,
    diffusion_matrix,
    drift,
    fundamental_matrix,
    green_kubo_truncated,
)
from environment import (
    Environment,
    JumpLaw,
    TorusDims,
    make_homogeneous,
    make_random_environment,
    reflect_environment,
    translate_environment,
)
from induced_chain import build_induced_chain
from simulator import RngStream


def test_parity_environment_exact_values(parity_env):
    summary = analyze(parity_env)
    assert summary.nu == pytest.approx([0.3], abs=1e-14)
    assert summary.sigma[0, 0] == pytest.approx(0.90, abs=1e-12)
    assert summary.period == 2
    assert summary.aperiodic_warning
    assert summary.ballistic


def test_fundamental_matrix_two_cycle():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    Z = fundamental_matrix(P, np.array([0.5, 0.5]))
    np.testing.assert_allclose(Z, [[0.75, 0.25], [0.25, 0.75]], atol=1e-14)


def test_fundamental_matrix_identity():
    P = np.array([[0.5, 0.5], [0.25, 0.75]])
    pi = np.array([1 / 3, 2 / 3])
    Z = fundamental_matrix(P, pi)
    A = np.eye(2) - P + np.outer(np.ones(2), pi)
    np.testing.assert_allclose(Z @ A, np.eye(2), atol=1e-12)
    # Строки Z суммируются в 1, π Z = π
    np.testing.assert_allclose(Z.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(pi @ Z, pi, atol=1e-12)


def test_simple_random_walk(srw):
    summary = analyze(srw)
    np.testing.assert_allclose(summary.nu, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(summary.sigma, [[0.5, 0.0], [0.0, 0.5]], atol=1e-14)
    assert not summary.ballistic
    assert asymptotic_direction(summary.nu) is None


def test_counterexample_drift(counterexample_env):
    summary = analyze(counterexample_env)
    np.testing.assert_allclose(summary.nu, [0.1, 0.7 / 3], atol=1e-14)
    direction = asymptotic_direction(summary.nu)
    assert np.linalg.norm(direction) == pytest.approx(1.0)


def test_single_state_reduction():
    rng = RngStream(7).generator()
    for d in (1, 2, 3):
        env = make_random_environment(TorusDims((1,) * d), rng, radius=2)
        summary = analyze(env)
        law = env.laws[(0,) * d]
        np.testing.assert_allclose(summary.nu, law.mean(), atol=1e-14)
        np.testing.assert_allclose(summary.sigma, law.covariance(), atol=1e-14)


def test_drift_forms_agree_on_random_environments():
    rng = RngStream(99).generator()
    for _ in range(50):
        d = int(rng.integers(1, 4))
        dims = TorusDims(tuple(int(m) for m in rng.integers(1, 5, size=d)))
        env = make_random_environment(dims, rng)
        summary = analyze(env)
        chain = summary.chain
        second = np.einsum("x,xy,xyk->k", chain.pi, chain.P, chain.mu)
        np.testing.assert_allclose(summary.nu, second, atol=1e-12)
        np.testing.assert_allclose(summary.sigma, summary.sigma.T, atol=1e-15)
        assert np.min(np.linalg.eigvalsh(summary.sigma)) >= -1e-10


def test_green_kubo_matches_fundamental_matrix():
    rng = RngStream(314).generator()
    for _ in range(10):
        d = int(rng.integers(1, 3))
        dims = TorusDims(tuple(int(m) for m in rng.integers(1, 4, size=d)))
        env = make_random_environment(dims, rng, lazy=True)
        chain = build_induced_chain(env)
        assert chain.aperiodic
        nu = drift(env, chain)
        exact = diffusion_matrix(env, chain, nu)
        series = green_kubo_truncated(env, chain, nu, 500)
        np.testing.assert_allclose(series, exact, atol=1e-8)


def test_green_kubo_cesaro_for_periodic_chain(parity_env):
    chain = build_induced_chain(parity_env)
    nu = drift(parity_env, chain)
    # Частичные суммы колеблются, среднее по Чезаро сходится как O(1/N)
    series = green_kubo_truncated(parity_env, chain, nu, 2000)
    assert series[0, 0] == pytest.approx(0.90, abs=1e-4)
    # N = 0: только ковариация одного скачка
    assert green_kubo_truncated(parity_env, chain, nu, 0, cesaro=False)[0, 0] == pytest.approx(0.91)


def test_translation_and_reflection_invariance():
    env = make_random_environment(TorusDims((3, 2)), RngStream(8).generator())
    base = analyze(env)
    shifted = analyze(translate_environment(env, (1, 1)))
    np.testing.assert_allclose(shifted.nu, base.nu, atol=1e-12)
    np.testing.assert_allclose(shifted.sigma, base.sigma, atol=1e-12)
    reflected = analyze(reflect_environment(env))
    np.testing.assert_allclose(reflected.nu, -base.nu, atol=1e-12)
    np.testing.assert_allclose(reflected.sigma, base.sigma, atol=1e-12)


def test_homogeneous_diffusion_is_jump_covariance():
    env = make_homogeneous({(1,): 0.6, (-1,): 0.3, (0,): 0.1})
    summary = analyze(env)
    mean = 0.3
    second = 0.6 + 0.3
    assert summary.sigma[0, 0] == pytest.approx(second - mean ** 2, abs=1e-14)
    assert math.isclose(summary.nu[0], mean, abs_tol=1e-15)


def test_large_steps_pass_identity_checks():
    probs = [0.6, 0.3, 0.55]
    laws = {(x,): JumpLaw.from_mapping({(1000000,): p, (-1000001,): 1 - p}) for x, p in enumerate(probs)}
    env = Environment(TorusDims((3,)), laws)
    assert env.step_scale == 1000001.0
    summary = analyze(env)
    # Оба скачка переводят класс x в x+1: цепь - детерминированный цикл, π равномерно
    assert summary.period == 3
    means = [1000000 * p - 1000001 * (1 - p) for p in probs]
    assert summary.nu[0] == pytest.approx(np.mean(means), rel=1e-10)
    assert summary.sigma[0, 0] > 0
