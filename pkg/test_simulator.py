"""Тесты Монте-Карло движка: воспроизводимость, ЗБЧ/ЦПТ, уровни, разорение игрока."""

import math

import numpy as np
import pytest

from config import config
from environment import (
    TorusDims,
    make_counterexample,
    make_one_dimensional,
    make_random_environment,
    make_tilted_conductance,
)
from errors import CensoredError, NotNearestNeighbourError, ParameterDomainError, ZeroGradientError
from induced_chain import build_transition_matrix
from simulator import (
    GENERATOR_NAME,
    RngStream,
    SamplingTables,
    chi_square_equivalence,
    derive_seed,
    estimate_covariance,
    estimate_drift,
    exit_probability_1d_exact,
    exit_probability_absorbing,
    final_positions,
    hitting_probability,
    hitting_sweep,
    sample_trajectory,
    sample_two_stage,
    simulate_exit_1d,
)


def test_rng_stream_is_reproducible():
    a = RngStream(42, 3).generator().random(5)
    b = RngStream(42, 3).generator().random(5)
    c = RngStream(42, 4).generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_derive_seed_depends_on_label():
    assert derive_seed(1, 1) == derive_seed(1, 1)
    assert derive_seed(1, 1) != derive_seed(1, 2)
    assert 0 <= derive_seed(1, 1) < 2 ** 64


def test_trajectory_path(counterexample_env):
    final, path = sample_trajectory(counterexample_env, 50, RngStream(0), return_path=True)
    assert path.shape == (51, 2)
    np.testing.assert_array_equal(path[0], [0, 0])
    np.testing.assert_array_equal(path[-1], final)
    steps = {tuple(s) for s in np.diff(path, axis=0)}
    assert steps <= {(1, 0), (-1, 0), (0, 1), (0, -1)}


def test_zero_steps(parity_env):
    np.testing.assert_array_equal(sample_trajectory(parity_env, 0, RngStream(1)), [0])
    with pytest.raises(ParameterDomainError):
        sample_trajectory(parity_env, -1, RngStream(1))


def test_parity_of_position(parity_env):
    X = final_positions(parity_env, 31, 20, seed=5)
    assert np.all(X[:, 0] % 2 == 1)


def test_replica_equals_single_trajectory(counterexample_env):
    X = final_positions(counterexample_env, 40, 6, seed=9)
    for r in range(6):
        np.testing.assert_array_equal(X[r], sample_trajectory(counterexample_env, 40, RngStream(9, r)))


def test_two_stage_replica_equals_single_trajectory(parity_env):
    X = final_positions(parity_env, 40, 4, seed=9, sampler="two_stage")
    for r in range(4):
        np.testing.assert_array_equal(X[r], sample_two_stage(parity_env, 40, RngStream(9, r)))


@pytest.mark.parametrize("sampler", ["direct", "two_stage"])
def test_chunking_does_not_change_results(monkeypatch, sampler):
    env = make_random_environment(TorusDims((2, 3)), RngStream(6).generator())
    reference = final_positions(env, 100, 10, seed=3, sampler=sampler)
    monkeypatch.setattr(config, "CHUNK_STEPS", 7)
    np.testing.assert_array_equal(final_positions(env, 100, 10, seed=3, sampler=sampler), reference)


def test_workers_do_not_change_results(counterexample_env):
    serial = final_positions(counterexample_env, 200, 9, seed=17, workers=1)
    parallel = final_positions(counterexample_env, 200, 9, seed=17, workers=3)
    np.testing.assert_array_equal(serial, parallel)


def test_two_stage_tables_follow_support_size():
    env = make_tilted_conductance(TorusDims((12, 12)), np.ones((2, 12, 12)), [0.2, -0.1])
    assert not hasattr(SamplingTables(env), "cond_cdf")
    tables = SamplingTables(env, two_stage=True)
    assert tables.cond_cdf.shape == (144, 4, 4)
    assert tables.chain_cdf.shape == (144, 4)
    # Вероятности слотов, разнесённые по классам попадания, дают строки P
    weights = np.diff(tables.chain_cdf, axis=1, prepend=0.0)
    rebuilt = np.zeros((144, 144))
    np.add.at(rebuilt, (np.arange(144)[:, None], tables.chain_next), weights)
    np.testing.assert_allclose(rebuilt, build_transition_matrix(env), atol=1e-12)


def test_unknown_sampler(parity_env):
    with pytest.raises(ParameterDomainError):
        final_positions(parity_env, 10, 2, seed=0, sampler="magic")


def test_drift_estimate_parity(parity_env):
    stats = estimate_drift(parity_env, 2000, 50, seed=1)
    assert stats.generator_name == GENERATOR_NAME
    assert abs(stats.z_scores([0.3])[0]) < 4
    assert stats.finals.shape == (50, 1)


def test_drift_estimate_is_reproducible(counterexample_env):
    a = estimate_drift(counterexample_env, 300, 20, seed=123).to_dict()
    b = estimate_drift(counterexample_env, 300, 20, seed=123).to_dict()
    assert a == b
    assert set(a) >= {"seed", "generator_name", "nu_hat", "nu_stderr", "censored_count"}


def test_drift_estimate_domain(parity_env):
    with pytest.raises(ParameterDomainError):
        estimate_drift(parity_env, 0, 10, seed=0)
    with pytest.raises(ParameterDomainError):
        estimate_drift(parity_env, 10, 1, seed=0)


def test_drift_stderr_halves_with_four_times_replicas(parity_env):
    small = estimate_drift(parity_env, 400, 200, seed=6)
    large = estimate_drift(parity_env, 400, 800, seed=6)
    ratio = large.nu_stderr[0] / small.nu_stderr[0]
    assert 0.4 < ratio < 0.62


def test_counterexample_drift_estimate(counterexample_env):
    stats = estimate_drift(counterexample_env, 1000, 100, seed=2)
    assert np.all(np.abs(stats.z_scores([0.1, 0.7 / 3])) < 4)


def test_covariance_estimate_srw(srw):
    stats = estimate_covariance(srw, 1000, 400, seed=4, nu=[0.0, 0.0])
    assert stats.sigma_hat[0, 0] == pytest.approx(0.5, rel=0.25)
    assert stats.sigma_hat[1, 1] == pytest.approx(0.5, rel=0.25)
    assert abs(stats.sigma_hat[0, 1]) < 0.1


def test_hitting_probability_tilted(tilted_env):
    stats = hitting_probability(tilted_env, (1, 0), 5, 2000, seed=8)
    p, se = stats.extra["hitting_frequency"]
    # Уровни - асимметричное простое блуждание с q/p = exp(-0.6)
    r5 = math.exp(-3.0)
    assert abs(p - r5 / (1 + r5)) < 5 * max(se, 1e-3)
    assert p + 4 * se < 0.5
    assert stats.censored == 0
    assert stats.to_dict()["censored_count"] == 0


def test_hitting_sweep_decreases(tilted_env):
    table = hitting_sweep(tilted_env, (1, 0), [1, 3], 1000, seed=3)
    assert list(table["k"]) == [1, 3]
    expected = [1 / (1 + math.exp(0.6)), 1 / (1 + math.exp(1.8))]
    for (_, row), value in zip(table.iterrows(), expected):
        assert abs(row["estimate"] - value) < 5 * row["stderr"] + 1e-3
    assert table["estimate"].iloc[0] > table["estimate"].iloc[1]


def test_hitting_errors(tilted_env):
    with pytest.raises(ZeroGradientError):
        hitting_probability(tilted_env, (0, 0), 5, 10, seed=0)
    with pytest.raises(ParameterDomainError):
        hitting_probability(tilted_env, (1, 0), 0, 10, seed=0)
    with pytest.raises(ParameterDomainError):
        hitting_probability(tilted_env, (1,), 5, 10, seed=0)


def test_hitting_all_censored(srw):
    with pytest.raises(CensoredError):
        hitting_probability(srw, (1, 0), 5, 10, seed=0, max_steps=2)


def test_exit_probability_homogeneous():
    env = make_one_dimensional([0.7])
    assert exit_probability_1d_exact(env, 2, 0) == pytest.approx(49 / 58, abs=1e-14)
    assert exit_probability_absorbing(env, 2, 0) == pytest.approx(49 / 58, abs=1e-14)


def test_exit_probability_symmetric_is_linear():
    env = make_one_dimensional([0.5, 0.5])
    for start in range(-3, 4):
        assert exit_probability_1d_exact(env, 4, start) == pytest.approx((start + 4) / 8, abs=1e-14)


def test_exit_probability_matches_absorbing_oracle():
    rng = RngStream(77).generator()
    for _ in range(20):
        env = make_one_dimensional(rng.uniform(0.2, 0.8, size=int(rng.integers(1, 5))))
        K = int(rng.integers(1, 9))
        start = int(rng.integers(-K + 1, K))
        exact = exit_probability_1d_exact(env, K, start)
        assert exact == pytest.approx(exit_probability_absorbing(env, K, start), abs=1e-12)


def test_exit_probability_monte_carlo():
    env = make_one_dimensional([0.7, 0.45, 0.6])
    exact = exit_probability_1d_exact(env, 4, 1)
    estimate, se, censored = simulate_exit_1d(env, 4, 1, 4000, seed=12)
    assert censored == 0
    assert abs(estimate - exact) < 4 * se


def test_exit_probability_domain():
    env = make_one_dimensional([0.7])
    with pytest.raises(ParameterDomainError):
        exit_probability_1d_exact(env, 2, 2)
    with pytest.raises(ParameterDomainError):
        exit_probability_1d_exact(env, 0, 0)
    with pytest.raises(NotNearestNeighbourError):
        exit_probability_1d_exact(make_counterexample(2, 0.1), 2, 0)


def test_samplers_are_equivalent():
    env = make_random_environment(TorusDims((2, 2)), RngStream(10).generator())
    result = chi_square_equivalence(env, 10, 4000, seed=5)
    assert result["p_value"] > 0.001
    assert result["dof"] >= 1


@pytest.mark.slow
def test_parity_law_of_large_numbers_desk_scale(parity_env):
    stats = estimate_drift(parity_env, 10 ** 6, 100, seed=2024)
    assert abs(stats.z_scores([0.3])[0]) < 4


@pytest.mark.slow
@pytest.mark.parametrize("env_name, sigma", [("srw", [[0.5, 0.0], [0.0, 0.5]]), ("parity_env", [[0.9]])])
def test_central_limit_desk_scale(request, env_name, sigma):
    env = request.getfixturevalue(env_name)
    nu = [0.0, 0.0] if env_name == "srw" else [0.3]
    stats = estimate_covariance(env, 10 ** 4, 10 ** 4, seed=7, nu=nu, workers=4)
    sigma = np.array(sigma)
    np.testing.assert_allclose(np.diag(stats.sigma_hat), np.diag(sigma), rtol=0.1)
    off = stats.sigma_hat - np.diag(np.diag(stats.sigma_hat))
    assert np.all(np.abs(off) < 0.02)


@pytest.mark.slow
def test_hitting_inequality_desk_scale(tilted_env):
    stats = hitting_probability(tilted_env, (1, 0), 5, 10 ** 4, seed=99)
    p, se = stats.extra["hitting_frequency"]
    assert p + 4 * se < 0.5
    assert stats.censored_fraction < 0.01


@pytest.mark.slow
def test_samplers_equivalent_desk_scale():
    rng = RngStream(31).generator()
    for _ in range(5):
        dims = TorusDims(tuple(int(m) for m in rng.integers(1, 4, size=2)))
        env = make_random_environment(dims, rng)
        assert chi_square_equivalence(env, 10, 10 ** 5, seed=int(rng.integers(2 ** 32)))["p_value"] > 0.001
