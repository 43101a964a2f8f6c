from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from squarecb.environments import (
    BallEnvironment,
    LinearEnvironment,
    Noise,
    TabularEnvironment,
    environment_from_dict,
    load_environment,
    make_finite_class_env,
    make_gap_family,
    make_misspecified_env,
)
from squarecb.glm import make_link
from squarecb.oracles import AggregatingOracle
from squarecb.reduction import ExplorationParams, run_squarecb
from squarecb.rng import STREAM_IDS, round_stream, stream


def rollout(env, T, seed):
    ctx, noise = stream(seed, "context"), stream(seed, "noise")
    return [env.draw(t, ctx, noise) for t in range(1, T + 1)]


# -- rng -------------------------------------------------------------------


def test_labelled_streams_are_distinct_and_reproducible():
    a = stream(3, "noise").random(5)
    assert np.array_equal(a, stream(3, "noise").random(5))
    assert not np.array_equal(a, stream(3, "action").random(5))
    assert not np.array_equal(a, stream(4, "noise").random(5))
    assert not np.array_equal(round_stream(3, "perturbation", 1).random(3), round_stream(3, "perturbation", 2).random(3))
    assert len(set(STREAM_IDS.values())) == len(STREAM_IDS)
    with pytest.raises(ValueError):
        stream(0, "unknown")


# -- finite class ----------------------------------------------------------


def test_finite_class_tables_in_unit_interval_and_truth_is_member_zero():
    env, tables = make_finite_class_env(5, 20, seed=0)
    assert tables.shape == (20, 10, 5)
    assert tables.min() >= 0 and tables.max() <= 1
    assert np.array_equal(env.means, tables[0])
    with pytest.raises(ValueError):
        make_finite_class_env(5, 0, seed=0)


def test_singleton_class_oracle_has_no_prediction_error():
    env, tables = make_finite_class_env(3, 1, seed=2)
    orc = AggregatingOracle(tables)
    for r in rollout(env, 200, 0):
        assert np.allclose(orc.predict_scores(r.context, 3), r.means, atol=1e-12)
        orc.update(r.context, 0, r.losses[0])


def test_bernoulli_means_monte_carlo():
    means = np.array([[0.1, 0.5, 0.93]])
    noise = Noise("bernoulli")
    rng = np.random.default_rng(0)
    samples = np.array([noise.sample(means[0], rng) for _ in range(100_000)])
    assert set(np.unique(samples)) <= {0.0, 1.0}
    se = np.sqrt(means[0] * (1 - means[0]) / 100_000)
    assert np.all(np.abs(samples.mean(axis=0) - means[0]) <= 3 * se)


def test_clipped_gaussian_keeps_mean():
    m = np.array([0.05, 0.5, 0.97])
    noise = Noise("clipped_gaussian", 0.2)
    rng = np.random.default_rng(1)
    s = np.array([noise.sample(m, rng) for _ in range(100_000)])
    se = s.std(axis=0, ddof=1) / math.sqrt(100_000)
    assert np.all(np.abs(s.mean(axis=0) - m) <= 3 * se + 1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["none", "bernoulli", "clipped_gaussian"]), st.floats(0, 2))
def test_loss_samples_stay_in_unit_interval(seed, kind, scale):
    rng = np.random.default_rng(seed)
    m = rng.random(6)
    m[0], m[1] = 0.0, 1.0
    s = Noise(kind, scale).sample(m, rng)
    assert s.min() >= 0 and s.max() <= 1


def test_unknown_noise_rejected():
    with pytest.raises(ValueError):
        Noise("laplace")


def test_context_schedules_reproducible_from_seed():
    env, _ = make_finite_class_env(4, 3, seed=1)
    a = [r.context for r in rollout(env, 100, 5)]
    assert a == [r.context for r in rollout(env, 100, 5)]
    assert a != [r.context for r in rollout(env, 100, 6)]
    scripted = TabularEnvironment(env.means, env.noise, ("script", [2, 0, 1]))
    assert [r.context for r in rollout(scripted, 6, 0)] == [2, 0, 1, 2, 0, 1]
    blocks = TabularEnvironment(env.means, env.noise, ("blocks", 3))
    assert [r.context for r in rollout(blocks, 7, 0)] == [0, 0, 0, 1, 1, 1, 2]


def test_serialized_instance_replays_identically(tmp_path):
    env, tables = make_finite_class_env(3, 4, seed=7, noise=Noise("clipped_gaussian", 0.2))
    env.save(tmp_path / "env.json")
    back = load_environment(tmp_path / "env.json")
    for r1, r2 in zip(rollout(env, 50, 0), rollout(back, 50, 0)):
        assert r1.context == r2.context
        assert np.array_equal(r1.losses, r2.losses)
    led1 = run_squarecb(env, AggregatingOracle(tables), ExplorationParams(9.0), 100, 1)
    led2 = run_squarecb(back, AggregatingOracle(tables), ExplorationParams(9.0), 100, 1)
    assert led1.arms == led2.arms


# -- misspecification ------------------------------------------------------


def test_zero_misspecification_is_identity():
    env, _ = make_finite_class_env(4, 5, seed=0)
    mis = make_misspecified_env(env, 0.0, 3)
    assert np.array_equal(mis.means, env.means)
    assert np.array_equal(mis.model, env.model)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 0.25))
def test_perturbation_bounded_by_eps(seed, eps):
    env, _ = make_finite_class_env(4, 5, seed=seed % 1000)
    mis = make_misspecified_env(env, eps, seed)
    assert np.max(np.abs(mis.means - env.means)) <= eps
    assert mis.means.min() >= 0 and mis.means.max() <= 1
    varying = make_misspecified_env(env, eps, seed, time_varying=True)
    for t in (1, 2, 50):
        m = varying.means_at(1, t)
        assert np.max(np.abs(m - env.means[1])) <= eps + 1e-15
        assert np.array_equal(m, varying.means_at(1, t))


def test_misspecification_level_validated():
    env, _ = make_finite_class_env(4, 5, seed=0)
    with pytest.raises(ValueError):
        make_misspecified_env(env, 0.3, 0)
    with pytest.raises(ValueError):
        make_misspecified_env(env, -0.1, 0)


def test_misspecified_round_trip(tmp_path):
    env, _ = make_finite_class_env(4, 5, seed=0)
    mis = make_misspecified_env(env, 0.1, 3, time_varying=True)
    back = environment_from_dict(mis.to_dict())
    assert np.array_equal(back.means_at(2, 17), mis.means_at(2, 17))


# -- gap family ------------------------------------------------------------


def test_gap_family_values_at_quarter_gap():
    fam = make_gap_family(3200, 0.25)
    assert fam.n_contexts == 80 and fam.horizon == 3200 and fam.block_length == 40
    assert fam.tables.shape == (81, 80, 2)
    f3 = fam.tables[3]
    assert f3[2, 1] == 0.0  # special context of instance 3
    others = np.delete(np.arange(80), 2)
    assert np.all(f3[others, 0] == 0.25) and np.all(f3[others, 1] == 0.5)
    assert f3[2, 0] == 0.25


def test_small_gap_family_schedule():
    fam = make_gap_family(32)
    assert fam.n_contexts == 8 and fam.block_length == 4
    # contexts are stored 0-based; the one-based labels read 1,1,1,1,2,2,2,2,...
    assert (fam.schedule() + 1).tolist() == [j for j in range(1, 9) for _ in range(4)]
    env = fam.environment(0)
    assert [r.context for r in rollout(env, 32, 0)] == fam.schedule().tolist()


def test_gap_family_pads_horizon():
    fam = make_gap_family(33)
    assert fam.n_contexts == 8 and fam.horizon == 40


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.25])
def test_every_instance_has_uniform_gap(delta):
    fam = make_gap_family(200, delta)
    sorted_vals = np.sort(fam.tables, axis=2)
    assert np.allclose(sorted_vals[..., 1] - sorted_vals[..., 0], delta, atol=1e-15)


def test_best_action_flips_only_at_special_context():
    fam = make_gap_family(200)
    n = fam.n_contexts
    base_best = fam.environment(0).best_actions()
    assert np.all(base_best == 0)
    for i in range(1, n + 1):
        best = fam.environment(i).best_actions()
        assert best[i - 1] == 1
        assert np.all(np.delete(best, i - 1) == 0)
        # f_0 and f_i agree everywhere before the special context
        assert np.array_equal(fam.tables[0, : i - 1], fam.tables[i, : i - 1])


def test_gap_family_is_noiseless_and_rejects_large_gap():
    fam = make_gap_family(50)
    for r in rollout(fam.environment(2), 50, 0):
        assert np.array_equal(r.losses, r.means)
    with pytest.raises(ValueError):
        make_gap_family(50, 0.3)
    with pytest.raises(ValueError):
        make_gap_family(50, 0.0)


# -- linear and ball -------------------------------------------------------


def test_linear_environment_features_and_means():
    theta = np.array([1 / math.sqrt(2), 0.4, -0.3])
    env = LinearEnvironment(theta, 4, make_link("identity"), Noise("clipped_gaussian", 0.1), bias=True)
    for r in rollout(env, 200, 0):
        assert r.context.shape == (4, 3)
        assert np.all(np.linalg.norm(r.context, axis=1) <= 1 + 1e-12)
        assert np.allclose(r.means, r.context @ theta)
        assert r.means.min() >= 0 and r.means.max() <= 1
    with pytest.raises(ValueError):
        LinearEnvironment(np.array([1.0, 1.0]), 2)


def test_ball_environment_noise_in_ball():
    env = BallEnvironment(np.array([0.3, 0.4, 0.0]), noise_scale=0.2)
    for r in rollout(env, 300, 1):
        assert np.linalg.norm(r.noise) <= 0.2 + 1e-12
        assert np.array_equal(r.fstar, env.theta_star)
    back = environment_from_dict(env.to_dict())
    assert np.array_equal(back.theta_star, env.theta_star)
