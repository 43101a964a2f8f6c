from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from squarecb.environments import BallEnvironment
from squarecb.hilbert import (
    action_probability,
    certificate_bound,
    expected_regret,
    exploration_split,
    hilbert_moments,
    hilbert_sample,
    run_squarecb_hilbert,
    theorem8_bound,
    tune_beta,
)
from squarecb.oracles import OracleRegretBudget

N_DRAWS = 100_000


def draws(yhat, beta, n=N_DRAWS, seed=0):
    rng = np.random.default_rng(seed)
    return np.array([hilbert_sample(yhat, beta, rng) for _ in range(n)])


def within_3_sigma(samples, expected):
    """Entrywise check of a sample mean against its expectation."""
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    # a zero-variance coordinate must match exactly
    return np.all(np.abs(mean - expected) <= 3 * se + 1e-12)


def random_ball(rng, d, radius=1.0):
    g = rng.standard_normal(d)
    return g / np.linalg.norm(g) * radius * rng.random() ** (1.0 / d)


class FixedVector:
    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)
        self.updates = 0

    def predict_vector(self, context=None):
        return self.v

    def update(self, context, action, outcome):
        self.updates += 1


def test_split_formula_and_large_norm_limit():
    alpha, u = exploration_split([0.5, 0.0], 0.1)
    assert alpha == pytest.approx(0.2)
    assert np.array_equal(u, [1.0, 0.0])
    alpha, _ = exploration_split([100.0, 0.0, 0.0], 0.1)
    assert alpha == pytest.approx(1e-3)
    assert exploration_split([0.01, 0.0], 0.1)[0] == 0.5
    with pytest.raises(ValueError):
        exploration_split([1.0], 0.0)


def test_zero_prediction_uses_fixed_fallback():
    alpha, u = exploration_split(np.zeros(3), 0.2)
    assert alpha == 0.5
    assert np.array_equal(u, [1.0, 0.0, 0.0])
    acts = draws(np.zeros(3), 0.2, n=20_000)
    exploit = np.all(acts == [-1.0, 0.0, 0.0], axis=1).mean()
    # exploit branch 1/2 plus the explore branch's 1/6 share of -e1
    assert abs(exploit - (0.5 + 0.5 / 6)) <= 3 * math.sqrt(0.58 * 0.42 / 20_000)


def test_action_frequency_monte_carlo():
    yhat, beta = np.array([0.5, 0.0]), 0.1
    acts = draws(yhat, beta)
    p = 0.8 + 0.2 / 4  # exploit branch plus the explore branch landing on -e1
    assert action_probability([-1.0, 0.0], 0.2, [1.0, 0.0]) == pytest.approx(p)
    freq = np.all(acts == [-1.0, 0.0], axis=1).mean()
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / N_DRAWS)
    # replay the branch variable: the exploit branch alone has probability 0.8
    rng = np.random.default_rng(0)
    u = np.array([rng.random(2)[0] for _ in range(N_DRAWS)])
    assert abs((u >= 0.2).mean() - 0.8) <= 3 * math.sqrt(0.16 / N_DRAWS)


def test_moments_hand_values():
    m = hilbert_moments([0.5, 0.0], 0.1)
    assert np.allclose(m.mean, [-0.8, 0.0])
    assert np.allclose(m.second_moment, np.diag([0.9, 0.1]))


def test_moments_match_monte_carlo():
    for yhat, beta in (([0.5, 0.0], 0.1), ([0.3, -0.4, 0.2], 0.25), ([1e-3, 0.0, 0.0], 0.2)):
        yhat = np.asarray(yhat)
        m = hilbert_moments(yhat, beta)
        acts = draws(yhat, beta, seed=1)
        assert within_3_sigma(acts, m.mean)
        outer = np.einsum("ni,nj->nij", acts, acts).reshape(N_DRAWS, -1)
        assert within_3_sigma(outer, m.second_moment.ravel())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(1e-4, 0.5))
def test_moment_invariants(seed, d, beta):
    rng = np.random.default_rng(seed)
    yhat = random_ball(rng, d)
    alpha, _ = exploration_split(yhat, beta)
    m = hilbert_moments(yhat, beta)
    assert np.trace(m.second_moment) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(m.second_moment).min() >= alpha / d - 1e-12
    if alpha == 0.5:
        assert np.linalg.eigvalsh(m.second_moment).min() >= 1 / (2 * d) - 1e-12
    for _ in range(10):
        a = hilbert_sample(yhat, beta, rng)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)


def test_tune_beta_values():
    b = OracleRegretBudget(0.0, "user_supplied")
    assert tune_beta(1, 100, b, math.exp(-1 / 8)) == pytest.approx(0.1, rel=1e-14)
    assert tune_beta(4, 100, b, 0.1) / tune_beta(1, 100, b, 0.1) == pytest.approx(2.0)
    assert tune_beta(3, 200, b, 0.1) / tune_beta(3, 100, b, 0.1) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ValueError):
        tune_beta(3, 0, b)


def test_bound_formula():
    assert theorem8_bound(3, 100, 2.0, 0.05) == pytest.approx(
        18 * math.sqrt(600) + 90 * math.sqrt(300 * math.log(20))
    )


def test_per_round_certificate_on_random_instances():
    rng = np.random.default_rng(8)
    worst = math.inf
    for _ in range(10_000):
        d = int(rng.integers(1, 7))
        yhat = random_ball(rng, d)
        fstar = random_ball(rng, d)
        beta = float(rng.uniform(1e-4, 0.5))
        worst = min(worst, certificate_bound(yhat, fstar, beta) - expected_regret(yhat, fstar, beta))
    assert worst >= -1e-9


def test_expected_regret_matches_sampling():
    yhat, fstar, beta = np.array([0.3, -0.2]), np.array([0.5, 0.1]), 0.2
    acts = draws(yhat, beta, seed=3)
    inst = acts @ fstar + np.linalg.norm(fstar)
    assert within_3_sigma(inst[:, None], np.array([expected_regret(yhat, fstar, beta)]))


def test_truth_oracle_with_tiny_beta_has_no_pseudo_regret():
    theta = np.array([0.3, -0.5, 0.2])
    env = BallEnvironment(theta, noise_scale=0.1)
    led = run_squarecb_hilbert(env, FixedVector(theta), 1e-12, 1000, seed=0)
    assert led.pseudo_regret == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(led.arms[0], -theta / np.linalg.norm(theta))


def test_long_oracle_vectors_are_rescaled_and_counted(caplog):
    env = BallEnvironment(np.array([0.3, 0.0]), noise_scale=0.0)
    orc = FixedVector([3.0, 4.0])
    led = run_squarecb_hilbert(env, orc, 0.1, 50, seed=0)
    assert led.n_clipped == 50
    assert orc.updates == 50
    assert "rescaled" in caplog.text
    assert all(np.linalg.norm(a) == pytest.approx(1.0) for a in led.arms)


def test_ledger_probabilities_are_exact():
    env = BallEnvironment(np.array([0.4, 0.2]), noise_scale=0.0)
    led = run_squarecb_hilbert(env, FixedVector([0.5, 0.0]), 0.1, 200, seed=2)
    assert set(np.round(led.p_chosen, 12)) <= {0.85, 0.05}
    assert np.all(np.diff(led.pseudo) >= -1e-15)
