"""SquareCB over the unit l2 ball of actions.

With probability ``1 - alpha`` play ``-yhat/|yhat|``, otherwise a uniformly
random signed basis vector, where ``alpha = min(beta/|yhat|, 1/2)``.
"""
from __future__ import annotations

import logging
import math
from typing import NamedTuple

import numpy as np

from .oracles import OracleRegretBudget
from .reduction import RegretLedger
from .rng import stream

log = logging.getLogger(__name__)


class MomentPair(NamedTuple):
    mean: np.ndarray
    second_moment: np.ndarray


def exploration_split(yhat, beta: float) -> tuple[float, np.ndarray]:
    """Return ``(alpha, direction)`` with ``direction = yhat/|yhat|``.

    For ``yhat = 0`` the direction is undefined; we use ``e_1`` (so the
    exploit action is ``-e_1``) and ``alpha = 1/2``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    yhat = np.asarray(yhat, dtype=float)
    n = float(np.linalg.norm(yhat))
    if n == 0.0:
        e1 = np.zeros(yhat.size)
        e1[0] = 1.0
        return 0.5, e1
    return min(beta / n, 0.5), yhat / n


def hilbert_sample(yhat, beta: float, rng: np.random.Generator) -> np.ndarray:
    alpha, direction = exploration_split(yhat, beta)
    # two uniforms per round regardless of branch keeps streams aligned
    u, v = rng.random(2)
    if u >= alpha:
        return -direction
    d = direction.size
    i = min(int(v * 2 * d), 2 * d - 1)
    a = np.zeros(d)
    a[i // 2] = 1.0 if i % 2 == 0 else -1.0
    return a


def action_probability(a, alpha: float, direction) -> float:
    """Probability mass the sampling rule puts on the exact vector ``a``."""
    a = np.asarray(a, dtype=float)
    p = (1.0 - alpha) if np.array_equal(a, -np.asarray(direction)) else 0.0
    if np.count_nonzero(a) == 1 and abs(a[np.flatnonzero(a)[0]]) == 1.0:
        p += alpha / (2 * a.size)
    return p


def hilbert_moments(yhat, beta: float) -> MomentPair:
    alpha, direction = exploration_split(yhat, beta)
    d = direction.size
    mean = -(1.0 - alpha) * direction
    second = (1.0 - alpha) * np.outer(direction, direction) + (alpha / d) * np.eye(d)
    return MomentPair(mean, second)


def expected_regret(yhat, fstar, beta: float) -> float:
    """Exact ``E<f*, a> - min_{|a|<=1} <f*, a>`` under the sampling rule."""
    fstar = np.asarray(fstar, dtype=float)
    return float(fstar @ hilbert_moments(yhat, beta).mean + np.linalg.norm(fstar))


def certificate_bound(yhat, fstar, beta: float) -> float:
    """``9 beta + (4 d / beta) |yhat - f*|^2_Sigma`` with Sigma the second
    moment of the action distribution."""
    yhat = np.asarray(yhat, dtype=float)
    diff = yhat - np.asarray(fstar, dtype=float)
    sigma = hilbert_moments(yhat, beta).second_moment
    return 9.0 * beta + 4.0 * yhat.size / beta * float(diff @ sigma @ diff)


def tune_beta(dim: int, horizon: int, budget: OracleRegretBudget, delta: float = 0.05) -> float:
    """``sqrt(d (RegSq + 8 ln(1/delta)) / T)``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return math.sqrt(dim * (budget.bound + 8.0 * math.log(1.0 / delta)) / horizon)


def theorem8_bound(dim, horizon, budget: float, delta) -> float:
    dt = dim * horizon
    return 18.0 * math.sqrt(dt * budget) + 90.0 * math.sqrt(dt * math.log(1.0 / delta))


def run_squarecb_hilbert(env, oracle, beta: float, horizon: int, seed: int) -> RegretLedger:
    """Ball-action loop.  The oracle must expose ``predict_vector(context)``
    returning the linear score vector and accept ``update(context, a, loss)``
    with the action vector as ``a``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ctx_rng = stream(seed, "context")
    noise_rng = stream(seed, "noise")
    act_rng = stream(seed, "action")
    ledger = RegretLedger()
    for t in range(1, horizon + 1):
        rnd = env.draw(t, ctx_rng, noise_rng)
        yhat = np.asarray(oracle.predict_vector(rnd.context), dtype=float)
        n = np.linalg.norm(yhat)
        if n > 1.0:
            ledger.n_clipped += 1
            yhat = yhat / n
        alpha, direction = exploration_split(yhat, beta)
        a = hilbert_sample(yhat, beta, act_rng)
        p = action_probability(a, alpha, direction)
        loss = rnd.loss(a)
        fnorm = float(np.linalg.norm(rnd.fstar))
        if fnorm > 0:
            best = -rnd.fstar / fnorm
        else:
            best = np.zeros_like(a)
        ledger.record(a, loss, loss - rnd.loss(best), float(rnd.fstar @ a) + fnorm, p)
        oracle.update(rnd.context, a, loss)
    if ledger.n_clipped:
        log.warning("rescaled oracle vectors with norm > 1 in %d rounds", ledger.n_clipped)
    return ledger
