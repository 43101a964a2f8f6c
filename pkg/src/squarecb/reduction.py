"""SquareCB: contextual bandits via online square-loss regression.

Each round the oracle scores every action, the greedy action ``b`` is the
lowest score, every other action gets probability
``1 / (mu + gamma * (score_a - score_b))`` and ``b`` takes the remainder.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .oracles import OracleRegretBudget
from .rng import stream

log = logging.getLogger(__name__)

LEDGER_COLUMNS = ("round", "arm", "loss", "realized_regret_cum", "pseudo_regret_cum", "p_chosen")


@dataclass(frozen=True)
class ExplorationParams:
    gamma: float
    mu: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")

    def mu_for(self, n_actions: int) -> float:
        mu = float(n_actions) if self.mu is None else float(self.mu)
        if mu < n_actions - 1:
            raise ValueError(f"mu={mu} < K-1={n_actions - 1} gives negative greedy mass")
        return mu


class ActionDistribution(NamedTuple):
    probs: np.ndarray
    greedy_arm: int


def inverse_gap_weights(scores: np.ndarray, gamma, mu) -> np.ndarray:
    """Vectorised inverse-gap weighting over the last axis.

    ``scores`` has shape (..., K); ``gamma`` and ``mu`` broadcast against the
    leading axes.  Ties for the minimum go to the lowest index.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        b = int(np.argmin(scores))
        p = 1.0 / (float(mu) + float(gamma) * (scores - scores[b]))
        p[b] = 0.0
        p[b] = 1.0 - p.sum()
        return p
    gamma = np.asarray(gamma, dtype=float)[..., None]
    mu = np.asarray(mu, dtype=float)[..., None]
    b = np.argmin(scores, axis=-1)
    gap = scores - np.take_along_axis(scores, b[..., None], axis=-1)
    p = 1.0 / (mu + gamma * gap)
    np.put_along_axis(p, b[..., None], 0.0, axis=-1)
    rest = 1.0 - p.sum(axis=-1, keepdims=True)
    np.put_along_axis(p, b[..., None], rest, axis=-1)
    return p


def inverse_gap_distribution(scores, params: ExplorationParams) -> ActionDistribution:
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size < 2:
        raise ValueError("need a score vector with at least two actions")
    mu = params.mu_for(scores.size)
    probs = inverse_gap_weights(scores, params.gamma, mu)
    return ActionDistribution(probs, int(np.argmin(scores)))


def tune_gamma_realizable(n_actions: int, horizon: int, budget: OracleRegretBudget, delta: float = 0.05) -> float:
    """``sqrt(K T / (RegSq + ln(2/delta)))``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(n_actions * horizon / (budget.bound + math.log(2.0 / delta)))


def tune_gamma_misspecified(
    n_actions: int, horizon: int, budget: OracleRegretBudget, eps: float, adversary: str = "stochastic"
) -> float:
    """``2 sqrt(K T / (RegSq + eps^2 T))`` for stochastic losses,
    ``sqrt(8 K T / (RegSq + eps^2 T))`` against an adaptive adversary."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    denom = budget.bound + eps**2 * horizon
    if denom <= 0:
        raise ValueError("RegSq + eps^2 T must be positive")
    ratio = n_actions * horizon / denom
    if adversary == "stochastic":
        return 2.0 * math.sqrt(ratio)
    if adversary == "adaptive":
        return math.sqrt(8.0 * ratio)
    raise ValueError(f"unknown adversary {adversary!r}")


def theorem1_bound(n_actions, horizon, budget: float, delta) -> float:
    kt = n_actions * horizon
    return 4.0 * math.sqrt(kt * budget) + 8.0 * math.sqrt(kt * math.log(2.0 / delta))


def theorem6_bound(n_actions, horizon, budget: float, eps) -> float:
    return 2.0 * math.sqrt(n_actions * horizon * budget) + eps * 4.0 * math.sqrt(n_actions) * horizon


def theorem7_bound(n_actions, horizon, budget: float, eps) -> float:
    return math.sqrt(2.0 * n_actions * horizon * budget) + eps * math.sqrt(2.0 * n_actions) * horizon


@dataclass
class RegretLedger:
    """Per-round trace of a bandit run with cumulative regrets."""

    arms: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    realized: list = field(default_factory=list)
    pseudo: list = field(default_factory=list)
    p_chosen: list = field(default_factory=list)
    n_clipped: int = 0

    def record(self, arm, loss: float, realized_step: float, pseudo_step: float, p: float) -> None:
        prev_r = self.realized[-1] if self.realized else 0.0
        prev_p = self.pseudo[-1] if self.pseudo else 0.0
        self.arms.append(arm)
        self.losses.append(float(loss))
        self.realized.append(prev_r + float(realized_step))
        self.pseudo.append(prev_p + float(pseudo_step))
        self.p_chosen.append(float(p))

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def realized_regret(self) -> float:
        return self.realized[-1] if self.realized else 0.0

    @property
    def pseudo_regret(self) -> float:
        return self.pseudo[-1] if self.pseudo else 0.0

    def rows(self):
        for t in range(len(self)):
            arm = self.arms[t]
            if isinstance(arm, (int, np.integer)):
                arm_s = str(int(arm))
            else:
                arm_s = ";".join(repr(float(v)) for v in arm)
            yield (
                t + 1,
                arm_s,
                repr(self.losses[t]),
                repr(self.realized[t]),
                repr(self.pseudo[t]),
                repr(self.p_chosen[t]),
            )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEDGER_COLUMNS)
            w.writerows(self.rows())


def read_ledger(path) -> RegretLedger:
    led = RegretLedger()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            arm = row["arm"]
            arm = int(arm) if ";" not in arm and "." not in arm else np.array([float(v) for v in arm.split(";")])
            led.arms.append(arm)
            led.losses.append(float(row["loss"]))
            led.realized.append(float(row["realized_regret_cum"]))
            led.pseudo.append(float(row["pseudo_regret_cum"]))
            led.p_chosen.append(float(row["p_chosen"]))
    return led


def sample_index(probs: np.ndarray, u: float) -> int:
    acc = 0.0
    last = len(probs) - 1
    for a in range(last):
        acc += probs[a]
        if u < acc:
            return a
    return last


def simulate(env, oracle, horizon: int, seed: int, policy: Callable[[np.ndarray, int], np.ndarray]) -> RegretLedger:
    """Generic finite-action loop: score, choose a distribution, sample,
    observe the played loss only, update the oracle with it."""
    K = env.n_actions
    ctx_rng = stream(seed, "context")
    noise_rng = stream(seed, "noise")
    act_rng = stream(seed, "action")
    ledger = RegretLedger()
    for t in range(1, horizon + 1):
        rnd = env.draw(t, ctx_rng, noise_rng)
        scores = np.asarray(oracle.predict_scores(rnd.context, K), dtype=float)
        if scores.min() < 0.0 or scores.max() > 1.0:
            ledger.n_clipped += 1
            scores = np.clip(scores, 0.0, 1.0)
        probs = policy(scores, t)
        a = sample_index(probs, act_rng.random())
        loss = rnd.losses[a]
        best = rnd.means.argmin()
        ledger.record(a, loss, loss - rnd.losses[best], rnd.means[a] - rnd.means[best], probs[a])
        oracle.update(rnd.context, a, loss)
    if ledger.n_clipped:
        log.warning("clipped out-of-range oracle scores in %d rounds", ledger.n_clipped)
    return ledger


def run_squarecb(env, oracle, params: ExplorationParams, horizon: int, seed: int) -> RegretLedger:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mu = params.mu_for(env.n_actions)
    gamma = params.gamma
    return simulate(env, oracle, horizon, seed, lambda s, t: inverse_gap_weights(s, gamma, mu))


def epsilon_greedy_schedule(t: int, n_actions: int, scale: float = 1.0) -> float:
    return min(1.0, scale * t ** (-1.0 / 3.0))


def run_epsilon_greedy(env, oracle, horizon: int, seed: int, scale: float = 1.0) -> RegretLedger:
    """Reference baseline: uniform exploration with probability
    ``min(1, scale * t^(-1/3))``, otherwise the oracle's greedy action."""
    K = env.n_actions

    def policy(scores, t):
        eps = epsilon_greedy_schedule(t, K, scale)
        p = np.full(K, eps / K)
        p[int(np.argmin(scores))] += 1.0 - eps
        return p

    return simulate(env, oracle, horizon, seed, policy)
