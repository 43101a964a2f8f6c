"""Ground-truth contextual bandit instances.

An environment produces one :class:`Round` per time step from two labelled
generators (contexts and noise).  ``Round.means`` are the true conditional
mean losses and ``Round.losses`` a full sampled loss vector; the learner only
ever sees the entry it plays, the rest feeds regret accounting.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from .glm import LinkFunction, make_link
from .rng import round_stream, stream

NOISE_KINDS = ("none", "bernoulli", "clipped_gaussian")


class Round(NamedTuple):
    context: Any
    means: np.ndarray
    losses: np.ndarray


@dataclass(frozen=True)
class Noise:
    """Loss noise with mean equal to the supplied means.

    ``clipped_gaussian`` clips a centred Gaussian symmetrically to
    ``[-r, r]`` with ``r = min(m, 1 - m)``, which keeps samples in [0, 1]
    without moving the mean.
    """

    kind: str = "bernoulli"
    scale: float = 0.1

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")

    def sample(self, means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "none":
            return means.copy()
        if self.kind == "bernoulli":
            return (rng.random(means.shape) < means).astype(float)
        r = np.minimum(means, 1.0 - means)
        return means + np.clip(self.scale * rng.standard_normal(means.shape), -r, r)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale}


class Environment:
    n_actions: int

    def draw(self, t: int, ctx_rng, noise_rng) -> Round:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


@dataclass
class TabularEnvironment(Environment):
    """Enumerated contexts with a mean-loss table ``means[x, a]``.

    ``model`` is the class member used as regression target (equal to
    ``means`` when realizable).  ``schedule`` selects contexts:
    ``("iid", probs)``, ``("blocks", block_length)`` or ``("script", seq)``.
    ``perturbation`` optionally adds a per-round table (time-varying
    misspecification) drawn from ``round_stream(seed, "perturbation", t)``.
    """

    means: np.ndarray
    noise: Noise = field(default_factory=Noise)
    schedule: tuple = ("iid", None)
    model: np.ndarray | None = None
    perturbation: dict | None = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        if self.means.ndim != 2:
            raise ValueError("means must be (n_contexts, n_actions)")
        if np.any(self.means < 0) or np.any(self.means > 1):
            raise ValueError("mean losses must lie in [0, 1]")
        if self.model is None:
            self.model = self.means
        self.model = np.asarray(self.model, dtype=float)
        kind = self.schedule[0]
        if kind not in ("iid", "blocks", "script"):
            raise ValueError(f"unknown context schedule {kind!r}")

    @property
    def n_contexts(self) -> int:
        return self.means.shape[0]

    @property
    def n_actions(self) -> int:
        return self.means.shape[1]

    def context_at(self, t: int, rng) -> int:
        kind, arg = self.schedule
        if kind == "iid":
            if arg is None:
                return int(rng.integers(self.n_contexts))
            return int(rng.choice(self.n_contexts, p=np.asarray(arg)))
        if kind == "blocks":
            return min((t - 1) // int(arg), self.n_contexts - 1)
        seq = arg
        return int(seq[(t - 1) % len(seq)])

    def means_at(self, x: int, t: int) -> np.ndarray:
        m = self.means[x]
        if self.perturbation is not None:
            p = self.perturbation
            u = round_stream(p["seed"], "perturbation", t).uniform(-p["eps"], p["eps"], self.n_actions)
            m = np.clip(self.model[x] + u, 0.0, 1.0)
        return m

    def draw(self, t, ctx_rng, noise_rng) -> Round:
        x = self.context_at(t, ctx_rng)
        m = self.means_at(x, t)
        return Round(x, m, self.noise.sample(m, noise_rng))

    def best_actions(self) -> np.ndarray:
        return np.argmin(self.means, axis=1)

    def to_dict(self) -> dict:
        kind, arg = self.schedule
        return {
            "kind": "tabular",
            "means": self.means.tolist(),
            "model": self.model.tolist(),
            "noise": self.noise.to_dict(),
            "schedule": [kind, np.asarray(arg).tolist() if arg is not None else None],
            "perturbation": self.perturbation,
        }


@dataclass
class LinearEnvironment(Environment):
    """``f*(x, a) = link(<theta_star, x_a>)`` with fresh per-action features
    each round, drawn uniformly from the unit ball.  With ``bias`` the
    features are ``(1, z)/sqrt(2)``, so an identity link with
    ``theta_star = (1/sqrt(2), w)``, ``|w| <= 1/sqrt(2)`` stays in [0, 1]."""

    theta_star: np.ndarray
    n_actions: int
    link: LinkFunction = field(default_factory=lambda: make_link("identity"))
    noise: Noise = field(default_factory=lambda: Noise("clipped_gaussian", 0.1))
    bias: bool = False

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        self.link = make_link(self.link)
        if np.linalg.norm(self.theta_star) > 1 + 1e-12:
            raise ValueError("theta_star must lie in the unit ball")

    @property
    def dim(self) -> int:
        return self.theta_star.size

    def features(self, rng) -> np.ndarray:
        k = self.dim - 1 if self.bias else self.dim
        g = rng.standard_normal((self.n_actions, k))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        g *= rng.random((self.n_actions, 1)) ** (1.0 / k)
        if self.bias:
            g = np.hstack([np.ones((self.n_actions, 1)), g]) / math.sqrt(2.0)
        return g

    def draw(self, t, ctx_rng, noise_rng) -> Round:
        X = self.features(ctx_rng)
        m = np.clip(np.asarray(self.link(X @ self.theta_star), dtype=float), 0.0, 1.0)
        return Round(X, m, self.noise.sample(m, noise_rng))

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "theta_star": self.theta_star.tolist(),
            "n_actions": self.n_actions,
            "link": self.link.to_dict(),
            "noise": self.noise.to_dict(),
            "bias": self.bias,
        }


class BallRound(NamedTuple):
    context: Any
    fstar: np.ndarray
    noise: np.ndarray

    def loss(self, a) -> float:
        return float((self.fstar + self.noise) @ a)


@dataclass
class BallEnvironment(Environment):
    """Unit-ball actions with constant ``f*(x) = theta_star`` and linear loss
    ``<theta_star + xi_t, a>``; ``xi_t`` is uniform in the ball of radius
    ``noise_scale``.  Losses therefore lie in ``[-(1+s), 1+s]``."""

    theta_star: np.ndarray
    noise_scale: float = 0.1

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if np.linalg.norm(self.theta_star) > 1 + 1e-12:
            raise ValueError("theta_star must lie in the unit ball")

    @property
    def dim(self) -> int:
        return self.theta_star.size

    def draw(self, t, ctx_rng, noise_rng) -> BallRound:
        d = self.dim
        xi = np.zeros(d)
        if self.noise_scale > 0:
            g = noise_rng.standard_normal(d)
            xi = g / np.linalg.norm(g) * self.noise_scale * noise_rng.random() ** (1.0 / d)
        return BallRound(None, self.theta_star, xi)

    def to_dict(self) -> dict:
        return {"kind": "ball", "theta_star": self.theta_star.tolist(), "noise_scale": self.noise_scale}


def environment_from_dict(d: dict) -> Environment:
    kind = d["kind"]
    if kind == "tabular":
        sched = d.get("schedule") or ["iid", None]
        return TabularEnvironment(
            np.array(d["means"]),
            Noise(**d.get("noise", {})),
            (sched[0], sched[1]),
            np.array(d["model"]) if d.get("model") is not None else None,
            d.get("perturbation"),
        )
    if kind == "linear":
        return LinearEnvironment(
            np.array(d["theta_star"]),
            d["n_actions"],
            make_link(d.get("link", "identity")),
            Noise(**d.get("noise", {})),
            d.get("bias", False),
        )
    if kind == "ball":
        return BallEnvironment(np.array(d["theta_star"]), d.get("noise_scale", 0.1))
    raise ValueError(f"unknown environment kind {kind!r}")


def load_environment(path) -> Environment:
    return environment_from_dict(json.loads(Path(path).read_text()))


# -- instance generators ---------------------------------------------------


def make_finite_class_env(
    n_actions: int,
    class_size: int,
    seed: int,
    n_contexts: int = 10,
    noise: Noise | None = None,
) -> tuple[TabularEnvironment, np.ndarray]:
    """Random finite class of [0, 1] tables over enumerated contexts; member
    0 is the truth.  Returns ``(env, tables)`` with tables of shape
    ``(class_size, n_contexts, n_actions)``."""
    if class_size < 1:
        raise ValueError("class_size must be >= 1")
    rng = stream(seed, "instance")
    tables = rng.random((class_size, n_contexts, n_actions))
    env = TabularEnvironment(tables[0], noise or Noise("bernoulli"))
    return env, tables


def make_misspecified_env(
    base: TabularEnvironment, eps: float, perturbation_seed: int, time_varying: bool = False
) -> TabularEnvironment:
    """True means ``clip(f* + u, 0, 1)`` with ``|u| <= eps``; the class member
    ``f*`` stays the regression model."""
    if not 0 <= eps <= 0.25:
        raise ValueError("eps must lie in [0, 1/4]")
    if eps == 0:
        return TabularEnvironment(base.means, base.noise, base.schedule, base.model)
    if time_varying:
        return TabularEnvironment(
            base.model, base.noise, base.schedule, base.model,
            {"seed": int(perturbation_seed), "eps": float(eps)},
        )
    u = stream(perturbation_seed, "perturbation").uniform(-eps, eps, base.model.shape)
    return TabularEnvironment(np.clip(base.model + u, 0.0, 1.0), base.noise, base.schedule, base.model)


@dataclass
class GapInstanceFamily:
    """Two-action family ``f_0, ..., f_N`` over contexts ``0..N-1`` served in
    N consecutive blocks.  ``f_i`` (i >= 1) flips the best action at context
    ``i - 1`` only; every instance is noiseless with uniform gap ``delta``."""

    horizon: int
    n_contexts: int
    delta: float
    tables: np.ndarray

    @property
    def block_length(self) -> int:
        return self.horizon // self.n_contexts

    def schedule(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_contexts), self.block_length)

    def environment(self, i: int) -> TabularEnvironment:
        return TabularEnvironment(self.tables[i], Noise("none"), ("blocks", self.block_length))


def make_gap_family(horizon: int, delta: float = 0.25) -> GapInstanceFamily:
    if not 0 < delta <= 0.25:
        raise ValueError("gap delta must lie in (0, 1/4]")
    n = max(1, round(math.sqrt(2 * horizon)))
    horizon = math.ceil(horizon / n) * n
    base = np.empty((n, 2))
    base[:, 0] = 0.5 - delta
    base[:, 1] = 0.5
    tables = np.repeat(base[None], n + 1, axis=0)
    for i in range(1, n + 1):
        tables[i, i - 1, 1] = 0.5 - 2 * delta
    return GapInstanceFamily(horizon, n, delta, tables)
