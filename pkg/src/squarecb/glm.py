"""GLMtron oracles for generalized linear models ``sigma(<theta, x_a>)``.

Both variants are realizability-tailored: they control the prediction error
to the true regression function rather than adversarial square-loss regret.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .oracles import ConfigurationError, Oracle, OracleRegretBudget, _check_outcome, project_ball

GRID_POINTS = 10_000


@dataclass(frozen=True)
class LinkFunction:
    name: str
    sigma: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    derivative_floor: float = 0.0
    params: dict = field(default_factory=dict)

    def __call__(self, z):
        return self.sigma(z)

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


def validate_link(sigma, lo: float = -1.0, hi: float = 1.0, n: int = GRID_POINTS) -> None:
    """Reject links that leave [0, 1], decrease, or exceed slope 1 on a grid."""
    z = np.linspace(lo, hi, n)
    s = np.asarray(sigma(z), dtype=float)
    if np.any(s < 0) or np.any(s > 1):
        raise ConfigurationError("link must map into [0, 1]")
    ds = np.diff(s)
    if np.any(ds < -1e-12):
        raise ConfigurationError("link must be non-decreasing")
    if np.any(ds > np.diff(z) + 1e-12):
        raise ConfigurationError("link must be 1-Lipschitz")


def clipped_identity() -> LinkFunction:
    return LinkFunction("identity", lambda z: np.clip(z, 0.0, 1.0), 0.0)


def logistic() -> LinkFunction:
    # derivative on [-1, 1] is smallest at the endpoints
    floor = math.e / (1.0 + math.e) ** 2
    return LinkFunction("logistic", lambda z: 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float))), floor)


def affine(slope: float = 0.25, intercept: float = 0.5) -> LinkFunction:
    if not 0 < slope <= 1:
        raise ConfigurationError("affine slope must lie in (0, 1]")
    link = LinkFunction(
        "affine",
        lambda z: np.clip(intercept + slope * np.asarray(z, dtype=float), 0.0, 1.0),
        slope,
        {"slope": slope, "intercept": intercept},
    )
    validate_link(link)
    return link


def table_link(knots, values) -> LinkFunction:
    """Piecewise-linear link through ``(knots, values)``."""
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    link = LinkFunction(
        "table",
        lambda z: np.interp(z, knots, values),
        float(np.min(np.diff(values) / np.diff(knots))) if knots.size > 1 else 0.0,
        {"knots": knots.tolist(), "values": values.tolist()},
    )
    validate_link(link, knots[0], knots[-1])
    return link


def make_link(spec) -> LinkFunction:
    """Build a link from a name or a ``{"name": ..., ...}`` mapping."""
    if isinstance(spec, LinkFunction):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    if name == "identity":
        return clipped_identity()
    if name == "logistic":
        return logistic()
    if name == "affine":
        return affine(spec.get("slope", 0.25), spec.get("intercept", 0.5))
    if name == "table":
        return table_link(spec["knots"], spec["values"])
    raise ConfigurationError(f"unknown link {name!r}")


def _features(context, action, dim: int) -> np.ndarray:
    x = np.asarray(context[action], dtype=float)
    if x.shape != (dim,):
        raise ConfigurationError(f"feature shape {x.shape} does not match dim {dim}")
    if np.linalg.norm(x) > 1 + 1e-12:
        raise ValueError("feature norm exceeds 1")
    return x


class GLMtron(Oracle):
    """Projected pseudo-gradient descent with
    ``g = 2 (sigma(<theta, x>) - y) x``; step ``1/sqrt(T)`` by default."""

    def __init__(self, dim: int, link="identity", step: float | None = None, horizon: int | None = None):
        self.dim = int(dim)
        self.link = make_link(link)
        if step is None:
            if not horizon:
                raise ConfigurationError("GLMtron needs a step or a horizon")
            step = 1.0 / math.sqrt(horizon)
        if step <= 0:
            raise ConfigurationError("step must be positive")
        self.step = float(step)
        self.theta = np.zeros(self.dim)

    def predict(self, context, action) -> float:
        return float(self.link(self.theta @ _features(context, action, self.dim)))

    def predict_scores(self, context, n_actions: int) -> np.ndarray:
        X = np.asarray(context, dtype=float)
        if X.shape != (n_actions, self.dim):
            raise ConfigurationError(f"context shape {X.shape} != ({n_actions}, {self.dim})")
        return np.asarray(self.link(X @ self.theta), dtype=float)

    def step_on(self, x, y: float) -> None:
        y = _check_outcome(y)
        x = np.asarray(x, dtype=float)
        if np.linalg.norm(x) > 1 + 1e-12:
            raise ValueError("feature norm exceeds 1")
        g = 2.0 * (float(self.link(self.theta @ x)) - y) * x
        self.theta = project_ball(self.theta - self.step * g)

    def update(self, context, action, outcome: float) -> None:
        self.step_on(_features(context, action, self.dim), outcome)

    def budget(self, horizon: int) -> OracleRegretBudget:
        return OracleRegretBudget.glmtron(horizon)


def sigma_norm_projection(theta_tilde, sigma, radius: float = 1.0, tol: float = 1e-10) -> np.ndarray:
    """``argmin_{|v| <= radius} (v - theta_tilde)^T sigma (v - theta_tilde)``.

    Stationarity gives ``v(lam) = (sigma + lam I)^{-1} sigma theta_tilde`` and
    ``|v(lam)|`` decreases in ``lam``, so the multiplier is found by bisection.
    """
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    if np.linalg.norm(theta_tilde) <= radius:
        return theta_tilde.copy()
    evals, evecs = np.linalg.eigh(sigma)
    if evals.min() <= 0:
        raise FloatingPointError("sigma matrix is not positive definite")
    c = evecs.T @ theta_tilde

    def norm_at(lam):
        return np.linalg.norm(evals * c / (evals + lam))

    lo, hi = 0.0, 1.0
    while norm_at(hi) > radius:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if norm_at(mid) > radius:
            lo = mid
        else:
            hi = mid
    v = evecs @ (evals * c / (evals + hi))
    # theta_tilde is outside the ball, so the minimiser lies on the sphere;
    # bisection on lam leaves v slightly inside
    return v * (radius / np.linalg.norm(v))


class NewtonGLMtron(Oracle):
    """Online-Newton GLMtron: ``Sigma <- Sigma + x x^T``, a preconditioned
    pseudo-gradient step, then projection onto the unit ball in the
    ``Sigma``-norm.  Defaults ``step = 1/(2 c_sigma)`` and ``Sigma_0 = I``."""

    def __init__(
        self,
        dim: int,
        link="affine",
        c_sigma: float | None = None,
        step: float | None = None,
        init: float = 1.0,
    ):
        self.dim = int(dim)
        self.link = make_link(link)
        self.c_sigma = float(self.link.derivative_floor if c_sigma is None else c_sigma)
        if self.c_sigma <= 0:
            raise ConfigurationError("Newton GLMtron needs a positive derivative floor c_sigma")
        if init <= 0:
            raise ConfigurationError("init must be positive")
        self.step = float(step) if step is not None else 1.0 / (2.0 * self.c_sigma)
        self.init = float(init)
        self.theta = np.zeros(self.dim)
        self.sigma_matrix = self.init * np.eye(self.dim)

    predict = GLMtron.predict
    predict_scores = GLMtron.predict_scores

    def step_on(self, x, y: float) -> None:
        y = _check_outcome(y)
        x = np.asarray(x, dtype=float)
        if np.linalg.norm(x) > 1 + 1e-12:
            raise ValueError("feature norm exceeds 1")
        g = 2.0 * (float(self.link(self.theta @ x)) - y) * x
        self.sigma_matrix = self.sigma_matrix + np.outer(x, x)
        theta_tilde = self.theta - self.step * np.linalg.solve(self.sigma_matrix, g)
        self.theta = sigma_norm_projection(theta_tilde, self.sigma_matrix)

    def update(self, context, action, outcome: float) -> None:
        self.step_on(_features(context, action, self.dim), outcome)

    def budget(self, horizon: int) -> OracleRegretBudget:
        return OracleRegretBudget.newton_glm(self.dim, horizon, self.c_sigma)
