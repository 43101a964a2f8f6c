"""Online square-loss regression oracles.

Every oracle follows the same predict-then-update protocol: ``predict`` is a
pure function of the current state, ``update`` performs one online step on
an observed ``(context, action, outcome)`` triple.  Finite-action linear
oracles read the per-action feature vector ``context[action]``; tabular
oracles read integer context indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

PROVENANCES = (
    "finite_class_2lnF",
    "vaw_dlogT",
    "ogd_sqrtT",
    "glmtron_sqrtT",
    "newton_glm_dlogT",
    "user_supplied",
)


class ConfigurationError(ValueError):
    """Oracle or feature configuration is inconsistent."""


class OracleExample(NamedTuple):
    context: Any
    action: Any
    outcome: float


@dataclass(frozen=True)
class OracleRegretBudget:
    """Analytical square-loss regret budget RegSq(T) consumed by tuning."""

    bound: float
    provenance: str = "user_supplied"

    def __post_init__(self):
        if not (self.bound >= 0 and math.isfinite(self.bound)):
            raise ValueError(f"regret budget must be finite and >= 0, got {self.bound}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown budget provenance {self.provenance!r}")

    @classmethod
    def finite_class(cls, size: int) -> "OracleRegretBudget":
        if size < 1:
            raise ValueError("class size must be >= 1")
        return cls(2.0 * math.log(size), "finite_class_2lnF")

    @classmethod
    def vaw(cls, dim: int, horizon: int) -> "OracleRegretBudget":
        return cls(dim * max(math.log(horizon / dim), 0.0), "vaw_dlogT")

    @classmethod
    def ogd(cls, horizon: int) -> "OracleRegretBudget":
        return cls(math.sqrt(horizon), "ogd_sqrtT")

    @classmethod
    def glmtron(cls, horizon: int) -> "OracleRegretBudget":
        return cls(math.sqrt(horizon), "glmtron_sqrtT")

    @classmethod
    def newton_glm(cls, dim: int, horizon: int, c_sigma: float) -> "OracleRegretBudget":
        if c_sigma <= 0:
            raise ValueError("c_sigma must be positive")
        return cls(dim * math.log(horizon) / c_sigma**2, "newton_glm_dlogT")


def _check_outcome(y: float, lo: float = 0.0, hi: float = 1.0) -> float:
    y = float(y)
    if not (lo <= y <= hi):
        raise ValueError(f"outcome {y} outside [{lo}, {hi}]")
    return y


class Oracle:
    """Base class; subclasses implement ``predict`` and ``update``."""

    def predict(self, context, action) -> float:
        raise NotImplementedError

    def predict_scores(self, context, n_actions: int) -> np.ndarray:
        return np.array([self.predict(context, a) for a in range(n_actions)])

    def update(self, context, action, outcome: float) -> None:
        raise NotImplementedError

    def learn(self, example: OracleExample) -> None:
        self.update(example.context, example.action, example.outcome)

    def budget(self, horizon: int) -> OracleRegretBudget:
        raise NotImplementedError


def feed(oracle: Oracle, examples: Iterable[OracleExample]) -> list[float]:
    """Run the online protocol and return the predictions made before each
    update."""
    preds = []
    for ex in examples:
        preds.append(oracle.predict(ex.context, ex.action))
        oracle.learn(ex)
    return preds


# -- aggregating algorithm -------------------------------------------------


def _logsumexp(a: np.ndarray, axis: int = 0) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def mixture_delta(log_probs: np.ndarray, values: np.ndarray, y: float, eta: float) -> np.ndarray:
    """-(1/eta) log E_{g~P} exp(-eta (g - y)^2).

    ``log_probs`` has shape (n,) and is normalised; ``values`` has shape
    (n,) or (n, k) for k query points sharing the posterior.
    """
    lp = log_probs if values.ndim == 1 else log_probs[:, None]
    return -_logsumexp(lp - eta * (values - y) ** 2, axis=0) / eta


def aggregating_substitution(delta0, delta1):
    """Substitution function for the square loss on [0, 1]:
    ``clip((1 + delta0 - delta1) / 2, 0, 1)``."""
    d0 = np.asarray(delta0, dtype=float)
    d1 = np.asarray(delta1, dtype=float)
    if not (np.all(np.isfinite(d0)) and np.all(np.isfinite(d1))):
        raise FloatingPointError("substitution inputs must be finite")
    out = np.clip((1.0 + d0 - d1) / 2.0, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


class AggregatingOracle(Oracle):
    """Vovk's aggregating algorithm over an enumerated finite class.

    ``values[f, x, a]`` is the prediction of hypothesis ``f`` at context index
    ``x`` and action ``a``.  The posterior is kept as unnormalised log
    weights ``-eta * sum_s (f(z_s) - y_s)^2`` under a uniform prior.
    """

    def __init__(self, values, eta: float = 0.5):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[0] < 1:
            raise ConfigurationError("values must have shape (n_hypotheses, n_contexts, n_actions)")
        if np.any(values < 0) or np.any(values > 1):
            raise ConfigurationError("hypothesis values must lie in [0, 1]")
        if eta <= 0:
            raise ConfigurationError("eta must be positive")
        self.values = values
        self.eta = float(eta)
        self.log_weights = np.zeros(values.shape[0])

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def log_posterior(self) -> np.ndarray:
        return self.log_weights - _logsumexp(self.log_weights)

    def _check_context(self, x) -> int:
        x = int(x)
        if not 0 <= x < self.values.shape[1]:
            raise ConfigurationError(f"context index {x} out of range")
        return x

    def predict_scores(self, context, n_actions: int | None = None) -> np.ndarray:
        x = self._check_context(context)
        if n_actions is not None and n_actions != self.values.shape[2]:
            raise ConfigurationError("action count does not match the class tables")
        v = self.values[:, x, :]
        # Weights are max-normalised and (v - y)^2 <= 1, so the mixtures are
        # bounded below by exp(-eta) and can be formed without log-space sums.
        w = np.exp(self.log_weights)
        w /= w.sum()
        m0 = w @ np.exp(-self.eta * v * v)
        m1 = w @ np.exp(-self.eta * (v - 1.0) ** 2)
        return np.clip((1.0 + np.log(m1 / m0) / self.eta) / 2.0, 0.0, 1.0)

    def predict(self, context, action) -> float:
        x = self._check_context(context)
        v = self.values[:, x, int(action)]
        lp = self.log_posterior()
        return aggregating_substitution(
            mixture_delta(lp, v, 0.0, self.eta), mixture_delta(lp, v, 1.0, self.eta)
        )

    def update(self, context, action, outcome: float) -> None:
        y = _check_outcome(outcome)
        x = self._check_context(context)
        self.log_weights -= self.eta * (self.values[:, x, int(action)] - y) ** 2
        # max-subtraction keeps the weights away from underflow
        self.log_weights -= self.log_weights.max()

    def budget(self, horizon: int) -> OracleRegretBudget:
        return OracleRegretBudget.finite_class(self.size)


# -- Vovk-Azoury-Warmuth ---------------------------------------------------


def vaw_direct_prediction(X_past, y_past, x, ridge: float = 1.0) -> float:
    """Unclipped VAW forecast by a dense solve:
    ``x^T (ridge I + sum_{s<=t} x_s x_s^T)^{-1} sum_{s<t} y_s x_s`` where the
    current ``x`` enters the Gram matrix."""
    x = np.asarray(x, dtype=float)
    X = np.asarray(X_past, dtype=float).reshape(-1, x.size)
    y = np.asarray(y_past, dtype=float)
    gram = ridge * np.eye(x.size) + X.T @ X + np.outer(x, x)
    return float(x @ np.linalg.solve(gram, X.T @ y))


class VAWForecaster(Oracle):
    """Vovk-Azoury-Warmuth forecaster over linear predictors ``<theta, x_a>``.

    The inverse Gram matrix is maintained with Sherman-Morrison rank-one
    updates; the query point is folded in at prediction time the same way.
    """

    def __init__(self, dim: int, ridge: float = 1.0, clip=(0.0, 1.0), outcome_range=(0.0, 1.0)):
        if dim < 1:
            raise ConfigurationError("dim must be >= 1")
        if ridge <= 0:
            raise ConfigurationError("ridge must be positive")
        self.dim = int(dim)
        self.ridge = float(ridge)
        self.clip = clip
        self.outcome_range = outcome_range
        self.inverse_gram = np.eye(self.dim) / self.ridge
        self.moment = np.zeros(self.dim)

    def _features(self, context, action) -> np.ndarray:
        # context None: the action vector is itself the feature (ball actions)
        x = np.asarray(action if context is None else context[action], dtype=float)
        if x.shape != (self.dim,):
            raise ConfigurationError(f"feature shape {x.shape} does not match dim {self.dim}")
        return x

    def raw_predict(self, x: np.ndarray) -> float:
        Ax = self.inverse_gram @ x
        return float(x @ self.inverse_gram @ self.moment) / (1.0 + float(x @ Ax))

    def predict(self, context, action) -> float:
        yhat = self.raw_predict(self._features(context, action))
        if self.clip is not None:
            yhat = min(max(yhat, self.clip[0]), self.clip[1])
        return yhat

    def predict_scores(self, context, n_actions: int) -> np.ndarray:
        X = np.asarray(context, dtype=float)
        if X.shape != (n_actions, self.dim):
            raise ConfigurationError(f"context shape {X.shape} != ({n_actions}, {self.dim})")
        AX = X @ self.inverse_gram
        num = AX @ self.moment
        den = 1.0 + np.einsum("ij,ij->i", AX, X)
        yhat = num / den
        if self.clip is not None:
            yhat = np.clip(yhat, *self.clip)
        return yhat

    def predict_vector(self, context=None) -> np.ndarray:
        """Ridge estimate ``(ridge I + sum x x^T)^{-1} sum y x``; the linear
        score vector used when actions themselves are the features."""
        return self.inverse_gram @ self.moment

    def update(self, context, action, outcome: float) -> None:
        y = _check_outcome(outcome, *self.outcome_range)
        x = self._features(context, action)
        Ax = self.inverse_gram @ x
        self.inverse_gram -= np.outer(Ax, Ax) / (1.0 + x @ Ax)
        self.moment += y * x

    def budget(self, horizon: int) -> OracleRegretBudget:
        return OracleRegretBudget.vaw(self.dim, horizon)


# -- projected online gradient descent ------------------------------------


def project_ball(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    n = np.linalg.norm(v)
    return v if n <= radius else v * (radius / n)


class ProjectedOGD(Oracle):
    """Online gradient descent on ``(<theta, x> - y)^2`` over the unit ball.

    Step size: ``step`` if given, else ``1/sqrt(horizon)`` when the horizon is
    known, else the anytime schedule ``1/sqrt(t)``.
    """

    def __init__(self, dim: int, step: float | None = None, horizon: int | None = None):
        if dim < 1:
            raise ConfigurationError("dim must be >= 1")
        if step is not None and step <= 0:
            raise ConfigurationError("step must be positive")
        self.dim = int(dim)
        self.step = step
        self.horizon = horizon
        self.theta = np.zeros(self.dim)
        self.t = 0

    def current_step(self) -> float:
        if self.step is not None:
            return float(self.step)
        if self.horizon:
            return 1.0 / math.sqrt(self.horizon)
        return 1.0 / math.sqrt(self.t + 1)

    def _features(self, context, action) -> np.ndarray:
        x = np.asarray(context[action], dtype=float)
        if x.shape != (self.dim,):
            raise ConfigurationError(f"feature shape {x.shape} does not match dim {self.dim}")
        return x

    def predict(self, context, action) -> float:
        return min(max(float(self.theta @ self._features(context, action)), 0.0), 1.0)

    def predict_scores(self, context, n_actions: int) -> np.ndarray:
        X = np.asarray(context, dtype=float)
        if X.shape != (n_actions, self.dim):
            raise ConfigurationError(f"context shape {X.shape} != ({n_actions}, {self.dim})")
        return np.clip(X @ self.theta, 0.0, 1.0)

    def update(self, context, action, outcome: float) -> None:
        y = _check_outcome(outcome)
        x = self._features(context, action)
        grad = 2.0 * (float(self.theta @ x) - y) * x
        self.theta = project_ball(self.theta - self.current_step() * grad)
        self.t += 1

    def budget(self, horizon: int) -> OracleRegretBudget:
        return OracleRegretBudget.ogd(horizon)


# -- epoch cover -----------------------------------------------------------


def epoch_schedule(horizon: int) -> list[int]:
    """Epoch start rounds ``ceil(e^(m-1))`` (1-based), duplicates dropped,
    truncated at the horizon."""
    starts: list[int] = []
    m = 0
    while True:
        tau = math.ceil(math.exp(m) - 1e-12)
        m += 1
        if tau > horizon:
            break
        if not starts or tau > starts[-1]:
            starts.append(tau)
    return starts


def empirical_distances(values: np.ndarray, center: int, weights: np.ndarray) -> np.ndarray:
    """Empirical L2 distance from row ``center`` to every row of ``values``;
    ``weights`` are the context frequencies of the sample (summing to 1)."""
    diff = values - values[center]
    return np.sqrt(np.maximum(diff**2 @ weights, 0.0))


def greedy_cover(values, sample: Sequence[int], scale: float) -> list[int]:
    """Farthest-point cover of the rows of ``values`` (shape (n, n_contexts))
    under empirical L2 distance on ``sample``; returns row indices."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        raise ConfigurationError("base class is empty")
    n_ctx = values.shape[1]
    weights = np.zeros(n_ctx)
    if len(sample):
        counts = np.bincount(np.asarray(sample, dtype=int), minlength=n_ctx)
        weights = counts / counts.sum()
    centers = [0]
    dist = empirical_distances(values, 0, weights)
    while dist.max() > scale:
        nxt = int(np.argmax(dist))
        centers.append(nxt)
        dist = np.minimum(dist, empirical_distances(values, nxt, weights))
    return centers


class EpochCoverOracle(Oracle):
    """Aggregating algorithm over an empirical cover that is rebuilt at
    geometrically spaced epoch starts.

    ``base_values[g, x]`` enumerates the base class on context indices.  The
    hypotheses in epoch ``m`` are the tensor products ``(x, a) -> g_a(x)``
    with each ``g_a`` in the current cover.  Their product-form posterior
    factorises over actions, so it is stored as one log-weight row per
    action; predictions equal those of the aggregating algorithm run on the
    explicit tensor class (see ``induced_class``).
    """

    def __init__(self, base_values, n_actions: int, scale: float, horizon: int, eta: float = 0.5):
        base_values = np.asarray(base_values, dtype=float)
        if base_values.ndim != 2 or base_values.shape[0] == 0:
            raise ConfigurationError("base class must be a non-empty (n_functions, n_contexts) table")
        if scale < 0:
            raise ConfigurationError("cover scale must be >= 0")
        self.base_values = base_values
        self.n_actions = int(n_actions)
        self.scale = float(scale)
        self.eta = float(eta)
        self.schedule = epoch_schedule(horizon)
        self.contexts: list[int] = []
        self.t = 1
        self.epoch = 0
        self.epoch_rebuild()

    def epoch_rebuild(self) -> None:
        """Cover the base class on the contexts seen so far and restart the
        inner aggregating posterior over the induced tensor class."""
        self.cover = greedy_cover(self.base_values, self.contexts, self.scale)
        self.cover_values = self.base_values[self.cover]
        self.log_weights = np.zeros((self.n_actions, len(self.cover)))

    def induced_class(self) -> np.ndarray:
        """Explicit tensor class tables, shape (|cover|^K, n_contexts, K)."""
        import itertools

        rows = []
        for combo in itertools.product(range(len(self.cover)), repeat=self.n_actions):
            rows.append(np.stack([self.cover_values[c] for c in combo], axis=1))
        return np.array(rows)

    def _log_post(self, a: int) -> np.ndarray:
        lw = self.log_weights[a]
        return lw - _logsumexp(lw)

    def predict(self, context, action) -> float:
        v = self.cover_values[:, int(context)]
        lp = self._log_post(int(action))
        return aggregating_substitution(
            mixture_delta(lp, v, 0.0, self.eta), mixture_delta(lp, v, 1.0, self.eta)
        )

    def update(self, context, action, outcome: float) -> None:
        y = _check_outcome(outcome)
        x, a = int(context), int(action)
        self.log_weights[a] -= self.eta * (self.cover_values[:, x] - y) ** 2
        self.log_weights[a] -= self.log_weights[a].max()
        self.contexts.append(x)
        self.t += 1
        if self.epoch + 1 < len(self.schedule) and self.t == self.schedule[self.epoch + 1]:
            self.epoch += 1
            self.epoch_rebuild()

    def budget(self, horizon: int) -> OracleRegretBudget:
        # the tensor cover never exceeds |G|^K members
        return OracleRegretBudget(
            2.0 * self.n_actions * math.log(self.base_values.shape[0]), "finite_class_2lnF"
        )
