"""Numerical checks of the per-round minimax game behind SquareCB.

For scores ``yhat``, truth ``fstar``, comparator ``astar`` and action
distribution ``p`` the per-round objective is

    sum_a p_a [(fstar_a - fstar_astar) - (gamma/4) (yhat_a - fstar_a)^2].

Inverse-gap weighting with ``mu = K`` keeps it below ``2K/gamma``; an
adversary can always force at least ``(1 - 1/K)/gamma``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .reduction import inverse_gap_weights

MAX_GRID_EVALUATIONS = 50_000_000


def per_round_objective(yhat, fstar, astar, gamma, p):
    """Objective value; all array arguments may carry leading batch axes."""
    yhat = np.asarray(yhat, dtype=float)
    fstar = np.asarray(fstar, dtype=float)
    p = np.asarray(p, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    astar = np.asarray(astar, dtype=int)
    f_best = np.take_along_axis(fstar, astar[..., None], axis=-1)
    gap = fstar - f_best
    g = gamma[..., None] if gamma.ndim else gamma
    return np.sum(p * (gap - g / 4.0 * (yhat - fstar) ** 2), axis=-1)


def worst_case_objective(yhat, p, gamma):
    """Exact ``max_{fstar in [0,1]^K, astar}`` of the objective.

    For fixed ``astar`` the objective separates across coordinates into
    concave quadratics in ``fstar_a``, each maximised by clipping its
    stationary point: ``yhat_a + 2/gamma`` off the comparator and
    ``yhat_a - 2(1 - p_a)/(gamma p_a)`` on it.  Returns ``(value, fstar,
    astar)`` for the maximising pair (batched over leading axes).
    """
    yhat = np.asarray(yhat, dtype=float)
    p = np.asarray(p, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    g = gamma[..., None] if gamma.ndim else gamma
    K = yhat.shape[-1]
    f_off = np.clip(yhat + 2.0 / g, 0.0, 1.0)
    off = p * (f_off - g / 4.0 * (yhat - f_off) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        f_on = np.where(p > 0, yhat - 2.0 * (1.0 - p) / (g * p), 0.0)
    f_on = np.clip(f_on, 0.0, 1.0)
    on = p * (f_on - g / 4.0 * (yhat - f_on) ** 2) - f_on
    # value with comparator a: sum_{b != a} off_b + on_a
    vals = off.sum(axis=-1, keepdims=True) - off + on
    astar = np.argmax(vals, axis=-1)
    value = np.take_along_axis(vals, astar[..., None], axis=-1)[..., 0]
    fstar = np.where(np.arange(K) == astar[..., None], f_on, f_off)
    return value, fstar, astar


def lower_bound_instance(p, gamma: float):
    """Adversarial choice against ``p`` at ``yhat = 0``: comparator is the
    least likely action with loss 0, all others get ``2/gamma``."""
    if gamma < 2:
        raise ValueError("construction needs gamma >= 2")
    p = np.asarray(p, dtype=float)
    K = p.size
    astar = int(np.argmin(p))
    fstar = np.full(K, 2.0 / gamma)
    fstar[astar] = 0.0
    return np.zeros(K), fstar, astar


@dataclass
class CertificateReport:
    trials: int
    max_objective: float
    certificate: bool
    violations: list = field(default_factory=list)
    max_normalized_objective: float = -math.inf
    min_slack: float = math.inf

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def verify_certificate(
    trials: int,
    k_range=(2, 10),
    gamma_range=(1.0, 1000.0),
    mu_factor: float = 1.0,
    seed: int = 0,
    batch: int = 200_000,
    worst_case: bool = False,
    tol: float = 1e-9,
) -> CertificateReport:
    """Sample instances uniformly (K uniform in ``k_range``, gamma log-uniform
    in ``gamma_range``, ``yhat, fstar`` uniform in [0,1]^K, comparator the
    argmin of ``fstar``) and check ``objective <= 2K/gamma + tol`` with the
    inverse-gap distribution at ``mu = mu_factor * K``.  With ``worst_case``
    the sampled ``fstar`` is replaced by the exact maximiser."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    ks = rng.integers(k_range[0], k_range[1] + 1, size=trials)
    report = CertificateReport(trials, -math.inf, True)
    lg0, lg1 = math.log(gamma_range[0]), math.log(gamma_range[1])
    for K in range(k_range[0], k_range[1] + 1):
        n_k = int(np.sum(ks == K))
        done = 0
        while done < n_k:
            n = min(batch, n_k - done)
            done += n
            gamma = np.exp(rng.uniform(lg0, lg1, n))
            yhat = rng.random((n, K))
            p = inverse_gap_weights(yhat, gamma, mu_factor * K)
            if worst_case:
                obj, fstar, astar = worst_case_objective(yhat, p, gamma)
            else:
                fstar = rng.random((n, K))
                astar = np.argmin(fstar, axis=-1)
                obj = per_round_objective(yhat, fstar, astar, gamma, p)
            cert = 2.0 * K / gamma
            report.max_objective = max(report.max_objective, float(obj.max()))
            report.max_normalized_objective = max(report.max_normalized_objective, float((obj / cert).max()))
            report.min_slack = min(report.min_slack, float((cert - obj).min()))
            bad = np.flatnonzero(obj > cert + tol)
            for i in bad[:20]:
                report.violations.append(
                    {
                        "K": K,
                        "gamma": float(gamma[i]),
                        "yhat": yhat[i].tolist(),
                        "fstar": np.asarray(fstar[i]).tolist(),
                        "astar": int(astar[i]),
                        "objective": float(obj[i]),
                    }
                )
            if bad.size:
                report.certificate = False
    return report


def simplex_grid(K: int, step: float) -> np.ndarray:
    n = round(1.0 / step)
    if not math.isclose(n * step, 1.0):
        raise ValueError("simplex step must divide 1")
    pts = [c for c in itertools.product(range(n + 1), repeat=K - 1) if sum(c) <= n]
    return np.array([[*c, n - sum(c)] for c in pts], dtype=float) / n


def estimate_val(gamma: float, K: int, grid_step: float, simplex_step: float = 0.1) -> float:
    """Grid estimate of the per-round minimax value.

    Outer max over ``yhat`` on a regular grid of [0,1]^K; inner min over
    candidate distributions (the inverse-gap distribution for that ``yhat``
    plus a regular simplex grid); the max over ``fstar, astar`` is exact.
    """
    n = round(1.0 / grid_step)
    if not math.isclose(n * grid_step, 1.0):
        raise ValueError("grid step must divide [0, 1] evenly")
    cands = simplex_grid(K, simplex_step)
    n_y = (n + 1) ** K
    if n_y * (cands.shape[0] + 1) > MAX_GRID_EVALUATIONS:
        raise MemoryError(
            f"grid of {n_y} score vectors x {cands.shape[0] + 1} distributions exceeds the resource guard"
        )
    axis = np.linspace(0.0, 1.0, n + 1)
    best = -math.inf
    for yhat in itertools.product(axis, repeat=K):
        yhat = np.array(yhat)
        p_all = np.vstack([inverse_gap_weights(yhat, gamma, K), cands])
        vals, _, _ = worst_case_objective(np.broadcast_to(yhat, p_all.shape), p_all, np.full(p_all.shape[0], gamma))
        best = max(best, float(vals.min()))
    return best
