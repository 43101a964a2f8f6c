"""Experiment configuration, seeded replication and reporting.

A config is one JSON document (``schema_version`` 1)::

    {
      "schema_version": 1,
      "name": "finite-k5",
      "algorithm": "squarecb",            # | squarecb_hilbert | epsilon_greedy_baseline
      "horizon": 10000,
      "seeds": [0, 1, 2],
      "delta": 0.05,
      "tuning": {"rule": "theorem1"},     # theorem6 | theorem7 | theorem8 | manual
      "environment": {"kind": "finite_class", "n_actions": 5, "class_size": 20},
      "oracle": {"kind": "aggregating"},
      "budget": null,                     # optional RegSq override
      "output_dir": "runs/finite-k5"
    }

Each seed writes ``ledger_seed<seed>.csv``; the run writes ``summary.json``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .environments import (
    BallEnvironment,
    LinearEnvironment,
    Noise,
    environment_from_dict,
    load_environment,
    make_finite_class_env,
    make_gap_family,
    make_misspecified_env,
)
from .glm import GLMtron, NewtonGLMtron, make_link
from .hilbert import run_squarecb_hilbert, theorem8_bound, tune_beta
from .oracles import (
    AggregatingOracle,
    ConfigurationError,
    EpochCoverOracle,
    OracleRegretBudget,
    ProjectedOGD,
    VAWForecaster,
)
from .reduction import (
    ExplorationParams,
    run_epsilon_greedy,
    run_squarecb,
    theorem1_bound,
    theorem6_bound,
    theorem7_bound,
    tune_gamma_misspecified,
    tune_gamma_realizable,
)
from .rng import stream

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ALGORITHMS = ("squarecb", "squarecb_hilbert", "epsilon_greedy_baseline")
TUNING_RULES = ("theorem1", "theorem6", "theorem7", "theorem8", "manual")
REALIZABILITY_ONLY = ("glmtron", "newton_glm")


@dataclass
class ExperimentConfig:
    environment: dict
    oracle: dict
    horizon: int
    seeds: list
    algorithm: str = "squarecb"
    delta: float = 0.05
    tuning: dict = field(default_factory=lambda: {"rule": "theorem1"})
    budget: float | None = None
    output_dir: str | None = None
    name: str = "experiment"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {self.schema_version}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if int(self.horizon) < 1:
            raise ConfigurationError("horizon must be >= 1")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        rule = self.tuning.get("rule")
        if rule not in TUNING_RULES:
            raise ConfigurationError(f"unknown tuning rule {rule!r}")
        if rule == "manual" and not ({"gamma", "beta"} & set(self.tuning)):
            raise ConfigurationError("manual tuning needs gamma or beta")
        if (self.algorithm == "squarecb_hilbert") != (self.environment.get("kind") == "ball"):
            raise ConfigurationError("squarecb_hilbert runs exactly on ball environments")

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())


# -- building runs ---------------------------------------------------------


@dataclass
class Instance:
    env: object
    tables: np.ndarray | None = None
    eps: float = 0.0


def build_environment(cfg: ExperimentConfig) -> Instance:
    spec = dict(cfg.environment)
    kind = spec.get("kind")
    seed = int(spec.get("instance_seed", 0))
    if kind == "finite_class":
        noise = Noise(**spec.get("noise", {"kind": "bernoulli"}))
        env, tables = make_finite_class_env(
            spec["n_actions"], spec["class_size"], seed, spec.get("n_contexts", 10), noise
        )
        mis = spec.get("misspecification")
        eps = 0.0
        if mis:
            eps = float(mis["eps"])
            env = make_misspecified_env(env, eps, mis.get("seed", seed + 1), mis.get("time_varying", False))
        return Instance(env, tables, eps)
    if kind == "gap_family":
        fam = make_gap_family(cfg.horizon, spec.get("delta", 0.25))
        if fam.horizon != cfg.horizon:
            raise ConfigurationError(f"horizon must be divisible by N; use {fam.horizon}")
        return Instance(fam.environment(int(spec.get("instance", 0))), fam.tables)
    if kind == "linear":
        dim = int(spec["dim"])
        bias = spec.get("bias", spec.get("link", "identity") == "identity")
        rng = stream(seed, "instance")
        k = dim - 1 if bias else dim
        w = rng.standard_normal(k)
        radius = spec.get("theta_norm", 1 / math.sqrt(2) if bias else 1.0)
        w *= radius / np.linalg.norm(w)
        theta = np.concatenate([[1 / math.sqrt(2)], w]) if bias else w
        noise = Noise(**spec.get("noise", {"kind": "clipped_gaussian", "scale": 0.1}))
        env = LinearEnvironment(theta, spec["n_actions"], make_link(spec.get("link", "identity")), noise, bias)
        return Instance(env)
    if kind == "ball":
        rng = stream(seed, "instance")
        theta = rng.standard_normal(int(spec["dim"]))
        theta *= spec.get("theta_norm", 0.8) / np.linalg.norm(theta)
        return Instance(BallEnvironment(theta, spec.get("noise_scale", 0.1)))
    if kind == "file":
        env = load_environment(spec["path"])
        return Instance(env)
    if kind == "inline":
        return Instance(environment_from_dict(spec["instance"]))
    raise ConfigurationError(f"unknown environment kind {kind!r}")


def build_oracle(cfg: ExperimentConfig, inst: Instance):
    spec = dict(cfg.oracle)
    kind = spec.get("kind")
    env = inst.env
    if kind == "aggregating":
        if inst.tables is None:
            raise ConfigurationError("aggregating oracle needs a finite-class environment")
        return AggregatingOracle(inst.tables, spec.get("eta", 0.5))
    if kind == "epoch_cover":
        if inst.tables is None:
            raise ConfigurationError("epoch_cover oracle needs a finite-class environment")
        n_f, n_x, K = inst.tables.shape
        base = inst.tables.transpose(0, 2, 1).reshape(n_f * K, n_x)
        base = np.unique(base, axis=0)
        return EpochCoverOracle(base, K, spec.get("scale", 0.05), cfg.horizon, spec.get("eta", 0.5))
    if kind == "vaw":
        if isinstance(env, BallEnvironment):
            return VAWForecaster(env.dim, spec.get("ridge", 1.0), clip=None, outcome_range=(-2.0, 2.0))
        return VAWForecaster(env.dim, spec.get("ridge", 1.0))
    if kind == "ogd":
        return ProjectedOGD(env.dim, spec.get("step"), cfg.horizon)
    if kind == "glmtron":
        return GLMtron(env.dim, spec.get("link", env.link.to_dict()), spec.get("step"), cfg.horizon)
    if kind == "newton_glm":
        return NewtonGLMtron(
            env.dim, spec.get("link", env.link.to_dict()), spec.get("c_sigma"), spec.get("step"), spec.get("init", 1.0)
        )
    raise ConfigurationError(f"unknown oracle kind {kind!r}")


def resolve_budget(cfg: ExperimentConfig, oracle) -> OracleRegretBudget:
    if cfg.budget is not None:
        return OracleRegretBudget(float(cfg.budget), "user_supplied")
    return oracle.budget(cfg.horizon)


def resolve_tuning(cfg: ExperimentConfig, inst: Instance, budget: OracleRegretBudget) -> dict:
    """Exploration parameter and the matching theoretical bound."""
    rule = cfg.tuning["rule"]
    T, delta, R = cfg.horizon, cfg.delta, budget.bound
    eps = float(cfg.tuning.get("eps", inst.eps))
    if cfg.algorithm == "squarecb_hilbert":
        d = inst.env.dim
        if rule == "theorem8":
            return {"beta": tune_beta(d, T, budget, delta), "bound": theorem8_bound(d, T, R, delta), "metric": "realized"}
        if rule == "manual" and "beta" in cfg.tuning:
            return {"beta": float(cfg.tuning["beta"]), "bound": None, "metric": "realized"}
        raise ConfigurationError(f"tuning {rule!r} does not apply to squarecb_hilbert")
    K = inst.env.n_actions
    if rule == "theorem1":
        return {"gamma": tune_gamma_realizable(K, T, budget, delta), "bound": theorem1_bound(K, T, R, delta), "metric": "realized"}
    if rule == "theorem6":
        return {"gamma": tune_gamma_misspecified(K, T, budget, eps, "stochastic"), "bound": theorem6_bound(K, T, R, eps), "metric": "pseudo"}
    if rule == "theorem7":
        return {"gamma": tune_gamma_misspecified(K, T, budget, eps, "adaptive"), "bound": theorem7_bound(K, T, R, eps), "metric": "pseudo"}
    if rule == "manual" and "gamma" in cfg.tuning:
        return {"gamma": float(cfg.tuning["gamma"]), "bound": None, "metric": "realized"}
    raise ConfigurationError(f"tuning {rule!r} does not apply to {cfg.algorithm}")


def run_seed(cfg: ExperimentConfig, seed: int):
    """Build everything from the config and run one seed."""
    inst = build_environment(cfg)
    oracle = build_oracle(cfg, inst)
    tuning = resolve_tuning(cfg, inst, resolve_budget(cfg, oracle))
    if cfg.algorithm == "squarecb":
        return run_squarecb(inst.env, oracle, ExplorationParams(tuning["gamma"], cfg.tuning.get("mu")), cfg.horizon, seed)
    if cfg.algorithm == "squarecb_hilbert":
        return run_squarecb_hilbert(inst.env, oracle, tuning["beta"], cfg.horizon, seed)
    return run_epsilon_greedy(inst.env, oracle, cfg.horizon, seed, cfg.tuning.get("scale", 1.0))


def _seed_job(args):
    cfg_dict, seed, out_dir = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    ledger = run_seed(cfg, seed)
    if out_dir is not None:
        ledger.to_csv(Path(out_dir) / f"ledger_seed{seed}.csv")
    return seed, ledger.realized_regret, ledger.pseudo_regret, ledger.n_clipped


@dataclass
class RunSummary:
    name: str
    algorithm: str
    horizon: int
    environment: dict
    oracle: dict
    seeds: list
    final_realized: list
    final_pseudo: list
    bound: float | None
    bound_metric: str
    satisfied_fraction: float | None
    exploration: dict
    budget: float
    budget_provenance: str
    n_clipped: list
    wall_time: float
    flags: list = field(default_factory=list)

    @property
    def final_regret(self) -> list:
        return self.final_pseudo if self.bound_metric == "pseudo" else self.final_realized

    @property
    def mean_regret(self) -> float:
        return float(np.mean(self.final_regret))

    def quantiles(self, qs=(0.05, 0.5, 0.95)) -> dict:
        return {str(q): float(np.quantile(self.final_regret, q)) for q in qs}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_regret"] = self.mean_regret
        d["quantiles"] = self.quantiles()
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "RunSummary":
        d = json.loads(Path(path).read_text())
        d.pop("mean_regret", None)
        d.pop("quantiles", None)
        return cls(**d)


def run_experiment(cfg: ExperimentConfig, output_dir=None, threads: int = 1) -> RunSummary:
    """Run every seed (in parallel processes when ``threads > 1``), persist
    ledgers and ``summary.json`` under the output directory if one is set."""
    t0 = time.perf_counter()
    out = output_dir if output_dir is not None else cfg.output_dir
    if out is not None:
        out = Path(out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc}") from exc
    inst = build_environment(cfg)
    oracle = build_oracle(cfg, inst)
    budget = resolve_budget(cfg, oracle)
    tuning = resolve_tuning(cfg, inst, budget)
    flags = []
    eps = max(inst.eps, float(cfg.tuning.get("eps", 0.0)))
    if eps > 0 and cfg.oracle.get("kind") in REALIZABILITY_ONLY:
        flags.append("misspecified environment with a realizability-only oracle: outside the guarantee")
        log.warning(flags[-1])
    if cfg.algorithm == "epsilon_greedy_baseline":
        tuning["bound"] = None

    jobs = [(cfg.to_dict(), s, str(out) if out is not None else None) for s in cfg.seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_seed_job, jobs))
    else:
        results = [_seed_job(j) for j in jobs]
    results.sort(key=lambda r: cfg.seeds.index(r[0]))

    metric = tuning["metric"]
    finals = [r[2] if metric == "pseudo" else r[1] for r in results]
    frac = None
    if tuning["bound"] is not None:
        frac = float(np.mean([f <= tuning["bound"] for f in finals]))
    summary = RunSummary(
        name=cfg.name,
        algorithm=cfg.algorithm,
        horizon=cfg.horizon,
        environment=cfg.environment,
        oracle=cfg.oracle,
        seeds=list(cfg.seeds),
        final_realized=[r[1] for r in results],
        final_pseudo=[r[2] for r in results],
        bound=tuning["bound"],
        bound_metric=metric,
        satisfied_fraction=frac,
        exploration={k: v for k, v in tuning.items() if k in ("gamma", "beta")},
        budget=budget.bound,
        budget_provenance=budget.provenance,
        n_clipped=[r[3] for r in results],
        wall_time=time.perf_counter() - t0,
        flags=flags,
    )
    if out is not None:
        summary.save(out / "summary.json")
    return summary


# -- reporting -------------------------------------------------------------

REPORT_COLUMNS = ("name", "algorithm", "mean_regret", "q95_regret", "bound", "satisfied_fraction")


def compare_report(summaries: list) -> list[dict]:
    """Rows ordered by mean regret; all summaries must share the horizon and
    environment."""
    if not summaries:
        raise ValueError("no summaries to compare")
    T = summaries[0].horizon
    env = summaries[0].environment
    for s in summaries[1:]:
        if s.horizon != T:
            raise ValueError(f"mismatched horizons: {T} vs {s.horizon}")
        if s.environment != env:
            raise ValueError(f"summary {s.name!r} uses a different environment")
    rows = [
        {
            "name": s.name,
            "algorithm": s.algorithm,
            "mean_regret": s.mean_regret,
            "q95_regret": s.quantiles()["0.95"],
            "bound": s.bound,
            "satisfied_fraction": s.satisfied_fraction,
        }
        for s in summaries
    ]
    rows.sort(key=lambda r: r["mean_regret"])
    return rows


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def render_text(rows: list[dict]) -> str:
    cells = [REPORT_COLUMNS] + [tuple(_fmt(r[c]) for c in REPORT_COLUMNS) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(REPORT_COLUMNS))]
    lines = []
    for j, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        if j == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in REPORT_COLUMNS})
    return buf.getvalue()
