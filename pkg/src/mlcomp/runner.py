"""Experiment orchestration: seeds, rounds, metrics and aggregation."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .algorithms import (HyperParams, corollary1_params, corollary2_params, get_algorithm,
                         init_states)
from .problem import ProblemInstance, build_problem, full_gradient, global_gradient, global_objective
from .topology import MixingMatrix, build_topology

log = logging.getLogger(__name__)

METRICS = ("objective", "grad_norm_sq", "consensus_x", "consensus_y", "inner_err",
           "grad_est_err", "tracking_residual")
COLUMNS = ("t",) + METRICS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    t: int
    objective: float
    grad_norm_sq: float
    consensus_x: float
    consensus_y: float
    inner_err: float
    grad_est_err: float
    tracking_residual: float

    def row(self) -> list:
        return [getattr(self, c) for c in COLUMNS]


@dataclass
class TopologySpec:
    kind: str = "ring"
    nodes: int = 4
    edge_prob: float = 0.4
    seed: int = 0

    def build(self) -> MixingMatrix:
        return build_topology(self.kind, self.nodes, self.edge_prob, self.seed)


@dataclass
class ProblemSpec:
    name: str = "quadratic_chain"
    options: dict = field(default_factory=dict)

    def build(self, n_nodes: int) -> ProblemInstance:
        return build_problem(self.name, n_nodes=n_nodes, **self.options)


@dataclass
class ExperimentConfig:
    algo: str = "dsmcgdm"
    topology: TopologySpec = field(default_factory=TopologySpec)
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    params: HyperParams | None = None
    corollary: int | None = None
    epsilon: float | None = None
    # overrides applied on top of a corollary schedule
    overrides: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    stride: int = 10
    workers: int = 1
    stop_below: float | None = None

    def validate(self) -> "ExperimentConfig":
        get_algorithm(self.algo)
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.corollary is not None:
            if self.corollary not in (1, 2):
                raise ConfigError(f"corollary must be 1 or 2, got {self.corollary}")
            if self.epsilon is None:
                raise ConfigError("a corollary schedule needs epsilon")
        unknown = set(self.overrides) - {f.name for f in fields(HyperParams)}
        if unknown:
            raise ConfigError(f"unknown hyperparameters {sorted(unknown)}")
        return self

    def resolve_params(self, W: MixingMatrix) -> HyperParams:
        if self.corollary == 1:
            base = corollary1_params(self.epsilon, W.lambda2)
        elif self.corollary == 2:
            base = corollary2_params(self.epsilon, W.lambda2)
        else:
            base = self.params if self.params is not None else HyperParams()
        params = HyperParams(**{**asdict(base), **self.overrides})
        return params.validate(self.algo)


def compute_metrics(t: int, states, problem: ProblemInstance) -> RunRecord:
    """Metrics at round ``t`` read from estimated states; never mutates them."""
    N = problem.n_nodes
    X = np.stack([s.x for s in states])
    xbar = X.mean(axis=0)
    grad = global_gradient(problem, xbar)
    consensus_x = float(np.sum((X - xbar) ** 2)) / N
    if states[0].y is not None:
        Y = np.stack([s.y for s in states])
        M = np.stack([s.m for s in states])
        consensus_y = float(np.sum((Y - Y.mean(axis=0)) ** 2)) / N
        tracking = float(np.linalg.norm(Y.mean(axis=0) - M.mean(axis=0)))
        grad_est = float(np.mean([np.sum((s.m - full_gradient(problem, n, s.x)) ** 2)
                                  for n, s in enumerate(states)]))
    else:
        consensus_y = tracking = grad_est = 0.0
    inner = 0.0
    if states[0].u is not None:
        for n, s in enumerate(states):
            for k in range(1, problem.K):
                lev = problem.levels[n][k - 1]
                inner += float(np.sum((s.u[k] - lev.mean_value(s.u[k - 1])) ** 2))
        inner /= N
    return RunRecord(t=t, objective=global_objective(problem, xbar),
                     grad_norm_sq=float(grad @ grad), consensus_x=consensus_x,
                     consensus_y=consensus_y, inner_err=inner, grad_est_err=grad_est,
                     tracking_residual=tracking)


def run_single(config: ExperimentConfig, seed: int, problem: ProblemInstance | None = None,
               W: MixingMatrix | None = None) -> list[RunRecord]:
    """Run one seed; records at ``t = 0, stride, 2 stride, ...`` and at ``T``."""
    W = config.topology.build() if W is None else W
    problem = config.problem.build(W.n) if problem is None else problem
    params = config.resolve_params(W)
    alg = get_algorithm(config.algo)
    states = init_states(problem)
    records = []
    for t in range(params.T + 1):
        states = alg.estimate(states, problem, W, params, t, seed)
        if t % config.stride == 0 or t == params.T:
            rec = compute_metrics(t, states, problem)
            records.append(rec)
            if not np.isfinite(rec.objective):
                log.warning("seed %d diverged at t=%d", seed, t)
                break
            if config.stop_below is not None and rec.grad_norm_sq <= config.stop_below:
                break
        if t < params.T:
            states = alg.advance(states, W, params)
    return records


def _run_seed(args):
    config, seed = args
    return seed, run_single(config, seed)


def run_experiment(config: ExperimentConfig) -> list[tuple[int, list[RunRecord]]]:
    config.validate()
    # resolve everything once so configuration errors surface before compute
    W = config.topology.build()
    problem = config.problem.build(W.n)
    config.resolve_params(W)
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_seed, [(config, s) for s in config.seeds]))
    return [(s, run_single(config, s, problem, W)) for s in config.seeds]


def iterations_to_threshold(records: list[RunRecord], threshold: float,
                            key: str = "grad_norm_sq") -> int | None:
    """First recorded ``t`` with ``key <= threshold``, or None."""
    for rec in records:
        if getattr(rec, key) <= threshold:
            return rec.t
    return None


def aggregate(records_per_seed: list[list[RunRecord]], quantiles=(0.25, 0.75)) -> list[dict]:
    """Per-iteration median and quantiles across seeds.

    Only iterations recorded by every seed are summarized.
    """
    if not records_per_seed:
        return []
    by_t = [{r.t: r for r in recs} for recs in records_per_seed]
    common = sorted(set.intersection(*(set(d) for d in by_t)))
    rows = []
    for t in common:
        row = {"t": t}
        for m in METRICS:
            vals = np.array([d[t].__getattribute__(m) for d in by_t])
            row[f"{m}_median"] = float(np.median(vals))
            for q in quantiles:
                row[f"{m}_q{q:g}"] = float(np.quantile(vals, q))
        rows.append(row)
    return rows


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for rec in records:
        w.writerow([_fmt(v) for v in rec.row()])
    return buf.getvalue()


def summary_to_csv(rows: list[dict], label_columns: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not rows:
        return ""
    labels = label_columns or {}
    header = list(labels) + list(rows[0])
    w.writerow(header)
    for row in rows:
        w.writerow(list(labels.values()) + [_fmt(v) for v in row.values()])
    return buf.getvalue()


def write_records(path, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))


def read_records(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [RunRecord(t=int(r["t"]), **{m: float(r[m]) for m in METRICS}) for r in reader]
