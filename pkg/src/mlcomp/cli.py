"""Command-line entry point: ``mlcomp run | verify | topology``.

Exit codes: 0 success, 1 a verification gate failed, 2 usage, configuration
or I/O error.

Config files are flat ``key = value`` text with one key per ``run`` flag
(dashes or underscores both accepted, lists comma separated). Flags given on
the command line override file values. Every run echoes its effective config
to ``<stem>_config.txt`` next to the CSV output; passing that file back with
``--config`` reproduces the CSVs byte for byte.

Without ``--out`` the output stem is ``runs/<hash>`` where ``<hash>`` is the
first 12 hex digits of the SHA-256 of the canonical config text, i.e. the
sorted ``key = value`` lines of every setting that affects results.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .algorithms import ALGORITHMS, HyperParams, HyperParamError
from .problem import BUILDERS
from .runner import (ConfigError, ExperimentConfig, ProblemSpec, TopologySpec, aggregate,
                     records_to_csv, run_experiment, summary_to_csv)
from .topology import ConstructionError, TopologyError, build_topology

log = logging.getLogger("mlcomp")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _as_bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list_of(conv):
    def parse(s):
        if isinstance(s, (list, tuple)):
            return [conv(v) for v in s]
        return [conv(v) for v in str(s).split(",") if v.strip()]

    return parse


# name -> (converter, default, help); None defaults mean "builder/library default"
RUN_OPTIONS = {
    "algo": (_list_of(str), ["dsmcgdm"], "algorithm(s): dsmcgdm, dsmcvrg, dsgd (repeatable)"),
    "topology": (str, "ring", "ring | complete | random"),
    "nodes": (int, 4, "number of nodes"),
    "edge_prob": (float, 0.4, "edge probability of the random graph"),
    "graph_seed": (int, None, "random-graph seed (default: --seed)"),
    "seed": (int, None, "master seed (default: $MLCOMP_SEED or 0)"),
    "seeds": (int, 1, "number of consecutive seeds starting at --seed"),
    "problem": (str, "quadratic_chain", "quadratic_chain | tanh_chain | quadratic_maml"),
    "K": (int, 3, "number of levels for the chain problems"),
    "dims": (_list_of(int), None, "chain dimensions d_0,...,d_K (d_K = 1)"),
    "inner_steps": (int, 3, "MAML inner gradient steps (levels = inner_steps + 1)"),
    "nu": (float, 0.01, "MAML inner step size"),
    "dim": (int, 5, "MAML parameter dimension"),
    "delta": (_list_of(float), None, "value noise, one value or one per level"),
    "sigma": (_list_of(float), None, "Jacobian noise, one value or one per level"),
    "task_noise": (_list_of(float), None, "MAML task-center noise: one value or support,query"),
    "spread": (float, None, "node heterogeneity"),
    "hessian_spread": (float, None, "MAML Hessian heterogeneity (default: spread)"),
    "gamma": (float, None, "quadratic-chain tanh curvature"),
    "center_norm": (float, None, "MAML task-center norm"),
    "noise_atoms": (int, None, "finite noise support size (0 = Gaussian)"),
    "problem_seed": (int, 0, "seed of the problem instance"),
    "from_corollary": (int, None, "derive hyperparameters from schedule 1 or 2"),
    "epsilon": (float, None, "target accuracy for --from-corollary"),
    "epsilon_sq": (float, None, "squared target accuracy (alternative to --epsilon)"),
    "alpha": (float, None, "consensus step"),
    "beta": (float, None, "inner-estimator coefficient"),
    "mu": (float, None, "momentum coefficient"),
    "eta": (float, None, "step size"),
    "S": (int, None, "initial batch size (dsmcvrg)"),
    "T": (int, None, "iterations"),
    "lr": (float, None, "learning rate (dsgd)"),
    "stride": (int, 10, "record every stride iterations"),
    "workers": (int, 1, "parallel worker processes over seeds"),
    "stop_below": (float, None, "stop a seed once grad_norm_sq falls below this"),
    "out": (str, None, "output CSV path (default: runs/<config hash>.csv)"),
    "plot": (_as_bool, False, "also write an SVG of median grad_norm_sq"),
}
# settings that do not change any CSV and are left out of the hash
_NOT_HASHED = ("out", "plot", "workers")
_HYPER = ("alpha", "beta", "mu", "eta", "S", "T", "lr")
_PROBLEM_KEYS = {
    "quadratic_chain": ("K", "dims", "delta", "sigma", "spread", "gamma", "noise_atoms"),
    "tanh_chain": ("K", "dims", "delta", "sigma", "spread", "noise_atoms"),
    "quadratic_maml": ("inner_steps", "nu", "dim", "task_noise", "spread", "hessian_spread",
                       "center_norm", "noise_atoms"),
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file into raw string values."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        if key not in RUN_OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


def _convert(key: str, value):
    conv = RUN_OPTIONS[key][0]
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise UsageError(f"invalid value for {_flag(key)}: {value!r}") from None


def resolve_settings(ns: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags; seed falls back to $MLCOMP_SEED."""
    settings = {k: spec[1] for k, spec in RUN_OPTIONS.items()}
    if ns.config:
        for k, v in read_config_file(ns.config).items():
            settings[k] = _convert(k, v)
    for k in RUN_OPTIONS:
        v = getattr(ns, k, None)
        if v is not None:
            settings[k] = _convert(k, v)
    if settings["seed"] is None:
        env = os.environ.get("MLCOMP_SEED")
        settings["seed"] = _convert("seed", env) if env not in (None, "") else 0
    if settings["epsilon_sq"] is not None:
        if settings["epsilon"] is not None:
            raise UsageError("give either --epsilon or --epsilon-sq, not both")
        if settings["epsilon_sq"] <= 0:
            raise UsageError("--epsilon-sq must be positive")
        settings["epsilon"] = math.sqrt(settings["epsilon_sq"])
        settings["epsilon_sq"] = None
    for a in settings["algo"]:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}; choose from {sorted(ALGORITHMS)}")
    if settings["problem"] not in BUILDERS:
        raise UsageError(f"unknown problem {settings['problem']!r}; "
                         f"choose from {sorted(BUILDERS)}")
    if settings["seeds"] < 1:
        raise UsageError("--seeds must be >= 1")
    return settings


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def canonical_config(settings: dict, include_all: bool = False) -> str:
    lines = []
    for k in sorted(settings):
        v = settings[k]
        if v is None or (not include_all and k in _NOT_HASHED):
            continue
        lines.append(f"{k} = {_fmt_value(v)}")
    return "\n".join(lines) + "\n"


def config_hash(settings: dict) -> str:
    return hashlib.sha256(canonical_config(settings).encode()).hexdigest()[:12]


def _scalar_or_list(v):
    return v[0] if isinstance(v, list) and len(v) == 1 else v


def build_config(settings: dict, algo: str) -> ExperimentConfig:
    name = settings["problem"]
    opts = {"seed": settings["problem_seed"]}
    for k in _PROBLEM_KEYS[name]:
        v = settings[k]
        if v is None:
            continue
        if name == "quadratic_maml" and k == "task_noise":
            if len(v) not in (1, 2):
                raise UsageError("--task-noise takes one value or support,query")
            v = v[0] if len(v) == 1 else tuple(v)
        elif k in ("delta", "sigma"):
            v = _scalar_or_list(v)
        opts[k] = v
    graph_seed = settings["graph_seed"] if settings["graph_seed"] is not None else settings["seed"]
    topo = TopologySpec(settings["topology"], settings["nodes"], settings["edge_prob"], graph_seed)
    given = {k: settings[k] for k in _HYPER if settings[k] is not None}
    cor = settings["from_corollary"]
    if cor is not None:
        if settings["epsilon"] is None:
            raise UsageError("--from-corollary needs --epsilon or --epsilon-sq")
        params, overrides = None, given
    else:
        params, overrides = HyperParams(**given), {}
    seeds = list(range(settings["seed"], settings["seed"] + settings["seeds"]))
    return ExperimentConfig(algo=algo, topology=topo, problem=ProblemSpec(name, opts),
                            params=params, corollary=cor, epsilon=settings["epsilon"],
                            overrides=overrides, seeds=seeds, stride=settings["stride"],
                            workers=settings["workers"], stop_below=settings["stop_below"])


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e.strerror}") from None


def cmd_run(ns: argparse.Namespace) -> int:
    settings = resolve_settings(ns)
    out = Path(settings["out"]) if settings["out"] else Path("runs") / f"{config_hash(settings)}.csv"
    stem = out.with_suffix("") if out.suffix == ".csv" else out
    configs = [build_config(settings, a) for a in settings["algo"]]
    results = {}
    for cfg in configs:
        log.info("running %s on %d seed(s)", cfg.algo, len(cfg.seeds))
        results[cfg.algo] = run_experiment(cfg)

    single = len(configs) == 1 and len(configs[0].seeds) == 1
    written = []
    if single:
        _, recs = results[configs[0].algo][0]
        _write(out, records_to_csv(recs))
        written.append(out)
    else:
        summary = []
        for algo, runs in results.items():
            for seed, recs in runs:
                p = Path(f"{stem}_{algo}_seed{seed}.csv")
                _write(p, records_to_csv(recs))
                written.append(p)
            rows = aggregate([recs for _, recs in runs])
            summary.append(summary_to_csv(rows, {"algo": algo}))
        header_done = False
        text = ""
        for block in summary:
            lines = block.splitlines(keepends=True)
            text += "".join(lines if not header_done else lines[1:])
            header_done = header_done or bool(lines)
        p = Path(f"{stem}_summary.csv")
        _write(p, text)
        written.append(p)
    echo = Path(f"{stem}_config.txt")
    _write(echo, canonical_config({**settings, "out": str(out)}, include_all=True))
    written.append(echo)
    if settings["plot"]:
        from .plot import line_plot_svg

        series = {}
        for algo, runs in results.items():
            rows = aggregate([recs for _, recs in runs])
            series[algo] = ([r["t"] for r in rows], [r["grad_norm_sq_median"] for r in rows])
        p = Path(f"{stem}.svg")
        _write(p, line_plot_svg(series, title=settings["problem"], ylabel="|grad F(xbar)|^2"))
        written.append(p)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_verify(ns: argparse.Namespace) -> int:
    from . import verify

    names = []
    for g in ns.gate or []:
        g = verify.GATE_ALIASES.get(g, g)
        if g not in verify.GATES:
            choices = sorted(verify.GATES) + sorted(verify.GATE_ALIASES)
            raise UsageError(f"unknown gate {g!r}; choose from {choices}")
        names.append(g)
    if not names:
        names = [g for g in verify.GATES if not (ns.skip_slow and g in verify.SLOW_GATES)]
    ok = True
    print(f"{'gate':<14} {'result':<6} {'measured':>12} {'tolerance':>12}   detail")
    for g in names:
        res = verify.GATES[g]()
        ok &= bool(res.passed)
        print(f"{res.name:<14} {'pass' if res.passed else 'FAIL':<6} {res.value:>12.4e} "
              f"{res.tolerance:>12.4e}   {res.detail} ({res.seconds:.1f}s)", flush=True)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_topology(ns: argparse.Namespace) -> int:
    kind = ns.kind or ns.topology or "ring"
    seed = ns.seed
    if seed is None:
        env = os.environ.get("MLCOMP_SEED")
        seed = _convert("seed", env) if env not in (None, "") else 0
    W = build_topology(kind, ns.nodes, ns.edge_prob, seed)
    with np.printoptions(precision=6, suppress=True, linewidth=120):
        print(W.weights)
    print(f"lambda2 = {W.lambda2!r}")
    print(f"spectral_gap = {W.spectral_gap!r}")
    if ns.csv:
        try:
            W.to_csv(ns.csv)
        except OSError as e:
            raise UsageError(f"cannot write {ns.csv}: {e.strerror}") from None
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlcomp",
                                     description="Decentralized multi-level compositional "
                                                 "optimization simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run experiments and write CSV output")
    run.add_argument("--config", help="flat key = value config file")
    for name, (_, default, help_) in RUN_OPTIONS.items():
        if name == "algo":
            run.add_argument("--algo", action="append", default=None, help=help_)
        elif name == "plot":
            run.add_argument("--plot", action="store_const", const=True, default=None, help=help_)
        else:
            run.add_argument(_flag(name), dest=name, default=None, help=help_)
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the oracle and invariant gates")
    ver.add_argument("--gate", action="append", help="run only this gate (repeatable)")
    ver.add_argument("--skip-slow", action="store_true", help="skip convergence-behavior gates")
    ver.set_defaults(func=cmd_verify)

    top = sub.add_parser("topology", help="print a mixing matrix and its spectral gap")
    kinds = top.add_mutually_exclusive_group()
    for k in ("ring", "complete", "random"):
        kinds.add_argument(f"--{k}", dest="kind", action="store_const", const=k)
    kinds.add_argument("--topology", choices=("ring", "complete", "random"))
    top.add_argument("--nodes", type=int, default=4)
    top.add_argument("--edge-prob", type=float, default=0.4)
    top.add_argument("--seed", type=int, default=None)
    top.add_argument("--csv", help="also write the matrix as CSV")
    top.set_defaults(func=cmd_topology)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except (UsageError, ConfigError, HyperParamError, TopologyError, ConstructionError,
            ValueError) as e:
        print(f"mlcomp: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
