"""Verification gates: oracle comparisons, invariants and convergence checks.

Each gate returns a :class:`GateResult`. The ``verify`` CLI subcommand and
the acceptance tests run the same functions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import algorithms as alg
from .algorithms import HyperParams
from .oracle import (brute_force_expectation, centralized_reference, decentralized_momentum_sgd,
                     finite_difference_gradient, finite_difference_jacobian, relative_error)
from .problem import (full_gradient, intermediates, make_quadratic_chain, make_quadratic_maml,
                      make_tanh_chain)
from .runner import (ExperimentConfig, ProblemSpec, TopologySpec, iterations_to_threshold,
                     run_experiment)
from .topology import (complete_topology, random_topology, ring_topology, second_eigenvalue,
                       validate_weights)


@dataclass
class GateResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<14} measured={self.value:.3e}  "
                f"tol={self.tolerance:.3e}  ({self.seconds:.2f}s) {self.detail}")


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _fd_problems():
    return [
        make_quadratic_chain(4, (8, 6, 4, 2, 1), seed=0, spread=0.3, n_nodes=2, gamma=0.5),
        make_quadratic_maml(3, dim=5, seed=0, n_nodes=2, spread=0.5),
        make_tanh_chain(3, (5, 4, 3, 1), seed=0, spread=0.2, n_nodes=2),
    ]


@_timed
def gate_chain_rule(n_points: int = 20, h: float = 1e-5, tol: float = 1e-5) -> GateResult:
    """``full_gradient`` and every level Jacobian against central differences."""
    rng = np.random.default_rng(20240)
    worst = 0.0
    for p in _fd_problems():
        for _ in range(n_points):
            x = rng.standard_normal(p.dims[0])
            for n in range(p.n_nodes):
                worst = max(worst, relative_error(finite_difference_gradient(p, n, x, h),
                                                  full_gradient(p, n, x)))
                chain = intermediates(p, n, x)
                for lev, u in zip(p.levels[n], chain):
                    worst = max(worst, relative_error(finite_difference_jacobian(lev, u, h),
                                                      lev.mean_jacobian(u)))
    return GateResult("chain_rule", worst <= tol, worst, tol, "max relative error")


@_timed
def gate_expectation(tol: float = 1e-12) -> GateResult:
    """Declared means against exhaustive enumeration on finite-support noise."""
    problems = [
        make_quadratic_chain(3, (4, 3, 2, 1), seed=1, delta=0.5, sigma=0.5, noise_atoms=100,
                             n_nodes=2),
        make_tanh_chain(3, (4, 3, 2, 1), seed=1, delta=0.5, sigma=0.5, noise_atoms=100, n_nodes=2),
        make_quadratic_maml(2, dim=3, seed=1, task_noise=2.0, noise_atoms=100, n_nodes=2),
    ]
    rng = np.random.default_rng(5)
    worst = 0.0
    for p in problems:
        for n in range(p.n_nodes):
            for lev in p.levels[n]:
                u = rng.standard_normal(lev.in_dim)
                mv, mj = brute_force_expectation(lev, u)
                dv = np.max(np.abs(mv - lev.mean_value(u))) / max(1.0, np.max(np.abs(mv)))
                dj = np.max(np.abs(mj - lev.mean_jacobian(u))) / max(1.0, np.max(np.abs(mj)))
                worst = max(worst, dv, dj)
    return GateResult("expectation", worst <= tol, worst, tol, "max scaled deviation")


@_timed
def gate_unbiased(n_samples: int = 100_000) -> GateResult:
    """Sample means of values within 3 standard errors of the declared means."""
    problems = [
        make_quadratic_chain(2, (3, 2, 1), seed=2, delta=0.5, sigma=0.5, n_nodes=1),
        make_tanh_chain(2, (3, 2, 1), seed=2, delta=0.5, sigma=0.5, n_nodes=1),
        make_quadratic_maml(1, dim=2, seed=2, task_noise=2.0, n_nodes=1),
    ]
    rng = np.random.default_rng(11)
    worst = 0.0
    for p in problems:
        for lev in p.levels[0]:
            u = rng.standard_normal(lev.in_dim)
            vals = np.array([lev.value(u, lev.sample(rng)) for _ in range(n_samples)])
            se = vals.std(axis=0, ddof=1) / np.sqrt(n_samples)
            z = np.abs(vals.mean(axis=0) - lev.mean_value(u)) / np.maximum(se, 1e-300)
            worst = max(worst, float(np.max(z)))
    return GateResult("unbiased", worst <= 3.0, worst, 3.0, "max |z| over coordinates")


@_timed
def gate_bounds(n_samples: int = 10_000) -> GateResult:
    """Sampled Jacobian norms within declared C_k; mean-Jacobian Lipschitz within 1.05 L_k."""
    problems = [
        make_quadratic_chain(4, (6, 5, 4, 3, 1), seed=3, delta=0.3, sigma=0.5, spread=0.2,
                             gamma=0.5, n_nodes=2),
        make_tanh_chain(4, (6, 5, 4, 3, 1), seed=3, delta=0.3, sigma=0.5, spread=0.2, n_nodes=2),
    ]
    rng = np.random.default_rng(17)
    worst = 0.0
    for p in problems:
        for n in range(p.n_nodes):
            for lev in p.levels[n]:
                c = lev.constants(p.radius)
                for _ in range(n_samples // 10):
                    u = rng.standard_normal(lev.in_dim)
                    u *= rng.uniform(0, p.radius) / np.linalg.norm(u)
                    for _ in range(10):
                        worst = max(worst, np.linalg.norm(lev.jacobian(u, lev.sample(rng))) / c.C)
                for _ in range(500):
                    u1 = rng.standard_normal(lev.in_dim) * 2.0
                    u2 = u1 + rng.standard_normal(lev.in_dim) * rng.choice([1e-3, 0.1, 1.0])
                    num = np.linalg.norm(lev.mean_jacobian(u1) - lev.mean_jacobian(u2))
                    den = np.linalg.norm(u1 - u2)
                    if c.L == 0:
                        ratio = 0.0 if num <= 1e-12 * den else np.inf
                    else:
                        ratio = num / den / (1.05 * c.L)
                    worst = max(worst, ratio)
    return GateResult("bounds", worst <= 1.0, worst, 1.0, "max norm / declared bound")


@_timed
def gate_tracking(T: int = 1000, tol: float = 1e-10) -> GateResult:
    """Mean of y equals mean of m along noisy DSMCGDM and DSMCVRG runs on an 8-node ring."""
    W = ring_topology(8)
    p = make_quadratic_chain(3, (4, 4, 3, 1), seed=4, delta=0.3, sigma=0.3, spread=0.3, n_nodes=8)
    params = HyperParams(alpha=0.5, eta=0.1, S=4, T=T)
    worst = 0.0
    for name in ("dsmcgdm", "dsmcvrg"):
        def cb(t, states):
            nonlocal worst
            ybar = np.mean([s.y for s in states], axis=0)
            mbar = np.mean([s.m for s in states], axis=0)
            worst = max(worst, float(np.linalg.norm(ybar - mbar)))

        alg.run(name, p, W, params, seed=1, callback=cb)
    return GateResult("tracking", worst <= tol, worst, tol, "max_t |ybar - mbar|")


@_timed
def gate_reduction(T: int = 200, tol: float = 1e-12) -> GateResult:
    """Complete-graph zero-noise run equals centralized descent; K=1 equals momentum SGD."""
    W = complete_topology(4)
    p = make_quadratic_chain(4, (8, 6, 4, 2, 1), seed=5, spread=0.0, n_nodes=4, gamma=0.3)
    params = HyperParams(alpha=0.5, beta=1.0, mu=2.0, eta=0.5, T=T)
    ref = centralized_reference(p, p.x0, params.alpha * params.eta, T)
    worst = 0.0

    def cb(t, states):
        nonlocal worst
        for s in states:
            worst = max(worst, float(np.max(np.abs(s.x - ref[t]))))

    alg.run("dsmcgdm", p, W, params, seed=0, callback=cb)

    W1 = ring_topology(4)
    p1 = make_quadratic_chain(1, (5, 1), seed=6, delta=0.5, sigma=0.5, spread=0.4, n_nodes=4)
    p1.x0 = np.ones(5)
    params1 = HyperParams(alpha=0.4, beta=1.0, mu=1.5, eta=0.3, T=T)
    traj = []
    alg.run("dsmcgdm", p1, W1, params1, seed=3,
            callback=lambda t, st: traj.append(np.stack([s.x for s in st])))
    expect = decentralized_momentum_sgd(p1, W1, params1.alpha, params1.eta, params1.mu, T, seed=3)
    bitwise = np.array_equal(np.array(traj), expect)
    return GateResult("reduction", worst <= tol and bitwise, worst, tol,
                      f"K=1 bit-for-bit: {bitwise}")


@_timed
def gate_storm(T: int = 200, tol: float = 1e-12) -> GateResult:
    """Zero noise: the variance-reduced gradient equals the composed gradient at the estimates."""
    W = ring_topology(4)
    p = make_quadratic_chain(4, (5, 4, 4, 3, 1), seed=7, spread=0.3, gamma=0.5, n_nodes=4)
    params = HyperParams(alpha=0.4, beta=2.0, mu=3.0, eta=0.3, S=3, T=T)
    worst = 0.0

    def cb(t, states):
        nonlocal worst
        for n, s in enumerate(states):
            jacs = [lev.mean_jacobian(u) for lev, u in zip(p.levels[n], s.u)]
            g = jacs[0]
            for j in jacs[1:]:
                g = g @ j
            worst = max(worst, float(np.linalg.norm(s.m - g[:, 0])))

    alg.run("dsmcvrg", p, W, params, seed=0, callback=cb)
    return GateResult("storm", worst <= tol, worst, tol, "max_{n,t} |m - composed gradient|")


@_timed
def gate_consensus(T: int = 1000, tol: float = 1e-8) -> GateResult:
    """Zero-noise strongly convex chain on an 8-node ring reaches consensus."""
    W = ring_topology(8)
    p = make_quadratic_chain(3, (4, 4, 4, 1), seed=8, spread=0.3, gamma=0.1, n_nodes=8)
    params = HyperParams(alpha=0.5, eta=0.2, T=T)
    final = alg.run("dsmcgdm", p, W, params, seed=0)
    X = np.stack([s.x for s in final])
    value = float(np.sum((X - X.mean(axis=0)) ** 2)) / len(final)
    return GateResult("consensus", value <= tol, value, tol, "(1/N)|X - Xbar|_F^2 at T")


@_timed
def gate_topology(n_trials: int = 100, tol: float = 1e-10) -> GateResult:
    """Ring-4 gap, constructor validity and the contraction property."""
    gap_err = abs(ring_topology(4).spectral_gap - 2.0 / 3.0)
    mats = [ring_topology(n) for n in range(2, 11)]
    mats += [complete_topology(n) for n in range(1, 11)]
    mats += [random_topology(n, p, seed=s) for n in (4, 8, 12) for p in (0.4, 0.7) for s in range(3)]
    for m in mats:
        validate_weights(m.weights)
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(n_trials):
        m = mats[rng.integers(len(mats))]
        V = rng.standard_normal((m.n, 3))
        Vbar = V.mean(axis=0)
        lam = second_eigenvalue(m.weights)
        lhs = np.linalg.norm(m.weights @ V - Vbar)
        rhs = lam * np.linalg.norm(V - Vbar)
        worst = max(worst, lhs - rhs)
    value = max(gap_err, worst)
    return GateResult("topology", value <= tol, value, tol, "max(gap error, contraction excess)")


# ---------------------------------------------------------------------------
# convergence-behavior scenarios

ORDERING_PROBLEM = dict(inner_steps=3, dim=5, task_noise=(15.0, 0.5), spread=6.0,
                        hessian_spread=1.5, seed=0)
ORDERING_THRESHOLD = 0.1


def ordering_counts(seeds=range(5), budget: int | None = None) -> dict:
    """Median iterations to ``|grad F(xbar)|^2 <= 0.1`` on noisy 4-level MAML, ring of 4.

    Each algorithm uses its own schedule (momentum: corollary 1, variance
    reduced: corollary 2, eps^2 = 0.1; DSGD: lr 0.1) and the common budget of
    the corollary-1 horizon. Runs that never reach the threshold count as
    ``budget + 1``.
    """
    eps = float(np.sqrt(0.1))
    if budget is None:
        budget = alg.corollary1_params(eps, ring_topology(4).lambda2).T
    out = {}
    for name, cor in (("dsmcvrg", 2), ("dsmcgdm", 1), ("dsgd", 1)):
        cfg = ExperimentConfig(algo=name, topology=TopologySpec("ring", 4),
                               problem=ProblemSpec("quadratic_maml", dict(ORDERING_PROBLEM)),
                               corollary=cor, epsilon=eps, overrides={"T": budget, "lr": 0.1},
                               seeds=list(seeds), stride=1)
        counts = []
        for _, recs in run_experiment(cfg):
            hit = iterations_to_threshold(recs, ORDERING_THRESHOLD)
            counts.append(budget + 1 if hit is None else hit)
        out[name] = (float(np.median(counts)), counts)
    return out


@_timed
def gate_ordering() -> GateResult:
    c = ordering_counts()
    vr, gdm, sgd = c["dsmcvrg"][0], c["dsmcgdm"][0], c["dsgd"][0]
    gap1 = (gdm - vr) / gdm
    gap2 = (sgd - gdm) / sgd
    ok = vr < gdm < sgd and gap1 >= 0.1 and gap2 >= 0.1
    return GateResult("ordering", ok, min(gap1, gap2), 0.1,
                      f"median iterations vr={vr:g} gdm={gdm:g} dsgd={sgd:g}")


LEVEL_THRESHOLD = 0.1


def level_counts(levels=(2, 4, 6), seeds=range(5), T: int = 400) -> dict:
    """Median iterations to threshold on matched noisy quadratic chains of each depth."""
    eps = float(np.sqrt(0.1))
    out = {}
    for name, cor in (("dsmcgdm", 1), ("dsmcvrg", 2)):
        per_k = {}
        for K in levels:
            prob = dict(K=K, dims=[4] * K + [1], seed=0, delta=0.1, sigma=0.1, spread=0.1,
                        gamma=0.1)
            cfg = ExperimentConfig(algo=name, topology=TopologySpec("ring", 4),
                                   problem=ProblemSpec("quadratic_chain", prob), corollary=cor,
                                   epsilon=eps, overrides={"T": T}, seeds=list(seeds), stride=1)
            counts = []
            for _, recs in run_experiment(cfg):
                hit = iterations_to_threshold(recs, LEVEL_THRESHOLD)
                counts.append(T + 1 if hit is None else hit)
            per_k[K] = float(np.median(counts))
        out[name] = per_k
    return out


@_timed
def gate_levels(max_ratio: float = 3.5) -> GateResult:
    c = level_counts()
    ratios = {name: per_k[6] / max(per_k[2], 1.0) for name, per_k in c.items()}
    worst = max(ratios.values())
    return GateResult("levels", worst <= max_ratio, worst, max_ratio,
                      " ".join(f"{n}:{per_k}" for n, per_k in c.items()))


def plateau(n_nodes: int, seeds=range(5), T: int = 600, algo: str = "dsmcgdm") -> float:
    """Median over seeds of the mean |grad F(xbar_t)|^2 over the second half of the run."""
    cfg = ExperimentConfig(algo=algo, topology=TopologySpec("ring", n_nodes),
                           problem=ProblemSpec("quadratic_chain",
                                               dict(K=3, seed=0, delta=0.5, sigma=0.5, spread=0.0)),
                           params=HyperParams(alpha=0.5, eta=0.1, S=3, T=T), seeds=list(seeds),
                           stride=1)
    vals = [np.mean([r.grad_norm_sq for r in recs if r.t >= T // 2])
            for _, recs in run_experiment(cfg)]
    return float(np.median(vals))


@_timed
def gate_averaging() -> GateResult:
    p4, p16 = plateau(4), plateau(16)
    return GateResult("averaging", p16 <= p4, p16 / p4, 1.0,
                      f"plateau N=4 {p4:.3e}, N=16 {p16:.3e}")


GATES = {
    "chain_rule": gate_chain_rule,
    "expectation": gate_expectation,
    "unbiased": gate_unbiased,
    "bounds": gate_bounds,
    "tracking": gate_tracking,
    "reduction": gate_reduction,
    "storm": gate_storm,
    "consensus": gate_consensus,
    "topology": gate_topology,
    "ordering": gate_ordering,
    "levels": gate_levels,
    "averaging": gate_averaging,
}
SLOW_GATES = ("ordering", "levels", "averaging")
GATE_ALIASES = {"fd": "chain_rule", "brute": "expectation", "contraction": "topology"}
