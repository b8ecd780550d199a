"""DSMCGDM, DSMCVRG and the DSGD baseline as synchronous round loops.

A round is split in two phases so that metrics can be read between them:

* ``estimate``: every node refreshes its inner estimates, gradient surrogate
  and tracking variable at its current iterate ``x_t``;
* ``advance``: every node mixes its neighbors' iterates and takes the local
  step, producing ``x_{t+1}``.

All cross-node reads in a phase come from the snapshot taken before that
phase, so per-node work is order independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .estimators import (NodeState, compose_gradient, inner_update_momentum,
                         inner_update_vr, mix, momentum_update, storm_update,
                         tracking_update, x_update)
from .problem import ProblemInstance, draw_sample
from .topology import MixingMatrix


class HyperParamError(ValueError):
    pass


@dataclass(frozen=True)
class HyperParams:
    alpha: float = 1.0
    beta: float = 1.0
    mu: float = 1.0
    eta: float = 0.1
    S: int = 1
    T: int = 100
    epsilon: float | None = None
    lr: float = 0.1

    def validate(self, algo: str) -> "HyperParams":
        """Check the step-size conditions of ``algo``; returns ``self``.

        ``beta*eta`` (resp. ``beta*eta**2``) equal to 1 is admitted as the
        plain-estimate limit used in tests; the theory needs strict ``< 1``.
        """
        if self.T < 1:
            raise HyperParamError(f"T must be >= 1, got {self.T}")
        if algo == "dsgd":
            if self.lr <= 0:
                raise HyperParamError(f"lr must be positive, got {self.lr}")
            return self
        for name in ("alpha", "beta", "mu"):
            if getattr(self, name) <= 0:
                raise HyperParamError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.eta <= 1.0:
            raise HyperParamError(f"eta must lie in (0, 1], got {self.eta}")
        if algo == "dsmcgdm":
            power = 1
        elif algo == "dsmcvrg":
            power = 2
            if self.S < 1:
                raise HyperParamError(f"batch size S must be >= 1, got {self.S}")
        else:
            raise HyperParamError(f"unknown algorithm {algo!r}")
        e = self.eta ** power
        sym = "eta" if power == 1 else "eta^2"
        if self.beta * e > 1.0:
            raise HyperParamError(f"beta*{sym} = {self.beta * e:.6g} exceeds 1")
        if self.mu * e > 1.0:
            raise HyperParamError(f"mu*{sym} = {self.mu * e:.6g} exceeds 1")
        return self


def _ceil(x: float) -> int:
    # absorb representation error, e.g. 2.25 * 100.00000001 should give 225
    r = round(x)
    if abs(x - r) <= 1e-6 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def corollary1_params(epsilon: float, lam: float, mu0: float = 1.0, beta0: float = 1.0,
                      alpha_scale: float = 1.0) -> HyperParams:
    """Momentum schedule: ``eta = eps^2``, ``alpha ~ (1-lam)^2``, ``T ~ (1-lam)^-2 eps^-4``."""
    _check_schedule_args(epsilon, lam)
    gap = 1.0 - lam
    params = HyperParams(alpha=alpha_scale * gap ** 2, beta=beta0, mu=mu0, eta=float(epsilon) ** 2,
                         S=1, T=_ceil(gap ** -2 * epsilon ** -4), epsilon=float(epsilon))
    try:
        return params.validate("dsmcgdm")
    except HyperParamError as exc:
        raise HyperParamError(f"corollary-1 schedule for epsilon={epsilon}: {exc}; "
                              "lower epsilon or beta0/mu0") from None


def corollary2_params(epsilon: float, lam: float, mu0: float = 1.0, beta0: float = 1.0,
                      alpha_scale: float = 1.0) -> HyperParams:
    """Variance-reduced schedule: ``eta = eps``, ``S = ceil(1/eps)``, ``T ~ (1-lam)^-2 eps^-3``."""
    _check_schedule_args(epsilon, lam)
    gap = 1.0 - lam
    params = HyperParams(alpha=alpha_scale * gap ** 2, beta=beta0, mu=mu0, eta=float(epsilon),
                         S=_ceil(1.0 / epsilon), T=_ceil(gap ** -2 * epsilon ** -3),
                         epsilon=float(epsilon))
    try:
        return params.validate("dsmcvrg")
    except HyperParamError as exc:
        raise HyperParamError(f"corollary-2 schedule for epsilon={epsilon}: {exc}; "
                              "lower epsilon or beta0/mu0") from None


def _check_schedule_args(epsilon, lam):
    if not epsilon > 0:
        raise HyperParamError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 <= lam < 1.0:
        raise HyperParamError(f"lambda must lie in [0, 1), got {lam}")


def init_states(problem: ProblemInstance, x0=None) -> list[NodeState]:
    x0 = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (problem.dims[0],):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.dims[0]},)")
    return [NodeState(x=x0.copy()) for _ in range(problem.n_nodes)]


# ---------------------------------------------------------------------------
# local estimation phases


def _local_momentum(state: NodeState, problem: ProblemInstance, node: int,
                    params: HyperParams, t: int, seed: int) -> NodeState:
    levels = problem.levels[node]
    K = problem.K
    be = params.beta * params.eta
    chain = [state.x]
    v = []
    for k in range(1, K):
        lev = levels[k - 1]
        xi = draw_sample(problem, seed, node, k, t)
        if t == 0:
            u_k = lev.value(chain[k - 1], xi)
        else:
            u_k = inner_update_momentum(state.u[k], lev.value(state.u[k - 1], xi),
                                        lev.value(chain[k - 1], xi), be)
        # Jacobian at the freshly updated u^(k-1)
        v.append(lev.jacobian(chain[k - 1], xi))
        chain.append(u_k)
    xi = draw_sample(problem, seed, node, K, t)
    v.append(levels[K - 1].jacobian(chain[K - 1], xi))
    g = compose_gradient(v)
    if t == 0:
        m = g
        m_prev = None
    else:
        m = momentum_update(state.m, g, params.mu * params.eta)
        m_prev = state.m
    return replace(state, u=chain, u_prev=state.u, v=v, g=g, m=m, m_prev=m_prev)


def _batch_mean(arrays):
    if len(arrays) == 1:
        return arrays[0]
    return np.mean(np.stack(arrays), axis=0)


def _local_vr(state: NodeState, problem: ProblemInstance, node: int,
              params: HyperParams, t: int, seed: int) -> NodeState:
    levels = problem.levels[node]
    K = problem.K
    chain = [state.x]
    v = []
    if t == 0:
        for k in range(1, K + 1):
            lev = levels[k - 1]
            xis = [draw_sample(problem, seed, node, k, 0, s) for s in range(params.S)]
            v.append(_batch_mean([lev.jacobian(chain[k - 1], xi) for xi in xis]))
            if k < K:
                chain.append(_batch_mean([lev.value(chain[k - 1], xi) for xi in xis]))
        g = compose_gradient(v)
        return replace(state, u=chain, u_prev=None, v=v, g=g, m=g, m_prev=None)

    be2 = params.beta * params.eta ** 2
    prev = state.u
    v_old = []
    for k in range(1, K + 1):
        lev = levels[k - 1]
        xi = draw_sample(problem, seed, node, k, t)
        v.append(lev.jacobian(chain[k - 1], xi))
        v_old.append(lev.jacobian(prev[k - 1], xi))
        if k < K:
            chain.append(inner_update_vr(prev[k], lev.value(prev[k - 1], xi),
                                         lev.value(chain[k - 1], xi), be2))
    g = compose_gradient(v)
    g_old = compose_gradient(v_old)
    m = storm_update(state.m, g_old, g, params.mu * params.eta ** 2)
    return replace(state, u=chain, u_prev=prev, v=v, g=g, m=m, m_prev=state.m)


def _local_plain(state: NodeState, problem: ProblemInstance, node: int,
                 params: HyperParams, t: int, seed: int) -> NodeState:
    levels = problem.levels[node]
    K = problem.K
    chain = [state.x]
    v = []
    for k in range(1, K + 1):
        lev = levels[k - 1]
        xi = draw_sample(problem, seed, node, k, t)
        v.append(lev.jacobian(chain[k - 1], xi))
        if k < K:
            chain.append(lev.value(chain[k - 1], xi))
    g = compose_gradient(v)
    return replace(state, u=chain, u_prev=state.u, v=v, g=g, m=g, m_prev=state.m, y=g)


def _track(states: list[NodeState], W: MixingMatrix, t: int) -> list[NodeState]:
    if t == 0:
        return [replace(s, y=s.m) for s in states]
    Y = np.stack([s.y for s in states])
    return [replace(s, y=tracking_update(Y, s.m, s.m_prev, W.row(n)))
            for n, s in enumerate(states)]


def _estimate(local, states, problem, W, params, t, seed):
    if len(states) != problem.n_nodes or W.n != problem.n_nodes:
        raise ValueError("states, problem and mixing matrix disagree on the node count")
    fresh = [local(s, problem, n, params, t, seed) for n, s in enumerate(states)]
    return _track(fresh, W, t)


def dsmcgdm_estimate(states, problem, W, params, t, seed=0):
    return _estimate(_local_momentum, states, problem, W, params, t, seed)


def dsmcvrg_estimate(states, problem, W, params, t, seed=0):
    return _estimate(_local_vr, states, problem, W, params, t, seed)


def dsgd_estimate(states, problem, W, params, t, seed=0):
    if len(states) != problem.n_nodes or W.n != problem.n_nodes:
        raise ValueError("states, problem and mixing matrix disagree on the node count")
    return [_local_plain(s, problem, n, params, t, seed) for n, s in enumerate(states)]


def tracked_advance(states, W, params):
    X = np.stack([s.x for s in states])
    return [replace(s, x=x_update(X, s.y, W.row(n), params.alpha, params.eta, n))
            for n, s in enumerate(states)]


def dsgd_advance(states, W, params):
    """Mix, then take the plain stochastic compositional step."""
    X = np.stack([s.x for s in states])
    return [replace(s, x=mix(W.row(n), X) - params.lr * s.g) for n, s in enumerate(states)]


def dsmcgdm_step(states, problem, W, params, t, seed=0):
    """One full round of the momentum algorithm."""
    return tracked_advance(dsmcgdm_estimate(states, problem, W, params, t, seed), W, params)


def dsmcvrg_step(states, problem, W, params, t, seed=0):
    """One full round of the variance-reduced algorithm (batch ``S`` at ``t = 0``)."""
    return tracked_advance(dsmcvrg_estimate(states, problem, W, params, t, seed), W, params)


def dsgd_step(states, problem, W, params, t, seed=0):
    return dsgd_advance(dsgd_estimate(states, problem, W, params, t, seed), W, params)


@dataclass(frozen=True)
class Algorithm:
    name: str
    estimate: object
    advance: object
    tracked: bool


ALGORITHMS = {
    "dsmcgdm": Algorithm("dsmcgdm", dsmcgdm_estimate, tracked_advance, True),
    "dsmcvrg": Algorithm("dsmcvrg", dsmcvrg_estimate, tracked_advance, True),
    "dsgd": Algorithm("dsgd", dsgd_estimate, dsgd_advance, False),
}


def get_algorithm(name: str) -> Algorithm:
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise HyperParamError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None


def run(algo: str, problem: ProblemInstance, W: MixingMatrix, params: HyperParams,
        seed: int = 0, x0=None, T: int | None = None, callback=None) -> list[NodeState]:
    """Run ``T`` rounds (default ``params.T``) and return the final states.

    ``callback(t, states)`` is invoked after the estimation phase of every
    round ``t = 0..T``; round ``T`` is estimated but not advanced.
    """
    alg = get_algorithm(algo)
    params.validate(algo)
    T = params.T if T is None else T
    states = init_states(problem, x0)
    for t in range(T + 1):
        states = alg.estimate(states, problem, W, params, t, seed)
        if callback is not None and callback(t, states):
            break
        if t < T:
            states = alg.advance(states, W, params)
    return states
