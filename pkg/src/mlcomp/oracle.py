"""Reference computations used to check the library, never by it.

These deliberately avoid the estimator and algorithm code paths: gradients
come from finite differences of the objective, descent traces from a plain
centralized loop, and expectations from exhaustive enumeration.
"""

from __future__ import annotations

import numpy as np

from .problem import LevelFunction, ProblemInstance, draw_sample, full_value, global_gradient
from .topology import MixingMatrix


def finite_difference_gradient(problem: ProblemInstance, node: int, x, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``full_value`` in every coordinate."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (full_value(problem, node, x + e) - full_value(problem, node, x - e)) / (2 * h)
    return grad


def finite_difference_jacobian(level: LevelFunction, u, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of ``level.mean_value`` in stored ``(d_in, d_out)`` layout."""
    u = np.asarray(u, dtype=float)
    jac = np.empty((level.in_dim, level.out_dim))
    for i in range(level.in_dim):
        e = np.zeros_like(u)
        e[i] = h
        jac[i] = (level.mean_value(u + e) - level.mean_value(u - e)) / (2 * h)
    return jac


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / scale


def centralized_reference(problem: ProblemInstance, x0, step: float, iters: int) -> np.ndarray:
    """Trajectory ``x_{t+1} = x_t - step * grad F(x_t)``, shape ``(iters + 1, d_0)``."""
    traj = [np.asarray(x0, dtype=float)]
    for _ in range(iters):
        traj.append(traj[-1] - step * global_gradient(problem, traj[-1]))
    return np.array(traj)


def brute_force_expectation(level: LevelFunction, u):
    """Exact ``(E f(u; xi), E grad f(u; xi))`` over a finite sample space."""
    atoms = level.support()
    if atoms is None:
        raise ValueError("level has no finite support")
    if len(atoms) > 10_000:
        raise ValueError(f"support too large to enumerate ({len(atoms)} atoms)")
    u = np.asarray(u, dtype=float)
    values = np.array([level.value(u, s) for s in atoms])
    jacs = np.array([level.jacobian(u, s) for s in atoms])
    return values.mean(axis=0), jacs.mean(axis=0)


def decentralized_momentum_sgd(problem: ProblemInstance, W: MixingMatrix, alpha: float,
                               eta: float, mu: float, T: int, seed: int = 0,
                               x0=None) -> np.ndarray:
    """Single-level decentralized momentum SGD with gradient tracking.

    Written out directly for ``K = 1`` problems; returns the iterates with
    shape ``(T + 1, N, d_0)``. Draws the same keyed samples as the library
    algorithms so trajectories are comparable bit for bit.
    """
    if problem.K != 1:
        raise ValueError("reference is defined for single-level problems only")
    N = problem.n_nodes
    x0 = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    X = np.array([x0.copy() for _ in range(N)])
    traj = [X.copy()]
    M = Y = None
    for t in range(T):
        G = np.array([problem.levels[n][0].jacobian(X[n], draw_sample(problem, seed, n, 1, t))[:, 0]
                      for n in range(N)])
        if t == 0:
            M_new = G
            Y_new = G
        else:
            M_new = np.array([(1.0 - mu * eta) * M[n] + mu * eta * G[n] for n in range(N)])
            Y_new = np.array([W.weights[n] @ Y + M_new[n] - M[n] for n in range(N)])
        X = np.array([X[n] + eta * (W.weights[n] @ X - alpha * Y_new[n] - X[n]) for n in range(N)])
        M, Y = M_new, Y_new
        traj.append(X.copy())
    return np.array(traj)
