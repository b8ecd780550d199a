"""Per-node recursive estimators shared by the decentralized algorithms."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import reduce

import numpy as np

ROW_TOL = 1e-12


class EstimatorError(ValueError):
    pass


@dataclass
class NodeState:
    """State of one node between synchronous rounds.

    ``u`` is the estimated chain ``[u^(0), u^(1), ..., u^(K-1)]`` from the
    most recent round, with ``u^(0)`` the iterate that round was evaluated at;
    ``u_prev`` is the chain of the round before. ``v`` holds the stored
    (transposed) Jacobian samples ``v^(1..K)``.
    """

    x: np.ndarray
    u: list[np.ndarray] | None = None
    u_prev: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None
    g: np.ndarray | None = None
    m: np.ndarray | None = None
    m_prev: np.ndarray | None = None
    y: np.ndarray | None = None

    def copy(self) -> "NodeState":
        def cp(a):
            if a is None:
                return None
            if isinstance(a, list):
                return [b.copy() for b in a]
            return a.copy()

        return replace(self, x=self.x.copy(), u=cp(self.u), u_prev=cp(self.u_prev),
                       v=cp(self.v), g=cp(self.g), m=cp(self.m), m_prev=cp(self.m_prev),
                       y=cp(self.y))


def _coef(c: float, name: str) -> float:
    if not 0.0 < c <= 1.0:
        raise EstimatorError(f"{name} must lie in (0, 1], got {c}")
    return float(c)


def inner_update_momentum(u_prev_k, f_at_prev, f_at_new, beta_eta: float) -> np.ndarray:
    """Inner-function estimate ``(1 - b)(u_prev - f(u_prev^{k-1})) + f(u^{k-1})``.

    Both evaluations must use the same sample.
    """
    b = _coef(beta_eta, "beta*eta")
    return (1.0 - b) * (u_prev_k - f_at_prev) + f_at_new


def inner_update_vr(u_prev_k, f_at_prev, f_at_new, beta_eta_sq: float) -> np.ndarray:
    """Same recursion as :func:`inner_update_momentum` with coefficient ``beta*eta**2``."""
    b = _coef(beta_eta_sq, "beta*eta^2")
    return (1.0 - b) * (u_prev_k - f_at_prev) + f_at_new


def compose_gradient(v_list) -> np.ndarray:
    """Left-to-right product ``v^(1) v^(2) ... v^(K)`` as a ``d_0`` vector."""
    if len(v_list) == 0:
        raise EstimatorError("need at least one Jacobian")
    mats = [np.atleast_2d(np.asarray(v, dtype=float)) for v in v_list]
    for k in range(len(mats) - 1):
        if mats[k].shape[1] != mats[k + 1].shape[0]:
            raise EstimatorError(
                f"v^({k + 1}) has shape {mats[k].shape}, v^({k + 2}) has {mats[k + 1].shape}")
    if mats[-1].shape[1] != 1:
        raise EstimatorError(f"last Jacobian must have one column, got {mats[-1].shape}")
    return reduce(np.matmul, mats)[:, 0]


def momentum_update(m_prev, g, mu_eta: float) -> np.ndarray:
    a = _coef(mu_eta, "mu*eta")
    return (1.0 - a) * m_prev + a * g


def storm_update(m_prev, g_prev_sample, g_new_sample, mu_eta_sq: float) -> np.ndarray:
    """Variance-reduced gradient ``(1 - a)(m_prev - g_prev) + g_new``.

    ``g_prev_sample`` and ``g_new_sample`` share the current iteration's
    samples, evaluated on the previous and current estimated chains.
    """
    a = _coef(mu_eta_sq, "mu*eta^2")
    return (1.0 - a) * (m_prev - g_prev_sample) + g_new_sample


def _check_row(weights_row) -> np.ndarray:
    w = np.asarray(weights_row, dtype=float)
    if abs(w.sum() - 1.0) > ROW_TOL:
        raise EstimatorError(f"weights row sums to {w.sum()!r}, not 1")
    return w


def mix(weights_row, stacked: np.ndarray) -> np.ndarray:
    """``sum_j w_j * stacked[j]``."""
    return weights_row @ stacked


def tracking_update(y_all_prev, m_new, m_old, weights_row) -> np.ndarray:
    """Gradient tracking ``sum_j w_nj y_j + m_new - m_old`` over the neighbors' ``y``."""
    w = _check_row(weights_row)
    return mix(w, np.asarray(y_all_prev)) + m_new - m_old


def x_update(x_all, y_n, weights_row, alpha: float, eta: float, node: int) -> np.ndarray:
    """``x_n + eta (sum_j w_nj x_j - alpha y_n - x_n)``."""
    if alpha <= 0:
        raise EstimatorError(f"alpha must be positive, got {alpha}")
    _coef(eta, "eta")
    w = _check_row(weights_row)
    x_all = np.asarray(x_all)
    x_n = x_all[node]
    half = mix(w, x_all) - alpha * y_n
    return x_n + eta * (half - x_n)
