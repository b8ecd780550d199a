"""Communication graphs and their mixing matrices.

Every constructor returns a :class:`MixingMatrix` carrying symmetric doubly
stochastic Metropolis-Hastings weights together with the cached second
eigenvalue magnitude used by the hyperparameter schedules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

TOL = 1e-12
MAX_RESAMPLES = 1000


class TopologyError(ValueError):
    """Invalid topology parameters or weights."""


class ConstructionError(RuntimeError):
    """A random graph could not be made connected."""


@dataclass(frozen=True)
class MixingMatrix:
    weights: np.ndarray
    lambda2: float = field(init=False)
    spectral_gap: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        validate_weights(w)
        lam = second_eigenvalue(w)
        object.__setattr__(self, "lambda2", lam)
        object.__setattr__(self, "spectral_gap", 1.0 - lam)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.weights[i]

    def to_csv(self, path) -> None:
        np.savetxt(path, self.weights, delimiter=",", fmt="%.17g")


def _check_stochastic(w: np.ndarray) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise TopologyError(f"weights must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise TopologyError("weights contain non-finite entries")
    if np.max(np.abs(w - w.T)) > TOL:
        raise TopologyError("weights are not symmetric")
    if np.any(w < 0):
        raise TopologyError("weights contain negative entries")
    if np.max(np.abs(w.sum(axis=1) - 1.0)) > TOL:
        raise TopologyError("rows of weights do not sum to 1")


def is_connected(w: np.ndarray) -> bool:
    adj = (np.abs(w) > 0) & ~np.eye(w.shape[0], dtype=bool)
    return nx.is_connected(nx.from_numpy_array(adj.astype(int)))


def validate_weights(w: np.ndarray) -> None:
    """Raise :class:`TopologyError` unless ``w`` is a valid mixing matrix."""
    _check_stochastic(w)
    if not is_connected(w):
        raise TopologyError("graph induced by weights is disconnected")


def second_eigenvalue(w: np.ndarray) -> float:
    """Second-largest eigenvalue magnitude of a symmetric stochastic matrix."""
    n = w.shape[0]
    if n == 1:
        return 0.0
    mags = np.sort(np.abs(np.linalg.eigvalsh(w)))[::-1]
    # the leading magnitude is 1 for a stochastic matrix
    return float(min(max(mags[1], 0.0), 1.0))


def spectral_gap(weights) -> float:
    """Return ``1 - |lambda_2|`` after validating ``weights``."""
    w = np.asarray(weights, dtype=float)
    validate_weights(w)
    return 1.0 - second_eigenvalue(w)


def metropolis_weights(adjacency: np.ndarray) -> np.ndarray:
    """Metropolis-Hastings weights ``1 / (1 + max(deg_i, deg_j))``."""
    a = np.asarray(adjacency, dtype=bool)
    a = a & ~np.eye(a.shape[0], dtype=bool)
    deg = a.sum(axis=1)
    w = np.zeros(a.shape, dtype=float)
    ii, jj = np.nonzero(a)
    w[ii, jj] = 1.0 / (1.0 + np.maximum(deg[ii], deg[jj]))
    w[np.diag_indices_from(w)] = 1.0 - w.sum(axis=1)
    return w


def ring_topology(n: int) -> MixingMatrix:
    if n < 2:
        raise TopologyError(f"ring needs at least 2 nodes, got {n}")
    g = nx.cycle_graph(n) if n > 2 else nx.path_graph(2)
    return MixingMatrix(metropolis_weights(nx.to_numpy_array(g)))


def complete_topology(n: int) -> MixingMatrix:
    if n < 1:
        raise TopologyError(f"need at least 1 node, got {n}")
    return MixingMatrix(np.full((n, n), 1.0 / n))


def random_topology(n: int, edge_prob: float, seed: int = 0) -> MixingMatrix:
    """Erdos-Renyi graph, resampled until connected, with Metropolis weights."""
    if n < 2:
        raise TopologyError(f"random graph needs at least 2 nodes, got {n}")
    if not 0.0 < edge_prob <= 1.0:
        raise TopologyError(f"edge_prob must lie in (0, 1], got {edge_prob}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    for _ in range(MAX_RESAMPLES):
        adj = np.zeros((n, n), dtype=bool)
        adj[iu] = rng.random(len(iu[0])) < edge_prob
        adj = adj | adj.T
        if nx.is_connected(nx.from_numpy_array(adj.astype(int))):
            return MixingMatrix(metropolis_weights(adj))
    raise ConstructionError(
        f"no connected graph after {MAX_RESAMPLES} draws (n={n}, p={edge_prob})"
    )


def build_topology(kind: str, n: int, edge_prob: float = 0.4, seed: int = 0) -> MixingMatrix:
    if kind == "ring":
        return ring_topology(n)
    if kind == "complete":
        return complete_topology(n)
    if kind == "random":
        return random_topology(n, edge_prob, seed)
    raise TopologyError(f"unknown topology {kind!r}")
