"""Multi-level stochastic compositional objectives.

Each node ``n`` owns a chain of ``K`` level functions and its local objective
is the composition ``F_n(x) = f_n^K(f_n^{K-1}(... f_n^1(x)))``; the global
objective is the node average.

Jacobians are stored transposed: the Jacobian of a level mapping
``R^{d_in} -> R^{d_out}`` is kept as a ``(d_in, d_out)`` array, so the
left-to-right product of the ``K`` stored matrices of a chain is a
``(d_0, 1)`` gradient column.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .rng import keyed_rng

# max |d/dz tanh'(z)| = max |2 tanh(z) sech^2(z)| = 4 / (3 sqrt 3)
_TANH_CURV = 4.0 / (3.0 * np.sqrt(3.0))


@dataclass(frozen=True)
class Sample:
    """One noise realization of a level.

    ``shift`` is level-specific (an additive value perturbation for chain
    levels, a task-center offset for the MAML levels); ``jac`` perturbs the
    stored Jacobian. ``None`` means no perturbation.
    """

    shift: np.ndarray | None = None
    jac: np.ndarray | None = None


ZERO_SAMPLE = Sample()


@dataclass(frozen=True)
class LevelConstants:
    C: float
    L: float
    sigma: float
    delta: float
    # whether C bounds every sampled Jacobian (True) or only their RMS
    sure_bound: bool = True


class NoiseModel:
    """Additive value shift plus a mean-zero rank-one Jacobian perturbation.

    Gaussian mode draws ``shift = delta * z / sqrt(out_dim)`` and
    ``jac = sigma * a b^T`` with ``a``, ``b`` uniform on the unit spheres, so
    ``E|shift|^2 = delta^2`` and ``|jac|_F = sigma`` exactly. With
    ``atoms > 0`` the same law is drawn once to build a finite uniform
    support, which makes exact expectations enumerable.
    """

    def __init__(self, in_dim: int, out_dim: int, delta: float = 0.0,
                 sigma: float = 0.0, atoms: int = 0, seed: int = 0):
        if delta < 0 or sigma < 0:
            raise ValueError("noise scales must be nonnegative")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.delta = float(delta)
        self.sigma = float(sigma)
        self.atoms: list[Sample] | None = None
        if atoms:
            rng = np.random.default_rng(seed)
            self.atoms = [self._gaussian(rng) for _ in range(int(atoms))]
        self._moments()

    @property
    def deterministic(self) -> bool:
        return self.atoms is None and self.delta == 0.0 and self.sigma == 0.0

    def _gaussian(self, rng: np.random.Generator) -> Sample:
        shift = jac = None
        if self.delta > 0:
            shift = self.delta * rng.standard_normal(self.out_dim) / np.sqrt(self.out_dim)
        if self.sigma > 0:
            a = rng.standard_normal(self.in_dim)
            b = rng.standard_normal(self.out_dim)
            jac = self.sigma * np.outer(a / np.linalg.norm(a), b / np.linalg.norm(b))
        return Sample(shift, jac)

    def _moments(self) -> None:
        d, p = self.out_dim, self.in_dim
        if self.atoms is None:
            self.mean_shift = np.zeros(d)
            self.shift_cov = (self.delta ** 2 / d) * np.eye(d)
            self.mean_jac = np.zeros((p, d))
            self.jac_rms = self.sigma
            self.jac_max = self.sigma
            return
        shifts = np.array([s.shift if s.shift is not None else np.zeros(d) for s in self.atoms])
        jacs = np.array([s.jac if s.jac is not None else np.zeros((p, d)) for s in self.atoms])
        self.mean_shift = shifts.mean(axis=0)
        centered = shifts - self.mean_shift
        self.shift_cov = centered.T @ centered / len(shifts)
        self.mean_jac = jacs.mean(axis=0)
        dev = np.linalg.norm((jacs - self.mean_jac).reshape(len(jacs), -1), axis=1)
        self.jac_rms = float(np.sqrt(np.mean(dev ** 2)))
        self.jac_max = float(np.max(np.linalg.norm(jacs.reshape(len(jacs), -1), axis=1)))

    def draw(self, rng: np.random.Generator) -> Sample:
        if self.atoms is not None:
            return self.atoms[int(rng.integers(len(self.atoms)))]
        if self.deterministic:
            return ZERO_SAMPLE
        return self._gaussian(rng)

    def support(self) -> list[Sample] | None:
        return self.atoms

    def value_rms(self, M: np.ndarray | None = None) -> float:
        """RMS of ``M @ (shift - mean)``; identity when ``M`` is None."""
        cov = self.shift_cov if M is None else M @ self.shift_cov @ M.T
        return float(np.sqrt(max(np.trace(cov), 0.0)))


def _check_vec(u: np.ndarray, dim: int, what: str = "input") -> None:
    if u.shape != (dim,):
        raise ValueError(f"{what} has shape {u.shape}, expected ({dim},)")


class LevelFunction:
    """Base class: ``value``/``jacobian`` under a sample, plus their means.

    Subclasses provide the noiseless map ``_clean`` and its stored Jacobian
    ``_clean_jac``; the default noise is additive in the value and in the
    stored Jacobian.
    """

    def __init__(self, in_dim: int, out_dim: int, noise: NoiseModel | None = None):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.noise = noise if noise is not None else NoiseModel(in_dim, out_dim)
        if (self.noise.in_dim, self.noise.out_dim) != (self.in_dim, self.out_dim):
            raise ValueError("noise model dimensions do not match the level")

    @property
    def deterministic(self) -> bool:
        return self.noise.deterministic

    def sample(self, rng: np.random.Generator) -> Sample:
        return self.noise.draw(rng)

    def support(self) -> list[Sample] | None:
        return self.noise.support()

    def value(self, u: np.ndarray, sample: Sample = ZERO_SAMPLE) -> np.ndarray:
        _check_vec(u, self.in_dim)
        out = self._clean(u)
        if sample.shift is not None:
            out = out + sample.shift
        return out

    def jacobian(self, u: np.ndarray, sample: Sample = ZERO_SAMPLE) -> np.ndarray:
        _check_vec(u, self.in_dim)
        jac = self._clean_jac(u)
        if sample.jac is not None:
            jac = jac + sample.jac
        return jac

    def mean_value(self, u: np.ndarray) -> np.ndarray:
        _check_vec(u, self.in_dim)
        return self._clean(u) + self.noise.mean_shift

    def mean_jacobian(self, u: np.ndarray) -> np.ndarray:
        _check_vec(u, self.in_dim)
        return self._clean_jac(u) + self.noise.mean_jac

    def _clean(self, u):
        raise NotImplementedError

    def _clean_jac(self, u):
        raise NotImplementedError

    def constants(self, radius: float) -> LevelConstants:
        raise NotImplementedError


class AffineLevel(LevelFunction):
    """``u -> A u + b``."""

    def __init__(self, A, b=None, noise=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[1], A.shape[0], noise)
        self.A = A
        self.AT = np.ascontiguousarray(A.T)
        self.b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)

    def _clean(self, u):
        return self.A @ u + self.b

    def _clean_jac(self, u):
        return self.AT

    def constants(self, radius):
        return LevelConstants(C=float(np.linalg.norm(self.A)) + self.noise.jac_max, L=0.0,
                              sigma=self.noise.jac_rms, delta=self.noise.value_rms())


class SmoothLevel(LevelFunction):
    """``u -> A s(u) + b`` with ``s(z) = z + gamma * tanh(z)`` coordinatewise.

    ``s'`` lies in ``[1, 1 + gamma]`` and ``|s''| <= 0.77 gamma``, which gives
    the declared Jacobian bound and Lipschitz constant.
    """

    def __init__(self, A, b, gamma: float = 0.1, noise=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[1], A.shape[0], noise)
        self.A = A
        self.AT = np.ascontiguousarray(A.T)
        self.b = np.asarray(b, dtype=float)
        self.gamma = float(gamma)

    def _clean(self, u):
        return self.A @ (u + self.gamma * np.tanh(u)) + self.b

    def _clean_jac(self, u):
        ds = 1.0 + self.gamma * (1.0 - np.tanh(u) ** 2)
        return ds[:, None] * self.AT

    def constants(self, radius):
        col = float(np.max(np.linalg.norm(self.A, axis=0)))
        C = (1.0 + abs(self.gamma)) * float(np.linalg.norm(self.A)) + self.noise.jac_max
        return LevelConstants(C=C, L=_TANH_CURV * abs(self.gamma) * col,
                              sigma=self.noise.jac_rms, delta=self.noise.value_rms())


class TanhLevel(LevelFunction):
    """``u -> tanh(A u + b)``."""

    def __init__(self, A, b=None, noise=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[1], A.shape[0], noise)
        self.A = A
        self.AT = np.ascontiguousarray(A.T)
        self.b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)

    def _clean(self, u):
        return np.tanh(self.A @ u + self.b)

    def _clean_jac(self, u):
        th = np.tanh(self.A @ u + self.b)
        return self.AT * (1.0 - th ** 2)[None, :]

    def constants(self, radius):
        row = float(np.max(np.linalg.norm(self.A, axis=1)))
        L = _TANH_CURV * row * float(np.linalg.norm(self.A, 2))
        return LevelConstants(C=float(np.linalg.norm(self.A)) + self.noise.jac_max, L=L,
                              sigma=self.noise.jac_rms, delta=self.noise.value_rms())


class QuadraticLoss(LevelFunction):
    """Scalar final level ``u -> 0.5 (u - c)^T Q (u - c)``."""

    def __init__(self, Q, c, noise=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        super().__init__(Q.shape[0], 1, noise)
        self.Q = Q
        self.c = np.asarray(c, dtype=float)

    def _clean(self, u):
        r = u - self.c
        return np.array([0.5 * r @ self.Q @ r])

    def _clean_jac(self, u):
        return (self.Q @ (u - self.c))[:, None]

    def constants(self, radius):
        q = float(np.linalg.norm(self.Q, 2))
        C = q * (radius + float(np.linalg.norm(self.c))) + self.noise.jac_max
        return LevelConstants(C=C, L=q, sigma=self.noise.jac_rms, delta=self.noise.value_rms())


class InnerStepLevel(LevelFunction):
    """One support-set gradient step ``y -> y - nu Q (y - a - e)``.

    ``e`` is the sampled offset of the task center; the Jacobian
    ``I - nu Q`` is exact and noise free.
    """

    def __init__(self, Q, center, nu: float, noise: NoiseModel | None = None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        d = Q.shape[0]
        super().__init__(d, d, noise)
        self.Q = Q
        self.center = np.asarray(center, dtype=float)
        self.nu = float(nu)
        self.step = np.eye(d) - self.nu * Q
        self._offset = self.nu * (Q @ self.center)

    def value(self, u, sample=ZERO_SAMPLE):
        _check_vec(u, self.in_dim)
        out = self.step @ u + self._offset
        if sample.shift is not None:
            out = out + self.nu * (self.Q @ sample.shift)
        return out

    def jacobian(self, u, sample=ZERO_SAMPLE):
        _check_vec(u, self.in_dim)
        return self.step

    def mean_value(self, u):
        _check_vec(u, self.in_dim)
        return self.step @ u + self._offset + self.nu * (self.Q @ self.noise.mean_shift)

    def mean_jacobian(self, u):
        _check_vec(u, self.in_dim)
        return self.step

    def constants(self, radius):
        return LevelConstants(C=float(np.linalg.norm(self.step)), L=0.0, sigma=0.0,
                              delta=self.noise.value_rms(self.nu * self.Q))


class QueryLoss(LevelFunction):
    """Query-set loss ``y -> 0.5 (y - a - e)^T Q (y - a - e)``."""

    def __init__(self, Q, center, noise: NoiseModel | None = None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        super().__init__(Q.shape[0], 1, None)
        if noise is not None:
            if noise.out_dim != self.in_dim:
                raise ValueError("query noise must live in the input space")
            self.noise = noise
        else:
            self.noise = NoiseModel(self.in_dim, self.in_dim)
        self.Q = Q
        self.center = np.asarray(center, dtype=float)
        self._mean_e = self.noise.mean_shift
        second = self.noise.shift_cov + np.outer(self._mean_e, self._mean_e)
        self._half_tr = 0.5 * float(np.sum(Q * second))

    def value(self, u, sample=ZERO_SAMPLE):
        _check_vec(u, self.in_dim)
        r = u - self.center
        if sample.shift is not None:
            r = r - sample.shift
        return np.array([0.5 * r @ self.Q @ r])

    def jacobian(self, u, sample=ZERO_SAMPLE):
        _check_vec(u, self.in_dim)
        r = u - self.center
        if sample.shift is not None:
            r = r - sample.shift
        return (self.Q @ r)[:, None]

    def mean_value(self, u):
        _check_vec(u, self.in_dim)
        r = u - self.center
        return np.array([0.5 * r @ self.Q @ r - r @ self.Q @ self._mean_e + self._half_tr])

    def mean_jacobian(self, u):
        _check_vec(u, self.in_dim)
        return (self.Q @ (u - self.center - self._mean_e))[:, None]

    def constants(self, radius):
        q = float(np.linalg.norm(self.Q, 2))
        reach = radius + float(np.linalg.norm(self.center))
        atoms = self.noise.support()
        if atoms is not None:
            jitter = max(float(np.linalg.norm(self.Q @ s.shift)) for s in atoms)
        else:
            jitter = self.noise.value_rms(self.Q)
        sigma = self.noise.value_rms(self.Q)
        cov = self.noise.shift_cov
        # value deviation: -r^T Q (e - mean) + quadratic-form fluctuation
        lin = reach * float(np.linalg.norm(self.Q @ cov @ self.Q, 2)) ** 0.5
        quad = np.sqrt(2.0) * 0.5 * float(np.linalg.norm(self.Q @ cov))
        return LevelConstants(C=q * reach + jitter, L=q, sigma=sigma, delta=lin + quad,
                              sure_bound=atoms is not None)


class ProblemInstance:
    """Per-node level chains sharing one dimension chain ``d_0 .. d_K = 1``."""

    def __init__(self, levels: Sequence[Sequence[LevelFunction]], radius: float = 10.0,
                 name: str = "custom", x0=None, x_star=None, f_star=None):
        if not levels or not levels[0]:
            raise ValueError("need at least one node with at least one level")
        self.levels = [list(chain) for chain in levels]
        dims = [self.levels[0][0].in_dim] + [lev.out_dim for lev in self.levels[0]]
        for n, chain in enumerate(self.levels):
            if len(chain) != len(self.levels[0]):
                raise ValueError(f"node {n} has {len(chain)} levels, expected {len(self.levels[0])}")
            for k, lev in enumerate(chain):
                if (lev.in_dim, lev.out_dim) != (dims[k], dims[k + 1]):
                    raise ValueError(
                        f"node {n} level {k + 1} maps {lev.in_dim}->{lev.out_dim}, "
                        f"expected {dims[k]}->{dims[k + 1]}")
        if dims[-1] != 1:
            raise ValueError(f"final level must be scalar, got d_K={dims[-1]}")
        self.dims = tuple(dims)
        self.radius = float(radius)
        self.name = name
        self.x0 = np.zeros(dims[0]) if x0 is None else np.asarray(x0, dtype=float)
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=float)
        self.f_star = f_star

    @property
    def n_nodes(self) -> int:
        return len(self.levels)

    @property
    def K(self) -> int:
        return len(self.levels[0])

    @property
    def deterministic(self) -> bool:
        return all(lev.deterministic for chain in self.levels for lev in chain)

    def level(self, node: int, k: int) -> LevelFunction:
        """Level ``k`` (1-based) of ``node``."""
        return self.levels[node][k - 1]

    def constants(self) -> list[LevelConstants]:
        """Per-level constants, worst case over nodes."""
        out = []
        for k in range(self.K):
            cs = [chain[k].constants(self.radius) for chain in self.levels]
            out.append(LevelConstants(
                C=max(c.C for c in cs), L=max(c.L for c in cs),
                sigma=max(c.sigma for c in cs), delta=max(c.delta for c in cs),
                sure_bound=all(c.sure_bound for c in cs)))
        return out


def draw_sample(problem: ProblemInstance, seed: int, node: int, k: int, t: int,
                replicate: int = 0) -> Sample:
    """The sample of level ``k`` at ``node`` for iteration ``t``."""
    lev = problem.levels[node][k - 1]
    if lev.deterministic:
        return ZERO_SAMPLE
    return lev.sample(keyed_rng(seed, node, k, t, replicate))


def _check_x(problem, x):
    x = np.asarray(x, dtype=float)
    _check_vec(x, problem.dims[0], "x")
    return x


def intermediates(problem: ProblemInstance, node: int, x) -> list[np.ndarray]:
    """``[F^0(x), F^1(x), ..., F^K(x)]`` through the mean level maps."""
    chain = [_check_x(problem, x)]
    for lev in problem.levels[node]:
        chain.append(lev.mean_value(chain[-1]))
    return chain


def full_value(problem: ProblemInstance, node: int, x) -> float:
    return float(intermediates(problem, node, x)[-1][0])


def full_gradient(problem: ProblemInstance, node: int, x) -> np.ndarray:
    chain = intermediates(problem, node, x)
    jacs = [lev.mean_jacobian(u) for lev, u in zip(problem.levels[node], chain)]
    return reduce(np.matmul, jacs)[:, 0]


def global_objective(problem: ProblemInstance, x) -> float:
    return float(np.mean([full_value(problem, n, x) for n in range(problem.n_nodes)]))


def global_gradient(problem: ProblemInstance, x) -> np.ndarray:
    return np.mean([full_gradient(problem, n, x) for n in range(problem.n_nodes)], axis=0)


# ---------------------------------------------------------------------------
# synthetic builders


def _per_level(value, K: int, what: str) -> list[float]:
    if np.isscalar(value):
        return [float(value)] * K
    vals = [float(v) for v in value]
    if len(vals) != K:
        raise ValueError(f"{what} needs {K} entries, got {len(vals)}")
    return vals


def _semi_orthogonal(rng, rows: int, cols: int) -> np.ndarray:
    U, _, Vt = np.linalg.svd(rng.standard_normal((rows, cols)), full_matrices=False)
    return U @ Vt


def _spd(rng, d: int, lo: float, hi: float) -> np.ndarray:
    R, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (R * np.linspace(lo, hi, d)) @ R.T


def _perturb_spd(rng, Q: np.ndarray, spread: float, lo: float, hi: float) -> np.ndarray:
    """Symmetric perturbation of ``Q`` with its spectrum clipped to ``[lo, hi]``."""
    if spread == 0:
        return Q.copy()
    G = rng.standard_normal(Q.shape)
    P = Q + spread * (G + G.T) / 2.0
    w, V = np.linalg.eigh(P)
    return (V * np.clip(w, lo, hi)) @ V.T


def _resolve_dims(K: int, dims) -> list[int]:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if dims is None:
        dims = [4] * K + [1]
    dims = [int(d) for d in dims]
    if len(dims) != K + 1:
        raise ValueError(f"dims must have K+1={K + 1} entries, got {len(dims)}")
    if dims[-1] != 1:
        raise ValueError("last dimension must be 1")
    if min(dims) < 1:
        raise ValueError("dimensions must be positive")
    return dims


def make_quadratic_chain(K: int, dims=None, seed: int = 0, delta=0.0, sigma=0.0,
                         spread: float = 0.0, n_nodes: int = 4, gamma: float = 0.1,
                         eig_range=(1.0, 2.0), x_star_norm: float = 2.0,
                         noise_atoms: int = 0, radius: float = 10.0) -> ProblemInstance:
    """Smooth near-isometric interior levels feeding a quadratic final level.

    Interior levels are ``A s(u) + b`` with semi-orthogonal ``A`` (scaled by
    ``1/(1 + gamma/2)``) and ``s(z) = z + gamma tanh z``; the final level is
    ``0.5 |u - c_n|_Q^2``. Each ``c_n`` is the node's noiseless interior image
    of a shared point ``x_star``, so ``x_star`` minimizes every ``F_n`` and the
    global minimum value is the mean final-level noise offset (0 for Gaussian
    noise). ``spread`` perturbs ``A``, ``b`` and ``Q`` per node.
    """
    dims = _resolve_dims(K, dims)
    deltas = _per_level(delta, K, "delta")
    sigmas = _per_level(sigma, K, "sigma")
    rng = np.random.default_rng(seed)
    scale = 1.0 / (1.0 + gamma / 2.0)
    A0 = [scale * _semi_orthogonal(rng, dims[k + 1], dims[k]) for k in range(K - 1)]
    b0 = [0.1 * rng.standard_normal(dims[k + 1]) for k in range(K - 1)]
    Q0 = _spd(rng, dims[K - 1], *eig_range)
    x_star = rng.standard_normal(dims[0])
    x_star *= x_star_norm / np.linalg.norm(x_star)
    levels = []
    for n in range(n_nodes):
        chain: list[LevelFunction] = []
        u = x_star
        for k in range(K - 1):
            A = A0[k] + spread * rng.standard_normal(A0[k].shape) / np.sqrt(dims[k])
            b = b0[k] + spread * 0.1 * rng.standard_normal(dims[k + 1])
            noise = NoiseModel(dims[k], dims[k + 1], deltas[k], sigmas[k], noise_atoms,
                               seed=_atom_seed(seed, n, k))
            lev = SmoothLevel(A, b, gamma, noise)
            u = lev._clean(u)
            chain.append(lev)
        Q = _perturb_spd(rng, Q0, spread, eig_range[0] / 2.0, 1.5 * eig_range[1])
        noise = NoiseModel(dims[K - 1], 1, deltas[-1], sigmas[-1], noise_atoms,
                           seed=_atom_seed(seed, n, K - 1))
        chain.append(QuadraticLoss(Q, u, noise))
        levels.append(chain)
    f_star = float(np.mean([chain[-1].noise.mean_shift[0] for chain in levels]))
    return ProblemInstance(levels, radius=radius, name="quadratic_chain",
                           x_star=x_star, f_star=f_star)


def make_tanh_chain(K: int, dims=None, seed: int = 0, delta=0.0, sigma=0.0,
                    spread: float = 0.0, n_nodes: int = 4, weight_scale: float = 1.0,
                    bias_scale: float = 0.1, eig_range=(1.0, 2.0), target_scale: float = 0.5,
                    noise_atoms: int = 0, radius: float = 10.0) -> ProblemInstance:
    """``tanh(A u + b)`` interior levels with a quadratic final level."""
    dims = _resolve_dims(K, dims)
    deltas = _per_level(delta, K, "delta")
    sigmas = _per_level(sigma, K, "sigma")
    rng = np.random.default_rng(seed)
    A0 = [weight_scale * rng.standard_normal((dims[k + 1], dims[k])) / np.sqrt(dims[k])
          for k in range(K - 1)]
    b0 = [bias_scale * rng.standard_normal(dims[k + 1]) for k in range(K - 1)]
    Q0 = _spd(rng, dims[K - 1], *eig_range)
    c0 = target_scale * rng.standard_normal(dims[K - 1])
    levels = []
    for n in range(n_nodes):
        chain: list[LevelFunction] = []
        for k in range(K - 1):
            A = A0[k] + spread * rng.standard_normal(A0[k].shape) / np.sqrt(dims[k])
            b = b0[k] + spread * bias_scale * rng.standard_normal(dims[k + 1])
            noise = NoiseModel(dims[k], dims[k + 1], deltas[k], sigmas[k], noise_atoms,
                               seed=_atom_seed(seed, n, k))
            chain.append(TanhLevel(A, b, noise))
        Q = _perturb_spd(rng, Q0, spread, eig_range[0] / 2.0, 1.5 * eig_range[1])
        c = c0 + spread * rng.standard_normal(dims[K - 1])
        noise = NoiseModel(dims[K - 1], 1, deltas[-1], sigmas[-1], noise_atoms,
                           seed=_atom_seed(seed, n, K - 1))
        chain.append(QuadraticLoss(Q, c, noise))
        levels.append(chain)
    return ProblemInstance(levels, radius=radius, name="tanh_chain")


def make_quadratic_maml(inner_steps: int, nu: float = 0.01, dim: int = 5, n_nodes: int = 4,
                        task_noise=0.0, seed: int = 0, spread: float = 0.1,
                        hessian_spread: float | None = None, eig_range=(1.0, 2.0),
                        center_norm: float = 3.0,
                        noise_atoms: int = 0, radius: float = 10.0) -> ProblemInstance:
    """Multi-step MAML with quadratic task losses as an ``inner_steps + 1`` level chain.

    Node ``n`` has task Hessian ``Q_n`` and task-center mean ``a_n``. Levels
    ``1..inner_steps`` are support-set gradient steps
    ``y -> y - nu Q_n (y - a_n - e)`` and the last level is the query loss
    ``0.5 (y - a_n - e')^T Q_n (y - a_n - e')``, where ``e``, ``e'`` are
    independent task-center offsets. ``task_noise`` is the RMS norm of the
    offsets, either one value or a ``(support, query)`` pair. ``spread``
    scatters the node centers; ``hessian_spread`` (default ``spread``)
    perturbs the node Hessians, whose spectra stay inside
    ``[eig_range[0] / 2, 1.5 * eig_range[1]]``.
    """
    if inner_steps < 1:
        raise ValueError(f"inner_steps must be >= 1, got {inner_steps}")
    if nu < 0:
        raise ValueError(f"nu must be nonnegative, got {nu}")
    if np.isscalar(task_noise):
        support_noise = query_noise = float(task_noise)
    else:
        support_noise, query_noise = (float(v) for v in task_noise)
    rng = np.random.default_rng(seed)
    Q0 = _spd(rng, dim, *eig_range)
    a0 = rng.standard_normal(dim)
    a0 *= center_norm / np.linalg.norm(a0)
    if hessian_spread is None:
        hessian_spread = spread
    levels = []
    lam_max = 0.0
    for n in range(n_nodes):
        Q = _perturb_spd(rng, Q0, hessian_spread, eig_range[0] / 2.0, 1.5 * eig_range[1])
        a = a0 + spread * rng.standard_normal(dim)
        lam_max = max(lam_max, float(np.linalg.eigvalsh(Q)[-1]))
        chain: list[LevelFunction] = []
        for k in range(inner_steps):
            noise = NoiseModel(dim, dim, support_noise, 0.0, noise_atoms,
                               seed=_atom_seed(seed, n, k))
            chain.append(InnerStepLevel(Q, a, nu, noise))
        noise = NoiseModel(dim, dim, query_noise, 0.0, noise_atoms,
                           seed=_atom_seed(seed, n, inner_steps))
        chain.append(QueryLoss(Q, a, noise))
        levels.append(chain)
    if nu > 0 and nu >= 2.0 / lam_max:
        warnings.warn(f"inner step nu={nu} >= 2/lambda_max={2.0 / lam_max:.4g}; "
                      "inner gradient steps diverge", RuntimeWarning, stacklevel=2)
    return ProblemInstance(levels, radius=radius, name="quadratic_maml")


def _atom_seed(seed: int, node: int, level: int) -> list[int]:
    return [int(seed), 7919, int(node), int(level)]


BUILDERS = {
    "quadratic_chain": make_quadratic_chain,
    "tanh_chain": make_tanh_chain,
    "quadratic_maml": make_quadratic_maml,
}


def build_problem(name: str, **options) -> ProblemInstance:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILDERS)}") from None
    return builder(**options)
