import numpy as np
import pytest

from mlcomp.oracle import (brute_force_expectation, centralized_reference,
                           finite_difference_gradient, relative_error)
from mlcomp.problem import (AffineLevel, NoiseModel, ProblemInstance, QuadraticLoss, Sample,
                            make_quadratic_chain, make_quadratic_maml, make_tanh_chain)


class _AtomNoise(NoiseModel):
    """Noise model with a hand-specified support."""

    def __init__(self, in_dim, out_dim, shifts):
        super().__init__(in_dim, out_dim)
        self.atoms = [Sample(np.asarray(s, dtype=float)) for s in shifts]


def test_fd_linear_scalar_chain():
    p = ProblemInstance([[AffineLevel([[2.0]]), AffineLevel([[3.0]])]])
    g = finite_difference_gradient(p, 0, [0.7], h=1e-5)
    assert abs(g[0] - 6.0) <= 1e-9


@pytest.mark.parametrize("problem", [
    make_quadratic_chain(4, (8, 6, 4, 2, 1), seed=11),
    make_quadratic_maml(3, dim=5, seed=11),
], ids=["quadratic_chain", "maml"])
def test_fd_matches_full_gradient(problem):
    from mlcomp.problem import full_gradient
    x = np.random.default_rng(0).standard_normal(problem.dims[0])
    assert relative_error(finite_difference_gradient(problem, 0, x), full_gradient(problem, 0, x)) <= 1e-5


def test_fd_rejects_bad_step():
    p = ProblemInstance([[AffineLevel([[1.0]])]])
    with pytest.raises(ValueError):
        finite_difference_gradient(p, 0, [0.0], h=0.0)


def test_centralized_reference_examples():
    p = ProblemInstance([[QuadraticLoss([[1.0]], [0.0])]])
    ref = centralized_reference(p, [1.0], 0.5, 5)
    np.testing.assert_allclose(ref[:, 0], [1, 0.5, 0.25, 0.125, 0.0625, 0.03125])
    const = centralized_reference(make_tanh_chain(2), np.ones(4), 0.0, 3)
    assert np.all(const == 1.0) and const.shape == (4, 4)


def test_brute_force_symmetric_atoms():
    lev = AffineLevel([[2.0, 1.0]], [0.5], _AtomNoise(2, 1, [[0.3], [-0.3]]))
    u = np.array([1.0, -1.0])
    mv, mj = brute_force_expectation(lev, u)
    np.testing.assert_allclose(mv, lev.value(u), atol=1e-15)
    np.testing.assert_allclose(mj, lev.jacobian(u))


def test_brute_force_single_atom():
    lev = AffineLevel([[1.0]], None, _AtomNoise(1, 1, [[0.25]]))
    mv, _ = brute_force_expectation(lev, np.array([2.0]))
    assert mv.tolist() == [2.25]


@pytest.mark.parametrize("problem", [
    make_quadratic_chain(3, (4, 3, 2, 1), seed=1, delta=0.5, sigma=0.5, noise_atoms=100),
    make_tanh_chain(3, (4, 3, 2, 1), seed=1, delta=0.5, sigma=0.5, noise_atoms=100),
    make_quadratic_maml(2, dim=3, seed=1, task_noise=2.0, noise_atoms=100),
], ids=["quadratic_chain", "tanh_chain", "maml"])
def test_brute_force_matches_declared_means(problem):
    rng = np.random.default_rng(2)
    for lev in problem.levels[0]:
        u = rng.standard_normal(lev.in_dim)
        mv, mj = brute_force_expectation(lev, u)
        assert np.max(np.abs(mv - lev.mean_value(u))) <= 1e-12 * max(1.0, np.max(np.abs(mv)))
        assert np.max(np.abs(mj - lev.mean_jacobian(u))) <= 1e-12 * max(1.0, np.max(np.abs(mj)))


def test_brute_force_needs_finite_support():
    with pytest.raises(ValueError):
        brute_force_expectation(make_quadratic_chain(2, delta=0.1).levels[0][0], np.zeros(4))
