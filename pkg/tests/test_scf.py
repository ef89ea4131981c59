import numpy as np
import pytest

from nepv.matcore import CapabilityError, laplacian_1d, sym_eigs_k
from nepv.model import ConstantModel, Iterate, residual
from nepv.problems import KsSimpleModel
from nepv.problems.rlda import RldaModel
from nepv.scf import ScfConfig, diagonalize_multiplier, scf_postprocess, scf_solve, scf_step

from conftest import orthonormal, random_symmetric


def test_gamma_zero_one_iteration():
    model = KsSimpleModel(10, 2, 0.0)
    X, trace = scf_solve(model, np.eye(10, 2), ScfConfig(tol=1e-12))
    assert trace.converged and trace.iterations == 1
    V, lam = sym_eigs_k(laplacian_1d(10).toarray(), 2)
    np.testing.assert_allclose(X.V, V, atol=1e-14)
    np.testing.assert_allclose(np.diag(X.Lam), lam, atol=1e-14)


def test_gamma_09_does_not_converge():
    model = KsSimpleModel(10, 2, 0.9)
    _, trace = scf_solve(model, model.initial_guess(), ScfConfig(tol=1e-12, max_iter=200))
    assert not trace.converged and trace.iterations == 200


def test_constant_model_fixed_point(rng):
    A = random_symmetric(rng, 9)
    _, trace = scf_solve(ConstantModel(A, 3), orthonormal(rng, 9, 3), ScfConfig(tol=1e-300, max_iter=5))
    assert max(trace.residuals) <= 1e-13


def test_iterates_orthonormal_and_consistent(rng):
    model = KsSimpleModel(12, 3, 0.8)
    V = model.initial_guess()
    for _ in range(15):
        H = model.hamiltonian(V)
        V_next, Lam = scf_step(model, V)
        assert np.linalg.norm(V_next.T @ V_next - np.eye(3)) <= 1e-12
        Hd = H.toarray()
        assert np.linalg.norm(Hd @ V_next - V_next @ Lam) <= 1e-9 * np.linalg.norm(Hd)
        V = V_next


def test_residual_uses_next_hamiltonian():
    model = KsSimpleModel(10, 2, 0.6)
    X, trace = scf_solve(model, model.initial_guess(), ScfConfig(tol=1e-300, max_iter=3))
    assert np.isclose(trace.residuals[-1], np.linalg.norm(residual(model, X)), rtol=1e-12)


def test_generalized_spd(rng):
    A = random_symmetric(rng, 7)
    M = rng.standard_normal((7, 7))
    B = M @ M.T + 7 * np.eye(7)
    model = ConstantModel(A, 2, B=B)
    X, trace = scf_solve(model, np.eye(7, 2), ScfConfig(tol=1e-10, max_iter=3))
    assert trace.converged
    np.testing.assert_allclose(X.V.T @ X.V, np.eye(2), atol=1e-12)
    lam = np.linalg.eigvals(X.Lam).real
    from scipy.linalg import eigh

    np.testing.assert_allclose(np.sort(lam), eigh(A, B, eigvals_only=True)[:2], atol=1e-10)


def test_rank_one_metric_rejected(rng):
    n = 5
    model = RldaModel(np.eye(n) * 2, np.ones(n), np.eye(n) * 0.01, np.eye(n) * 0.01)
    with pytest.raises(CapabilityError):
        scf_solve(model, np.ones((n, 1)) / np.sqrt(n))


def test_non_orthonormal_start():
    with pytest.raises(ValueError):
        scf_solve(KsSimpleModel(6, 2, 0.5), np.ones((6, 2)))


def test_zero_iterations_returns_rayleigh_quotient():
    model = KsSimpleModel(6, 2, 0.5)
    V = model.initial_guess()
    X, trace = scf_solve(model, V, ScfConfig(max_iter=0))
    assert trace.iterations == 0
    np.testing.assert_allclose(X.Lam, V.T @ (model.hamiltonian(V) @ V))


class TestPostprocess:
    def test_fixed_point_identity_up_to_sign(self):
        model = KsSimpleModel(10, 2, 0.5)
        X, trace = scf_solve(model, model.initial_guess(), ScfConfig(tol=1e-13, max_iter=500))
        assert trace.converged
        Y = scf_postprocess(model, Iterate(-X.V, X.Lam))
        np.testing.assert_allclose(np.abs(Y.V), np.abs(X.V), atol=1e-10)
        np.testing.assert_allclose(Y.Lam, X.Lam, atol=1e-10)

    def test_rotated_solution_is_diagonalized(self, rng):
        model = KsSimpleModel(10, 2, 0.5)
        X, _ = scf_solve(model, model.initial_guess(), ScfConfig(tol=1e-13, max_iter=500))
        Q = np.linalg.qr(rng.standard_normal((2, 2)))[0]
        rotated = Iterate(X.V @ Q, Q.T @ X.Lam @ Q)
        assert abs(rotated.Lam[0, 1]) > 1e-3
        Y = scf_postprocess(model, rotated)
        assert abs(Y.Lam[0, 1]) <= 1e-14 and abs(Y.Lam[1, 0]) <= 1e-14
        np.testing.assert_allclose(np.sort(np.diag(Y.Lam)), np.sort(np.diag(X.Lam)), atol=1e-10)

    def test_diagonal_lambda_are_eigenvalues_of_H(self):
        model = KsSimpleModel(10, 2, 0.5)
        X, _ = scf_solve(model, model.initial_guess(), ScfConfig(tol=1e-13, max_iter=500))
        Y = scf_postprocess(model, X)
        spectrum = np.linalg.eigvalsh(model.hamiltonian(Y.V).toarray())
        for lam in np.diag(Y.Lam):
            assert np.min(np.abs(spectrum - lam)) <= 1e-8

    def test_diagonalize_multiplier_keeps_residual(self, rng):
        model = KsSimpleModel(8, 3, 0.4)
        X = Iterate(orthonormal(rng, 8, 3), random_symmetric(rng, 3))
        Y = diagonalize_multiplier(X)
        assert np.isclose(np.linalg.norm(residual(model, X)), np.linalg.norm(residual(model, Y)), rtol=1e-12)
        assert np.allclose(Y.Lam, np.diag(np.diag(Y.Lam)))

    def test_rank_one_metric_falls_back(self, rng):
        n = 4
        model = RldaModel(np.eye(n) * 2, np.ones(n), np.eye(n) * 0.01, np.eye(n) * 0.01)
        v = np.ones((n, 1)) / 2
        X = Iterate(v, np.array([[0.5]]))
        Y = scf_postprocess(model, X)
        np.testing.assert_array_equal(Y.Lam, X.Lam)
