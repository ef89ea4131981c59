import numpy as np
import pytest
import scipy.sparse.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from nepv.glgmres import GivensLSQ, GlGmresConfig, GlobalArnoldi, arnoldi_step, solve_update
from nepv.matcore import frob_inner, frob_norm
from nepv.model import Iterate, Linearization, build_kronecker_form
from nepv.problems import KsSimpleModel, gpe_assemble

from conftest import orthonormal


def spd(rng, n):
    M = rng.standard_normal((n, n))
    return M @ M.T + n * np.eye(n)


def frobenius_basis(rng, count, shape):
    """``count`` Frobenius-orthonormal matrices via QR of their vectorizations."""
    Q = np.linalg.qr(rng.standard_normal((shape[0] * shape[1], count)))[0]
    return [Q[:, i].reshape(shape, order="F") for i in range(count)]


def scipy_gmres_iterate(K, b, m):
    """``m``-step GMRES iterate from ``x0 = 0`` (one cycle of length ``m``)."""
    x, _ = sla.gmres(K, b, rtol=1e-300, atol=0.0, restart=m, maxiter=1)
    return x


class TestSolveUpdate:
    def test_identity(self, rng):
        B = rng.standard_normal((5, 2))
        E, rep = solve_update(lambda X: X, B, cfg=GlGmresConfig(rel_tol=1e-12))
        np.testing.assert_allclose(E, B, atol=1e-15)
        assert rep.iterations_total == 1 and rep.converged and rep.achieved_rel_residual <= 1e-15

    def test_spd_vector(self, rng):
        A = spd(rng, 20)
        b = rng.standard_normal((20, 1))
        E, rep = solve_update(lambda X: A @ X, b, cfg=GlGmresConfig(rel_tol=1e-10))
        np.testing.assert_allclose(E, np.linalg.solve(A, b), atol=1e-8)
        assert rep.converged

    def test_matrix_equation(self, rng):
        A, C = spd(rng, 8), spd(rng, 3)
        B = rng.standard_normal((8, 3))
        E, rep = solve_update(lambda X: A @ X + X @ C, B, cfg=GlGmresConfig(rel_tol=1e-12))
        assert frob_norm(A @ E + E @ C - B) <= 1e-11 * frob_norm(B)

    def test_monotone_estimates(self, rng):
        A = spd(rng, 30)
        B = rng.standard_normal((30, 2))
        _, rep = solve_update(lambda X: A @ X, B, cfg=GlGmresConfig(rel_tol=1e-12))
        est = np.array(rep.residual_estimates)
        assert np.all(np.diff(est) <= 1e-15)

    def test_budget_exhaustion_returns_best(self, rng):
        A = spd(rng, 40) + np.diag(np.logspace(0, 4, 40))
        b = rng.standard_normal((40, 1))
        E, rep = solve_update(lambda X: A @ X, b, cfg=GlGmresConfig(max_krylov=3, rel_tol=1e-12))
        assert not rep.converged and rep.iterations_total == 3
        assert frob_norm(b - A @ E) < frob_norm(b)

    def test_restarts(self, rng):
        A = spd(rng, 30)
        b = rng.standard_normal((30, 1))
        E, rep = solve_update(lambda X: A @ X, b, cfg=GlGmresConfig(max_krylov=5, max_restarts=50, rel_tol=1e-10))
        assert rep.converged and rep.restarts > 0
        assert frob_norm(b - A @ E) <= 1e-10 * frob_norm(b)

    def test_initial_guess(self, rng):
        A = spd(rng, 10)
        b = rng.standard_normal((10, 1))
        x = np.linalg.solve(A, b)
        E, rep = solve_update(lambda X: A @ X, b, E0=x, cfg=GlGmresConfig(rel_tol=1e-8))
        assert rep.iterations_total == 0 and rep.converged

    def test_zero_rhs(self):
        E, rep = solve_update(lambda X: 2 * X, np.zeros((3, 2)))
        assert rep.converged and not E.any()

    def test_happy_breakdown(self):
        A = np.diag([1.0, 1, 2, 2])
        E, rep = solve_update(lambda X: A @ X, np.ones((4, 1)), cfg=GlGmresConfig(rel_tol=1e-14))
        assert rep.breakdown or rep.iterations_total <= 2
        np.testing.assert_allclose(A @ E, np.ones((4, 1)), atol=1e-13)

    def test_complex_real_scalars(self, rng):
        # X -> A X + D conj(X) is linear over the reals only
        A = spd(rng, 6) + 0j
        D = 0.5 * np.eye(6)
        B = rng.standard_normal((6, 1)) + 1j * rng.standard_normal((6, 1))
        op = lambda X: A @ X + D @ X.conj()  # noqa: E731
        E, rep = solve_update(op, B, cfg=GlGmresConfig(rel_tol=1e-12, real_scalars=True))
        assert rep.converged and frob_norm(op(E) - B) <= 1e-11 * frob_norm(B)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GlGmresConfig(max_krylov=0)
        with pytest.raises(ValueError):
            GlGmresConfig(ortho="householder")


class TestArnoldiStep:
    def test_breakdown_in_span(self, rng):
        basis = frobenius_basis(rng, 3, (4, 2))
        W = 2 * basis[0] - basis[2]
        h, V = arnoldi_step(basis, W)
        assert V is None
        np.testing.assert_allclose(h[:3], [2, 0, -1], atol=1e-14)

    def test_cgs2_orthogonality(self, rng):
        basis = frobenius_basis(rng, 5, (6, 3))
        _, V = arnoldi_step(basis, rng.standard_normal((6, 3)), "cgs2")
        assert max(abs(frob_inner(V, B)) for B in basis) <= 1e-12
        assert abs(frob_norm(V) - 1) <= 1e-14

    def test_mgs_matches_cgs2(self, rng):
        basis = frobenius_basis(rng, 5, (6, 3))
        W = rng.standard_normal((6, 3))
        h1, V1 = arnoldi_step(basis, W, "mgs")
        h2, V2 = arnoldi_step(basis, W, "cgs2")
        np.testing.assert_allclose(V1, V2, atol=1e-10)
        np.testing.assert_allclose(h1, h2, atol=1e-10)


class TestGivens:
    def test_scalar_case(self):
        h11, h21, beta = 3.0, 4.0, 2.0
        lsq = GivensLSQ(beta)
        est = lsq.add_column([h11, h21])
        c = lsq.solve()[0]
        assert abs(c - h11 * beta / (h11**2 + h21**2)) <= 1e-15
        assert abs(est - np.linalg.norm(np.array([h11, h21]) * c - [beta, 0])) <= 1e-15

    @given(st.integers(1, 8), st.integers(0, 2**31))
    def test_estimate_matches_explicit_residual(self, m, seed):
        rng = np.random.default_rng(seed)
        Hbar = np.triu(rng.standard_normal((m + 1, m)), -1)
        Hbar[np.arange(1, m + 1), np.arange(m)] = np.abs(Hbar[np.arange(1, m + 1), np.arange(m)]) + 0.1
        beta = 1.0 + rng.random()
        lsq = GivensLSQ(beta)
        for j in range(m):
            est = lsq.add_column(Hbar[: j + 2, j])
        c = lsq.solve()
        rhs = np.zeros(m + 1)
        rhs[0] = beta
        ref = np.linalg.lstsq(Hbar, rhs, rcond=None)[0]
        np.testing.assert_allclose(c, ref, rtol=1e-8, atol=1e-10)
        assert abs(est - np.linalg.norm(Hbar @ c - rhs)) <= 1e-12 * beta

    def test_complex_estimate(self, rng):
        m = 4
        Hbar = np.triu(rng.standard_normal((m + 1, m)) + 1j * rng.standard_normal((m + 1, m)), -1)
        lsq = GivensLSQ(1.0, complex)
        for j in range(m):
            est = lsq.add_column(Hbar[: j + 2, j])
        c = lsq.solve()
        rhs = np.zeros(m + 1, complex)
        rhs[0] = 1
        np.testing.assert_allclose(c, np.linalg.lstsq(Hbar, rhs, rcond=None)[0], atol=1e-12)
        assert abs(est - np.linalg.norm(Hbar @ c - rhs)) <= 1e-12


@pytest.mark.parametrize("ortho", ["mgs", "cgs2"])
class TestArnoldiInvariants:
    def test_relation_and_orthonormality(self, rng, ortho):
        model = KsSimpleModel(10, 2, 0.7)
        X = Iterate(orthonormal(rng, 10, 2), np.diag([0.3, 0.9]))
        lin = Linearization(model, X)
        arn = GlobalArnoldi(-lin.F, ortho)
        for _ in range(12):
            arn.extend(lin.apply)
        Hbar = arn.hessenberg()
        basis = arn.basis
        m = Hbar.shape[1]
        gram = np.array([[frob_inner(A, B) for B in basis] for A in basis])
        assert np.abs(gram - np.eye(len(basis))).max() <= 1e-10
        AV = [lin.apply(basis[j]) for j in range(m)]
        for j in range(m):
            rhs = sum(Hbar[i, j] * basis[i] for i in range(j + 2))
            assert frob_norm(AV[j] - rhs) <= 1e-10 * np.linalg.norm(Hbar)


@pytest.mark.parametrize(
    "make",
    [
        lambda: (KsSimpleModel(8, 2, 0.5), 8, 2),
        lambda: (gpe_assemble(N=4, gamma=1.0, variant="real"), 32, 1),
    ],
    ids=["ks-simple", "gpe-real"],
)
def test_global_gmres_equals_vector_gmres(rng, make):
    model, n, k = make()
    V = orthonormal(rng, n, k)
    X = Iterate(V, V.T @ (model.hamiltonian(V) @ V))
    lin = Linearization(model, X)
    B = -lin.F
    K = build_kronecker_form(model, X)
    b = B.reshape(-1, order="F")
    arn = GlobalArnoldi(B)
    for m in range(1, 11):
        arn.extend(lin.apply)
        Y = arn.update(np.zeros_like(B))
        y = scipy_gmres_iterate(K, b, m).reshape(B.shape, order="F")
        assert frob_norm(Y - y) <= 1e-10 * frob_norm(y)
