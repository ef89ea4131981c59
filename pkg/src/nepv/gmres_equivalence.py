"""Global GMRES on ``L_F`` versus standard GMRES on the Kronecker matrix ``K_F``.

Both methods run from ``E0 = 0`` on ``L_F(X) E = -F(X)``.  The iterate
of global GMRES after ``m`` steps must equal the devectorized iterate of
vector GMRES after ``m`` steps, and the two Hessenberg matrices coincide.
"""

from dataclasses import dataclass, field

import numpy as np

from .glgmres import GlobalArnoldi
from .matcore import devectorize, frob_norm
from .model import Iterate, Linearization, build_kronecker_form
from .scf import rayleigh_quotient


def vector_gmres_iterates(K, b, m_max):
    """Plain GMRES (MGS Arnoldi, dense least squares) from ``x0 = 0``.

    Returns ``(iterates, Hbar)`` with ``iterates[m - 1]`` the ``m``-step
    iterate and ``Hbar`` of shape ``(m + 1, m)`` for the steps taken.
    """
    beta = np.linalg.norm(b)
    Q = np.zeros((b.size, m_max + 1), dtype=np.result_type(K, b))
    Hbar = np.zeros((m_max + 1, m_max), dtype=Q.dtype)
    Q[:, 0] = b / beta
    iterates = []
    for j in range(m_max):
        w = K @ Q[:, j]
        for i in range(j + 1):
            Hbar[i, j] = np.vdot(Q[:, i], w)
            w = w - Hbar[i, j] * Q[:, i]
        Hbar[j + 1, j] = np.linalg.norm(w)
        rhs = np.zeros(j + 2, dtype=Q.dtype)
        rhs[0] = beta
        y = np.linalg.lstsq(Hbar[: j + 2, : j + 1], rhs, rcond=None)[0]
        iterates.append(Q[:, : j + 1] @ y)
        if Hbar[j + 1, j] <= 1e-14 * beta:
            return iterates, Hbar[: j + 2, : j + 1]
        Q[:, j + 1] = w / Hbar[j + 1, j]
    return iterates, Hbar


@dataclass
class EquivalenceResult:
    problem: str
    shape: tuple
    iterate_diffs: list = field(default_factory=list)  # relative, per m
    hessenberg_diff: float = 0.0

    @property
    def max_iterate_diff(self):
        return max(self.iterate_diffs, default=0.0)

    def passed(self, tol=1e-10):
        return self.max_iterate_diff <= tol and self.hessenberg_diff <= tol


def random_iterate(model, rng):
    """Orthonormal random ``V`` with its Rayleigh-quotient ``Lam``."""
    V, _ = np.linalg.qr(rng.standard_normal((model.n, model.k)))
    return Iterate(V, rayleigh_quotient(model, V))


def build_problem(problem, n, k):
    from .problems import KsSimpleModel, gpe_assemble

    if problem == "ks-simple":
        return KsSimpleModel(n, k, 0.5)
    if problem == "gpe-real":
        if k != 1:
            raise ValueError("gpe-real has k = 1")
        return gpe_assemble(N=n, gamma=1.0, variant="real")
    raise ValueError(f"unknown problem {problem!r}; use ks-simple or gpe-real")


def equivalence_check(problem="ks-simple", n=8, k=2, m_max=10, seed=0):
    model = build_problem(problem, n, k)
    X = random_iterate(model, np.random.default_rng(seed))
    lin = Linearization(model, X, derivative="exact")
    B = -lin.F
    K = build_kronecker_form(model, X)
    rows, cols = B.shape
    xs, Hv = vector_gmres_iterates(K, B.reshape(-1, order="F"), m_max)

    arnoldi = GlobalArnoldi(B)
    result = EquivalenceResult(problem, (rows, cols))
    for x in xs:
        arnoldi.extend(lin.apply)
        Y = arnoldi.update(np.zeros_like(B))
        Yv = devectorize(x, rows, cols)
        result.iterate_diffs.append(frob_norm(Y - Yv) / max(frob_norm(Yv), 1e-300))
    Hg = arnoldi.hessenberg()
    result.hessenberg_diff = float(np.max(np.abs(Hg - Hv)))
    return result
