"""Discrete rotating Gross-Pitaevskii ground state, complex and real-doubled.

Grid: ``N`` interior points per direction on ``[-ell, ell]^2``, spacing
``h = 2 ell / (N + 1)``, unknown ``psi(x_i, y_j) = V[N (j - 1) + i]``
(x runs fastest).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..matcore import DiagonalShift, SingularPointError, sym_eigs_k
from ..model import NepvModel


def harmonic_potential(x, y):
    return 0.5 * (x**2 + y**2)


@dataclass
class GpeGrid:
    ell: float
    N: int
    h: float
    x: np.ndarray  # interior nodes, shared by both axes

    @property
    def n(self):
        return self.N**2


def _tridiag(N, lower, diag, upper):
    return sp.diags([lower * np.ones(N - 1), diag * np.ones(N), upper * np.ones(N - 1)], [-1, 0, 1])


def gpe_matrices(ell, N, potential=harmonic_potential):
    """``(grid, f_tilde, M, M_phi)`` for the rotating GPE discretization."""
    if N < 2 or ell <= 0:
        raise ValueError("need N >= 2 and ell > 0")
    h = 2.0 * ell / (N + 1)
    x = -ell + h * np.arange(1, N + 1)
    grid = GpeGrid(ell, N, h, x)
    X, Y = np.meshgrid(x, x, indexing="xy")  # X[j, i] = x_i, Y[j, i] = y_j
    f_tilde = h**2 * potential(X, Y).reshape(-1)
    I = sp.identity(N)
    D = _tridiag(N, -0.5, 0.0, 0.5)
    D2 = _tridiag(N, 1.0, -2.0, 1.0)
    M = (sp.kron(D2, I) + sp.kron(I, D2)).tocsr()
    hx = sp.diags(h * x)
    M_phi = (sp.kron(hx, D) + sp.kron(D, hx)).tocsr()
    return grid, f_tilde, M, M_phi


class GpeModel(NepvModel):
    variant = None

    def __init__(self, grid, f_tilde, M, M_phi, omega, gamma):
        self.grid = grid
        self.f_tilde = f_tilde
        self.M = M
        self.M_phi = M_phi
        self.omega = omega
        self.gamma = gamma
        self.k = 1
        # A_f = Diag(f) - M/2 - i omega M_phi
        self.A_re = (sp.diags(f_tilde) - 0.5 * M).tocsr()
        self.A_im = (-omega * M_phi).tocsr()

    @property
    def A_f(self):
        return (self.A_re + 1j * self.A_im).tocsr()

    def initial_guess(self):
        """Ground state of ``A_f`` (the ``gamma = 0`` problem)."""
        V, _ = sym_eigs_k(self.A_f.toarray(), 1)
        return V if self.variant == "complex" else to_real(V)


class GpeComplexModel(GpeModel):
    """``H(V) = A_f + gamma Diag(|V|^2)``; derivative linear over the reals only."""

    variant = "complex"
    field = "complex"
    real_linear_only = True

    def __init__(self, *args):
        super().__init__(*args)
        self.n = self.grid.n
        self._A = self.A_f

    def hamiltonian(self, V):
        return DiagonalShift(self._A, self.gamma * np.abs(V[:, 0]) ** 2)

    def dH_diag(self, V, EV):
        return 2.0 * self.gamma * np.real(np.conj(V[:, 0]) * EV[:, 0])

    def dH_action(self, V, EV):
        return self.dH_diag(V, EV)[:, None] * V

    def density(self, V):
        return np.abs(V[:, 0]) ** 2


class GpeRealModel(GpeModel):
    """Real formulation on ``[Re V; Im V]``, size ``2 N^2``.

    ``H(V) = [[Re A, -Im A], [Im A, Re A]] + gamma / (V^T V) B(V)``.
    """

    variant = "real"
    field = "real"

    def __init__(self, *args):
        super().__init__(*args)
        self.n = 2 * self.grid.n
        self._A = sp.bmat([[self.A_re, -self.A_im], [self.A_im, self.A_re]]).tocsr()

    def _halves(self, W):
        m = self.grid.n
        return W[:m, 0], W[m:, 0]

    def _norm2(self, V):
        s = float(V[:, 0] @ V[:, 0])
        if s == 0.0:
            raise SingularPointError("V = 0")
        return s

    def _b(self, V):
        v1, v2 = self._halves(V)
        b = v1**2 + v2**2
        return np.r_[b, b]

    def hamiltonian(self, V):
        return DiagonalShift(self._A, self.gamma / self._norm2(V) * self._b(V))

    def dH_diag(self, V, EV):
        s = self._norm2(V)
        v1, v2 = self._halves(V)
        e1, e2 = self._halves(EV)
        lb = 2.0 * (v1 * e1 + v2 * e2)
        return self.gamma / s * np.r_[lb, lb] - 2.0 * self.gamma * float(V[:, 0] @ EV[:, 0]) / s**2 * self._b(V)

    def dH_action(self, V, EV):
        return self.dH_diag(V, EV)[:, None] * V

    def density(self, V):
        v1, v2 = self._halves(V)
        return (v1**2 + v2**2) / self._norm2(V)


def gpe_assemble(ell=1.0, N=10, omega=0.85, gamma=1.0, potential=harmonic_potential, variant="complex"):
    grid, f_tilde, M, M_phi = gpe_matrices(ell, N, potential)
    cls = {"complex": GpeComplexModel, "real": GpeRealModel}[variant]
    return cls(grid, f_tilde, M, M_phi, omega, gamma)


def to_real(V):
    """``V`` complex ``(n, k)`` -> ``[Re V; Im V]``."""
    return np.vstack([V.real, V.imag])


def to_complex(W):
    m = W.shape[0] // 2
    return W[:m] + 1j * W[m:]
