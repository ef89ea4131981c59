"""Kohn-Sham type Hamiltonians ``H(V) = L + Diag(...)``."""

import warnings

import numpy as np

from ..matcore import DiagonalShift, SingularPointError, laplacian_1d, laplacian_3d, sym_eigs_k
from ..model import NepvModel


def charge_density(V):
    """``diag(V V^T)`` computed row-wise."""
    return np.einsum("ij,ij->i", V, V.conj()).real


def diag_outer(V, E):
    """``diag(V E^T)`` in O(nk) without forming ``V E^T``."""
    return np.einsum("ij,ij->i", V, E)


class KsSimpleModel(NepvModel):
    """``H(V) = L + gamma Diag(L^{-1} rho(V))`` with the 1D Laplacian."""

    def __init__(self, n, k, gamma):
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        self.n = n
        self.k = k
        self.gamma = gamma
        self.L = laplacian_1d(n)

    def hamiltonian(self, V):
        return DiagonalShift(self.L, self.gamma * self.L.solve(charge_density(V)))

    def dH_action(self, V, EV):
        w = 2.0 * self.gamma * self.L.solve(diag_outer(V, EV))
        return w[:, None] * V

    def dH_matrix(self, V, EV):
        return np.diag(2.0 * self.gamma * self.L.solve(diag_outer(V, EV)))

    def initial_guess(self):
        V, _ = sym_eigs_k(self.L.toarray(), self.k)
        return V


class Ks3dModel(NepvModel):
    """``H(V) = L + Diag(L^{-1} rho(V) - gamma rho(V)^{1/3})`` on an ``m^3`` grid.

    ``zero_rows`` selects how rows of ``V`` with vanishing density are
    treated by the derivative: ``"perturb"`` shifts them by ``1e-12``,
    ``"raise"`` raises :class:`SingularPointError`.
    """

    RHO_FLOOR = 1e-300

    def __init__(self, m, k, gamma=1.0, zero_rows="perturb"):
        self.m = m
        self.n = m**3
        self.k = k
        self.gamma = gamma
        self.zero_rows = zero_rows
        self.L = laplacian_3d(m)

    def potential(self, V):
        rho = charge_density(V)
        return self.L.solve(rho) - self.gamma * np.cbrt(rho)

    def hamiltonian(self, V):
        return DiagonalShift(self.L, self.potential(V))

    def _guard(self, V):
        rho = charge_density(V)
        bad = rho < self.RHO_FLOOR
        if self.gamma > 0 and np.any(bad):
            if self.zero_rows == "raise":
                raise SingularPointError(f"{bad.sum()} zero rows: rho^(-2/3) undefined")
            warnings.warn("perturbing zero rows of V before evaluating the derivative")
            V = V.copy()
            V[bad] += 1e-12
            rho = charge_density(V)
        return V, rho

    def dH_diag(self, V, EV):
        V, rho = self._guard(V)
        r = diag_outer(V, EV)
        return 2.0 * (self.L.solve(r) - self.gamma / 3.0 * rho ** (-2.0 / 3.0) * r)

    def dH_action(self, V, EV):
        return self.dH_diag(V, EV)[:, None] * V

    def initial_guess(self):
        # eigenvectors of the separable Laplacian: products of 1D sine modes
        m = self.m
        idx = np.arange(1, m + 1)
        lam1 = 2.0 - 2.0 * np.cos(idx * np.pi / (m + 1))
        modes = np.sqrt(2.0 / (m + 1)) * np.sin(np.outer(np.arange(1, m + 1), idx) * np.pi / (m + 1))
        triples = sorted(
            ((lam1[a] + lam1[b] + lam1[c], a, b, c) for a in range(m) for b in range(m) for c in range(m))
        )[: self.k]
        cols = [np.kron(np.kron(modes[:, a], modes[:, b]), modes[:, c]) for _, a, b, c in triples]
        return np.column_stack(cols)
