"""Dense and structured matrix kernels.

Frobenius products, column-stacking, the discrete Laplacians used by the
Kohn-Sham models and a Hermitian eigensolver returning ``k`` extremal
eigenpairs.
"""

import math

import numpy as np
import scipy.linalg
import scipy.sparse.linalg


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class CapabilityError(RuntimeError):
    """The requested operation is not available for this object."""


class SingularPointError(ArithmeticError):
    """A derivative is evaluated where it does not exist."""


def frob_inner(X, Y):
    """Frobenius inner product ``tr(X^H Y)`` in O(rows*cols).

    The product ``X^H Y`` is never formed.
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise DimensionError(f"shape mismatch {X.shape} vs {Y.shape}")
    return np.vdot(X, Y)


def frob_norm(X):
    return math.sqrt(max(np.real(frob_inner(X, X)), 0.0))


def vectorize(X):
    """Stack the columns of ``X`` top to bottom."""
    X = np.asarray(X)
    if X.ndim == 1:
        return X.copy()
    return X.reshape(-1, order="F").copy()


def devectorize(x, rows, cols):
    x = np.asarray(x)
    if x.ndim != 1 or x.size != rows * cols:
        raise DimensionError(f"cannot reshape length {x.size} to {rows}x{cols}")
    return x.reshape((rows, cols), order="F").copy()


def to_dense(op):
    """Materialize an operator (ndarray, sparse matrix or structured) as ndarray."""
    if isinstance(op, np.ndarray):
        return op
    if hasattr(op, "toarray"):
        return op.toarray()
    return np.asarray(op)


class SymOperator:
    """Symmetric linear operator with an optional fast solve."""

    dim = 0

    @property
    def shape(self):
        return (self.dim, self.dim)

    def apply(self, x):
        raise NotImplementedError

    def solve(self, b):
        raise CapabilityError(f"{type(self).__name__} has no solve")

    def __matmul__(self, x):
        return self.apply(x)

    def toarray(self):
        return self.apply(np.eye(self.dim))


class Laplacian1D(SymOperator):
    """``tridiag(-1, 2, -1)`` of size ``m`` with a banded Cholesky solve."""

    def __init__(self, m):
        if m < 2:
            raise ValueError("laplacian_1d needs m >= 2")
        self.m = self.dim = m
        bands = np.empty((2, m))
        bands[0] = -1.0
        bands[1] = 2.0
        self._chol = scipy.linalg.cholesky_banded(bands, lower=False)

    def apply(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.m:
            raise DimensionError(f"expected leading dimension {self.m}, got {x.shape}")
        y = 2.0 * x
        y[1:] -= x[:-1]
        y[:-1] -= x[1:]
        return y

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.m:
            raise DimensionError(f"expected leading dimension {self.m}, got {b.shape}")
        if np.iscomplexobj(b):
            return self.solve(b.real) + 1j * self.solve(b.imag)
        return scipy.linalg.cho_solve_banded((self._chol, False), b)


class Laplacian3D(SymOperator):
    """Kronecker sum ``L_m x I x I + I x L_m x I + I x I x L_m``.

    Applied as three axis-wise stencils on an ``(m, m, m)`` view; the
    Kronecker products are never assembled.  ``solve`` runs Jacobi
    preconditioned CG per right-hand side.
    """

    def __init__(self, m, rtol=1e-12):
        if m < 2:
            raise ValueError("laplacian_3d needs m >= 2")
        self.m = m
        self.dim = m**3
        self.rtol = rtol
        self._op = scipy.sparse.linalg.LinearOperator(
            (self.dim, self.dim), matvec=self._apply_vec, dtype=float
        )
        # diagonal of L is constantly 6
        self._jacobi = scipy.sparse.linalg.LinearOperator(
            (self.dim, self.dim), matvec=lambda r: r / 6.0, dtype=float
        )

    def _apply_vec(self, x):
        m = self.m
        u = np.asarray(x).reshape(m, m, m)
        y = 6.0 * u
        y[1:, :, :] -= u[:-1, :, :]
        y[:-1, :, :] -= u[1:, :, :]
        y[:, 1:, :] -= u[:, :-1, :]
        y[:, :-1, :] -= u[:, 1:, :]
        y[:, :, 1:] -= u[:, :, :-1]
        y[:, :, :-1] -= u[:, :, 1:]
        return y.reshape(-1)

    def apply(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise DimensionError(f"expected leading dimension {self.dim}, got {x.shape}")
        if x.ndim == 1:
            return self._apply_vec(x)
        m = self.m
        u = x.reshape(m, m, m, -1)
        y = 6.0 * u
        for axis in range(3):
            lo = [slice(None)] * 4
            hi = [slice(None)] * 4
            lo[axis] = slice(1, None)
            hi[axis] = slice(None, -1)
            y[tuple(lo)] -= u[tuple(hi)]
            y[tuple(hi)] -= u[tuple(lo)]
        return y.reshape(x.shape)

    def _solve_vec(self, b):
        if not np.any(b):
            return np.zeros_like(b)
        x, info = scipy.sparse.linalg.cg(
            self._op, b, rtol=self.rtol, atol=0.0, maxiter=20 * self.dim, M=self._jacobi
        )
        if info != 0:
            raise RuntimeError(f"CG did not converge (info={info})")
        return x

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.dim:
            raise DimensionError(f"expected leading dimension {self.dim}, got {b.shape}")
        if np.iscomplexobj(b):
            return self.solve(b.real) + 1j * self.solve(b.imag)
        if b.ndim == 1:
            return self._solve_vec(b)
        return np.column_stack([self._solve_vec(b[:, j]) for j in range(b.shape[1])])


def laplacian_1d(m):
    return Laplacian1D(m)


def laplacian_3d(m):
    return Laplacian3D(m)


class DiagonalShift:
    """``base + Diag(d)``; ``base`` is any matrix-like object supporting ``@``."""

    def __init__(self, base, d):
        self.base = base
        self.d = np.asarray(d)

    @property
    def shape(self):
        return (self.d.size, self.d.size)

    def __matmul__(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            return self.base @ X + self.d * X
        return self.base @ X + self.d[:, None] * X

    def toarray(self):
        B = to_dense(self.base)
        A = np.array(B, dtype=np.result_type(B, self.d, float), copy=True)
        A[np.diag_indices_from(A)] += self.d
        return A


class RankOne:
    """``f f^H`` applied through one inner product per column."""

    def __init__(self, f):
        self.f = np.asarray(f)

    @property
    def shape(self):
        return (self.f.size, self.f.size)

    def __matmul__(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            return self.f * np.vdot(self.f, X)
        return np.outer(self.f, self.f.conj() @ X)

    def toarray(self):
        return np.outer(self.f, self.f.conj())


# -- Hermitian eigensolver --------------------------------------------------


def householder_tridiagonalize(A):
    """Reduce real symmetric ``A`` to tridiagonal form, ``A = Q T Q^T``.

    Returns ``(d, e, Q)`` with ``d`` the diagonal and ``e`` the
    subdiagonal of ``T``.
    """
    T = np.array(A, dtype=float, copy=True)
    n = T.shape[0]
    Q = np.eye(n)
    for j in range(n - 2):
        x = T[j + 1 :, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        vnorm2 = v @ v
        if vnorm2 == 0.0:
            continue
        beta = 2.0 / vnorm2
        # two-sided update of the trailing block with P = I - beta v v^T
        S = T[j + 1 :, j + 1 :]
        p = beta * (S @ v)
        w = p - (0.5 * beta * (p @ v)) * v
        S -= np.outer(v, w) + np.outer(w, v)
        T[j + 1 :, j] = 0.0
        T[j, j + 1 :] = 0.0
        T[j + 1, j] = T[j, j + 1] = alpha
        Q[:, j + 1 :] -= beta * np.outer(Q[:, j + 1 :] @ v, v)
    return np.diag(T).copy(), np.diag(T, -1).copy(), Q


def tridiagonal_ql(d, e, Z, max_sweeps=60):
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    ``d`` (length n) and ``e`` (length n-1) are overwritten copies;
    rotations are accumulated into the columns of ``Z``.
    """
    d = np.array(d, dtype=float, copy=True)
    n = d.size
    e = np.append(np.asarray(e, dtype=float), 0.0)
    Z = np.array(Z, dtype=float, copy=True)
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_sweeps:
                raise np.linalg.LinAlgError("tridiagonal QL did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = Z[:, i].copy()
                Z[:, i] = c * zi - s * Z[:, i + 1]
                Z[:, i + 1] = s * zi + c * Z[:, i + 1]
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, Z


def _fix_phase(V):
    """Make the largest-magnitude entry of every column real positive."""
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    pivots = V[idx, np.arange(V.shape[1])]
    phase = pivots / np.abs(pivots)
    phase[np.abs(pivots) == 0] = 1.0
    return V / phase.conj() if np.iscomplexobj(V) else V * np.sign(phase)


def sym_eigs_k(A, k, which="smallest", B=None, method="lapack"):
    """``k`` extremal eigenpairs of a Hermitian matrix.

    Parameters
    ----------
    A : array_like or matrix-like
        Hermitian matrix; it is symmetrized as ``(A + A^H)/2`` first.
    k : int
        Number of eigenpairs, ``1 <= k <= n``.
    which : {"smallest", "largest"}
        End of the spectrum.  Eigenvalues are returned ascending for
        ``"smallest"`` and descending for ``"largest"``.
    B : array_like, optional
        Hermitian positive definite metric for ``A v = lam B v``, reduced
        to a standard problem by Cholesky congruence.
    method : {"lapack", "householder-ql"}
        ``"householder-ql"`` is the dependency-free tridiagonal QL path
        (real input only).

    Returns
    -------
    V : ndarray, shape (n, k)
    lam : ndarray, shape (k,)
        Columns of ``V`` are normalized so that their largest-magnitude
        entry is real and positive.
    """
    A = to_dense(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if which not in ("smallest", "largest"):
        raise ValueError(f"unknown which={which!r}")
    A = 0.5 * (A + A.conj().T)

    C = None
    if B is not None:
        B = to_dense(B)
        B = 0.5 * (B + B.conj().T)
        C = scipy.linalg.cholesky(B, lower=True)
        A = scipy.linalg.solve_triangular(C, A, lower=True)
        A = scipy.linalg.solve_triangular(C, A.conj().T, lower=True).conj().T
        A = 0.5 * (A + A.conj().T)

    if method == "lapack":
        lo, hi = (0, k - 1) if which == "smallest" else (n - k, n - 1)
        lam, V = scipy.linalg.eigh(A, subset_by_index=[lo, hi])
    elif method == "householder-ql":
        if np.iscomplexobj(A):
            raise CapabilityError("householder-ql handles real symmetric input only")
        d, e, Q = householder_tridiagonalize(A)
        lam, V = tridiagonal_ql(d, e, Q)
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
        lam, V = (lam[:k], V[:, :k]) if which == "smallest" else (lam[n - k :], V[:, n - k :])
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")

    if which == "largest":
        lam, V = lam[::-1], V[:, ::-1]
    if C is not None:
        V = scipy.linalg.solve_triangular(C.conj().T, V, lower=False)
    return _fix_phase(np.ascontiguousarray(V)), np.array(lam)
