"""Residual and derivative machinery for NEPv / GNEPv.

A problem is described by a :class:`NepvModel`.  The Newton variable is
the stacked matrix ``X = [V; Lam]`` of shape ``(n + k, k)`` and the
residual is

    F(X) = [H(V) V - G(V) V Lam;  V^H V - I]

with ``G = I`` for the standard problem.
"""

from dataclasses import dataclass

import numpy as np

from .matcore import CapabilityError, DimensionError, devectorize, frob_norm, to_dense, vectorize

EPS = np.finfo(float).eps
KRONECKER_SIZE_LIMIT = 2000


@dataclass
class Iterate:
    V: np.ndarray
    Lam: np.ndarray

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def k(self):
        return self.V.shape[1]

    @property
    def X(self):
        dtype = np.result_type(self.V, self.Lam)
        return np.vstack([self.V.astype(dtype), self.Lam.astype(dtype)])

    @classmethod
    def from_stacked(cls, X, n):
        X = np.asarray(X)
        return cls(X[:n].copy(), X[n:].copy())

    def copy(self):
        return Iterate(self.V.copy(), self.Lam.copy())


def split_stacked(E, n):
    """View a stacked direction as ``(E_V, E_Lam)``."""
    return E[:n], E[n:]


class NepvModel:
    """Base class for eigenvector-dependent eigenproblems.

    Subclasses provide ``hamiltonian(V)`` and, when exact derivatives
    are known, ``dH_action(V, E_V)`` returning ``L_H(V, E_V) @ V``.
    Generalized problems also override ``metric`` / ``dG_action``.
    Matrix-valued returns may be ndarrays, sparse matrices or any object
    supporting ``@`` and ``toarray()``.
    """

    n = 0
    k = 1
    field = "real"
    which = "smallest"
    # complex models whose derivative is only linear over real scalars
    real_linear_only = False
    # whether G(V) is Hermitian positive definite (enables generalized SCF)
    metric_spd = True

    @property
    def generalized(self):
        return type(self).metric is not NepvModel.metric

    @property
    def has_exact_derivative(self):
        cls = type(self)
        own_dH = cls.dH_action is not NepvModel.dH_action
        return own_dH and (not self.generalized or cls.dG_action is not NepvModel.dG_action)

    @property
    def dtype(self):
        return complex if self.field == "complex" else float

    def hamiltonian(self, V):
        raise NotImplementedError

    def metric(self, V):
        return None

    def dH_action(self, V, EV):
        raise NotImplementedError

    def dG_action(self, V, EV):
        raise NotImplementedError

    def initial_guess(self):
        raise NotImplementedError


def _check_iterate(model, X):
    if X.V.shape != (model.n, model.k) or X.Lam.shape != (model.k, model.k):
        raise DimensionError(
            f"iterate shapes {X.V.shape}, {X.Lam.shape} do not match n={model.n}, k={model.k}"
        )


def _residual_from(V, Lam, H, G):
    top = H @ V - (G @ (V @ Lam) if G is not None else V @ Lam)
    bottom = V.conj().T @ V - np.eye(V.shape[1])
    return np.vstack([top, bottom])


def residual(model, X):
    """Stacked residual ``F(X)``; ``H(V)`` is evaluated exactly once."""
    _check_iterate(model, X)
    return _residual_from(X.V, X.Lam, model.hamiltonian(X.V), model.metric(X.V))


def residual_norm(model, X):
    return frob_norm(residual(model, X))


def default_fd_step(V, EV):
    return np.sqrt(EPS) * max(1.0, frob_norm(V)) / max(frob_norm(EV), EPS)


def fd_apply_LH(model, V, EV, h=None, H=None):
    """Forward-difference approximation of ``L_H(V, E_V) @ V``.

    ``H`` is the cached ``H(V)``; it is evaluated here only if missing.
    """
    if not np.any(EV):
        return np.zeros_like(V, dtype=np.result_type(V, EV))
    if h is None:
        h = default_fd_step(V, EV)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    if H is None:
        H = model.hamiltonian(V)
    return (model.hamiltonian(V + h * EV) @ V - H @ V) / h


def fd_apply_LG(model, V, EV, h=None, G=None):
    if not np.any(EV):
        return np.zeros_like(V, dtype=np.result_type(V, EV))
    if h is None:
        h = default_fd_step(V, EV)
    if G is None:
        G = model.metric(V)
    return (model.metric(V + h * EV) @ V - G @ V) / h


class Linearization:
    """``F`` and ``L_F`` at a fixed iterate.

    ``H(V)`` and ``G(V)`` are computed once and reused for every
    direction passed to :meth:`apply`.

    Parameters
    ----------
    model : NepvModel
    X : Iterate
    derivative : {"auto", "exact", "fd"}
        ``"auto"`` uses exact derivatives when the model has them and
        finite differences otherwise.
    allow_fd : bool
        If False, a model without exact derivatives raises
        :class:`CapabilityError`.
    """

    def __init__(self, model, X, derivative="auto", allow_fd=True, fd_step=None):
        _check_iterate(model, X)
        if derivative == "auto":
            derivative = "exact" if model.has_exact_derivative else "fd"
        if derivative == "fd" and not allow_fd:
            raise CapabilityError(
                f"{type(model).__name__} has no exact derivative and finite differences are disabled"
            )
        if derivative == "exact" and not model.has_exact_derivative:
            raise CapabilityError(f"{type(model).__name__} has no exact derivative")
        self.model = model
        self.X = X
        self.n = model.n
        self.derivative = derivative
        self.fd_step = fd_step
        self.H = model.hamiltonian(X.V)
        self.G = model.metric(X.V)
        self.F = _residual_from(X.V, X.Lam, self.H, self.G)

    @property
    def shape(self):
        return self.F.shape

    def _dH(self, EV):
        if self.derivative == "exact":
            return self.model.dH_action(self.X.V, EV)
        return fd_apply_LH(self.model, self.X.V, EV, self.fd_step, H=self.H)

    def _dG(self, EV):
        if self.derivative == "exact":
            return self.model.dG_action(self.X.V, EV)
        return fd_apply_LG(self.model, self.X.V, EV, self.fd_step, G=self.G)

    def apply(self, E):
        E = np.asarray(E)
        if E.shape != self.F.shape:
            raise DimensionError(f"direction shape {E.shape} != {self.F.shape}")
        V, Lam = self.X.V, self.X.Lam
        EV, EL = split_stacked(E, self.n)
        inner = V @ EL + EV @ Lam
        top = self.H @ EV + self._dH(EV)
        if self.G is None:
            top = top - inner
        else:
            top = top - (self._dG(EV) @ Lam + self.G @ inner)
        Vh_E = V.conj().T @ EV
        bottom = Vh_E + Vh_E.conj().T
        return np.vstack([top, bottom])

    __call__ = apply


def apply_LF(model, X, E, linearization=None, **kwargs):
    """Derivative of the residual at ``X`` in the stacked direction ``E``."""
    lin = linearization if linearization is not None else Linearization(model, X, **kwargs)
    return lin.apply(E)


def build_kronecker_form(model, X, **kwargs):
    """Matrix ``K`` with ``vec(L_F(X, E)) = K vec(E)``, built column by column.

    Only defined for real models; guarded to ``(n + k) k <= 2000``.
    """
    if model.field != "real":
        raise CapabilityError("the Kronecker form needs a real-linear model over the reals")
    lin = Linearization(model, X, **kwargs)
    rows, cols = lin.shape
    N = rows * cols
    if N > KRONECKER_SIZE_LIMIT:
        raise CapabilityError(f"Kronecker form of size {N} exceeds the limit {KRONECKER_SIZE_LIMIT}")
    K = np.empty((N, N))
    unit = np.zeros(N)
    for j in range(N):
        unit[j] = 1.0
        K[:, j] = vectorize(lin.apply(devectorize(unit, rows, cols)))
        unit[j] = 0.0
    return K


def hermitian_defect(M):
    """``||M - M^H|| / ||M||`` for a matrix-like object."""
    A = to_dense(M)
    scale = np.linalg.norm(A)
    return np.linalg.norm(A - A.conj().T) / scale if scale else 0.0


class ConstantModel(NepvModel):
    """``H(V) = A`` (and optionally ``G(V) = B``): a linear eigenproblem."""

    def __init__(self, A, k, which="smallest", B=None):
        self.A = np.asarray(A)
        self.B = None if B is None else np.asarray(B)
        self.n = self.A.shape[0]
        self.k = k
        self.which = which
        self.field = "complex" if np.iscomplexobj(self.A) else "real"

    @property
    def generalized(self):
        return self.B is not None

    def hamiltonian(self, V):
        return self.A

    def metric(self, V):
        return self.B

    def dH_action(self, V, EV):
        return np.zeros_like(V, dtype=np.result_type(V, EV))

    def dG_action(self, V, EV):
        return np.zeros_like(V, dtype=np.result_type(V, EV))

    def initial_guess(self):
        return np.eye(self.n, self.k, dtype=self.dtype)
