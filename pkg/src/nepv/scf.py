"""Plain self-consistent field iteration and SCF postprocessing."""

from dataclasses import dataclass, field

import numpy as np

from .matcore import CapabilityError, frob_norm, sym_eigs_k
from .model import Iterate, _residual_from, residual


@dataclass
class ScfConfig:
    tol: float = 1e-10
    max_iter: int = 200
    which: str = None  # defaults to the model's spectrum end
    eig_method: str = "lapack"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


@dataclass
class ScfTrace:
    residuals: list = field(default_factory=list)
    eigenvalues: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.residuals)


def _eigs(model, H, G, which, method):
    if G is None:
        return sym_eigs_k(H, model.k, which, method=method)
    if not model.metric_spd:
        raise CapabilityError("generalized SCF needs a positive definite G(V)")
    V, lam = sym_eigs_k(H, model.k, which, B=G, method=method)
    if model.k == 1:
        return V / np.linalg.norm(V), lam
    # G-orthonormal eigenvectors; orthonormalize and carry the change of basis
    Q, R = np.linalg.qr(V)
    return Q, R @ np.diag(lam) @ np.linalg.inv(R)


def scf_step(model, V, which=None, method="lapack", H=None, G=None):
    """One SCF update ``V -> k extremal eigenvectors of H(V)``.

    Returns ``(V_next, Lam_next)``; ``Lam_next`` is diagonal for the
    standard problem.
    """
    which = which or model.which
    if H is None:
        H = model.hamiltonian(V)
        G = model.metric(V)
    V_next, lam = _eigs(model, H, G, which, method)
    Lam = lam if np.ndim(lam) == 2 else np.diag(lam)
    return V_next.astype(np.result_type(V_next, model.dtype)), Lam.astype(model.dtype)


def scf_solve(model, V0, cfg=None):
    """Run plain SCF from ``V0`` until ``||F(X)||_F <= tol``.

    Non-convergence is not an error; check ``trace.converged``.
    """
    cfg = cfg or ScfConfig()
    which = cfg.which or model.which
    V = np.asarray(V0, dtype=np.result_type(V0, model.dtype))
    if np.linalg.norm(V.conj().T @ V - np.eye(model.k)) > 1e-8:
        raise ValueError("initial guess must have orthonormal columns")
    trace = ScfTrace()
    H = model.hamiltonian(V)
    G = model.metric(V)
    X = None
    for _ in range(cfg.max_iter):
        V, Lam = scf_step(model, V, which, cfg.eig_method, H, G)
        X = Iterate(V, Lam)
        H = model.hamiltonian(V)
        G = model.metric(V)
        r = frob_norm(_residual_from(V, Lam, H, G))
        trace.residuals.append(r)
        trace.eigenvalues.append(np.diag(Lam).real.copy())
        if r <= cfg.tol:
            trace.converged = True
            break
    if X is None:
        X = Iterate(V, rayleigh_quotient(model, V, H, G))
    return X, trace


def rayleigh_quotient(model, V, H=None, G=None):
    """``Lam = (V^H G V)^{-1} V^H H V`` (``G = I`` for the standard problem)."""
    if H is None:
        H = model.hamiltonian(V)
        G = model.metric(V)
    VhHV = V.conj().T @ (H @ V)
    if G is None:
        return VhHV
    return np.linalg.solve(V.conj().T @ (G @ V), VhHV)


def diagonalize_multiplier(X):
    """Rotate ``(V, Lam)`` by the eigenvectors of the symmetric part of ``Lam``."""
    Lam = 0.5 * (X.Lam + X.Lam.conj().T)
    d, Q = np.linalg.eigh(Lam)
    return Iterate(X.V @ Q, np.diag(d).astype(X.Lam.dtype))


def scf_postprocess(model, X, which=None, method="lapack", accept_tol=0.0):
    """Return an iterate with diagonal ``Lam``.

    One SCF step from ``X.V`` is tried first.  If it increases the
    residual beyond ``max(||F(X)||_F, accept_tol)`` (or generalized SCF
    is unavailable), ``Lam = Q D Q^H`` is diagonalized instead, which
    leaves ``||F||_F`` unchanged.
    """
    r_in = frob_norm(residual(model, X))
    fallback = diagonalize_multiplier(X)
    if model.generalized and not model.metric_spd:
        return fallback
    V, Lam = scf_step(model, X.V, which, method)
    candidate = Iterate(V, Lam)
    if frob_norm(residual(model, candidate)) <= max(r_in, accept_tol):
        return candidate
    return fallback
