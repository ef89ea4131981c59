"""Global GMRES for linear matrix equations ``A(E) = B``.

The operator ``A`` acts on whole matrices.  The Krylov basis is
orthonormal in the Frobenius inner product, the Hessenberg least-squares
problem is reduced by Givens rotations as columns arrive, and the true
residual is recomputed before a cycle's solution is accepted.
"""

from dataclasses import dataclass, field

import numpy as np

from .matcore import frob_inner, frob_norm


@dataclass
class GlGmresConfig:
    max_krylov: int = 400
    max_restarts: int = 0
    ortho: str = "mgs"
    rel_tol: float = 1e-6
    breakdown_tol: float = 1e-14
    # Restrict scalars to the reals (inner product Re tr(X^H Y)).  Needed
    # when a complex operator is linear over the reals only.
    real_scalars: bool = False

    def __post_init__(self):
        if self.max_krylov < 1:
            raise ValueError("max_krylov must be >= 1")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")
        if self.ortho not in ("mgs", "cgs2"):
            raise ValueError(f"unknown orthogonalization {self.ortho!r}")


@dataclass
class GlGmresReport:
    iterations_total: int = 0
    restarts: int = 0
    achieved_rel_residual: float = 0.0
    rel_tol: float = 0.0
    converged: bool = False
    breakdown: bool = False
    residual_estimates: list = field(default_factory=list)
    hessenberg: np.ndarray = None


def _inner(X, Y, real_scalars):
    z = frob_inner(X, Y)
    return z.real if real_scalars else z


def arnoldi_step(basis, W, ortho="mgs", real_scalars=False, breakdown_tol=1e-14):
    """Orthogonalize ``W`` against ``basis``.

    Returns ``(h, V_next)`` where ``h`` holds the projection
    coefficients followed by the norm of the remainder.  ``V_next`` is
    None on (happy) breakdown, i.e. when the remainder is negligible
    relative to ``W``.
    """
    w_norm = frob_norm(W)
    m = len(basis)
    dtype = float if real_scalars else np.result_type(W, *basis)
    h = np.zeros(m + 1, dtype=dtype)
    W = np.array(W, dtype=np.result_type(W, *basis), copy=True)
    if ortho == "mgs":
        for i, Vi in enumerate(basis):
            h[i] = _inner(Vi, W, real_scalars)
            W -= h[i] * Vi
    elif ortho == "cgs2":
        for _ in range(2):
            coeffs = np.array([_inner(Vi, W, real_scalars) for Vi in basis], dtype=dtype)
            for c, Vi in zip(coeffs, basis):
                W -= c * Vi
            h[:m] += coeffs
    else:
        raise ValueError(f"unknown orthogonalization {ortho!r}")
    h[m] = frob_norm(W)
    if h[m] <= breakdown_tol * w_norm or h[m] == 0.0:
        return h, None
    return h, W / h[m]


def _givens(a, b):
    """Rotation ``(c, s)`` with ``[[c, s], [-conj(s), c]] @ [a, b] = [r, 0]``."""
    if b == 0:
        return 1.0, 0.0 * b
    if a == 0:
        return 0.0, 1.0 + 0.0 * b
    r = np.hypot(abs(a), abs(b))
    c = abs(a) / r
    s = (a / abs(a)) * np.conj(b) / r
    return c, s


class GivensLSQ:
    """Incremental QR solve of ``min ||Hbar c - beta e_1||``."""

    def __init__(self, beta, dtype=float):
        self.beta = beta
        self.dtype = dtype
        self.R = []  # reduced columns
        self.rots = []
        self.g = [np.asarray(beta, dtype=dtype)[()]]

    def __len__(self):
        return len(self.R)

    def add_column(self, h):
        """Append a Hessenberg column (length ``len(self) + 2``) and return the residual estimate."""
        h = np.asarray(h)
        h = np.array(h, dtype=np.result_type(h, self.dtype), copy=True)
        j = len(self.R)
        for i, (c, s) in enumerate(self.rots):
            a, b = h[i], h[i + 1]
            h[i] = c * a + s * b
            h[i + 1] = -np.conj(s) * a + c * b
        c, s = _givens(h[j], h[j + 1])
        h[j] = c * h[j] + s * h[j + 1]
        h[j + 1] = 0.0
        self.rots.append((c, s))
        gj = self.g[j]
        self.g[j] = c * gj
        self.g.append(-np.conj(s) * gj)
        self.R.append(h[: j + 1])
        return abs(self.g[-1])

    @property
    def residual_estimate(self):
        return abs(self.g[-1])

    def solve(self):
        m = len(self.R)
        R = np.zeros((m, m), dtype=np.result_type(*self.R) if m else self.dtype)
        for j, col in enumerate(self.R):
            R[: j + 1, j] = col
        g = np.array(self.g[:m])
        c = np.zeros(m, dtype=np.result_type(R, g))
        scale = np.max(np.abs(R)) if m else 0.0
        for i in range(m - 1, -1, -1):
            rhs = g[i] - R[i, i + 1 :] @ c[i + 1 :]
            if abs(R[i, i]) <= 1e-14 * scale:
                # only reachable at breakdown on a singular operator: drop the column
                c[i] = 0.0
            else:
                c[i] = rhs / R[i, i]
        return c


class GlobalArnoldi:
    """One cycle of the global Arnoldi process seeded with ``R0``."""

    def __init__(self, R0, ortho="mgs", real_scalars=False, breakdown_tol=1e-14):
        self.ortho = ortho
        self.real_scalars = real_scalars
        self.breakdown_tol = breakdown_tol
        self.beta = frob_norm(R0)
        self.basis = [np.asarray(R0) / self.beta]
        self.columns = []
        dtype = float if real_scalars else np.result_type(R0)
        self.lsq = GivensLSQ(self.beta, dtype)
        self.breakdown = False

    @property
    def size(self):
        return len(self.columns)

    def extend(self, apply):
        """Apply the operator to the newest basis matrix and orthogonalize.

        Returns the current residual estimate of the least-squares problem.
        """
        W = apply(self.basis[len(self.columns)])
        h, V_next = arnoldi_step(
            self.basis, W, self.ortho, self.real_scalars, self.breakdown_tol
        )
        self.columns.append(h)
        if V_next is None:
            self.breakdown = True
        else:
            self.basis.append(V_next)
        return self.lsq.add_column(h)

    def hessenberg(self):
        m = len(self.columns)
        Hbar = np.zeros((m + 1, m), dtype=np.result_type(*self.columns) if m else float)
        for j, h in enumerate(self.columns):
            Hbar[: j + 2, j] = h
        return Hbar

    def update(self, E0):
        c = self.lsq.solve()
        E = np.array(E0, dtype=np.result_type(E0, c, self.basis[0]), copy=True)
        for ci, Vi in zip(c, self.basis):
            E += ci * Vi
        return E


def solve_update(apply, B, E0=None, cfg=None):
    """Solve ``apply(E) = B`` to relative residual ``cfg.rel_tol``.

    Parameters
    ----------
    apply : callable
        Linear map on matrices shaped like ``B``.
    B : ndarray
    E0 : ndarray, optional
        Initial guess, zero by default.
    cfg : GlGmresConfig

    Returns
    -------
    E : ndarray
    report : GlGmresReport
        ``converged`` is set only if the explicitly recomputed residual
        ``||B - apply(E)||_F`` meets the tolerance.  On budget
        exhaustion the last iterate is returned.
    """
    cfg = cfg or GlGmresConfig()
    B = np.asarray(B)
    E = np.zeros_like(B) if E0 is None else np.array(E0, copy=True)
    report = GlGmresReport(rel_tol=cfg.rel_tol)
    b_norm = frob_norm(B)
    if b_norm == 0.0:
        report.converged = True
        return E, report
    target = cfg.rel_tol * b_norm

    R = B - apply(E) if E0 is not None else B
    r_norm = frob_norm(R)
    for cycle in range(cfg.max_restarts + 1):
        if r_norm <= target:
            report.converged = True
            break
        if cycle > 0:
            report.restarts += 1
        arnoldi = GlobalArnoldi(R, cfg.ortho, cfg.real_scalars, cfg.breakdown_tol)
        for _ in range(cfg.max_krylov):
            est = arnoldi.extend(apply)
            report.iterations_total += 1
            report.residual_estimates.append(est / b_norm)
            if arnoldi.breakdown or est <= target:
                break
        E = arnoldi.update(E)
        report.hessenberg = arnoldi.hessenberg()
        report.breakdown = report.breakdown or arnoldi.breakdown
        R = B - apply(E)
        r_norm = frob_norm(R)
        if r_norm <= target:
            report.converged = True
            break
    report.achieved_rel_residual = r_norm / b_norm
    return E, report
