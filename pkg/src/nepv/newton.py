"""Inexact matrix Newton method with SCF pre- and postprocessing.

Each step solves ``L_F(X_j) E = -F(X_j)`` to relative accuracy
``eta_j`` with global GMRES, damps ``E`` by quadratic-interpolation
backtracking and updates ``eta`` with the Eisenstat-Walker rules.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as sla

from .glgmres import GlGmresConfig, GlGmresReport, solve_update
from .matcore import devectorize, frob_inner, frob_norm, vectorize
from .model import Iterate, Linearization
from .scf import ScfConfig, rayleigh_quotient, scf_postprocess, scf_solve

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass
class ForcingConfig:
    eta0: float = 0.5
    gamma_ew: float = 0.9
    alpha_ew: float = GOLDEN
    eta_max: float = 0.9
    oversolve_floor: float = 0.1
    eta_min: float = 1e-12
    # keep eta * ||F|| above roundoff_floor * eps * (||HV|| + ||GV Lam|| + 1); 0 disables
    roundoff_floor: float = 1.0

    def __post_init__(self):
        if not 0 <= self.eta0 < 1:
            raise ValueError("eta0 must lie in [0, 1)")
        if not 0 <= self.gamma_ew <= 1:
            raise ValueError("gamma_ew must lie in [0, 1]")
        if not 1 < self.alpha_ew <= 2:
            raise ValueError("alpha_ew must lie in (1, 2]")


@dataclass
class BacktrackConfig:
    t: float = 1e-4
    max_backtracks: int = 4
    theta_min: float = 0.1
    theta_max: float = 0.5

    def __post_init__(self):
        if not 0 < self.t < 1:
            raise ValueError("t must lie in (0, 1)")
        if not 0 < self.theta_min < self.theta_max < 1:
            raise ValueError("need 0 < theta_min < theta_max < 1")


@dataclass
class NewtonConfig:
    tau: float = 1e-10
    max_newton: int = 50
    pre_scf_tol: float = 1e-3
    pre_scf_max: int = 4
    glgmres: GlGmresConfig = field(default_factory=GlGmresConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    backtrack: BacktrackConfig = field(default_factory=BacktrackConfig)
    inner: str = "glgmres"  # or "vecgmres"
    postprocess: bool = True
    derivative: str = "auto"
    eig_method: str = "lapack"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.inner not in ("glgmres", "vecgmres"):
            raise ValueError(f"unknown inner solver {self.inner!r}")


@dataclass
class TraceRow:
    phase: str
    iteration: int
    residual: float
    eta: float = float("nan")
    eta_achieved: float = float("nan")
    krylov: int = 0
    theta: float = float("nan")
    backtracks: int = 0
    wall_ms: float = 0.0
    inner_converged: bool = True
    accepted: bool = True


@dataclass
class NewtonTrace:
    rows: list = field(default_factory=list)
    converged: bool = False
    start_residual: float = float("nan")
    pre_scf: object = None

    def phase(self, name):
        return [r for r in self.rows if r.phase == name]

    @property
    def scf_iterations(self):
        return len(self.phase("scf"))

    @property
    def newton_iterations(self):
        return len(self.phase("newton"))

    @property
    def krylov_counts(self):
        return [r.krylov for r in self.phase("newton")]

    @property
    def mean_krylov(self):
        counts = self.krylov_counts
        return float(np.mean(counts)) if counts else 0.0

    @property
    def newton_residuals(self):
        """Residual at the start of the Newton phase followed by every Newton step."""
        return [self.start_residual] + [r.residual for r in self.phase("newton")]

    @property
    def final_residual(self):
        return self.rows[-1].residual if self.rows else float("nan")

    @property
    def total_wall_ms(self):
        return sum(r.wall_ms for r in self.rows)


def _clamp_eta(eta, cfg):
    return min(max(eta, cfg.eta_min), cfg.eta_max)


def forcing_choice1(F_j, F_jm1, R_jm1, eta_jm1, cfg=None):
    """``|‖F_j‖ - ‖R_{j-1}‖| / ‖F_{j-1}‖`` with the ``eta^golden`` safeguard."""
    cfg = cfg or ForcingConfig()
    eta = max(abs(F_j - R_jm1) / F_jm1, cfg.eta_min)
    guard = eta_jm1**GOLDEN
    if guard > cfg.oversolve_floor:
        eta = max(eta, guard)
    return _clamp_eta(eta, cfg)


def forcing_choice2(F_j, F_jm1, eta_jm1, cfg=None):
    """``gamma (‖F_j‖ / ‖F_{j-1}‖)^alpha`` with the ``gamma eta^alpha`` safeguard."""
    cfg = cfg or ForcingConfig()
    eta = max(cfg.gamma_ew * (F_j / F_jm1) ** cfg.alpha_ew, cfg.eta_min)
    guard = cfg.gamma_ew * eta_jm1**cfg.alpha_ew
    if guard > cfg.oversolve_floor:
        eta = max(eta, guard)
    return _clamp_eta(eta, cfg)


def interpolation_step(g0, g1, d):
    """Minimizer of ``p(theta) = g0 + d theta + (g1 - g0 - d) theta^2``."""
    return -d / (2.0 * (g1 - g0 - d))


@dataclass
class BacktrackResult:
    E: np.ndarray
    eta: float
    accepted: bool
    backtracks: int
    theta: float  # accumulated damping factor
    linearization: Linearization  # at the accepted iterate
    linear_residual: float  # ||F(X) + L_F(X, E)||_F for the damped E


def _evaluation_noise(lin):
    """Size of the rounding error committed when forming ``F(X)``.

    Asking GMRES for a linear residual below this level only amplifies
    noise along near-null directions of ``L_F`` (e.g. the rotation
    ``(VQ, Q^H Lam Q)`` when ``H`` depends on ``V V^H`` alone).
    """
    V, Lam = lin.X.V, lin.X.Lam
    HV = frob_norm(lin.H @ V)
    GVL = frob_norm(V @ Lam) if lin.G is None else frob_norm((lin.G @ V) @ Lam)
    return np.finfo(float).eps * (HV + GVL + 1.0)


def _stacked_iterate(X, E, n):
    return Iterate(X.V + E[:n], X.Lam + E[n:])


def backtrack(model, X, E, eta, cfg=None, linearization=None, derivative="auto"):
    """Damp ``E`` until ``‖F(X+E)‖ <= [1 - t(1 - eta)] ‖F(X)‖``.

    At most ``cfg.max_backtracks`` damping steps are taken; if the
    condition still fails the last damped step is returned with
    ``accepted=False``.
    """
    cfg = cfg or BacktrackConfig()
    lin = linearization or Linearization(model, X, derivative=derivative)
    F = lin.F
    F0 = frob_norm(F)
    g0 = F0**2
    LE = lin.apply(E)
    d = 2.0 * frob_inner(LE, F).real
    E = np.array(E, copy=True)
    theta_total = 1.0

    trial = Linearization(model, _stacked_iterate(X, E, model.n), derivative=lin.derivative)
    Ft = frob_norm(trial.F)
    steps = 0
    accepted = Ft <= (1.0 - cfg.t * (1.0 - eta)) * F0
    while not accepted and steps < cfg.max_backtracks:
        g1 = Ft**2
        curvature = g1 - g0 - d
        theta = interpolation_step(g0, g1, d) if curvature > 0 else cfg.theta_max
        theta = min(max(theta, cfg.theta_min), cfg.theta_max)
        E *= theta
        d *= theta
        eta = 1.0 - theta * (1.0 - eta)
        theta_total *= theta
        steps += 1
        trial = Linearization(model, _stacked_iterate(X, E, model.n), derivative=lin.derivative)
        Ft = frob_norm(trial.F)
        accepted = Ft <= (1.0 - cfg.t * (1.0 - eta)) * F0
    linear_residual = frob_norm(F + theta_total * LE)
    return BacktrackResult(E, eta, bool(accepted), steps, theta_total, trial, linear_residual)


def _solve_vectorized(lin, B, gcfg, complex_mode):
    """GMRES on the vectorized update equation via scipy."""
    rows, cols = B.shape
    N = rows * cols
    if complex_mode:

        def to_vec(M):
            return np.concatenate([vectorize(M.real), vectorize(M.imag)])

        def to_mat(x):
            return devectorize(x[:N], rows, cols) + 1j * devectorize(x[N:], rows, cols)

        size = 2 * N
    else:
        to_vec = vectorize

        def to_mat(x):
            return devectorize(x, rows, cols)

        size = N

    op = sla.LinearOperator((size, size), matvec=lambda x: to_vec(lin.apply(to_mat(x))), dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    b = to_vec(B)
    x, _ = sla.gmres(
        op,
        b,
        rtol=gcfg.rel_tol,
        atol=0.0,
        restart=gcfg.max_krylov,
        maxiter=gcfg.max_restarts + 1,
        callback=cb,
        callback_type="pr_norm",
    )
    E = to_mat(x)
    rel = frob_norm(B - lin.apply(E)) / frob_norm(B)
    report = GlGmresReport(
        iterations_total=count[0],
        achieved_rel_residual=rel,
        rel_tol=gcfg.rel_tol,
        converged=rel <= gcfg.rel_tol,
    )
    return E, report


def solve_newton_update(lin, eta, gcfg, inner="glgmres", complex_mode=False):
    B = -lin.F
    gcfg = replace(gcfg, rel_tol=eta, real_scalars=gcfg.real_scalars or complex_mode)
    if inner == "glgmres":
        return solve_update(lin.apply, B, None, gcfg)
    return _solve_vectorized(lin, B, gcfg, complex_mode)


def newton_solve(model, V0=None, cfg=None, X0=None):
    """Inexact matrix Newton for ``H(V) V = G(V) V Lam``.

    Parameters
    ----------
    model : NepvModel
    V0 : ndarray, optional
        Orthonormal start for the SCF preprocessing; defaults to
        ``model.initial_guess()``.
    cfg : NewtonConfig
    X0 : Iterate, optional
        Skip preprocessing and start Newton from this iterate.

    Returns
    -------
    X : Iterate
        Final iterate; ``Lam`` is diagonal when postprocessing is on.
    trace : NewtonTrace
    """
    cfg = cfg or NewtonConfig()
    trace = NewtonTrace()
    complex_mode = model.field == "complex"
    t_last = time.perf_counter()

    def lap():
        nonlocal t_last
        now = time.perf_counter()
        ms = 1e3 * (now - t_last)
        t_last = now
        return ms

    eta = cfg.forcing.eta0
    if X0 is None:
        V0 = model.initial_guess() if V0 is None else V0
        if cfg.pre_scf_max > 0:
            X, scf_trace = scf_solve(
                model,
                V0,
                ScfConfig(tol=max(cfg.pre_scf_tol, cfg.tau), max_iter=cfg.pre_scf_max, eig_method=cfg.eig_method),
            )
            trace.pre_scf = scf_trace
            per_step = lap() / max(len(scf_trace.residuals), 1)
            for i, r in enumerate(scf_trace.residuals):
                trace.rows.append(TraceRow("scf", i + 1, r, wall_ms=per_step))
            res = scf_trace.residuals
            if len(res) >= 2 and res[-2] > 0:
                eta = forcing_choice2(res[-1], res[-2], cfg.forcing.eta0, cfg.forcing)
        else:
            V0 = np.asarray(V0, dtype=np.result_type(V0, model.dtype))
            X = Iterate(V0, rayleigh_quotient(model, V0))
    else:
        X = X0.copy()

    lin = Linearization(model, X, derivative=cfg.derivative)
    F_norm = frob_norm(lin.F)
    trace.start_residual = F_norm
    converged = F_norm < cfg.tau
    lap()

    for j in range(cfg.max_newton):
        if converged:
            break
        E, report = solve_newton_update(lin, eta, cfg.glgmres, cfg.inner, complex_mode)
        bt = backtrack(model, X, E, eta, cfg.backtrack, linearization=lin)
        X = _stacked_iterate(X, bt.E, model.n)
        lin = bt.linearization
        F_new = frob_norm(lin.F)
        trace.rows.append(
            TraceRow(
                "newton",
                j + 1,
                F_new,
                eta=eta,
                eta_achieved=report.achieved_rel_residual,
                krylov=report.iterations_total,
                theta=bt.theta,
                backtracks=bt.backtracks,
                wall_ms=lap(),
                inner_converged=report.converged,
                accepted=bt.accepted,
            )
        )
        if F_new < cfg.tau:
            converged = True
            break
        eta = forcing_choice1(F_new, F_norm, bt.linear_residual, bt.eta, cfg.forcing)
        if cfg.forcing.roundoff_floor > 0:
            noise = cfg.forcing.roundoff_floor * _evaluation_noise(lin)
            eta = _clamp_eta(max(eta, noise / F_new), cfg.forcing)
        F_norm = F_new

    if cfg.postprocess:
        X = scf_postprocess(model, X, method=cfg.eig_method, accept_tol=cfg.tau)
        r = frob_norm(Linearization(model, X, derivative=cfg.derivative).F)
        trace.rows.append(TraceRow("post", 0, r, wall_ms=lap()))
        converged = converged and r < cfg.tau
    trace.converged = bool(converged)
    return X, trace
