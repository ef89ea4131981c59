"""Robust Fisher discriminant as a generalized NEPv.

``H v = lam f(v) f(v)^T v`` with constant ``H`` and a rank-one ``G``.
"""

import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..matcore import RankOne, SingularPointError
from ..model import Iterate, NepvModel


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray  # 0 for the first class label seen, 1 for the other
    classes: tuple
    name: str = ""

    def __post_init__(self):
        counts = np.bincount(self.labels, minlength=2)
        if self.features.shape[0] != self.labels.size or counts.size != 2 or counts.min() == 0:
            raise DatasetError("a dataset needs two nonempty classes")


BUILTIN_DATASETS = ("ionosphere", "sonar")


def load_dataset(path):
    """Load delimiter-separated rows ``x_1, ..., x_d, label``.

    ``path`` may also name a bundled dataset (``"ionosphere"``, ``"sonar"``).
    """
    if str(path) in BUILTIN_DATASETS:
        name = str(path)
        text = resources.files("nepv").joinpath("data", f"{name}.data").read_text()
    else:
        p = Path(path)
        name = p.stem
        text = p.read_text()
    rows, raw_labels = [], []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(("#", "@")):
            continue
        parts = [s.strip() for s in (line.split(",") if "," in line else line.split())]
        if width is None:
            width = len(parts)
        if len(parts) != width or width < 2:
            raise DatasetError(f"line {lineno}: expected {width} fields, got {len(parts)}")
        try:
            rows.append([float(s) for s in parts[:-1]])
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        raw_labels.append(parts[-1])
    classes = tuple(dict.fromkeys(raw_labels))
    if len(classes) != 2:
        raise DatasetError(f"expected exactly two class labels, found {len(classes)}")
    labels = np.array([classes.index(s) for s in raw_labels])
    return Dataset(np.array(rows), labels, classes, name)


def q_S(S, v):
    """``S v / sqrt(v^T S v)``."""
    Sv = S @ v
    return Sv / np.sqrt(v @ Sv)


def dq_S(S, v, e):
    Sv = S @ v
    vSv = v @ Sv
    return S @ (e / np.sqrt(vSv) - (Sv @ e) / np.sqrt(vSv**3) * v)


class RldaModel(NepvModel):
    """Worst-case Fisher discriminant.

    ``H = Sigma_X + Sigma_Y + (delta_X + delta_Y) I`` and
    ``G(v) = f(v) f(v)^T`` where
    ``f(v) = dmu - sign(v^T dmu) (q_{S_X}(v) + q_{S_Y}(v))``.
    """

    metric_spd = False

    def __init__(self, Hbar, mu_diff, S_X, S_Y):
        self.Hbar = np.asarray(Hbar, dtype=float)
        self.mu_diff = np.asarray(mu_diff, dtype=float)
        self.S_X = np.asarray(S_X, dtype=float)
        self.S_Y = np.asarray(S_Y, dtype=float)
        self.n = self.Hbar.shape[0]
        self.k = 1

    @classmethod
    def from_statistics(cls, stats):
        Hbar = stats.sigma_X + stats.sigma_Y + (stats.delta_X + stats.delta_Y) * np.eye(stats.mu_X.size)
        return cls(Hbar, stats.mu_X - stats.mu_Y, stats.S_X, stats.S_Y)

    def _sign(self, v):
        s = np.sign(v @ self.mu_diff)
        if s == 0:
            raise SingularPointError("v is orthogonal to the mean difference")
        return s

    def f(self, v):
        return self.mu_diff - self._sign(v) * (q_S(self.S_X, v) + q_S(self.S_Y, v))

    def df(self, v, e):
        return -self._sign(v) * (dq_S(self.S_X, v, e) + dq_S(self.S_Y, v, e))

    def hamiltonian(self, V):
        return self.Hbar

    def metric(self, V):
        return RankOne(self.f(V[:, 0]))

    def dH_action(self, V, EV):
        return np.zeros_like(V)

    def dG_action(self, V, EV):
        # (f L_f^T + L_f f^T) v through two dot products
        v = V[:, 0]
        f = self.f(v)
        lf = self.df(v, EV[:, 0])
        return (f * (lf @ v) + lf * (f @ v))[:, None]

    def dG_matrix(self, V, EV):
        v = V[:, 0]
        f = self.f(v)
        lf = self.df(v, EV[:, 0])
        return np.outer(f, lf) + np.outer(lf, f)

    def start_from(self, v):
        """Newton starting iterate: normalized ``v`` and the ``lam`` minimizing ``||F||``.

        For fixed ``v`` the residual ``H v - lam (f^T v) f`` is linear in
        ``lam``; its least-squares solution is a much better seed than the
        Rayleigh quotient ``v^T H v / (f^T v)^2`` when ``v`` is far off.
        """
        v = np.asarray(v, dtype=float) / np.linalg.norm(v)
        f = self.f(v)
        lam = (f @ (self.Hbar @ v)) / ((f @ v) * (f @ f))
        return Iterate(v[:, None], np.array([[lam]]))

    def initial_guess(self):
        return clda_direction(self.Hbar, self.mu_diff)[:, None]


@dataclass
class ResampledStatistics:
    mu_X: np.ndarray
    mu_Y: np.ndarray
    sigma_X: np.ndarray
    sigma_Y: np.ndarray
    delta_X: float
    delta_Y: float
    S_X: np.ndarray
    S_Y: np.ndarray


def resample_class(A, rng, n_resamples=100, index_sets=None):
    """Bootstrap mean/covariance statistics of one class.

    Returns ``(mean, covariance, delta, S)`` where ``delta`` is the largest
    Frobenius deviation of a resampled covariance from the averaged one
    and ``S`` is the covariance of the resampled means.
    """
    m = A.shape[0]
    if index_sets is None:
        index_sets = [rng.integers(0, m, size=m) for _ in range(n_resamples)]
    mus, sigmas = [], []
    for idx in index_sets:
        sample = A[idx]
        mus.append(sample.mean(axis=0))
        sigmas.append(np.cov(sample, rowvar=False))
    mus = np.array(mus)
    sigmas = np.array(sigmas)
    # shifted mean: exact when all resamples coincide
    sigma_bar = sigmas[0] + (sigmas - sigmas[0]).mean(axis=0)
    delta = max(np.linalg.norm(sigma_bar - s) for s in sigmas)
    S = np.cov(mus, rowvar=False) if len(mus) > 1 else np.zeros_like(sigma_bar)
    return mus[0] + (mus - mus[0]).mean(axis=0), sigma_bar, delta, S


def resampled_statistics(X_train, Y_train, rng, n_resamples=100):
    mu_X, sig_X, d_X, S_X = resample_class(X_train, rng, n_resamples)
    mu_Y, sig_Y, d_Y, S_Y = resample_class(Y_train, rng, n_resamples)
    return ResampledStatistics(mu_X, mu_Y, sig_X, sig_Y, d_X, d_Y, S_X, S_Y)


def clda_direction(sigma_sum, mu_diff):
    """Normalized ``(Sigma_X + Sigma_Y)^{-1} (mu_X - mu_Y)``.

    Minimum-norm least squares, so constant attributes (singular
    covariance) are tolerated.
    """
    v = np.linalg.lstsq(sigma_sum, mu_diff, rcond=None)[0]
    return v / np.linalg.norm(v)


def midpoint_classifier(v, X_train, Y_train):
    """Threshold ``v^T x`` at the midpoint of the projected class means.

    Returns a function mapping rows to 0 (class X) / 1 (class Y).
    """
    pX = X_train.mean(axis=0) @ v
    pY = Y_train.mean(axis=0) @ v
    threshold = 0.5 * (pX + pY)
    side = 1.0 if pX >= pY else -1.0
    return lambda Z: np.where(side * (Z @ v - threshold) >= 0, 0, 1)


def test_sample_accuracy(v, X_train, Y_train, Z, labels):
    return float(np.mean(midpoint_classifier(v, X_train, Y_train)(Z) == labels))


@dataclass
class RldaTrial:
    trial: int
    seed: int
    tsa_robust: float
    tsa_clda: float
    newton_iterations: int
    max_krylov: int
    final_residual: float
    converged: bool
    seconds: float
    trace: object = field(default=None, repr=False)


@dataclass
class RldaSummary:
    alpha_split: float
    trials: list = field(default_factory=list)

    def _col(self, name):
        return np.array([getattr(t, name) for t in self.trials], dtype=float)

    @property
    def mean_tsa(self):
        return float(self._col("tsa_robust").mean())

    @property
    def std_tsa(self):
        return float(self._col("tsa_robust").std())

    @property
    def mean_tsa_clda(self):
        return float(self._col("tsa_clda").mean())

    @property
    def std_tsa_clda(self):
        return float(self._col("tsa_clda").std())

    @property
    def all_converged(self):
        return all(t.converged for t in self.trials)


def split_indices(labels, alpha_split, rng, min_per_class=2):
    """Random train/test split with ``round(alpha * N)`` training points.

    Returns None if a class ends up with fewer than ``min_per_class``
    training points.
    """
    N = labels.size
    n_train = int(round(alpha_split * N))
    perm = rng.permutation(N)
    train, test = perm[:n_train], perm[n_train:]
    counts = np.bincount(labels[train], minlength=2)
    if counts.min() < min_per_class or test.size == 0:
        return None
    return np.sort(train), np.sort(test)


def run_trial(data, alpha_split, seed, newton_cfg, n_resamples=100, max_seed_retries=100):
    from ..newton import newton_solve

    for retry in range(max_seed_retries):
        rng = np.random.default_rng(seed + retry * 100003)
        split = split_indices(data.labels, alpha_split, rng)
        if split is not None:
            break
    else:
        raise DatasetError("could not draw a split with two populated classes")
    train, test = split
    Xtr = data.features[train][data.labels[train] == 0]
    Ytr = data.features[train][data.labels[train] == 1]
    stats = resampled_statistics(Xtr, Ytr, rng, n_resamples)
    model = RldaModel.from_statistics(stats)
    v_clda = clda_direction(stats.sigma_X + stats.sigma_Y, stats.mu_X - stats.mu_Y)

    t0 = time.perf_counter()
    X, trace = newton_solve(model, None, newton_cfg, X0=model.start_from(v_clda))
    seconds = time.perf_counter() - t0
    v = X.V[:, 0]

    Z, zl = data.features[test], data.labels[test]
    return RldaTrial(
        trial=0,
        seed=seed,
        tsa_robust=test_sample_accuracy(v, Xtr, Ytr, Z, zl),
        tsa_clda=test_sample_accuracy(v_clda, Xtr, Ytr, Z, zl),
        newton_iterations=trace.newton_iterations,
        max_krylov=max(trace.krylov_counts, default=0),
        final_residual=trace.final_residual,
        converged=trace.converged,
        seconds=seconds,
        trace=trace,
    )


def rlda_pipeline(data, alpha_split, trials, rng_seed, newton_cfg=None, n_resamples=100):
    """Repeated random-split evaluation of robust vs classical LDA.

    Trial ``i`` uses seed ``rng_seed + i``.
    """
    if not 0 < alpha_split < 1:
        raise ValueError("alpha_split must lie in (0, 1)")
    newton_cfg = newton_cfg or rlda_newton_config()
    summary = RldaSummary(alpha_split)
    for i in range(trials):
        t = run_trial(data, alpha_split, rng_seed + i, newton_cfg, n_resamples)
        t.trial = i
        summary.trials.append(t)
    return summary


def rlda_newton_config(tau=1e-8, max_krylov=20):
    from ..glgmres import GlGmresConfig
    from ..newton import NewtonConfig

    return NewtonConfig(
        tau=tau,
        max_newton=50,
        pre_scf_tol=1e-3,
        pre_scf_max=0,
        glgmres=GlGmresConfig(max_krylov=max_krylov),
    )


def gaussian_blobs(n_per_class, dim, separation, rng):
    """Two spherical Gaussian classes whose means differ by ``separation`` in every coordinate."""
    X = rng.standard_normal((n_per_class, dim))
    Y = rng.standard_normal((n_per_class, dim)) + separation
    labels = np.r_[np.zeros(n_per_class, int), np.ones(n_per_class, int)]
    return Dataset(np.vstack([X, Y]), labels, ("x", "y"), "blobs")
