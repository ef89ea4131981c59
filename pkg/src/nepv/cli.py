"""Command-line experiment harness.

Config files are flat ``key = value`` text (``#`` comments allowed);
``--set key=value`` overrides any key.  Output goes to
``$NEPV_OUTPUT_ROOT/<name>/`` (default root ``./nepv-output``):

* ``trace_<run_id>.csv``: one row per outer iteration, versioned header
* ``summary.csv``: one row per run, byte-identical across reruns
* ``timings.csv``: wall-clock per run (kept out of the summary)

Exit codes: 0 ok, 2 config error, 3 non-convergence, 4 I/O error.
"""

import argparse
import configparser
import csv
import itertools
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_IO = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "NEPV_OUTPUT_ROOT"
TRACE_HEADER = "# nepv-trace v1"
TRACE_COLUMNS = ["run_id", "phase", "iteration", "residual_fro", "eta", "krylov_iters", "theta", "backtracks", "wall_ms"]
SUMMARY_COLUMNS = [
    "run_id", "problem", "solver", "params", "converged", "final_residual",
    "scf_iterations", "newton_iterations", "outer_iterations", "mean_krylov",
    "tsa_robust", "tsa_clda",
]
SOLVERS = ("scf", "newton-glgmres", "newton-vecgmres")
PROBLEMS = ("ks-simple", "ks3d", "gpe", "rlda")


class ConfigError(ValueError):
    pass


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


TYPES = {
    "problem": str, "solver": str, "name": str, "seed": int,
    "tau": float, "max_newton": int, "pre_scf_max": int, "pre_scf_tol": float,
    "max_krylov": int, "max_restarts": int, "ortho": str, "eta0": float,
    "scf_max_iter": int, "derivative": str, "eig_method": str,
    "n": int, "k": int, "gamma": float, "m": int, "allow_large": _bool,
    "N": int, "ell": float, "omega": float, "variant": str,
    "dataset": str, "alpha": float, "trials": int, "n_resamples": int,
}

COMMON_DEFAULTS = {
    "solver": "newton-glgmres", "seed": 0, "max_newton": 50, "max_krylov": 400,
    "max_restarts": 0, "ortho": "mgs", "eta0": 0.5, "scf_max_iter": 200,
    "derivative": "auto", "eig_method": "lapack",
}

# per-problem defaults
PROBLEM_DEFAULTS = {
    "ks-simple": {"n": 10, "k": 2, "gamma": 0.5, "tau": 1e-12, "pre_scf_max": 2, "pre_scf_tol": 0.0},
    "ks3d": {"m": 10, "k": 1, "gamma": 1.0, "tau": 1e-10, "pre_scf_max": 50, "pre_scf_tol": 5e-5, "allow_large": False},
    "gpe": {"N": 10, "ell": 1.0, "omega": 0.85, "gamma": 1.0, "variant": "complex",
            "tau": 1e-10, "pre_scf_max": 4, "pre_scf_tol": 1e-3},
    "rlda": {"dataset": "ionosphere", "alpha": 0.6, "trials": 10, "n_resamples": 100,
             "tau": 1e-8, "max_krylov": 20, "pre_scf_max": 0, "pre_scf_tol": 1e-3},
}
PROBLEM_KEYS = {
    "ks-simple": {"n", "k", "gamma"},
    "ks3d": {"m", "k", "gamma", "allow_large"},
    "gpe": {"N", "ell", "omega", "gamma", "variant"},
    "rlda": {"dataset", "alpha", "trials", "n_resamples"},
}
KS3D_DESK_LIMIT = 16


def parse_config_text(text):
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return dict(cp["run"])


def parse_assignment(s):
    if "=" not in s:
        raise ConfigError(f"expected key=value, got {s!r}")
    key, value = s.split("=", 1)
    return key.strip(), value.strip()


def resolve_params(raw, base_dir=None):
    """Typed, validated parameter dict from raw strings plus defaults."""
    problem = raw.get("problem")
    if problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}; got {problem!r}")
    allowed = set(TYPES) - set().union(*PROBLEM_KEYS.values()) | PROBLEM_KEYS[problem]
    params = {**COMMON_DEFAULTS, **PROBLEM_DEFAULTS[problem]}
    for key, value in raw.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for problem {problem}")
        try:
            params[key] = TYPES[key](value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    _validate(params, base_dir)
    return params


def _validate(p, base_dir):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(p["solver"] in SOLVERS, f"solver must be one of {', '.join(SOLVERS)}")
    need(p["tau"] > 0, "tau must be positive")
    need(p["max_newton"] >= 0 and p["pre_scf_max"] >= 0 and p["scf_max_iter"] >= 0, "iteration counts must be >= 0")
    need(p["max_krylov"] >= 1 and p["max_restarts"] >= 0, "max_krylov >= 1 and max_restarts >= 0 required")
    need(p["ortho"] in ("mgs", "cgs2"), "ortho must be mgs or cgs2")
    need(0 <= p["eta0"] < 1, "eta0 must lie in [0, 1)")
    need(p["derivative"] in ("auto", "exact", "fd"), "derivative must be auto, exact or fd")
    need(p["eig_method"] in ("lapack", "householder-ql"), "eig_method must be lapack or householder-ql")
    if "gamma" in p:
        need(p["gamma"] >= 0, "gamma must be nonnegative")
    problem = p["problem"]
    if problem == "ks-simple":
        need(p["n"] >= 2 and 1 <= p["k"] <= p["n"], "need n >= 2 and 1 <= k <= n")
    elif problem == "ks3d":
        need(p["m"] >= 2 and 1 <= p["k"] <= p["m"] ** 3, "need m >= 2 and 1 <= k <= m^3")
        need(p["m"] <= KS3D_DESK_LIMIT or p["allow_large"], f"m > {KS3D_DESK_LIMIT} needs allow_large = true")
    elif problem == "gpe":
        need(p["N"] >= 2 and p["ell"] > 0, "need N >= 2 and ell > 0")
        need(p["variant"] in ("complex", "real"), "variant must be complex or real")
    elif problem == "rlda":
        from .problems.rlda import BUILTIN_DATASETS

        need(0 < p["alpha"] < 1, "alpha must lie in (0, 1)")
        need(p["trials"] >= 0 and p["n_resamples"] >= 2, "need trials >= 0 and n_resamples >= 2")
        need(p["solver"] != "scf", "rlda has a rank-one G(v); plain SCF is not available")
        if p["dataset"] not in BUILTIN_DATASETS:
            path = Path(p["dataset"])
            if not path.is_absolute() and base_dir is not None:
                path = Path(base_dir) / path
            need(path.is_file(), f"dataset file not found: {path}")
            p["dataset"] = str(path)


def build_model(p):
    from .problems import Ks3dModel, KsSimpleModel, gpe_assemble

    if p["problem"] == "ks-simple":
        return KsSimpleModel(p["n"], p["k"], p["gamma"])
    if p["problem"] == "ks3d":
        return Ks3dModel(p["m"], p["k"], p["gamma"])
    if p["problem"] == "gpe":
        return gpe_assemble(p["ell"], p["N"], p["omega"], p["gamma"], variant=p["variant"])
    raise ConfigError(f"no single model for problem {p['problem']}")


def newton_config(p):
    from .glgmres import GlGmresConfig
    from .newton import ForcingConfig, NewtonConfig

    return NewtonConfig(
        tau=p["tau"],
        max_newton=p["max_newton"],
        pre_scf_tol=p["pre_scf_tol"],
        pre_scf_max=p["pre_scf_max"],
        glgmres=GlGmresConfig(max_krylov=p["max_krylov"], max_restarts=p["max_restarts"], ortho=p["ortho"]),
        forcing=ForcingConfig(eta0=p["eta0"]),
        inner="vecgmres" if p["solver"] == "newton-vecgmres" else "glgmres",
        derivative=p["derivative"],
        eig_method=p["eig_method"],
    )


@dataclass
class RunRecord:
    run_id: str
    problem: str
    solver: str
    params: str
    converged: bool
    final_residual: float
    scf_iterations: int
    newton_iterations: int
    mean_krylov: float
    wall_ms: float
    trace_rows: list = field(default_factory=list)
    tsa_robust: float = None
    tsa_clda: float = None

    def summary_row(self):
        def num(x, fmt):
            return "" if x is None else format(x, fmt)

        return {
            "run_id": self.run_id,
            "problem": self.problem,
            "solver": self.solver,
            "params": self.params,
            "converged": int(self.converged),
            "final_residual": num(self.final_residual, ".6e"),
            "scf_iterations": self.scf_iterations,
            "newton_iterations": self.newton_iterations,
            "outer_iterations": self.scf_iterations + self.newton_iterations,
            "mean_krylov": num(self.mean_krylov, ".4f"),
            "tsa_robust": num(self.tsa_robust, ".6f"),
            "tsa_clda": num(self.tsa_clda, ".6f"),
        }


def _newton_rows(trace):
    return [
        (r.phase, r.iteration, r.residual, r.eta, r.krylov, r.theta, r.backtracks, r.wall_ms)
        for r in trace.rows
    ]


def run_single(p, run_id, label=""):
    """Run one solver on one (non-rlda) problem."""
    from .newton import newton_solve
    from .scf import ScfConfig, scf_solve

    model = build_model(p)
    t0 = time.perf_counter()
    if p["solver"] == "scf":
        _, trace = scf_solve(
            model, model.initial_guess(), ScfConfig(tol=p["tau"], max_iter=p["scf_max_iter"], eig_method=p["eig_method"])
        )
        wall = 1e3 * (time.perf_counter() - t0)
        per = wall / max(trace.iterations, 1)
        rows = [("scf", i + 1, r, None, 0, None, 0, per) for i, r in enumerate(trace.residuals)]
        return RunRecord(
            run_id, p["problem"], p["solver"], label, trace.converged,
            trace.residuals[-1] if trace.residuals else float("nan"),
            trace.iterations, 0, 0.0, wall, rows,
        )
    _, trace = newton_solve(model, None, newton_config(p))
    wall = 1e3 * (time.perf_counter() - t0)
    return RunRecord(
        run_id, p["problem"], p["solver"], label, trace.converged, trace.final_residual,
        trace.scf_iterations, trace.newton_iterations, trace.mean_krylov, wall, _newton_rows(trace),
    )


def run_rlda(p, run_id, label=""):
    from .problems.rlda import load_dataset, run_trial

    data = load_dataset(p["dataset"])
    cfg = newton_config(p)
    records = []
    for i in range(p["trials"]):
        t = run_trial(data, p["alpha"], p["seed"] + i, cfg, p["n_resamples"])
        records.append(
            RunRecord(
                f"{run_id}-trial{i:03d}", "rlda", p["solver"], label or f"seed={p['seed'] + i}",
                t.converged, t.final_residual, 0, t.trace.newton_iterations, t.trace.mean_krylov,
                1e3 * t.seconds, _newton_rows(t.trace), t.tsa_robust, t.tsa_clda,
            )
        )
    return records


def execute(p, run_id, label=""):
    if p["problem"] == "rlda":
        return run_rlda(p, run_id, label)
    return [run_single(p, run_id, label)]


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def _safe(s):
    return re.sub(r"[^A-Za-z0-9_.=+-]", "_", s)


def write_outputs(out_dir, records):
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        with open(out_dir / f"trace_{_safe(rec.run_id)}.csv", "w", newline="") as fh:
            fh.write(TRACE_HEADER + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in rec.trace_rows:
                w.writerow([rec.run_id] + [_fmt(x) for x in row])
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow(rec.summary_row())
    with open(out_dir / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "wall_ms"])
        for rec in records:
            w.writerow([rec.run_id, f"{rec.wall_ms:.3f}"])


def print_table(records, stream=sys.stdout):
    cols = ["run_id", "solver", "converged", "final_residual", "scf_iterations", "newton_iterations", "mean_krylov"]
    rows = [[str(r.summary_row()[c]) for c in cols] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)), file=stream)
    for row in rows:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)), file=stream)


def load_config(path, overrides):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from None
    raw = parse_config_text(text)
    for s in overrides or []:
        key, value = parse_assignment(s)
        raw[key] = value
    params = resolve_params(raw, base_dir=path.parent)
    params.setdefault("name", path.stem)
    return params


def output_dir(params, out=None):
    if out:
        return Path(out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "nepv-output"))
    return root / params.get("name", "run")


def parse_sweep(specs):
    """``["gamma=0.5,0.6"]`` -> list of override dicts (cartesian product)."""
    axes = []
    for spec in specs:
        key, values = parse_assignment(spec)
        if key not in TYPES or key in ("problem", "name"):
            raise ConfigError(f"cannot sweep over {key!r}")
        vals = [v.strip() for v in values.split(",") if v.strip()]
        axes.append([(key, v) for v in vals])
    return [dict(combo) for combo in itertools.product(*axes)] if axes else []


def cmd_run(args):
    p = load_config(args.config, args.set)
    run_id = f"{p['problem']}-{p['solver']}"
    records = execute(p, run_id)
    return _finish(records, output_dir(p, args.out))


def cmd_sweep(args):
    base = load_config(args.config, args.set)
    raw_base = {k: str(v) for k, v in base.items() if k != "name"}
    records = []
    for combo in parse_sweep(args.param):
        p = resolve_params({**raw_base, **combo})
        label = ";".join(f"{k}={v}" for k, v in combo.items())
        records += execute(p, f"{p['problem']}-{p['solver']}-{label}", label)
    return _finish(records, output_dir(base, args.out))


def cmd_compare(args):
    base = load_config(args.config, args.set)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    unknown = [s for s in solvers if s not in SOLVERS]
    if unknown:
        raise ConfigError(f"unknown solver id(s): {', '.join(unknown)}")
    if len(set(solvers)) < 2:
        raise ConfigError("compare needs at least two distinct solvers")
    raw_base = {k: str(v) for k, v in base.items() if k != "name"}
    records = []
    for s in solvers:
        p = resolve_params({**raw_base, "solver": s})
        records += execute(p, f"{p['problem']}-{s}", f"solver={s}")
    return _finish(records, output_dir(base, args.out))


def cmd_equivalence(args):
    from .gmres_equivalence import equivalence_check

    try:
        k = args.k or (2 if args.problem == "ks-simple" else 1)
        res = equivalence_check(args.problem, args.n, k, args.m, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for m, d in enumerate(res.iterate_diffs, start=1):
        print(f"m={m:2d}  rel. iterate difference {d:.3e}")
    print(f"Hessenberg max difference {res.hessenberg_diff:.3e}")
    ok = res.passed(args.tol)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NOCONV


def _finish(records, out_dir):
    write_outputs(out_dir, records)
    print_table(records)
    print(f"wrote {len(records)} run(s) to {out_dir}")
    return EXIT_OK if all(r.converged for r in records) else EXIT_NOCONV


def build_parser():
    ap = argparse.ArgumentParser(prog="nepv", description="Newton and SCF solvers for eigenvector-dependent eigenproblems")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="flat key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<name>)")

    sp = sub.add_parser("run", help="run one configured experiment")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a parameter sweep")
    common(sp)
    sp.add_argument("--param", action="append", default=[], metavar="KEY=V1,V2,...", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("compare", help="run several solvers on the same problem")
    common(sp)
    sp.add_argument("--solvers", required=True, help="comma-separated: " + ",".join(SOLVERS))
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("lemma1-check", help="global GMRES vs vector GMRES on the Kronecker form")
    sp.add_argument("--problem", default="ks-simple", choices=["ks-simple", "gpe-real"])
    sp.add_argument("--n", type=int, default=8, help="n for ks-simple, grid size N for gpe-real")
    sp.add_argument("--k", type=int, help="default 2 for ks-simple, 1 for gpe-real")
    sp.add_argument("--m", type=int, default=10, help="number of GMRES steps compared")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_equivalence)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
