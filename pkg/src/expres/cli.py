"""
Command line runner: ``expres run``, ``expres compare`` and ``expres bound``.

A run is described by a :class:`RunConfig`, given as flags or as a file of
``key=value`` lines (``#`` starts a comment; flags override the file). Exit
codes: 0 converged, 2 budget exhausted, 3 invalid configuration, 4 numerical
failure. All output is deterministic; no timings are written.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, fields, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .arnoldi import expv_restarted
from .chebyshev import cheb_expv
from .krylov_richardson import kr_expv
from .linalg import (DivergenceError, NonConvergenceError, SingularMatrixError, as_csr,
                     expm_dense)
from .ode import StiffIntegrationError
from .problems import (conv_diff_2d, default_v, diag_test, initial_vector, laplacian_3d_periodic,
                       read_matrix_market, tridiag)
from .results import CONVERGED, DIVERGED, relative_error
from .richardson import Preconditioner, exp_richardson, richardson_contraction_bound
from .sai import sai_expv

__all__ = ["RunConfig", "ConfigError", "RunOutcome", "build_problem", "reference_solution",
           "run", "compare", "bound", "main", "EXIT_CONVERGED", "EXIT_BUDGET", "EXIT_INVALID",
           "EXIT_NUMERICAL"]

EXIT_CONVERGED = 0
EXIT_BUDGET = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4

PROBLEMS = ("convdiff2d", "diag", "tridiag", "laplacian3d", "matrix")
METHODS = ("arnoldi", "sai", "chebyshev", "richardson", "krylov_richardson")
REFERENCES = ("none", "dense", "auto")
DENSE_LIMIT = 500
CSV_HEADER = ["iter", "matvecs", "inner_work", "residual_norm", "error_vs_reference"]
_NUMERICAL = (DivergenceError, SingularMatrixError, StiffIntegrationError, NonConvergenceError,
              FloatingPointError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    """One method applied to one problem.

    ``budget = 0`` selects the method's default budget (matvecs for
    arnoldi, outer steps for sai, degree for chebyshev, iterations for
    richardson, Krylov steps for krylov_richardson). ``restart`` is the
    Arnoldi restart length or the Krylov-Richardson cycle length.
    ``interval`` (chebyshev) is ``gershgorin``, ``unit`` or ``a:b``.
    """

    problem: str = "convdiff2d"
    nx: int = 20
    pe: float = 0.0
    n: int = 100
    nonnormal: bool = False
    a: float = 1.0
    diag: float = 2.0
    off: float = -1.0
    matrix: str = ""
    method: str = "arnoldi"
    t_end: float = 1.0
    tol: float = 1e-8
    restart: int = 100
    criterion: str = "residual"
    gamma: float = 0.0
    inner: str = "lu"
    mode: str = "plain"
    splitting: str = "tridiag"
    interval: str = "gershgorin"
    budget: int = 0
    seed: int = 0
    reference: str = "none"
    output: str = ""

    # ---- serialization -------------------------------------------------
    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}

    @classmethod
    def coerce(cls, key, value):
        types = cls.field_types()
        if key not in types:
            raise ConfigError(f"unknown key {key!r}")
        kind = types[key]
        try:
            if kind == "bool":
                if isinstance(value, bool):
                    return value
                low = str(value).strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return low in ("true", "1", "yes")
            if kind == "int":
                return int(value)
            if kind == "float":
                return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {value!r}") from None
        return str(value).strip()

    @classmethod
    def from_mapping(cls, mapping, base=None):
        base = cls() if base is None else base
        return replace(base, **{k: cls.coerce(k, v) for k, v in mapping.items()}).validated()

    @classmethod
    def from_text(cls, text, base=None):
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            entries[key] = value
        return cls.from_mapping(entries, base)

    @classmethod
    def from_file(cls, path, base=None):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, base)

    def to_text(self):
        return "".join(f"{f.name}={_fmt_value(getattr(self, f.name))}\n" for f in fields(self))

    # ---- validation ----------------------------------------------------
    def validated(self):
        checks = [
            (self.problem in PROBLEMS, f"problem must be one of {PROBLEMS}"),
            (self.method in METHODS, f"method must be one of {METHODS}"),
            (self.reference in REFERENCES, f"reference must be one of {REFERENCES}"),
            (self.t_end > 0, "t_end must be positive"),
            (self.tol > 0, "tol must be positive"),
            (self.restart >= 2, "restart must be at least 2"),
            (self.budget >= 0, "budget must be nonnegative"),
            (self.gamma >= 0, "gamma must be nonnegative (0 selects 0.1*t_end)"),
            (self.criterion in ("residual", "generalized", "stagnation"),
             "criterion must be residual, generalized or stagnation"),
            (self.inner in ("lu", "gmres"), "inner must be lu or gmres"),
            (self.mode in ("plain", "sai"), "mode must be plain or sai"),
            (self.splitting in ("tridiag", "diag", "exact"),
             "splitting must be tridiag, diag or exact"),
            (self.problem not in ("convdiff2d", "laplacian3d") or self.nx >= 4,
             "nx must be at least 4"),
            (self.problem not in ("diag", "tridiag") or self.n >= 2, "n must be at least 2"),
            (self.problem != "matrix" or self.matrix, "problem=matrix needs matrix=<path>"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        _parse_interval(self.interval)
        return self

    def problem_key(self):
        """Fields that define the operator and the starting vector."""
        return (self.problem, self.nx, self.pe, self.n, self.nonnormal, self.a, self.diag,
                self.off, self.matrix, self.seed, self.t_end)


def _fmt_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v).lower() if isinstance(v, bool) else str(v)


def _parse_interval(text):
    if text in ("gershgorin", "unit"):
        return text
    try:
        lo, hi = (float(s) for s in text.split(":"))
    except ValueError:
        raise ConfigError("interval must be gershgorin, unit or a:b") from None
    if not lo < hi:
        raise ConfigError("interval a:b needs a < b")
    return lo, hi


# ---- problems and references ------------------------------------------------
def build_problem(cfg):
    """Return ``(A, v)`` for a configuration."""
    if cfg.problem == "convdiff2d":
        A = conv_diff_2d(nx=cfg.nx, pe=cfg.pe)
        return A, default_v(A.n)
    if cfg.problem == "diag":
        return diag_test(cfg.n, nonnormal=cfg.nonnormal, seed=cfg.seed)
    if cfg.problem == "tridiag":
        return tridiag(cfg.n, cfg.off, cfg.diag, cfg.off), default_v(cfg.n)
    if cfg.problem == "laplacian3d":
        return laplacian_3d_periodic(cfg.nx), initial_vector(cfg.nx, cfg.a)
    try:
        A = read_matrix_market(cfg.matrix)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix {cfg.matrix}: {exc}") from None
    return A, default_v(A.n)


def reference_solution(A, v, t_end, kind="auto"):
    """``exp(-t_end A) v`` by dense ``expm`` (``n <= 500``) or ``expm_multiply``."""
    A = as_csr(A)
    if kind == "dense" or (kind == "auto" and A.n <= DENSE_LIMIT):
        if A.n > 4 * DENSE_LIMIT:
            raise ConfigError("dense reference limited to n <= 2000")
        return expm_dense(A.toarray(), t_end) @ v
    return spla.expm_multiply(-t_end * A.to_scipy(), v)


# ---- run ---------------------------------------------------------------
@dataclass
class RunOutcome:
    """Result of :func:`run`: exit code, summary line, CSV text and raw result."""

    code: int
    summary: str
    csv_text: str
    result: object = None
    error: float = float("nan")


def _dispatch(cfg, A, v, callback=None):
    budget = cfg.budget or None
    gamma = cfg.gamma or None
    if cfg.method == "arnoldi":
        return expv_restarted(A, v, cfg.t_end, tol=cfg.tol, restart_len=cfg.restart,
                              criterion=cfg.criterion, budget=budget or 10000)
    if cfg.method == "sai":
        return sai_expv(A, v, cfg.t_end, tol=cfg.tol, inner=cfg.inner, gamma=gamma,
                        budget=budget or 200)
    if cfg.method == "chebyshev":
        iv = _parse_interval(cfg.interval)
        interval = None if iv == "unit" else iv
        return cheb_expv(A, v, cfg.t_end, tol=cfg.tol, N_max=budget or 2000,
                         interval=interval, callback=callback)
    if cfg.method == "richardson":
        return exp_richardson(A, v, cfg.t_end, tol=cfg.tol, M=cfg.splitting,
                              max_iter=budget or 30)
    return kr_expv(A, v, cfg.t_end, tol=cfg.tol, m=cfg.restart, mode=cfg.mode, gamma=gamma,
                   inner=cfg.inner, budget=budget or 5000)


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.6e}"


def _history_csv(result, errors):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    with_error = errors is not None
    writer.writerow(CSV_HEADER if with_error else CSV_HEADER[:-1])
    for i, h in enumerate(result.history):
        row = [h.iter, h.matvecs, h.inner_work, _fmt(h.residual_norm)]
        if with_error:
            row.append(_fmt(errors.get(i)))
        writer.writerow(row)
    return buf.getvalue()


def run(cfg, reference=None):
    """Execute one configuration.

    With ``cfg.reference`` other than ``none`` (or an explicit ``reference``
    vector) the error column is filled: per iteration for chebyshev (whose
    iterates are cheap to observe), otherwise in the final row.
    """
    try:
        cfg = cfg.validated()
        A, v = build_problem(cfg)
    except ConfigError as exc:
        return RunOutcome(EXIT_INVALID, f"status=invalid_config message={exc}", "")
    if reference is None and cfg.reference != "none":
        try:
            reference = reference_solution(A, v, cfg.t_end, cfg.reference)
        except ConfigError as exc:
            return RunOutcome(EXIT_INVALID, f"status=invalid_config message={exc}", "")
    iterates = {}
    callback = None
    if reference is not None and cfg.method == "chebyshev":
        def callback(k, y):
            iterates[k - 1] = relative_error(y, reference)
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            res = _dispatch(cfg, A, v, callback)
    except ConfigError as exc:
        return RunOutcome(EXIT_INVALID, f"status=invalid_config message={exc}", "")
    except _NUMERICAL as exc:
        return RunOutcome(EXIT_NUMERICAL,
                          f"status=numerical_failure method={cfg.method} "
                          f"message={type(exc).__name__}: {exc}", "")
    except ValueError as exc:
        return RunOutcome(EXIT_INVALID, f"status=invalid_config message={exc}", "")
    if res.status == DIVERGED or not np.all(np.isfinite(res.y)):
        return RunOutcome(EXIT_NUMERICAL, f"status=numerical_failure method={cfg.method} "
                          "message=non-finite residual or iterate", "", res)
    err = float("nan")
    errors = None
    if reference is not None:
        err = relative_error(res.y, reference)
        errors = dict(iterates)
        errors[len(res.history) - 1] = err
    code = EXIT_CONVERGED if res.status == CONVERGED else EXIT_BUDGET
    summary = (f"status={res.status} method={cfg.method} problem={cfg.problem} n={A.n} "
               f"steps={res.steps} matvecs={res.matvecs} inner_work={res.inner_work} "
               f"solves={res.solves} factorizations={res.factorizations} "
               f"residual={_fmt(res.residual_norm)}")
    if reference is not None:
        summary += f" error={_fmt(err)}"
    return RunOutcome(code, summary, _history_csv(res, errors), res, err)


# ---- compare -----------------------------------------------------------
COMPARE_COLUMNS = ["label", "method", "status", "steps", "matvecs", "inner_work", "solves",
                   "factorizations", "residual_norm", "error_vs_reference"]


def compare(configs, labels=None):
    """Run several configurations against shared references.

    Returns ``(code, table_text, csv_text, rows)``. Configurations with the
    same problem share one reference (dense for ``n <= 500``, otherwise
    ``expm_multiply``). A failing run marks its row and the others continue.
    """
    if not configs:
        raise ConfigError("compare needs at least one configuration")
    labels = labels or [f"{c.method}" for c in configs]
    refs = {}
    rows = []
    code = EXIT_CONVERGED
    for label, cfg in zip(labels, configs):
        key = cfg.problem_key()
        try:
            if key not in refs:
                A, v = build_problem(cfg)
                refs[key] = reference_solution(A, v, cfg.t_end, "auto")
            out = run(replace(cfg, reference="none"), reference=refs[key])
        except ConfigError as exc:
            out = RunOutcome(EXIT_INVALID, f"status=invalid_config message={exc}", "")
        code = max(code, out.code)
        r = out.result
        if r is None or out.code in (EXIT_INVALID, EXIT_NUMERICAL):
            status = out.summary.split()[0].split("=", 1)[1]
            rows.append([label, cfg.method, status] + [""] * 7)
            continue
        rows.append([label, cfg.method, r.status, r.steps, r.matvecs, r.inner_work, r.solves,
                     r.factorizations, _fmt(r.residual_norm), _fmt(out.error)])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARE_COLUMNS)
    writer.writerows(rows)
    cells = [COMPARE_COLUMNS] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(COMPARE_COLUMNS))]
    table = "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                      for r in cells) + "\n"
    return code, table, buf.getvalue(), rows


# ---- bound -------------------------------------------------------------
def bound(cfg, t_max=5.0, points=51, splitting="diag"):
    """CSV of ``t, exp_bound, linear_bound`` for the Richardson splitting.

    The exponential bound is ``|| |t (M - A) phi(-tM)| ||_2`` and the linear
    bound ``||(M - A) M^{-1}||_2``; the ``t = 0`` row is 0.
    """
    A, _ = build_problem(cfg)
    if A.n > 2000:
        raise ConfigError("bound evaluates dense matrices; n must not exceed 2000")
    if points < 2 or t_max <= 0:
        raise ConfigError("bound needs points >= 2 and t_max > 0")
    M = Preconditioner.from_matrix(A, splitting).M
    ts = np.linspace(0.0, t_max, points)
    try:
        exp_b, lin = richardson_contraction_bound(A, M, ts)
    except (sla.LinAlgError, np.linalg.LinAlgError) as exc:
        raise ConfigError(f"splitting matrix is singular: {exc}") from None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "exp_bound", "linear_bound"])
    for t, e in zip(ts, exp_b):
        writer.writerow([f"{t:.6g}", _fmt(e), _fmt(lin)])
    return buf.getvalue()


# ---- argument parsing --------------------------------------------------
class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the invalid-configuration code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


_FLAG_HELP = {
    "problem": f"one of {', '.join(PROBLEMS)}",
    "method": f"one of {', '.join(METHODS)}",
    "reference": "none, dense or auto (dense for n <= 500, else expm_multiply)",
    "restart": "Arnoldi restart length / Krylov-Richardson cycle length",
    "budget": "method budget, 0 for the default",
    "gamma": "SaI shift, 0 for 0.1*t_end",
    "interval": "chebyshev spectral interval: gershgorin, unit or a:b",
    "output": "CSV path (stdout summary only when empty)",
}


def _add_config_flags(p):
    p.add_argument("--config", help="key=value configuration file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        aliases = [flag] + (["--t"] if f.name == "t_end" else [])
        p.add_argument(*aliases, dest=f.name, default=None, help=_FLAG_HELP.get(f.name))


def _config_from_args(args):
    base = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name, None) is not None}
    return RunConfig.from_mapping(overrides, base)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _cmd_run(args):
    cfg = _config_from_args(args)
    out = run(cfg)
    if out.csv_text and cfg.output:
        _write(cfg.output, out.csv_text)
    print(out.summary)
    return out.code


def _cmd_compare(args):
    base = _config_from_args(args)
    configs, labels = [], []
    for path in args.configs:
        configs.append(RunConfig.from_file(path, base))
        labels.append(path)
    methods = [m for m in (args.methods or "").split(",") if m]
    for m in methods:
        configs.append(RunConfig.from_mapping({"method": m}, base))
        labels.append(m)
    if args.sweep:
        key, _, values = args.sweep.partition("=")
        if not values:
            raise ConfigError("sweep must look like key=v1,v2,...")
        seeds = configs or [base]
        seed_labels = labels or [base.method]
        configs, labels = [], []
        for cfg, lab in zip(seeds, seed_labels):
            for val in values.split(","):
                configs.append(RunConfig.from_mapping({key.strip(): val}, cfg))
                labels.append(f"{lab}:{key.strip()}={val}")
    code, table, csv_text, _ = compare(configs, labels)
    sys.stdout.write(table)
    if base.output:
        _write(base.output, csv_text)
    return code


def _cmd_bound(args):
    cfg = _config_from_args(args)
    text = bound(cfg, t_max=float(args.t_max), points=int(args.points), splitting=args.split)
    if cfg.output:
        _write(cfg.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_CONVERGED


def build_parser():
    parser = _Parser(prog="expres", description="Residual-controlled exp(-tA)v solvers.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    p_run = sub.add_parser("run", help="run one method on one problem")
    _add_config_flags(p_run)
    p_run.set_defaults(func=_cmd_run)
    p_cmp = sub.add_parser("compare", help="run several methods against a shared reference")
    p_cmp.add_argument("configs", nargs="*", help="key=value files (shared flags apply first)")
    p_cmp.add_argument("--methods", help="comma-separated methods on the flag-defined problem")
    p_cmp.add_argument("--sweep", help="key=v1,v2,... expanded for every configuration")
    _add_config_flags(p_cmp)
    p_cmp.set_defaults(func=_cmd_compare)
    p_bnd = sub.add_parser("bound", help="Richardson residual reduction bounds versus t")
    _add_config_flags(p_bnd)
    p_bnd.add_argument("--t-max", default="5.0")
    p_bnd.add_argument("--points", default="51")
    p_bnd.add_argument("--split", default="diag", choices=["diag", "tridiag"],
                       help="splitting matrix M")
    p_bnd.set_defaults(func=_cmd_bound)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"status=invalid_config message={exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"status=invalid_config message={exc}", file=sys.stderr)
        return EXIT_INVALID
    except _NUMERICAL as exc:
        print(f"status=numerical_failure message={type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
