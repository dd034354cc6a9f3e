"""Command-line front end: ``biharm <command> [options]``.

Commands
--------
spectrum     lowest clamped or free eigenvalues on a domain
inequality   compare ``lambda_k`` with ``mu_{k+s}`` on one shared mesh
construct    build a trial family at ``lambda_k`` and check its identities
converge     refinement ladder with observed order and Richardson limits
kernel       check the free-plate kernel without deflation

Exit codes: 0 success, 2 a verdict failed, 3 solver failure, 4 input error.
The thread count of the BLAS/LAPACK pools can be capped with the
``BIHARM_NUM_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import verify
from .domain import detect_symmetry_frame, load_domain
from .errors import (
    BiharmError,
    InputError,
    IoFailure,
    KernelDefect,
    SolverError,
)
from .fem import DIRICHLET, NEUMANN, assemble_hessian, assemble_mass, build_mesh
from .eigensolve import solve_lowest
from .trial import borsuk_family, check_identities, symmetric_family

__all__ = ["RunConfig", "build_parser", "parse_config", "run", "main", "emit_csv"]

log = logging.getLogger("biharm")

EXIT_OK = 0
EXIT_VERDICT = 2
EXIT_SOLVER = 3
EXIT_INPUT = 4

COMMANDS = ("spectrum", "inequality", "construct", "converge", "kernel")
THEOREMS = (verify.THM1, verify.THM2, verify.BASELINE)
FAMILIES = ("borsuk", "symmetric")
CSV_HEADER = ("k", "shift", "lambda_k", "mu_k_plus_shift", "margin", "verdict")
THREADS_ENV = "BIHARM_NUM_THREADS"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so usage errors map onto the input-error code."""

    def error(self, message):
        raise _UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """One fully specified invocation.

    ``None`` means "not given"; defaults of the library apply.
    """

    command: str
    domain_file: str | None = None
    refinement: int = 16
    k_max: int = 10
    theorem: str = verify.THM1
    bc: str = DIRICHLET
    count: int = 10
    index: int = 1
    ladder: tuple[int, ...] = (8, 16, 32)
    family: str = "borsuk"
    report: str | None = None
    csv: str | None = None
    figure: str | None = None
    tol_margin: float = verify.DEFAULT_TOL_MARGIN
    seed: tuple[float, ...] | None = None
    full_replay: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        for name in ("refinement", "k_max", "count", "index"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.tol_margin > 0:
            raise InputError(f"tol_margin must be positive, got {self.tol_margin}")
        if any(r < 1 for r in self.ladder):
            raise InputError(f"ladder levels must be positive: {self.ladder}")
        if self.seed is not None and not np.any(self.seed):
            raise InputError("seed direction must be non-zero")
        default = _DEFAULTS.get(self.command)
        if default is not None:
            stray = [f.name for f in fields(self)
                     if f.name not in _ACCEPTS[self.command] and getattr(self, f.name) != getattr(default, f.name)]
            if stray:
                raise InputError(f"command {self.command!r} does not accept {', '.join(stray)}")

    def to_argv(self) -> list[str]:
        """Arguments that :func:`parse_config` maps back onto this config."""
        argv = [self.command]
        default = _DEFAULTS[self.command]
        for f in fields(self):
            if f.name == "command":
                continue
            value = getattr(self, f.name)
            if value == getattr(default, f.name):
                continue
            flag = _FLAG[f.name]
            if isinstance(value, bool):
                argv.append(flag)
            elif isinstance(value, tuple):
                argv += [flag, ",".join(repr(v) for v in value)]
            elif isinstance(value, float):
                argv += [flag, repr(value)]
            else:
                argv += [flag, str(value)]
        return argv


_FLAG = {
    "domain_file": "--domain",
    "refinement": "--refine",
    "k_max": "--kmax",
    "theorem": "--theorem",
    "bc": "--bc",
    "count": "--count",
    "index": "--index",
    "ladder": "--ladder",
    "family": "--family",
    "report": "--report",
    "csv": "--csv",
    "figure": "--figure",
    "tol_margin": "--tol-margin",
    "seed": "--seed",
    "full_replay": "--full-replay",
}


_COMMON = {"command", "domain_file", "report", "csv"}
_ACCEPTS = {
    "spectrum": _COMMON | {"refinement", "bc", "count"},
    "inequality": _COMMON | {"refinement", "k_max", "theorem", "tol_margin", "seed", "full_replay", "figure"},
    "construct": _COMMON | {"refinement", "family", "index", "seed"},
    "converge": _COMMON | {"bc", "index", "ladder", "figure"},
    "kernel": _COMMON | {"refinement"},
}
_DEFAULTS: dict[str, RunConfig] = {}
_DEFAULTS.update({c: RunConfig(c) for c in COMMANDS})


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="biharm", description="Clamped and free biharmonic eigenvalues on rectilinear domains.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *, refine=True):
        sp.add_argument("--domain", dest="domain_file", required=True, help="domain file (YAML)")
        if refine:
            sp.add_argument("--refine", dest="refinement", type=int, default=16, help="subdivisions per cell edge")
        sp.add_argument("--report", help="write a JSON report here")
        sp.add_argument("--csv", help="write plot-ready CSV data here")

    sp = sub.add_parser("spectrum", help="lowest eigenvalues")
    common(sp)
    sp.add_argument("--bc", choices=(DIRICHLET, NEUMANN), default=DIRICHLET)
    sp.add_argument("--count", type=int, default=10)

    sp = sub.add_parser("inequality", help="shifted free vs clamped comparison")
    common(sp)
    sp.add_argument("--kmax", dest="k_max", type=int, default=10)
    sp.add_argument("--theorem", choices=THEOREMS, default=verify.THM1)
    sp.add_argument("--tol-margin", dest="tol_margin", type=float, default=verify.DEFAULT_TOL_MARGIN,
                    help="relative slack on each margin (default %(default)g)")
    sp.add_argument("--seed", type=_float_list, default=None, help="first Borsuk frequency direction, e.g. 1,0")
    sp.add_argument("--full-replay", dest="full_replay", action="store_true",
                    help="replay the trial subspace for every k, not only 1, 2 and kmax")
    sp.add_argument("--figure", help="render margins to this image file")

    sp = sub.add_parser("construct", help="trial family at lambda_k")
    common(sp)
    sp.add_argument("--family", choices=FAMILIES, default="borsuk")
    sp.add_argument("--index", type=int, default=1, help="use the clamped eigenvalue with this index")
    sp.add_argument("--seed", type=_float_list, default=None)

    sp = sub.add_parser("converge", help="refinement ladder")
    common(sp, refine=False)
    sp.add_argument("--bc", choices=(DIRICHLET, NEUMANN), default=DIRICHLET)
    sp.add_argument("--index", type=int, default=1)
    sp.add_argument("--ladder", type=_int_list, default=(8, 16, 32))
    sp.add_argument("--figure", help="render the ladder to this image file")

    sp = sub.add_parser("kernel", help="free-plate kernel check")
    common(sp)
    return p


def parse_config(argv) -> RunConfig:
    """Parse ``argv`` (without the program name) into a :class:`RunConfig`."""
    ns = vars(build_parser().parse_args(list(argv)))
    ns.pop("verbose", None)
    return RunConfig(**ns)


def emit_csv(report, path) -> None:
    """Write one row per ``k``; floats use ``repr`` so output is exact and stable."""
    rows = [
        (r.k, report.shift, repr(float(r.lam)), repr(float(r.mu)), repr(float(r.margin)),
         "pass" if r.verdict else "fail")
        for r in report.rows
    ]
    _write_csv(path, CSV_HEADER, rows)


def _write_csv(path, header, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _write_json(path, payload) -> None:
    try:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


# -- commands ---------------------------------------------------------------


def _cmd_spectrum(cfg: RunConfig, dom, out) -> int:
    # free-plate counts include the d + 1 zero modes
    spec = verify.compute_spectrum(dom, cfg.refinement, cfg.bc, cfg.count)
    print(f"# {cfg.bc} eigenvalues, refinement {cfg.refinement}, method {spec.method}", file=out)
    for j, (v, res) in enumerate(zip(spec.eigenvalues, spec.residual_norms), start=1):
        print(f"{j:>4d} {v:>24.15e} {res:>10.2e}", file=out)
    if cfg.report:
        _write_json(cfg.report, {"refinement": cfg.refinement, "domain": dom.descriptor(), **spec.to_dict()})
    if cfg.csv:
        rows = [(j, repr(float(v)), repr(float(r)))
                for j, (v, r) in enumerate(zip(spec.eigenvalues, spec.residual_norms), start=1)]
        _write_csv(cfg.csv, ("k", "eigenvalue", "residual"), rows)
    return EXIT_OK


def _cmd_inequality(cfg: RunConfig, dom, out) -> int:
    report = verify.check_inequality(
        dom, cfg.refinement, cfg.k_max, cfg.theorem,
        tol_margin=cfg.tol_margin, full_replay=cfg.full_replay, seed=cfg.seed,
    )
    out.write(report.to_text())
    if cfg.report:
        _write_json(cfg.report, report.to_dict())
    if cfg.csv:
        emit_csv(report, cfg.csv)
    if cfg.figure:
        from .plotting import plot_inequality

        plot_inequality(report, cfg.figure)
    return EXIT_OK if report.passed else EXIT_VERDICT


def _cmd_construct(cfg: RunConfig, dom, out) -> int:
    mesh = build_mesh(dom, cfg.refinement, DIRICHLET)
    spec = solve_lowest(assemble_hessian(mesh), assemble_mass(mesh), cfg.index,
                        bc=DIRICHLET, mesh_id=mesh.mesh_id)
    lam = float(spec.eigenvalues[cfg.index - 1])
    if cfg.family == "borsuk":
        fam = borsuk_family(dom, lam, seed=cfg.seed)
    else:
        fam = symmetric_family(dom, lam, detect_symmetry_frame(dom))
    ident = check_identities(fam, dom)
    freq_err = float(np.max(fam.frequency_errors()))
    print(f"# {fam.kind} family at lambda_{cfg.index} = {lam:.15g} (refinement {cfg.refinement})", file=out)
    for j, (w, ph) in enumerate(zip(fam.frequencies, fam.phases), start=1):
        print(f"  v{j}: {ph:<4s} omega = [{', '.join(f'{c: .12f}' for c in w)}]", file=out)
    print(f"# max | |w|^4 - lambda | / lambda = {freq_err:.3e}", file=out)
    print(f"# max orthogonality residual (relative) = {fam.max_relative_residual():.3e}", file=out)
    print(f"# max pointwise identity residual = {ident.max_pointwise:.3e}", file=out)
    print(f"# max Hessian identity residual = {ident.max_hessian:.3e}", file=out)
    if cfg.report:
        _write_json(cfg.report, {
            "index": cfg.index,
            "refinement": cfg.refinement,
            "domain": dom.descriptor(),
            "family": fam.to_dict(),
            "frequency_error": freq_err,
            "identities": ident.to_dict(),
        })
    if cfg.csv:
        d = dom.dimension
        rows = [(j, ph, *(repr(float(c)) for c in w), repr(float(nm)))
                for j, (w, ph, nm) in enumerate(zip(fam.frequencies, fam.phases, fam.norms), start=1)]
        _write_csv(cfg.csv, ("member", "phase", *(f"omega_{a + 1}" for a in range(d)), "l2_norm"), rows)
    return EXIT_OK


def _cmd_converge(cfg: RunConfig, dom, out) -> int:
    rec = verify.convergence_study(dom, cfg.bc, cfg.index, cfg.ladder)
    print(f"# {cfg.bc} eigenvalue {cfg.index} over refinement ladder", file=out)
    for r, v in zip(rec.ladder, rec.values):
        print(f"{r:>6d} {v:>24.15e}", file=out)
    print(f"# observed order {rec.order:.4f}; Richardson limits "
          f"{', '.join(f'{x:.12g}' for x in rec.limits)}; drift {rec.limit_drift:.3e}", file=out)
    print(f"# monotone non-increasing: {'yes' if rec.monotone() else 'NO'}", file=out)
    if cfg.report:
        _write_json(cfg.report, {"domain": dom.descriptor(), **rec.to_dict()})
    if cfg.csv:
        rows = [(r, repr(float(v))) for r, v in zip(rec.ladder, rec.values)]
        _write_csv(cfg.csv, ("refinement", "eigenvalue"), rows)
    if cfg.figure:
        from .plotting import plot_convergence

        plot_convergence(rec, cfg.figure)
    return EXIT_OK if rec.monotone() else EXIT_VERDICT


def _cmd_kernel(cfg: RunConfig, dom, out) -> int:
    summary = verify.kernel_check(dom, cfg.refinement, raise_on_fail=False)
    out.write(summary.to_text())
    if cfg.report:
        _write_json(cfg.report, summary.to_dict())
    if cfg.csv:
        rows = [(j, repr(float(v))) for j, v in enumerate(summary.eigenvalues, start=1)]
        _write_csv(cfg.csv, ("j", "mu_j"), rows)
    if not summary.passed:
        raise KernelDefect(f"free-plate kernel check failed (ratio {summary.ratio:.3e})")
    return EXIT_OK


_DISPATCH = {
    "spectrum": _cmd_spectrum,
    "inequality": _cmd_inequality,
    "construct": _cmd_construct,
    "converge": _cmd_converge,
    "kernel": _cmd_kernel,
}


def run(argv=None, out=None, err=None) -> int:
    """Execute one command and return its exit code; never raises."""
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    if "-v" in argv or "--verbose" in argv:
        logging.basicConfig(level=logging.INFO, stream=err, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
        dom = load_domain(cfg.domain_file)
        with _thread_limit():
            return _DISPATCH[cfg.command](cfg, dom, out)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except _UsageError as exc:
        print(f"biharm: usage error: {exc}", file=err)
        return EXIT_INPUT
    except KernelDefect as exc:
        print(f"biharm: {exc}", file=err)
        return EXIT_VERDICT
    except (InputError, IoFailure) as exc:
        print(f"biharm: input error: {exc}", file=err)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"biharm: solver failure: {exc}", file=err)
        return EXIT_SOLVER
    except BiharmError as exc:
        print(f"biharm: {type(exc).__name__}: {exc}", file=err)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"biharm: input error: {exc}", file=err)
        return EXIT_INPUT
    except (MemoryError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"biharm: {type(exc).__name__}: {exc}", file=err)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())
