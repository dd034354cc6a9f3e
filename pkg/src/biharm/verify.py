"""Spectra, inequality verdicts, kernel checks and mesh-convergence studies."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .domain import RectilinearDomain, detect_symmetry_frame
from .eigensolve import SpectrumResult, gram_rank, kernel_basis, solve_lowest
from .errors import KernelDefect, NonMonotoneLadder, SymmetryMissing
from .fem import DIRICHLET, NEUMANN, MeshDofSystem, assemble_hessian, assemble_mass, build_mesh
from .trial import (
    TrialFamily,
    borsuk_family,
    cross_term_residual,
    restricted_pencil,
    symmetric_family,
)
log = logging.getLogger(__name__)

__all__ = [
    "THM1",
    "THM2",
    "BASELINE",
    "CAVEAT",
    "InequalityRow",
    "ReplayRecord",
    "InequalityReport",
    "KernelSummary",
    "ConvergenceRecord",
    "theorem_shift",
    "compute_spectrum",
    "check_inequality",
    "kernel_check",
    "convergence_study",
    "replay_trial_subspace",
]

THM1 = "thm1"
THM2 = "thm2"
BASELINE = "baseline"

CAVEAT = (
    "Eigenvalues below are conforming Galerkin upper bounds for both the clamped "
    "and the free problem on one shared mesh. A passing verdict is numerical "
    "evidence for the continuum inequality, not a proof of it."
)

DEFAULT_TOL_MARGIN = 1e-9
KERNEL_RATIO_TOL = 1e-8
KERNEL_ACTION_TOL = 1e-10
NESTING_TOL = 1e-10


def theorem_shift(theorem: str, dim: int) -> int:
    """Index shift ``s`` in ``mu_{k+s} <= lambda_k``."""
    if theorem == THM1:
        return dim
    if theorem == THM2:
        return dim + 1
    if theorem == BASELINE:
        return 2
    raise ValueError(f"unknown theorem {theorem!r}")


@dataclass
class _Solved:
    mesh: MeshDofSystem
    spectrum: SpectrumResult
    seconds: float


def _solve(dom, refinement, bc, count, deflate=True, **solver_kw) -> _Solved:
    t0 = time.perf_counter()
    mesh = build_mesh(dom, refinement, bc)
    A = assemble_hessian(mesh)
    M = assemble_mass(mesh)
    defl = kernel_basis(mesh) if (bc == NEUMANN and deflate) else None
    spec = solve_lowest(A, M, count, defl, bc=bc, mesh_id=mesh.mesh_id, **solver_kw)
    return _Solved(mesh, spec, time.perf_counter() - t0)


def compute_spectrum(
    dom: RectilinearDomain, refinement: int, bc: str, count: int, **solver_kw
) -> SpectrumResult:
    """Mesh, assemble and solve; Neumann kernels are deflated."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return _solve(dom, refinement, bc, count, **solver_kw).spectrum


@dataclass
class InequalityRow:
    k: int
    lam: float
    mu: float
    margin: float
    verdict: bool
    lam_residual: float
    mu_residual: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda_k": self.lam,
            "mu_k_plus_shift": self.mu,
            "margin": self.margin,
            "verdict": "pass" if self.verdict else "fail",
            "lambda_residual": self.lam_residual,
            "mu_residual": self.mu_residual,
        }


@dataclass
class ReplayRecord:
    """Trial-subspace replay for one ``k``."""

    k: int
    lam: float
    family: TrialFamily
    gram_rank: int
    subspace_dim: int
    sup_rayleigh: float
    excess: float  # sup / lam - 1
    cross_term_residual: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda_k": self.lam,
            "gram_rank": self.gram_rank,
            "subspace_dim": self.subspace_dim,
            "sup_rayleigh": self.sup_rayleigh,
            "excess": self.excess,
            "cross_term_residual": self.cross_term_residual,
            "family": self.family.to_dict(),
        }


@dataclass
class InequalityReport:
    domain: dict
    refinement: int
    theorem: str
    shift: int
    rows: list[InequalityRow]
    tol_margin: float
    dirichlet: SpectrumResult
    neumann: SpectrumResult
    symmetry_frame: list[dict] = field(default_factory=list)
    kernel: dict = field(default_factory=dict)
    nesting_ok: bool = True
    nesting_max_violation: float = 0.0
    replays: list[ReplayRecord] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.verdict for r in self.rows)

    @property
    def min_margin(self) -> float | None:
        return min((r.margin for r in self.rows), default=None)

    def to_dict(self) -> dict:
        return {
            "caveat": CAVEAT,
            "theorem": self.theorem,
            "shift": self.shift,
            "refinement": self.refinement,
            "domain": self.domain,
            "tol_margin_relative": self.tol_margin,
            "all_pass": self.passed,
            "rows": [r.to_dict() for r in self.rows],
            "symmetry_frame": self.symmetry_frame,
            "kernel": self.kernel,
            "nesting": {"ok": self.nesting_ok, "max_relative_violation": self.nesting_max_violation},
            "replays": [r.to_dict() for r in self.replays],
            "dirichlet": self.dirichlet.to_dict(),
            "neumann": self.neumann.to_dict(),
            "timings_seconds": self.timings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [
            f"# {CAVEAT}",
            f"# theorem={self.theorem} shift={self.shift} refinement={self.refinement} "
            f"dimension={self.domain['dimension']} cells={len(self.domain['cells'])}",
            f"# tol_margin = {self.tol_margin:g} * lambda_k",
        ]
        if self.kernel:
            lines.append(
                f"# kernel: {self.kernel['n_zero']} deflated zero modes, "
                f"first positive mu = {self.kernel['first_positive']:.10g}"
            )
        header = f"{'k':>4} {'lambda_k':>22} {'mu_k+s':>22} {'margin':>22} {'verdict':>7}"
        lines.append(header)
        for r in self.rows:
            lines.append(
                f"{r.k:>4d} {r.lam:>22.14e} {r.mu:>22.14e} {r.margin:>22.14e} "
                f"{'pass' if r.verdict else 'FAIL':>7}"
            )
        if self.replays:
            lines.append("# trial-subspace replay")
            lines.append(f"{'k':>4} {'rank':>5} {'dim':>5} {'sup/lambda-1':>14} {'cross-term':>12}")
            for rp in self.replays:
                lines.append(
                    f"{rp.k:>4d} {rp.gram_rank:>5d} {rp.subspace_dim:>5d} "
                    f"{rp.excess:>14.3e} {rp.cross_term_residual:>12.3e}"
                )
        lines.append(f"# nesting mu_k <= lambda_k on shared mesh: {'ok' if self.nesting_ok else 'VIOLATED'}")
        lines.append(f"# overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _frame_for_thm2(dom: RectilinearDomain):
    frame = detect_symmetry_frame(dom)
    axes = {rm.axis for rm in frame}
    if len(axes) < dom.dimension - 1:
        raise SymmetryMissing(
            f"domain has axis-aligned reflection planes only for axes {sorted(axes)}; "
            f"{dom.dimension - 1} needed"
        )
    return frame


def replay_trial_subspace(
    dom: RectilinearDomain,
    mesh: MeshDofSystem,
    dirichlet: SpectrumResult,
    k: int,
    theorem: str,
    frame=None,
    seed=None,
    rank_tol: float = 1e-8,
) -> ReplayRecord:
    """Build the hybrid trial space for index ``k`` and measure its sup-Rayleigh."""
    lam = float(dirichlet.eigenvalues[k - 1])
    if theorem == THM2:
        fam = symmetric_family(dom, lam, frame if frame is not None else _frame_for_thm2(dom))
    else:
        fam = borsuk_family(dom, lam, seed=seed)
    vecs = dirichlet.eigenvectors[:, :k]
    H, G = restricted_pencil(mesh, vecs, fam)
    rank = gram_rank(None, G, rank_tol)
    dim = G.shape[0]
    sup = float(sla.eigh(H, G, eigvals_only=True)[-1]) if rank == dim else float("nan")
    return ReplayRecord(
        k=k,
        lam=lam,
        family=fam,
        gram_rank=rank,
        subspace_dim=dim,
        sup_rayleigh=sup,
        excess=sup / lam - 1.0,
        cross_term_residual=cross_term_residual(mesh, vecs, fam),
    )


def check_inequality(
    dom: RectilinearDomain,
    refinement: int,
    k_max: int,
    theorem: str,
    *,
    tol_margin: float = DEFAULT_TOL_MARGIN,
    replay_ks=None,
    full_replay: bool = False,
    seed=None,
    **solver_kw,
) -> InequalityReport:
    """Compare ``lambda_k`` with ``mu_{k+shift}`` on one shared mesh."""
    d = dom.dimension
    shift = theorem_shift(theorem, d)
    frame = _frame_for_thm2(dom) if theorem == THM2 else detect_symmetry_frame(dom)
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    timings = {}

    dirichlet = _solve(dom, refinement, DIRICHLET, max(k_max, 1), **solver_kw)
    neumann = _solve(dom, refinement, NEUMANN, max(k_max, 1) + max(shift, d + 1), **solver_kw)
    timings["dirichlet"] = dirichlet.seconds
    timings["neumann"] = neumann.seconds
    lam = dirichlet.spectrum.eigenvalues
    mu = neumann.spectrum.eigenvalues
    lres = dirichlet.spectrum.residual_norms
    mres = neumann.spectrum.residual_norms

    rows = []
    for k in range(1, k_max + 1):
        margin = float(lam[k - 1] - mu[k - 1 + shift])
        rows.append(
            InequalityRow(
                k=k,
                lam=float(lam[k - 1]),
                mu=float(mu[k - 1 + shift]),
                margin=margin,
                verdict=margin >= -tol_margin * float(lam[k - 1]),
                lam_residual=float(lres[k - 1]),
                mu_residual=float(mres[k - 1 + shift]),
            )
        )

    n_nest = min(lam.size, mu.size)
    viol = (mu[:n_nest] - lam[:n_nest]) / lam[:n_nest]
    max_viol = float(max(0.0, np.max(viol))) if n_nest else 0.0

    kernel = {
        "n_zero": int(neumann.spectrum.n_deflated),
        "first_positive": float(mu[d + 1]) if mu.size > d + 1 else float("nan"),
        "kernel_action_max": _kernel_action(neumann.mesh),
    }

    replays = []
    if k_max >= 1:
        ks = sorted(set(replay_ks if replay_ks is not None else (
            range(1, k_max + 1) if full_replay else (1, 2, k_max)
        )))
        t0 = time.perf_counter()
        for k in ks:
            if 1 <= k <= k_max:
                replays.append(
                    replay_trial_subspace(
                        dom, dirichlet.mesh, dirichlet.spectrum, k, theorem,
                        frame=frame if theorem == THM2 else None, seed=seed,
                    )
                )
        timings["replay"] = time.perf_counter() - t0

    return InequalityReport(
        domain=dom.descriptor(),
        refinement=refinement,
        theorem=theorem,
        shift=shift,
        rows=rows,
        tol_margin=tol_margin,
        dirichlet=dirichlet.spectrum,
        neumann=neumann.spectrum,
        symmetry_frame=[{"axis": rm.axis, "plane_offset": rm.plane_offset} for rm in frame],
        kernel=kernel,
        nesting_ok=max_viol <= NESTING_TOL,
        nesting_max_violation=max_viol,
        replays=replays,
        timings=timings,
    )


def _kernel_action(mesh: MeshDofSystem) -> float:
    A = assemble_hessian(mesh)
    kb = kernel_basis(mesh).vectors
    return float(np.max(np.linalg.norm(A @ kb, axis=0)))


@dataclass
class KernelSummary:
    dimension: int
    refinement: int
    eigenvalues: list[float]
    kernel_max: float  # max of mu_1..mu_{d+1}
    first_positive: float  # mu_{d+2}
    ratio: float
    kernel_action: list[float]
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_text(self) -> str:
        return (
            f"# kernel check d={self.dimension} r={self.refinement}\n"
            f"mu_1..mu_(d+2) = {', '.join(f'{v:.6e}' for v in self.eigenvalues)}\n"
            f"max kernel mu / mu_(d+2) = {self.ratio:.3e} (limit {KERNEL_RATIO_TOL:g})\n"
            f"|A f| for f in (1, x_1..x_d) = {', '.join(f'{v:.3e}' for v in self.kernel_action)}"
            f" (limit {KERNEL_ACTION_TOL:g})\n"
            f"# overall: {'PASS' if self.passed else 'FAIL'}\n"
        )


def kernel_check(
    dom: RectilinearDomain,
    refinement: int,
    mesh: MeshDofSystem | None = None,
    raise_on_fail: bool = True,
    **solver_kw,
) -> KernelSummary:
    """Check the ``d + 1``-dimensional Neumann kernel without deflation.

    ``mesh`` overrides the Neumann mesh (fault-injection hook).
    """
    mesh = mesh or build_mesh(dom, refinement, NEUMANN)
    d = dom.dimension
    A = assemble_hessian(mesh)
    M = assemble_mass(mesh)
    spec = solve_lowest(A, M, d + 2, None, bc=NEUMANN, mesh_id=mesh.mesh_id, **solver_kw)
    mu = spec.eigenvalues
    kb = kernel_basis(mesh).vectors
    action = [float(v) for v in np.linalg.norm(A @ kb, axis=0)]
    kmax = float(np.max(np.abs(mu[: d + 1])))
    ratio = kmax / float(mu[d + 1]) if mu[d + 1] > 0 else float("inf")
    passed = ratio <= KERNEL_RATIO_TOL and max(action) <= KERNEL_ACTION_TOL
    summary = KernelSummary(
        dimension=d,
        refinement=mesh.refinement,
        eigenvalues=[float(v) for v in mu],
        kernel_max=kmax,
        first_positive=float(mu[d + 1]),
        ratio=ratio,
        kernel_action=action,
        passed=passed,
    )
    if raise_on_fail and not passed:
        raise KernelDefect(
            f"Neumann kernel defect: ratio {ratio:.3e}, max |A f| {max(action):.3e}"
        )
    return summary


@dataclass
class ConvergenceRecord:
    bc: str
    index: int
    ladder: list[int]
    values: list[float]
    orders: list[float]  # one per consecutive triple
    order: float  # least-squares slope of log|differences| against log r
    fit_residual: float
    limits: list[float]  # Richardson limit per consecutive pair at the nominal order

    @property
    def limit(self) -> float:
        return self.limits[-1]

    @property
    def limit_drift(self) -> float:
        """Relative change between the last two Richardson estimates."""
        if len(self.limits) < 2:
            return float("nan")
        return abs(self.limits[-1] - self.limits[-2]) / abs(self.limits[-1])

    def monotone(self, rel_tol: float = 1e-9) -> bool:
        v = np.asarray(self.values)
        return bool(np.all(v[1:] <= v[:-1] * (1 + rel_tol)))

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["limit"] = self.limit
        out["limit_drift"] = self.limit_drift
        out["monotone"] = self.monotone()
        return out


def _triple_order(r, t) -> float:
    d1 = abs(t[1] - t[0])
    d2 = abs(t[2] - t[1])
    if d1 == 0 or d2 == 0:
        return float("nan")
    q1, q2 = r[1] / r[0], r[2] / r[1]
    if abs(q1 - q2) < 1e-12:
        return float(np.log(d1 / d2) / np.log(q1))
    h = 1.0 / np.asarray(r, dtype=float)

    def f(p):
        return (h[0] ** p - h[1] ** p) / (h[1] ** p - h[2] ** p) - d1 / d2

    try:
        return float(brentq(f, 1e-3, 20.0))
    except ValueError:
        return float("nan")


NOMINAL_ORDER = 4.0


def convergence_study(
    dom: RectilinearDomain, bc: str, index: int, ladder, *, nominal_order: float = NOMINAL_ORDER, **solver_kw
) -> ConvergenceRecord:
    """Eigenvalue ``index`` (1-based) over a refinement ladder.

    Richardson limits use ``nominal_order`` (h^4 for cubic C1 elements on a
    fourth-order problem) so that each consecutive pair gives an independent
    estimate; the observed order is reported separately.
    """
    ladder = [int(r) for r in ladder]
    if len(ladder) < 3 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise NonMonotoneLadder(f"ladder must be strictly increasing with >= 3 levels: {ladder}")
    values = []
    for r in ladder:
        # free-plate indices count the d + 1 kernel modes, so mu_{d+2} is the first positive
        spec = compute_spectrum(dom, r, bc, index, **solver_kw)
        values.append(float(spec.eigenvalues[index - 1]))
        log.info("convergence %s index %d r=%d: %.15g", bc, index, r, values[-1])
    orders = [_triple_order(ladder[i:i + 3], values[i:i + 3]) for i in range(len(ladder) - 2)]
    diffs = np.abs(np.diff(values))
    lr = np.log(np.asarray(ladder[1:], dtype=float))
    ok = diffs > 0
    if np.count_nonzero(ok) >= 2:
        coef, res, *_ = np.polyfit(lr[ok], np.log(diffs[ok]), 1, full=True)
        order = float(-coef[0])
        fit_res = float(np.sqrt(res[0] / np.count_nonzero(ok))) if res.size else 0.0
    else:
        order, fit_res = float("nan"), float("nan")
    limits = []
    for i in range(len(ladder) - 1):
        q = ladder[i + 1] / ladder[i]
        t1, t2 = values[i], values[i + 1]
        limits.append(t2 + (t2 - t1) / (q**nominal_order - 1.0))
    return ConvergenceRecord(
        bc=bc,
        index=index,
        ladder=ladder,
        values=values,
        orders=orders,
        order=order,
        fit_residual=fit_res,
        limits=limits,
    )
