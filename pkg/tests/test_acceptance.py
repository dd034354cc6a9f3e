"""Desk-scale acceptance checks.

Every test prints one ``[PASS]``/``[FAIL]`` line with the measured value and
its tolerance straight to the terminal (also under captured output), then
asserts.  Runtime budgets are asserted alongside the numerical criteria.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from biharm import verify
from biharm.domain import detect_symmetry_frame
from biharm.eigensolve import solve_lowest
from biharm.fem import DIRICHLET, NEUMANN, assemble_hessian, assemble_mass, build_mesh
from biharm.trial import borsuk_family, check_identities, symmetric_family


@pytest.fixture
def verdict(capsys):
    """Print one verdict line to the terminal and fail the test if it is negative."""

    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
        assert ok, f"{tag}: {detail}"

    return emit


def _clamped(dom, r, count):
    mesh = build_mesh(dom, r, DIRICHLET)
    return mesh, solve_lowest(assemble_hessian(mesh), assemble_mass(mesh), count, bc=DIRICHLET)


@pytest.mark.parametrize("name", ["square", "rect"])
def test_ac01_kernel_facts(request, verdict, name):
    dom = request.getfixturevalue(name)
    t0 = time.perf_counter()
    s = verify.kernel_check(dom, 16, raise_on_fail=False)
    dt = time.perf_counter() - t0
    ok = s.ratio <= 1e-8 and max(s.kernel_action) <= 1e-10 and s.first_positive > 0 and dt <= 10
    verdict(
        f"AC1 kernel facts ({name}, r=16)",
        ok,
        f"max mu_j/mu_(d+2) = {s.ratio:.2e} (<= 1e-8), max |A f| = {max(s.kernel_action):.2e} (<= 1e-10), "
        f"mu_(d+2) = {s.first_positive:.6g} > 0, {dt:.1f} s (<= 10 s)",
    )


def test_ac02_discrete_nesting(verdict, square, lshape):
    t0 = time.perf_counter()
    worst = -np.inf
    for dom in (square, lshape):
        lam = verify.compute_spectrum(dom, 16, DIRICHLET, 20).eigenvalues
        mu = verify.compute_spectrum(dom, 16, NEUMANN, 20).eigenvalues
        worst = max(worst, float(np.max((mu - lam) / lam)))
    dt = time.perf_counter() - t0
    verdict(
        "AC2 nesting mu_k <= lambda_k, k=1..20 (square, L-shape, r=16)",
        worst <= 1e-10 and dt <= 60,
        f"max (mu_k - lambda_k)/lambda_k = {worst:.3e} (<= 1e-10), {dt:.1f} s (<= 60 s)",
    )


@pytest.mark.parametrize("name", ["square", "rect"])
def test_ac03_symmetric_shift_2d(request, verdict, name):
    dom = request.getfixturevalue(name)
    t0 = time.perf_counter()
    rep = verify.check_inequality(dom, 32, 10, verify.THM2)
    dt = time.perf_counter() - t0
    margins = [r.margin for r in rep.rows]
    ok = len(margins) == 10 and min(margins) >= 0 and dt <= 300
    verdict(
        f"AC3 mu_(k+3) <= lambda_k, k=1..10 ({name}, r=32)",
        ok,
        f"min margin = {min(margins):.6g} (>= 0), margins = [{', '.join(f'{m:.4g}' for m in margins)}], "
        f"{dt:.1f} s (<= 300 s)",
    )


def test_ac04_baseline_lshape(verdict, lshape):
    t0 = time.perf_counter()
    rep = verify.check_inequality(lshape, 32, 8, verify.BASELINE)
    dt = time.perf_counter() - t0
    margins = [r.margin for r in rep.rows]
    ok = len(margins) == 8 and min(margins) > 0 and dt <= 300
    verdict(
        "AC4 mu_(k+2) < lambda_k, k=1..8 (L-shape, r=32)",
        ok,
        f"min margin = {min(margins):.6g} (> 0), {dt:.1f} s (<= 300 s)",
    )


def test_ac05_cube(verdict, cube):
    t0 = time.perf_counter()
    r1 = verify.check_inequality(cube, 6, 4, verify.THM1)
    r2 = verify.check_inequality(cube, 6, 4, verify.THM2)
    dt = time.perf_counter() - t0
    m1 = min(r.margin for r in r1.rows)
    m2 = min(r.margin for r in r2.rows)
    ok = len(r1.rows) == len(r2.rows) == 4 and m1 >= 0 and m2 >= 0 and dt <= 600
    verdict(
        "AC5 cube r=6, k=1..4: mu_(k+3) <= lambda_k and mu_(k+4) <= lambda_k",
        ok,
        f"min margins {m1:.6g}, {m2:.6g} (>= 0), {dt:.1f} s (<= 600 s)",
    )


def test_ac06_borsuk_construction(verdict, square, lshape, cube):
    t0 = time.perf_counter()
    worst_freq, worst_orth, axes_err = 0.0, 0.0, None
    for dom, r in ((square, 16), (lshape, 16), (cube, 4)):
        _, spec = _clamped(dom, r, 1)
        lam = float(spec.eigenvalues[0])
        fam = borsuk_family(dom, lam)
        worst_freq = max(worst_freq, float(np.max(fam.frequency_errors())))
        worst_orth = max(worst_orth, fam.max_relative_residual())
        if dom is square:
            axes_err = float(np.max(np.abs(np.abs(fam.frequencies) - lam**0.25 * np.eye(2)))) / lam**0.25
    dt = time.perf_counter() - t0
    ok = worst_freq <= 1e-12 and worst_orth <= 1e-10 and axes_err <= 1e-10 and dt <= 30
    verdict(
        "AC6 odd-map construction at lambda_1 (square, L-shape, cube)",
        ok,
        f"max ||w|^4 - lambda|/lambda = {worst_freq:.2e} (<= 1e-12), max orthogonality = {worst_orth:.2e} "
        f"(<= 1e-10), square axes deviation = {axes_err:.2e}, {dt:.1f} s (<= 30 s)",
    )


def test_ac07_trial_identities(verdict, square, rect, lshape, cube):
    t0 = time.perf_counter()
    pw, hs = 0.0, 0.0
    for dom, r in ((square, 8), (rect, 8), (lshape, 8), (cube, 3)):
        _, spec = _clamped(dom, r, 1)
        lam = float(spec.eigenvalues[0])
        fams = [borsuk_family(dom, lam)]
        frame = detect_symmetry_frame(dom)
        if len({rm.axis for rm in frame}) >= dom.dimension - 1:
            fams.append(symmetric_family(dom, lam, frame))
        for fam in fams:
            rep = check_identities(fam, dom, n_points=100, n_combinations=20)
            pw = max(pw, rep.max_pointwise)
            hs = max(hs, rep.max_hessian)
    dt = time.perf_counter() - t0
    verdict(
        "AC7 trial identities (both families, all domains)",
        pw <= 1e-12 and hs <= 1e-9 and dt <= 30,
        f"max pointwise |D2 v - lambda v|/(lambda |v|_inf) = {pw:.2e} (<= 1e-12), "
        f"max Hessian identity = {hs:.2e} (<= 1e-9), {dt:.1f} s (<= 30 s)",
    )


# rounding-level sup-Rayleigh excesses are compared up to this floor (see README)
EXCESS_FLOOR = 1e-11


def test_ac08_proof_replay(verdict, square):
    t0 = time.perf_counter()
    frame = detect_symmetry_frame(square)
    excess = {}
    ranks_ok, sup_ok = True, True
    for r in (8, 16, 32):
        mesh, spec = _clamped(square, r, 5)
        for k in (1, 2, 5):
            for theorem, extra in ((verify.THM1, 0), (verify.THM2, 1)):
                rp = verify.replay_trial_subspace(square, mesh, spec, k, theorem, frame=frame)
                excess[(theorem, k, r)] = rp.excess
                if r == 32:
                    ranks_ok &= rp.gram_rank == rp.subspace_dim == k + 2 + extra
                    sup_ok &= rp.sup_rayleigh <= rp.lam * (1 + 1e-5)
    decreasing = all(
        excess[(t, k, b)] <= max(excess[(t, k, a)], EXCESS_FLOOR)
        for t in (verify.THM1, verify.THM2) for k in (1, 2, 5) for a, b in ((8, 16), (16, 32))
    )
    dt = time.perf_counter() - t0
    table = "; ".join(
        f"{t} k={k}: " + ", ".join(f"{excess[(t, k, r)]:.1e}" for r in (8, 16, 32))
        for t in (verify.THM1, verify.THM2) for k in (1, 2, 5)
    )
    verdict(
        "AC8 trial-subspace replay (square, k=1,2,5)",
        ranks_ok and sup_ok and decreasing and dt <= 600,
        f"Gram ranks k+d / k+d+1 at r=32: {ranks_ok}; sup <= lambda_k(1+1e-5): {sup_ok}; "
        f"excess over r=8,16,32 [{table}] non-increasing above {EXCESS_FLOOR:g}: {decreasing}; {dt:.1f} s (<= 600 s)",
    )


def test_ac09_convergence(verdict, square):
    t0 = time.perf_counter()
    rec = verify.convergence_study(square, DIRICHLET, 1, (8, 16, 32))
    dt = time.perf_counter() - t0
    sig4 = [float(f"{x:.4g}") for x in rec.limits[-2:]]
    ok = rec.order >= 3.5 and sig4[0] == sig4[1] and rec.limit_drift <= 5e-5 and rec.monotone(1e-9) and dt <= 300
    verdict(
        "AC9 clamped lambda_1 on square, r=8,16,32",
        ok,
        f"order = {rec.order:.3f} (>= 3.5), limits = {rec.limits[-2]:.10g}, {rec.limits[-1]:.10g} "
        f"(drift {rec.limit_drift:.1e}, 4 digits {sig4[1]:g}), non-increasing: {rec.monotone(1e-9)}, {dt:.1f} s",
    )


def test_ac10_determinism(verdict, domains_dir, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "biharm", "inequality", "--domain", str(domains_dir / "square.dom"),
             "--theorem", "thm2", "--kmax", "10", "--refine", "16", "--csv", str(path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(path.read_bytes())
    verdict(
        "AC10 repeated CLI runs give byte-identical CSV",
        outs[0] == outs[1] and len(outs[0].splitlines()) == 11,
        f"{len(outs[0])} bytes, identical: {outs[0] == outs[1]}",
    )
