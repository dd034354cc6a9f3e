"""Analytic trig trial families and hybrid FEM/trig Rayleigh-Ritz checks.

Two families are built here:

* ``borsuk``: ``d`` plane waves ``sin(w_l . x)`` with ``|w_l|^4 = lam``,
  made pairwise L2-orthogonal by locating zeros of odd maps on the unit
  sphere (one new direction per step);
* ``symmetric``: ``sin(w x_a), cos(w x_a), sin(w x_l)`` for the remaining
  axes ``l``, with ``w = lam**0.25``; the required orthogonality follows
  from reflection symmetry of the domain in every axis ``l != a``.

Trig members are never interpolated.  All inner products involving them
are per-cell Gauss sums with the trig factor evaluated exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, least_squares

from .domain import QuadratureRule, RectilinearDomain, ReflectionMap, cell_quadrature
from .eigensolve import SpectrumResult, gram_rank
from .errors import InputError, MeshMismatch, NoZeroFound, NotOdd, RankDeficientSubspace, SymmetryMissing
from .fem import (
    DIRICHLET,
    MeshDofSystem,
    assemble_hessian,
    assemble_mass,
    field_at_quadrature,
    hessian_pairs,
    quadrature_points,
)

__all__ = [
    "BORSUK",
    "SYMMETRIC",
    "TrialFamily",
    "HybridVector",
    "IdentityReport",
    "trig_values",
    "find_odd_zero",
    "borsuk_family",
    "symmetric_family",
    "check_identities",
    "restricted_pencil",
    "hybrid_gram",
    "subspace_sup_rayleigh",
    "cross_term_residual",
]

BORSUK = "borsuk_sine"
SYMMETRIC = "symmetric_trig"

_PHASE_SHIFT = {"sin": 0, "cos": 1}
ZERO_TOL = 1e-11


def trig_values(freqs, phases, center, points, orders=None) -> np.ndarray:
    """Derivatives of ``sin/cos(w_l . (x - center))`` at ``points``.

    ``orders`` gives the per-axis derivative order (default: values).
    Returns an ``(npoints, nmembers)`` array.
    """
    freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
    points = np.asarray(points, dtype=float)
    d = freqs.shape[1]
    orders = (0,) * d if orders is None else tuple(orders)
    phi = (points - np.asarray(center, dtype=float)) @ freqs.T
    out = np.empty_like(phi)
    n = sum(orders)
    for l, ph in enumerate(phases):
        factor = np.prod(freqs[l] ** np.array(orders))
        q = (n + _PHASE_SHIFT[ph]) % 4
        base = np.sin(phi[:, l]) if q % 2 == 0 else np.cos(phi[:, l])
        out[:, l] = factor * (base if q < 2 else -base)
    return out


@dataclass
class TrialFamily:
    """Analytic members ``sin/cos(frequencies[l] . (x - center))``."""

    kind: str
    lam: float
    frequencies: np.ndarray  # (m, d)
    phases: tuple[str, ...]
    center: np.ndarray
    required_pairs: list[tuple[int, int]]
    ortho_residuals: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    distinguished_axis: int | None = None

    @property
    def size(self) -> int:
        return len(self.phases)

    @property
    def dimension(self) -> int:
        return self.frequencies.shape[1]

    @property
    def omega_max(self) -> float:
        return float(np.max(np.linalg.norm(self.frequencies, axis=1))) if self.size else 0.0

    def values(self, points, orders=None) -> np.ndarray:
        return trig_values(self.frequencies, self.phases, self.center, points, orders)

    def relative_residuals(self) -> dict[tuple[int, int], float]:
        """``|(v_i, v_j)| / (|v_i| |v_j|)`` for every required pair."""
        return {
            (i, j): float(self.ortho_residuals[i, j] / (self.norms[i] * self.norms[j]))
            for i, j in self.required_pairs
        }

    def max_relative_residual(self) -> float:
        rel = self.relative_residuals()
        return max(rel.values()) if rel else 0.0

    def frequency_errors(self) -> np.ndarray:
        """``| |w_l|^4 - lam | / lam`` per member."""
        w2 = np.sum(self.frequencies**2, axis=1)
        return np.abs(w2 * w2 - self.lam) / self.lam

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda": float(self.lam),
            "frequencies": [[float(v) for v in w] for w in self.frequencies],
            "phases": list(self.phases),
            "center": [float(v) for v in self.center],
            "distinguished_axis": self.distinguished_axis,
            "required_pairs": [list(p) for p in self.required_pairs],
            "norms": [float(v) for v in self.norms],
            "ortho_residuals": [[float(v) for v in row] for row in self.ortho_residuals],
            "max_relative_residual": self.max_relative_residual(),
        }


@dataclass
class HybridVector:
    """``u + sum_l c_l v_l`` with ``u`` a FEM field and ``v_l`` trig members."""

    fem_part: np.ndarray
    trig_part: np.ndarray

    def is_zero(self) -> bool:
        return not (np.any(self.fem_part) or np.any(self.trig_part))


def _domain_quadrature(dom: RectilinearDomain, rule: QuadratureRule):
    lower = np.asarray(dom.offset) + dom.cell_size * dom.cell_array
    pts, w = cell_quadrature(lower, dom.cell_size, rule)
    npts = pts.shape[1]
    return pts.reshape(-1, dom.dimension), np.tile(w, len(lower)), npts


def _family_rules(omega: float, h: float):
    """Working rule and an independent finer rule for residual checks."""
    work = QuadratureRule.for_frequency(omega, h, points_per_axis=12)
    check = QuadratureRule(points_per_axis=14, subdivisions=work.subdivisions + 1)
    return work, check


def _finalize(fam: TrialFamily, dom: RectilinearDomain) -> TrialFamily:
    _, check = _family_rules(fam.omega_max, dom.cell_size)
    pts, w, _ = _domain_quadrature(dom, check)
    v = fam.values(pts)
    g = (v * w[:, None]).T @ v
    fam.norms = np.sqrt(np.diag(g))
    fam.ortho_residuals = np.abs(g)
    return fam


# --- zeros of odd maps on the sphere -------------------------------------------


def _circle(a, b):
    return lambda t: np.cos(t) * a + np.sin(t) * b


def _spot_check_odd(g, dim, rng, n=100, atol=1e-12):
    for _ in range(n):
        th = rng.standard_normal(dim)
        th /= np.linalg.norm(th)
        gp, gm = np.atleast_1d(g(th)), np.atleast_1d(g(-th))
        if np.max(np.abs(gp + gm)) > atol * max(1.0, float(np.max(np.abs(gp)))):
            raise NotOdd(f"g(-theta) != -g(theta) at theta={th}")


def _bisect_circle(g1, a, b, tol, grid):
    """Smallest-angle zero of a scalar odd map restricted to a great circle."""
    curve = _circle(a, b)
    ts = np.linspace(0.0, np.pi, grid + 1)
    vals = np.array([g1(curve(t)) for t in ts])
    if vals[0] == 0.0:
        return curve(0.0)
    for i in range(1, len(ts)):
        if vals[i] == 0.0:
            return curve(ts[i])
        if np.sign(vals[i]) != np.sign(vals[i - 1]):
            t = brentq(lambda s: g1(curve(s)), ts[i - 1], ts[i], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            th = curve(t)
            if abs(g1(th)) > tol:
                raise NoZeroFound("bisection stalled above tolerance", abs(g1(th)))
            return th
    raise NoZeroFound("no sign change on the half circle; map is not odd", float(np.min(np.abs(vals))))


def _sphere_starts():
    dirs = [np.array(p, dtype=float) for p in itertools.product((1, 0, -1), repeat=3) if any(p)]
    dirs.sort(key=lambda p: int(np.count_nonzero(p)))
    return [p / np.linalg.norm(p) for p in dirs]


def _descend(g, start, tol, max_iter):
    """Least-squares descent for ``g = 0`` in the tangent plane at ``start``."""
    _, _, vt = np.linalg.svd(start[None, :])
    t1, t2 = vt[1], vt[2]

    def point(u):
        p = start + u[0] * t1 + u[1] * t2
        return p / np.linalg.norm(p)

    sol = least_squares(
        lambda u: np.asarray(g(point(u)), dtype=float),
        np.zeros(2),
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=max_iter * 3,
    )
    th = point(sol.x)
    return th, float(np.max(np.abs(g(th))))


def find_odd_zero(
    g: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = ZERO_TOL,
    *,
    circle: tuple[np.ndarray, np.ndarray] | None = None,
    grid: int = 720,
    max_iter: int = 200,
    check_odd: bool = True,
    rng_seed: int = 0,
) -> np.ndarray:
    """Unit vector ``theta`` with ``max|g(theta)| <= tol`` for an odd ``g``.

    ``g`` maps a unit vector in R^dim to its active components (one for
    dim=2, one or two for dim=3).  One component: sign-change scan over a
    half great circle (``circle`` = orthonormal pair, default e1, e2) and
    bisection, returning the smallest-angle zero.  Two components in 3D:
    Levenberg-Marquardt from 26 grid starts; the first start that reaches
    ``tol`` wins.
    """
    if dim not in (2, 3):
        raise ValueError("only the circle and the 2-sphere are supported")
    rng = np.random.default_rng(rng_seed)
    if check_odd:
        _spot_check_odd(g, dim, rng)
    m = np.atleast_1d(g(np.eye(dim)[0])).size
    if m > dim - 1:
        raise ValueError(f"{m} active components on S^{dim - 1}; at most {dim - 1} allowed")
    if m == 1:
        a, b = circle if circle is not None else (np.eye(dim)[0], np.eye(dim)[1])
        return _bisect_circle(lambda th: float(np.atleast_1d(g(th))[0]), a, b, tol, grid)
    best = np.inf
    for start in _sphere_starts():
        th, res = _descend(g, start, tol, max_iter)
        if res <= tol:
            return th
        best = min(best, res)
    raise NoZeroFound(f"descent stalled from all starts (best residual {best:.3e})", best)


# --- family constructors ---------------------------------------------------------


def borsuk_family(
    dom: RectilinearDomain,
    lam: float,
    seed: Sequence[float] | None = None,
    tol: float = ZERO_TOL,
) -> TrialFamily:
    """``d`` mutually L2-orthogonal plane waves with ``|w|^4 = lam``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    d = dom.dimension
    omega = lam**0.25
    seed = np.eye(d)[0] if seed is None else np.asarray(seed, dtype=float)
    if seed.shape != (d,) or not np.any(seed):
        raise InputError("seed must be a nonzero vector of the domain dimension")
    thetas = [seed / np.linalg.norm(seed)]
    work, _ = _family_rules(omega, dom.cell_size)
    pts, w, _ = _domain_quadrature(dom, work)

    for l in range(1, d):
        prev = np.sin(omega * (pts @ np.array(thetas).T))  # (N, l)
        weighted = prev * w[:, None]
        prev_norm = np.sqrt(np.sum(weighted * prev, axis=0))

        def g(th, weighted=weighted, prev_norm=prev_norm):
            s = np.sin(omega * (pts @ th))
            return (weighted.T @ s) / (prev_norm * np.sqrt(w @ (s * s)))

        if l == 1:
            a = thetas[0]
            b = np.eye(d)[1] if abs(a[1]) < 0.9 else np.eye(d)[0]
            b = b - (b @ a) * a
            th = find_odd_zero(g, d, tol, circle=(a, b / np.linalg.norm(b)))
        else:
            th = find_odd_zero(g, d, tol)
        thetas.append(th / np.linalg.norm(th))

    freqs = omega * np.array(thetas)
    fam = TrialFamily(
        kind=BORSUK,
        lam=float(lam),
        frequencies=freqs,
        phases=("sin",) * d,
        center=np.zeros(d),
        required_pairs=[(i, j) for i in range(d) for j in range(i + 1, d)],
    )
    return _finalize(fam, dom)


def symmetric_family(
    dom: RectilinearDomain, lam: float, frame: Sequence[ReflectionMap]
) -> TrialFamily:
    """``d + 1`` members built on reflection planes of the domain.

    The distinguished axis is the one without a plane in ``frame`` (axis 0
    when every axis is symmetric).  Coordinates along symmetric axes are
    measured from the plane; along the distinguished axis from the
    bounding-box centre.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    d = dom.dimension
    planes = {}
    for rm in frame:
        planes.setdefault(rm.axis, rm.plane_offset)
    missing = [ax for ax in range(d) if ax not in planes]
    if len(missing) > 1:
        raise SymmetryMissing(
            f"need reflection planes for {d - 1} axes, found {sorted(planes)}"
        )
    a = missing[0] if missing else 0
    others = [ax for ax in range(d) if ax != a]
    center = np.array(dom.center, dtype=float)
    for ax in others:
        center[ax] = planes[ax]
    if a in planes:
        center[a] = planes[a]
    omega = lam**0.25
    e = np.eye(d)
    freqs = [omega * e[a], omega * e[a]] + [omega * e[ax] for ax in others]
    phases = ("sin", "cos") + ("sin",) * len(others)
    m = d + 1
    required = [(i, j) for i in range(m) for j in range(i + 1, m) if (i, j) != (0, 1)]
    fam = TrialFamily(
        kind=SYMMETRIC,
        lam=float(lam),
        frequencies=np.array(freqs),
        phases=phases,
        center=center,
        required_pairs=required,
        distinguished_axis=a,
    )
    return _finalize(fam, dom)


# --- identity checks ------------------------------------------------------------


@dataclass
class IdentityReport:
    pointwise: np.ndarray  # per member: max |D2 v - lam v| / (lam max|v|)
    hessian: np.ndarray  # per combination: relative Hessian-identity residual
    combinations: np.ndarray

    @property
    def max_pointwise(self) -> float:
        return float(np.max(self.pointwise)) if self.pointwise.size else 0.0

    @property
    def max_hessian(self) -> float:
        return float(np.max(self.hessian)) if self.hessian.size else 0.0

    def to_dict(self) -> dict:
        return {
            "pointwise": [float(v) for v in self.pointwise],
            "hessian": [float(v) for v in self.hessian],
            "max_pointwise": self.max_pointwise,
            "max_hessian": self.max_hessian,
        }


def _random_points(dom: RectilinearDomain, n: int, rng) -> np.ndarray:
    cells = dom.cell_array[rng.integers(0, len(dom.cells), size=n)]
    return np.asarray(dom.offset) + dom.cell_size * (cells + rng.random((n, dom.dimension)))


def _bilaplacian(fam: TrialFamily, pts) -> np.ndarray:
    d = fam.dimension
    out = np.zeros((pts.shape[0], fam.size))
    for i, j in itertools.product(range(d), repeat=2):
        orders = [0] * d
        orders[i] += 2
        orders[j] += 2
        out += fam.values(pts, orders)
    return out


def check_identities(
    fam: TrialFamily,
    dom: RectilinearDomain,
    lam: float | None = None,
    n_points: int = 100,
    n_combinations: int = 20,
    rng_seed: int = 0,
) -> IdentityReport:
    """Residuals of ``D^2 v = lam v`` and of the Hessian-form identity."""
    lam = fam.lam if lam is None else lam
    rng = np.random.default_rng(rng_seed)
    pts = _random_points(dom, n_points, rng)
    v = fam.values(pts)
    bil = _bilaplacian(fam, pts)
    sup = np.maximum(np.max(np.abs(v), axis=0), np.finfo(float).tiny)
    pointwise = np.max(np.abs(bil - lam * v), axis=0) / (lam * sup)

    work, _ = _family_rules(fam.omega_max, dom.cell_size)
    qp, w, _ = _domain_quadrature(dom, work)
    vals = fam.values(qp)
    second = [fam.values(qp, orders) for orders in hessian_pairs(fam.dimension)]
    combos = rng.standard_normal((n_combinations, fam.size))
    combos /= np.linalg.norm(combos, axis=1, keepdims=True)
    hess = np.empty(n_combinations)
    for n, c in enumerate(combos):
        energy = sum(w @ (s @ c) ** 2 for s in second)
        mass = w @ (vals @ c) ** 2
        hess[n] = abs(energy - lam * mass) / (lam * mass)
    return IdentityReport(pointwise=pointwise, hessian=hess, combinations=combos)


# --- hybrid FEM + trig subspaces ------------------------------------------------------


def _mesh_rule(mesh: MeshDofSystem, fam: TrialFamily | None) -> QuadratureRule:
    omega = fam.omega_max if fam is not None and fam.size else 0.0
    return QuadratureRule.for_frequency(omega, mesh.h, points_per_axis=12)


def restricted_pencil(
    mesh: MeshDofSystem,
    fem_vectors: np.ndarray,
    fam: TrialFamily | None = None,
    rule: QuadratureRule | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Hessian form ``H`` and L2 Gram ``G`` on span(FEM columns, trig members).

    FEM-FEM blocks come from the assembled matrices; every block involving a
    trig member is a per-cell Gauss sum with analytic trig derivatives.
    """
    u = np.asarray(fem_vectors, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] != mesh.n_free:
        raise MeshMismatch(f"vectors have {u.shape[0]} rows, mesh has {mesh.n_free} free dofs")
    A = assemble_hessian(mesh)
    M = assemble_mass(mesh)
    huu = u.T @ (A @ u)
    guu = u.T @ (M @ u)
    if fam is None or fam.size == 0:
        return 0.5 * (huu + huu.T), 0.5 * (guu + guu.T)

    rule = rule or _mesh_rule(mesh, fam)
    pts, w = quadrature_points(mesh, rule)
    flat = pts.reshape(-1, mesh.dimension)
    nc, nq = pts.shape[:2]
    k, m = u.shape[1], fam.size

    def trig(orders=None):
        return fam.values(flat, orders).reshape(nc, nq, m)

    def fem(orders):
        return field_at_quadrature(mesh, u, orders, rule)  # (nc, nq, k)

    v0 = trig()
    guv = np.einsum("q,cqk,cqm->km", w, fem((0,) * mesh.dimension), v0)
    gvv = np.einsum("q,cqa,cqb->ab", w, v0, v0)
    huv = np.zeros((k, m))
    hvv = np.zeros((m, m))
    for orders in hessian_pairs(mesh.dimension):
        vt = trig(orders)
        huv += np.einsum("q,cqk,cqm->km", w, fem(orders), vt)
        hvv += np.einsum("q,cqa,cqb->ab", w, vt, vt)
    H = np.block([[huu, huv], [huv.T, hvv]])
    G = np.block([[guu, guv], [guv.T, gvv]])
    return 0.5 * (H + H.T), 0.5 * (G + G.T)


def hybrid_gram(
    dirichlet_vectors: np.ndarray, fam: TrialFamily, mesh: MeshDofSystem
) -> np.ndarray:
    """L2 Gram matrix of Dirichlet FEM vectors followed by the trig members."""
    if mesh.bc != DIRICHLET:
        raise MeshMismatch("hybrid_gram expects a Dirichlet mesh")
    _, G = restricted_pencil(mesh, dirichlet_vectors, fam)
    return G


def hybrid_rayleigh(vec: HybridVector, H: np.ndarray, G: np.ndarray) -> float:
    """Rayleigh quotient of one hybrid vector in a restricted pencil."""
    c = np.concatenate([np.atleast_1d(vec.fem_part), np.atleast_1d(vec.trig_part)])
    return float(c @ H @ c) / float(c @ G @ c)


def subspace_sup_rayleigh(
    dirichlet_spectrum: SpectrumResult | np.ndarray,
    fam: TrialFamily | None,
    mesh: MeshDofSystem,
    k: int | None = None,
    rank_tol: float = 1e-8,
) -> float:
    """Largest Rayleigh quotient of the Hessian form over the hybrid span.

    Uses the first ``k`` eigenvectors of ``dirichlet_spectrum`` (or the
    columns of a plain array) together with the family members.
    """
    if isinstance(dirichlet_spectrum, SpectrumResult):
        vecs = dirichlet_spectrum.eigenvectors
        if k is not None:
            if k > vecs.shape[1]:
                raise ValueError(f"spectrum has {vecs.shape[1]} pairs, need {k}")
            vecs = vecs[:, :k]
    else:
        vecs = np.asarray(dirichlet_spectrum, dtype=float)
        if vecs.ndim == 1:
            vecs = vecs[:, None]
        if k is not None:
            vecs = vecs[:, :k]
    H, G = restricted_pencil(mesh, vecs, fam)
    need = G.shape[0]
    rank = gram_rank(None, G, rank_tol)
    if rank < need:
        raise RankDeficientSubspace(f"hybrid Gram rank {rank} < {need}")
    return float(sla.eigh(H, G, eigvals_only=True)[-1])


def cross_term_residual(
    mesh: MeshDofSystem, u_vectors: np.ndarray, fam: TrialFamily
) -> float:
    """Max of ``|h(u, v_l) - lam (u, v_l)| / (lam |u| |v_l|)`` over pairs.

    Both forms are evaluated directly; agreement reflects double integration
    by parts for ``u`` vanishing with its gradient on the boundary.
    """
    H, G = restricted_pencil(mesh, u_vectors, fam)
    k = np.asarray(u_vectors).shape[1] if np.ndim(u_vectors) > 1 else 1
    huv = H[:k, k:]
    guv = G[:k, k:]
    nu = np.sqrt(np.diag(G)[:k])
    nv = np.sqrt(np.diag(G)[k:])
    return float(np.max(np.abs(huv - fam.lam * guv) / (fam.lam * np.outer(nu, nv))))
