"""Bogner-Fox-Schmit (tensor cubic Hermite) elements on refined lattice meshes.

Every refined cell has edge ``h = h0 / r``; the element matrices are
therefore identical for all cells and are built once from 1D Gauss
integrals and Kronecker products, then scattered in cell order.

Local numbering.  A 1D cubic Hermite function on one edge is indexed by
``a = 2 * end + deriv`` (``end`` in {0, 1}, ``deriv`` in {0, 1}).  Tensor
local indices flatten ``(a_0, ..., a_{d-1})`` in C order, matching
``np.kron``.  Nodal dofs are ordered by :data:`DOF_ALPHAS`: value, first
derivatives, mixed second derivatives, then (d=3) the triple mixed one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .domain import QuadratureRule, RectilinearDomain, cell_quadrature
from .errors import BadMultiIndex, RefinementOverflow

__all__ = [
    "DIRICHLET",
    "NEUMANN",
    "DOF_ALPHAS",
    "DEFAULT_DOF_CAP",
    "MeshDofSystem",
    "build_mesh",
    "hermite_1d",
    "shape_eval",
    "element_matrices",
    "assemble_hessian",
    "assemble_mass",
    "interpolate",
    "evaluate",
    "field_at_quadrature",
    "hessian_pairs",
    "export_matrix",
]

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
DEFAULT_DOF_CAP = 200_000

DOF_ALPHAS = {
    2: [(0, 0), (1, 0), (0, 1), (1, 1)],
    3: [
        (0, 0, 0),
        (1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 0), (1, 0, 1), (0, 1, 1),
        (1, 1, 1),
    ],
}

# Reference cubic Hermite polynomials on [0, 1], coefficients low->high.
_HERMITE_COEFFS = np.array(
    [
        [1.0, 0.0, -3.0, 2.0],  # value at 0
        [0.0, 1.0, -2.0, 1.0],  # slope at 0
        [0.0, 0.0, 3.0, -2.0],  # value at 1
        [0.0, 0.0, -1.0, 1.0],  # slope at 1
    ]
)


def hermite_1d(xi: np.ndarray, order: int, h: float) -> np.ndarray:
    """Values ``(len(xi), 4)`` of the ``order``-th derivative of the 1D basis.

    ``xi`` is the reference coordinate in ``[0, 1]``; results are physical
    derivatives on an edge of length ``h``.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((xi.size, 4))
    for a in range(4):
        c = np.polynomial.polynomial.polyder(_HERMITE_COEFFS[a], order) if order else _HERMITE_COEFFS[a]
        out[:, a] = np.polynomial.polynomial.polyval(xi.ravel(), c)
    # slope dofs carry a factor h; each physical derivative a factor 1/h
    scale = np.array([1.0, h, 1.0, h]) / h**order
    return out * scale


def hessian_pairs(dim: int):
    """Per-axis derivative orders for every ordered pair ``(i, j)``."""
    pairs = []
    for i, j in itertools.product(range(dim), repeat=2):
        orders = [0] * dim
        orders[i] += 1
        orders[j] += 1
        pairs.append(tuple(orders))
    return pairs


def _local_layout(dim: int):
    """For each tensor local index: corner offset and nodal dof slot."""
    slots = {a: i for i, a in enumerate(DOF_ALPHAS[dim])}
    corners, dof_slots = [], []
    for multi in itertools.product(range(4), repeat=dim):
        corners.append(tuple(a // 2 for a in multi))
        dof_slots.append(slots[tuple(a % 2 for a in multi)])
    return np.array(corners, dtype=np.int64), np.array(dof_slots, dtype=np.int64)


def shape_eval(cell_lower, h: float, local_dof: int, point, derivative) -> float:
    """Evaluate one local basis function (or a derivative) of a cell.

    ``cell_lower`` is the lower corner, ``h`` the edge length, ``derivative``
    a multi-index with total order at most 2.
    """
    cell_lower = np.asarray(cell_lower, dtype=float)
    dim = cell_lower.size
    derivative = tuple(int(m) for m in derivative)
    if len(derivative) != dim or min(derivative) < 0 or sum(derivative) > 2:
        raise BadMultiIndex(f"unsupported derivative multi-index {derivative}")
    if not 0 <= local_dof < 4**dim:
        raise BadMultiIndex(f"local dof {local_dof} outside 0..{4**dim - 1}")
    multi = np.unravel_index(local_dof, (4,) * dim)
    xi = (np.asarray(point, dtype=float) - cell_lower) / h
    val = 1.0
    for ax in range(dim):
        val *= hermite_1d(np.array([xi[ax]]), derivative[ax], h)[0, multi[ax]]
    return float(val)


@dataclass(frozen=True, eq=False)
class MeshDofSystem:
    """Refined lattice mesh with the global Hermite dof map.

    Integer lattice coordinates are in units of the refined edge ``h``
    relative to ``domain.offset``.  ``cell_dofs[c, a]`` is the global dof of
    local index ``a`` on cell ``c``; global dof ``n * 2**d + s`` is slot ``s``
    of node ``n``.
    """

    domain: RectilinearDomain
    refinement: int
    bc: str
    cell_lattice: np.ndarray
    node_lattice: np.ndarray
    cell_dofs: np.ndarray
    boundary_nodes: np.ndarray
    dirichlet_mask: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def h(self) -> float:
        return self.domain.cell_size / self.refinement

    @property
    def dofs_per_node(self) -> int:
        return 2**self.dimension

    @property
    def n_dofs(self) -> int:
        return self.node_lattice.shape[0] * self.dofs_per_node

    @cached_property
    def free_dofs(self) -> np.ndarray:
        keep = np.ones(self.n_dofs, dtype=bool)
        keep[self.dirichlet_mask] = False
        return np.flatnonzero(keep)

    @property
    def n_free(self) -> int:
        return self.free_dofs.size

    @cached_property
    def full_to_free(self) -> np.ndarray:
        m = np.full(self.n_dofs, -1, dtype=np.int64)
        m[self.free_dofs] = np.arange(self.free_dofs.size)
        return m

    @cached_property
    def node_coords(self) -> np.ndarray:
        return np.asarray(self.domain.offset) + self.h * self.node_lattice

    @cached_property
    def cell_lower(self) -> np.ndarray:
        return np.asarray(self.domain.offset) + self.h * self.cell_lattice

    @property
    def mesh_id(self) -> str:
        lo, _ = self.domain.lattice_bounds
        return (
            f"d{self.dimension}-cells{len(self.domain.cells)}-h0{self.domain.cell_size:g}"
            f"-lo{tuple(int(v) for v in lo)}-r{self.refinement}-{self.bc}"
            f"-dofs{self.n_dofs}-free{self.n_free}"
        )

    def to_full(self, x_free: np.ndarray) -> np.ndarray:
        x_free = np.asarray(x_free)
        out = np.zeros((self.n_dofs,) + x_free.shape[1:], dtype=x_free.dtype)
        out[self.free_dofs] = x_free
        return out

    def to_free(self, x_full: np.ndarray) -> np.ndarray:
        return np.asarray(x_full)[self.free_dofs]


def build_mesh(
    dom: RectilinearDomain, refinement: int, bc: str, dof_cap: int = DEFAULT_DOF_CAP
) -> MeshDofSystem:
    """Refine every base cell into ``refinement**d`` cells and number dofs.

    For ``bc="dirichlet"`` every dof of every boundary node is masked.  On a
    boundary face each mixed derivative contains at least one tangential
    direction, so ``u = 0`` and ``grad u = 0`` along the face force all nodal
    Hermite dofs to vanish; re-entrant corners are covered by the same rule.
    """
    if bc not in (DIRICHLET, NEUMANN):
        raise ValueError(f"bc must be {DIRICHLET!r} or {NEUMANN!r}, got {bc!r}")
    r = int(refinement)
    if r < 1:
        raise ValueError("refinement must be >= 1")
    d = dom.dimension
    base = dom.cell_array
    # each cell owns its lower-corner node, so dofs >= cells * 2^d
    if len(base) * r**d * 2**d > dof_cap:
        raise RefinementOverflow(f"refinement {r} exceeds the dof cap {dof_cap}")
    sub = np.array(list(itertools.product(range(r), repeat=d)), dtype=np.int64)
    cells = (base[:, None, :] * r + sub[None, :, :]).reshape(-1, d)
    order = np.lexsort(cells.T[::-1])
    cells = cells[order]

    lo = cells.min(axis=0)
    shape = tuple(cells.max(axis=0) - lo + 2)  # node grid extent

    corners = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
    cell_nodes = cells[:, None, :] + corners[None, :, :]  # (nc, 2^d, d)
    touch = np.zeros(shape, dtype=np.int64)
    np.add.at(touch, tuple((cell_nodes - lo).reshape(-1, d).T), 1)
    present = touch > 0
    n_nodes = int(present.sum())
    if n_nodes * 2**d > dof_cap:
        raise RefinementOverflow(
            f"{n_nodes * 2**d} dofs at refinement {r} exceed the dof cap {dof_cap}"
        )
    node_id = np.full(shape, -1, dtype=np.int64)
    node_id[present] = np.arange(n_nodes)  # C order == lattice order
    node_lattice = np.argwhere(present) + lo
    # a node is interior iff all 2^d surrounding cells belong to the mesh
    boundary = present & (touch < 2**d)
    boundary_nodes = node_id[boundary]

    corner_of, slot_of = _local_layout(d)
    local_nodes = cells[:, None, :] + corner_of[None, :, :] - lo
    nid = node_id[tuple(local_nodes.reshape(-1, d).T)].reshape(len(cells), -1)
    cell_dofs = nid * 2**d + slot_of[None, :]

    if bc == DIRICHLET:
        mask = (boundary_nodes[:, None] * 2**d + np.arange(2**d)[None, :]).ravel()
        mask = np.sort(mask)
    else:
        mask = np.zeros(0, dtype=np.int64)
    return MeshDofSystem(
        domain=dom,
        refinement=r,
        bc=bc,
        cell_lattice=cells,
        node_lattice=node_lattice,
        cell_dofs=cell_dofs,
        boundary_nodes=boundary_nodes,
        dirichlet_mask=mask,
    )


def _gram_1d(h: float, order: int, npts: int = 4) -> np.ndarray:
    """``G[a, b] = int_0^h phi_a^(order) phi_b^(order)`` by Gauss quadrature."""
    xg, wg = np.polynomial.legendre.leggauss(npts)
    xi = 0.5 * (xg + 1.0)
    c = hermite_1d(xi, order, h) * np.sqrt(0.5 * wg * h)[:, None]
    g = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            # identical operand order for (a, b) and (b, a): exact symmetry
            g[a, b] = np.dot(c[:, min(a, b)], c[:, max(a, b)])
    return g


def element_matrices(dim: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Element Hessian-form stiffness and mass matrices, each ``(4^d, 4^d)``."""
    g = [_gram_1d(h, m) for m in range(3)]

    def kron_all(orders):
        out = g[orders[0]]
        for m in orders[1:]:
            out = np.kron(out, g[m])
        return out

    ke = np.zeros((4**dim, 4**dim))
    for orders in hessian_pairs(dim):
        ke = ke + kron_all(orders)
    me = kron_all((0,) * dim)
    return ke, me


def _scatter(mesh: MeshDofSystem, ke: np.ndarray) -> sp.csr_matrix:
    """Sum element blocks into a free-dof CSR matrix in cell order."""
    n = mesh.n_free
    loc = mesh.full_to_free[mesh.cell_dofs]  # (nc, nl)
    nl = loc.shape[1]
    rows = np.repeat(loc, nl, axis=1).ravel()
    cols = np.tile(loc, (1, nl)).ravel()
    data = np.tile(ke.ravel(), loc.shape[0])
    keep = (rows >= 0) & (cols >= 0)
    rows, cols, data = rows[keep], cols[keep], data[keep]
    key = rows * n + cols
    perm = np.argsort(key, kind="stable")
    key, data = key[perm], data[perm]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    sums = np.add.reduceat(data, starts) if data.size else data
    ukey = key[starts]
    return sp.csr_matrix((sums, (ukey // n, ukey % n)), shape=(n, n))


def assemble_hessian(mesh: MeshDofSystem) -> sp.csr_matrix:
    """Free-dof matrix of ``sum_ij int d_ij u d_ij w`` (masked dofs deleted)."""
    if "A" not in mesh._cache:
        ke, _ = element_matrices(mesh.dimension, mesh.h)
        mesh._cache["A"] = _scatter(mesh, ke)
    return mesh._cache["A"]


def assemble_mass(mesh: MeshDofSystem) -> sp.csr_matrix:
    """Free-dof L2 mass matrix."""
    if "M" not in mesh._cache:
        _, me = element_matrices(mesh.dimension, mesh.h)
        mesh._cache["M"] = _scatter(mesh, me)
    return mesh._cache["M"]


def interpolate(
    mesh: MeshDofSystem,
    f: Callable[[np.ndarray, tuple], np.ndarray],
    full: bool = False,
) -> np.ndarray:
    """Nodal Hermite interpolant of ``f``.

    ``f(points, alpha)`` returns the mixed derivative ``d^alpha f`` (alpha in
    {0, 1}^d) at an ``(n, d)`` array of points.  Returns free-dof
    coefficients unless ``full`` is set.
    """
    d = mesh.dimension
    x = np.empty(mesh.n_dofs)
    pts = mesh.node_coords
    for s, alpha in enumerate(DOF_ALPHAS[d]):
        x[s:: 2**d] = np.asarray(f(pts, alpha), dtype=float)
    return x if full else mesh.to_free(x)


def _basis_tables(mesh: MeshDofSystem, rule: QuadratureRule, orders):
    """Tensor basis tables ``(nq, 4^d)`` for per-axis derivative ``orders``."""
    key = ("tab", rule.points_per_axis, rule.subdivisions, tuple(orders))
    if key not in mesh._cache:
        x1, _ = rule.nodes_1d()
        d = mesh.dimension
        tabs = [hermite_1d(x1, m, mesh.h) for m in orders]
        # outer product over axes with C ordering of both nodes and dofs
        out = tabs[0]
        for t in tabs[1:]:
            out = np.einsum("qa,pb->qpab", out, t).reshape(out.shape[0] * t.shape[0], -1)
        assert out.shape == (x1.size**d, 4**d)
        mesh._cache[key] = out
    return mesh._cache[key]


def field_at_quadrature(
    mesh: MeshDofSystem,
    coeffs: np.ndarray,
    orders,
    rule: QuadratureRule,
) -> np.ndarray:
    """Derivative ``orders`` of FEM fields at every cell's quadrature nodes.

    ``coeffs`` holds free-dof coefficients, shape ``(n_free,)`` or
    ``(n_free, m)``; the result is ``(ncells, nq)`` or ``(ncells, nq, m)``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    single = coeffs.ndim == 1
    c = coeffs[:, None] if single else coeffs
    full = mesh.to_full(c)
    local = full[mesh.cell_dofs]  # (nc, nl, m)
    tab = _basis_tables(mesh, rule, orders)
    vals = np.einsum("qa,cam->cqm", tab, local)
    return vals[..., 0] if single else vals


def quadrature_points(mesh: MeshDofSystem, rule: QuadratureRule):
    """Physical nodes ``(ncells, nq, d)`` and weights ``(nq,)`` on mesh cells."""
    return cell_quadrature(mesh.cell_lower, mesh.h, rule)


def evaluate(
    mesh: MeshDofSystem,
    coeffs: np.ndarray,
    points: np.ndarray,
    derivative=None,
    cells: np.ndarray | None = None,
) -> np.ndarray:
    """Evaluate a free-dof FEM field at arbitrary points.

    Points are located by lattice arithmetic unless ``cells`` names the
    cell index used for each point (needed to probe one-sided limits).
    """
    d = mesh.dimension
    points = np.atleast_2d(np.asarray(points, dtype=float))
    derivative = (0,) * d if derivative is None else tuple(derivative)
    if cells is None:
        lookup = mesh._cache.get("cell_lookup")
        if lookup is None:
            lookup = {tuple(c): i for i, c in enumerate(mesh.cell_lattice)}
            mesh._cache["cell_lookup"] = lookup
        rel = (points - np.asarray(mesh.domain.offset)) / mesh.h
        cells = []
        for p in rel:
            base = np.floor(p).astype(np.int64)
            hit = None
            # points on faces may belong to a neighbouring cell only
            for shift in itertools.product((0, -1), repeat=d):
                cand = tuple(base + np.array(shift))
                if cand in lookup and np.all(p - cand <= 1 + 1e-12) and np.all(p - cand >= -1e-12):
                    hit = lookup[cand]
                    break
            if hit is None:
                raise ValueError(f"point {p * mesh.h} is outside the mesh")
            cells.append(hit)
        cells = np.array(cells)
    full = mesh.to_full(np.asarray(coeffs, dtype=float))
    out = np.empty(points.shape[0])
    for n, (p, c) in enumerate(zip(points, cells)):
        xi = (p - mesh.cell_lower[c]) / mesh.h
        tab = None
        for ax in range(d):
            t = hermite_1d(np.array([xi[ax]]), derivative[ax], mesh.h)[0]
            tab = t if tab is None else np.kron(tab, t)
        out[n] = float(tab @ full[mesh.cell_dofs[c]])
    return out


def export_matrix(path, matrix: sp.spmatrix, comment: str = "") -> None:
    """Write a matrix in Matrix Market coordinate format (symmetric storage)."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment, symmetry="symmetric")
