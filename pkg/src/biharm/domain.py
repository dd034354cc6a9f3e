"""Rectilinear domains, axis-aligned reflections and tensor Gauss quadrature.

A domain is a finite, face-connected union of closed lattice boxes
``offset + cell_size * ([c_1, c_1 + 1] x ... x [c_d, c_d + 1])``.
Reflection planes and symmetry tests are exact set arithmetic on the
integer lattice.

Domain files are YAML documents::

    dimension: 2          # 2 or 3
    cell_size: 1.0        # h0 > 0
    offset: [-0.5, -0.5]  # optional, defaults to the zero vector
    cells:                # integer lattice coordinates of the boxes
      - [0, 0]

Unknown keys are rejected; every error carries the offending line.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from .errors import (
    BadDimension,
    DisconnectedDomain,
    DomainFileError,
    NonFiniteValue,
    OverlappingCells,
)

__all__ = [
    "RectilinearDomain",
    "ReflectionMap",
    "QuadratureRule",
    "build_domain",
    "load_domain",
    "dump_domain",
    "is_symmetric",
    "detect_symmetry_frame",
    "integrate",
    "cell_quadrature",
]


@dataclass(frozen=True)
class RectilinearDomain:
    """Union of axis-aligned lattice cells.

    Use :func:`build_domain` to construct validated instances; ``cells`` is
    stored sorted in lattice (lexicographic) order.
    """

    dimension: int
    cell_size: float
    cells: tuple[tuple[int, ...], ...]
    offset: tuple[float, ...]

    @cached_property
    def cell_array(self) -> np.ndarray:
        return np.array(self.cells, dtype=np.int64).reshape(-1, self.dimension)

    @cached_property
    def cell_set(self) -> frozenset:
        return frozenset(self.cells)

    @property
    def volume(self) -> float:
        return len(self.cells) * self.cell_size**self.dimension

    @property
    def lattice_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lowest lattice corner and one-past-highest corner per axis."""
        arr = self.cell_array
        return arr.min(axis=0), arr.max(axis=0) + 1

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.lattice_bounds
        off = np.asarray(self.offset)
        return off + self.cell_size * lo, off + self.cell_size * hi

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounding_box
        return 0.5 * (lo + hi)

    def descriptor(self) -> dict:
        return {
            "dimension": self.dimension,
            "cell_size": self.cell_size,
            "offset": list(self.offset),
            "cells": [list(c) for c in self.cells],
        }


@dataclass(frozen=True)
class ReflectionMap:
    """Reflection across the hyperplane ``{x[axis] = plane_offset}``.

    ``axis`` is zero-based.
    """

    axis: int
    plane_offset: float = 0.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = np.array(x, dtype=float, copy=True)
        y[..., self.axis] = 2.0 * self.plane_offset - y[..., self.axis]
        return y


@dataclass(frozen=True)
class QuadratureRule:
    """Composite tensor Gauss-Legendre rule on the unit reference cell.

    Each reference axis is split into ``subdivisions`` equal pieces carrying
    ``points_per_axis`` Gauss nodes each.  Nodes are in tensor (C) order with
    the last axis fastest.
    """

    points_per_axis: int = 12
    subdivisions: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        if self.subdivisions < 1:
            raise ValueError("subdivisions must be >= 1")

    def nodes_1d(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on ``[0, 1]`` (weights sum to 1)."""
        if "1d" not in self._cache:
            xg, wg = np.polynomial.legendre.leggauss(self.points_per_axis)
            s = self.subdivisions
            starts = np.arange(s) / s
            nodes = (starts[:, None] + (xg[None, :] + 1.0) / (2 * s)).ravel()
            weights = np.tile(wg / (2 * s), s)
            self._cache["1d"] = (nodes, weights)
        return self._cache["1d"]

    def reference(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Tensor nodes ``(nq, dim)`` and weights ``(nq,)`` on ``[0, 1]^dim``."""
        key = ("ref", dim)
        if key not in self._cache:
            x, w = self.nodes_1d()
            grids = np.meshgrid(*([x] * dim), indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=-1)
            wgrids = np.meshgrid(*([w] * dim), indexing="ij")
            wts = np.ones(pts.shape[0])
            for g in wgrids:
                wts = wts * g.ravel()
            self._cache[key] = (pts, wts)
        return self._cache[key]

    @classmethod
    def for_frequency(cls, omega: float, cell_size: float, points_per_axis: int = 12):
        """Rule resolving products of trig factors with frequency ``omega``.

        Keeps the phase swept per sub-interval at or below 2 radians, where
        12-point Gauss is accurate to rounding for products of two such factors.
        """
        s = max(1, int(np.ceil(omega * cell_size / 2.0)))
        return cls(points_per_axis=points_per_axis, subdivisions=s)


def build_domain(dimension, cell_size, cells, offset=None) -> RectilinearDomain:
    """Validate a lattice description and return a :class:`RectilinearDomain`."""
    if dimension not in (2, 3):
        raise BadDimension(f"dimension must be 2 or 3, got {dimension!r}")
    cell_size = float(cell_size)
    if not np.isfinite(cell_size) or cell_size <= 0:
        raise BadDimension(f"cell_size must be positive, got {cell_size!r}")
    if offset is None:
        offset = (0.0,) * dimension
    offset = tuple(float(o) for o in offset)
    if len(offset) != dimension:
        raise BadDimension(f"offset has {len(offset)} entries, expected {dimension}")

    tuples = []
    for c in cells:
        t = tuple(int(v) for v in c)
        if len(t) != dimension or any(int(v) != v for v in c):
            raise BadDimension(f"cell {c!r} is not an integer {dimension}-tuple")
        tuples.append(t)
    if not tuples:
        raise BadDimension("domain needs at least one cell")
    if len(set(tuples)) != len(tuples):
        seen, dup = set(), None
        for t in tuples:
            if t in seen:
                dup = t
                break
            seen.add(t)
        raise OverlappingCells(f"cell {dup} listed more than once")

    cellset = set(tuples)
    start = min(tuples)
    reached = {start}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        for ax in range(dimension):
            for step in (-1, 1):
                nb = c[:ax] + (c[ax] + step,) + c[ax + 1:]
                if nb in cellset and nb not in reached:
                    reached.add(nb)
                    queue.append(nb)
    if len(reached) != len(cellset):
        raise DisconnectedDomain(
            f"{len(cellset) - len(reached)} of {len(cellset)} cells are not "
            "face-connected to the rest"
        )
    return RectilinearDomain(dimension, cell_size, tuple(sorted(tuples)), offset)


_DOMAIN_KEYS = {"dimension", "cell_size", "offset", "cells"}


def _node_line(node) -> int:
    return node.start_mark.line + 1


def load_domain(path) -> RectilinearDomain:
    """Parse a domain file (see module docstring for the schema)."""
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise DomainFileError(f"cannot read domain file {path}: {exc}", None) from exc
    return parse_domain(text)


def parse_domain(text: str) -> RectilinearDomain:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise DomainFileError(str(exc.problem or exc), line) from exc
    if root is None or not isinstance(root, yaml.MappingNode):
        raise DomainFileError("top level must be a mapping", 1)

    nodes = {}
    for key_node, value_node in root.value:
        key = key_node.value
        if key not in _DOMAIN_KEYS:
            raise DomainFileError(f"unknown key {key!r}", _node_line(key_node))
        if key in nodes:
            raise DomainFileError(f"duplicate key {key!r}", _node_line(key_node))
        nodes[key] = value_node
    for key in ("dimension", "cell_size", "cells"):
        if key not in nodes:
            raise DomainFileError(f"missing required key {key!r}", _node_line(root))

    def construct(node):
        return yaml.SafeLoader(yaml.serialize(node)).get_single_data()

    values = {k: construct(n) for k, n in nodes.items()}
    dim = values["dimension"]
    if not isinstance(dim, int) or isinstance(dim, bool):
        raise DomainFileError("dimension must be an integer", _node_line(nodes["dimension"]))
    h0 = values["cell_size"]
    if not isinstance(h0, (int, float)) or isinstance(h0, bool):
        raise DomainFileError("cell_size must be a number", _node_line(nodes["cell_size"]))
    cells = values["cells"]
    if not isinstance(cells, list):
        raise DomainFileError("cells must be a list", _node_line(nodes["cells"]))
    for item, item_node in zip(cells, nodes["cells"].value):
        if not (
            isinstance(item, list)
            and all(isinstance(v, int) and not isinstance(v, bool) for v in item)
        ):
            raise DomainFileError(f"cell {item!r} must be a list of integers", _node_line(item_node))
    offset = values.get("offset")
    if offset is not None and not (
        isinstance(offset, list) and all(isinstance(v, (int, float)) for v in offset)
    ):
        raise DomainFileError("offset must be a list of numbers", _node_line(nodes["offset"]))
    try:
        return build_domain(dim, h0, cells, offset)
    except (BadDimension, DisconnectedDomain, OverlappingCells) as exc:
        key = "dimension" if isinstance(exc, BadDimension) else "cells"
        raise type(exc)(f"line {_node_line(nodes[key])}: {exc}") from exc


def dump_domain(dom: RectilinearDomain) -> str:
    return yaml.safe_dump(dom.descriptor(), default_flow_style=None, sort_keys=False)


def _lattice_plane(dom: RectilinearDomain, rmap: ReflectionMap):
    """Twice the plane position in lattice units, or None if off-lattice."""
    p2 = 2.0 * (rmap.plane_offset - dom.offset[rmap.axis]) / dom.cell_size
    n = round(p2)
    if abs(p2 - n) > 1e-9 * max(1.0, abs(p2)):
        return None
    return int(n)


def reflect_cells(dom: RectilinearDomain, rmap: ReflectionMap):
    """Cell set of the reflected domain, or None if the plane is off-lattice."""
    p2 = _lattice_plane(dom, rmap)
    if p2 is None:
        return None
    ax = rmap.axis
    # [c, c+1] -> [p2 - c - 1, p2 - c]
    return frozenset(c[:ax] + (p2 - c[ax] - 1,) + c[ax + 1:] for c in dom.cells)


def is_symmetric(dom: RectilinearDomain, rmap: ReflectionMap) -> bool:
    if not 0 <= rmap.axis < dom.dimension:
        raise ValueError(f"axis {rmap.axis} outside 0..{dom.dimension - 1}")
    reflected = reflect_cells(dom, rmap)
    return reflected is not None and reflected == dom.cell_set


def detect_symmetry_frame(dom: RectilinearDomain) -> list[ReflectionMap]:
    """All axis-aligned reflections leaving the domain invariant.

    The only candidate plane per axis is the bounding-box midpoint.
    """
    lo, hi = dom.bounding_box
    frame = []
    for ax in range(dom.dimension):
        rmap = ReflectionMap(ax, 0.5 * (lo[ax] + hi[ax]))
        if is_symmetric(dom, rmap):
            frame.append(rmap)
    return frame


def cell_quadrature(
    lower: np.ndarray, size: float, rule: QuadratureRule
) -> tuple[np.ndarray, np.ndarray]:
    """Physical nodes ``(ncells, nq, d)`` and weights ``(nq,)`` for equal cells.

    ``lower`` holds the lower corners ``(ncells, d)`` of cells of edge ``size``.
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    dim = lower.shape[1]
    ref_pts, ref_w = rule.reference(dim)
    pts = lower[:, None, :] + size * ref_pts[None, :, :]
    return pts, ref_w * size**dim


def integrate(
    dom: RectilinearDomain,
    f: Callable[[np.ndarray], np.ndarray],
    rule: QuadratureRule | None = None,
    cells: Sequence[int] | None = None,
) -> float:
    """Integrate ``f`` over the domain (or a subset of its cells).

    ``f`` receives an ``(n, d)`` array of points and returns ``n`` values.
    Cells are visited in lattice order, nodes in tensor order.
    """
    rule = rule or QuadratureRule()
    idx = np.arange(len(dom.cells)) if cells is None else np.asarray(cells, dtype=int)
    lower = np.asarray(dom.offset) + dom.cell_size * dom.cell_array[idx]
    pts, w = cell_quadrature(lower, dom.cell_size, rule)
    vals = np.asarray(f(pts.reshape(-1, dom.dimension)), dtype=float).reshape(pts.shape[:2])
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("integrand returned a non-finite value")
    per_cell = vals @ w
    total = 0.0
    for v in per_cell:
        total += v
    return float(total)
