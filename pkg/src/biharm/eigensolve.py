"""Lowest eigenpairs of the pencil ``A x = theta M x`` with kernel deflation.

Small problems use a dense Cholesky-reduced solve; larger ones use ARPACK
in shift-invert mode with a sparse LU of ``A - sigma M``.  A known kernel
(the Neumann null space of constants and coordinate functions) is
M-orthonormalised, returned first with eigenvalue exactly zero, and
projected out of the iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, CountTooLarge, MassNotPD, ZeroVector
from .fem import MeshDofSystem, interpolate

__all__ = [
    "SpectrumResult",
    "KernelBasis",
    "kernel_basis",
    "solve_lowest",
    "rayleigh_quotient",
    "gram_rank",
    "DENSE_THRESHOLD",
]

DENSE_THRESHOLD = 3000
BACKWARD_TOL = 1e-10


@dataclass
class SpectrumResult:
    """Sorted eigenvalues (with multiplicity) and M-orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (n, count), columns are free-dof coefficient lists
    bc: str | None = None
    residual_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    backward_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mesh_id: str | None = None
    method: str = "dense"
    n_deflated: int = 0

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    def gap_after(self, k: int) -> float | None:
        """``theta_{k+1} - theta_k`` (1-based k), or None past the end."""
        if k >= self.count:
            return None
        return float(self.eigenvalues[k] - self.eigenvalues[k - 1])

    def to_dict(self) -> dict:
        return {
            "bc": self.bc,
            "mesh_id": self.mesh_id,
            "method": self.method,
            "n_deflated": self.n_deflated,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            # theta_{j+1} - theta_j; near-zero entries flag clusters whose individual vectors are not unique
            "gaps": [float(v) for v in np.diff(self.eigenvalues)],
            "residual_norms": [float(v) for v in self.residual_norms],
            "backward_errors": [float(v) for v in self.backward_errors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class KernelBasis:
    """Interpolants of the constant and of each coordinate function."""

    vectors: np.ndarray  # (n, d + 1)

    @property
    def size(self) -> int:
        return self.vectors.shape[1]


def kernel_basis(mesh: MeshDofSystem) -> KernelBasis:
    """Interpolate ``1, x_1 - c_1, ..., x_d - c_d`` (c = bounding-box centre)."""
    d = mesh.dimension
    center = mesh.domain.center
    cols = []

    def constant(p, alpha):
        return np.ones(len(p)) if sum(alpha) == 0 else np.zeros(len(p))

    cols.append(interpolate(mesh, constant))
    for k in range(d):
        def coord(p, alpha, k=k):
            if sum(alpha) == 0:
                return p[:, k] - center[k]
            if sum(alpha) == 1 and alpha[k] == 1:
                return np.ones(len(p))
            return np.zeros(len(p))

        cols.append(interpolate(mesh, coord))
    return KernelBasis(np.column_stack(cols))


def _as_dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


def _m_orthonormalize(x: np.ndarray, M) -> np.ndarray:
    g = x.T @ (M @ x)
    g = 0.5 * (g + g.T)
    try:
        l = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise ZeroVector("deflation vectors are linearly dependent in the mass inner product") from exc
    return sla.solve_triangular(l, x.T, lower=True).T


def _inf_norm(a) -> float:
    return float(abs(a).sum(axis=1).max()) if sp.issparse(a) else float(np.abs(a).sum(axis=1).max())


def _residuals(A, M, x, theta):
    """Residual ratios ``|Ax - tMx| / |Mx|`` and normwise backward errors."""
    ax = A @ x
    mx = M @ x
    num = np.linalg.norm(ax - mx * theta[None, :], axis=0)
    xn = np.linalg.norm(x, axis=0)
    backward = num / ((_inf_norm(A) + np.abs(theta) * _inf_norm(M)) * xn)
    return num / np.linalg.norm(mx, axis=0), backward


def _rayleigh_ritz(A, M, x):
    """Small projected problem on span(x); returns sorted values, M-orthonormal vectors."""
    ha = x.T @ (A @ x)
    hm = x.T @ (M @ x)
    ha = 0.5 * (ha + ha.T)
    hm = 0.5 * (hm + hm.T)
    vals, y = sla.eigh(ha, hm)
    return vals, x @ y


def solve_lowest(
    A,
    M,
    count: int,
    deflation: KernelBasis | None = None,
    *,
    dense_threshold: int = DENSE_THRESHOLD,
    tol: float = 1e-10,
    maxiter: int = 500,
    backward_tol: float = BACKWARD_TOL,
    bc: str | None = None,
    mesh_id: str | None = None,
) -> SpectrumResult:
    """The ``count`` smallest eigenpairs of ``(A, M)``.

    Raises
    ------
    CountTooLarge
        ``count`` exceeds the pencil order.
    MassNotPD
        ``M`` has no Cholesky (dense) or a non-positive pivot (sparse).
    ConvergenceFailure
        ARPACK stalls, or a returned pair has normwise backward error
        ``|Ax - tMx| / ((|A| + |t| |M|) |x|)`` above ``backward_tol``.
    """
    n = A.shape[0]
    if A.shape != M.shape or A.shape != (n, n):
        raise ValueError(f"pencil shapes differ: {A.shape} vs {M.shape}")
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > n:
        raise CountTooLarge(f"requested {count} eigenpairs of an order-{n} pencil")

    kernel = None
    m = 0
    if deflation is not None and deflation.size:
        kernel = _m_orthonormalize(np.asarray(deflation.vectors, dtype=float), M)
        m = kernel.shape[1]
    n_kernel_out = min(m, count)
    rest = count - n_kernel_out

    if n <= dense_threshold:
        vals, vecs = _dense(A, M, rest, kernel)
        method = "dense"
    else:
        vals, vecs = _shift_invert(A, M, rest, kernel, tol=tol, maxiter=maxiter)
        method = "shift-invert"

    if kernel is not None:
        vals = np.concatenate([np.zeros(n_kernel_out), vals])
        vecs = np.column_stack([kernel[:, :n_kernel_out], vecs]) if rest else kernel[:, :n_kernel_out]
    res, backward = _residuals(A, M, vecs, vals)
    bad = backward > backward_tol
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ConvergenceFailure(
            f"eigenpair {i + 1} backward error {backward[i]:.3e} exceeds {backward_tol:g}"
        )
    return SpectrumResult(
        eigenvalues=vals,
        eigenvectors=vecs,
        bc=bc,
        residual_norms=res,
        backward_errors=backward,
        mesh_id=mesh_id,
        method=method,
        n_deflated=n_kernel_out,
    )


def _dense(A, M, count, kernel):
    a = _as_dense(A)
    mm = _as_dense(M)
    try:
        np.linalg.cholesky(mm)
    except np.linalg.LinAlgError as exc:
        raise MassNotPD("mass matrix is not positive definite") from exc
    if count == 0:
        return np.zeros(0), np.zeros((a.shape[0], 0))
    if kernel is None:
        _, vecs = sla.eigh(a, mm, subset_by_index=[0, count - 1])
        # LAPACK values of the lowest modes carry eps * |A| absolute error;
        # Ritz values of the returned vectors are accurate to their residual squared
        return _rayleigh_ritz(a, mm, vecs)
    # Euclidean complement of M K is the M-orthogonal complement of K
    q, _ = np.linalg.qr(mm @ kernel, mode="complete")
    z = q[:, kernel.shape[1]:]
    if count > z.shape[1]:
        raise CountTooLarge("not enough dofs outside the deflated kernel")
    az = z.T @ a @ z
    mz = z.T @ mm @ z
    az = 0.5 * (az + az.T)
    mz = 0.5 * (mz + mz.T)
    _, y = sla.eigh(az, mz, subset_by_index=[0, count - 1])
    return _rayleigh_ritz(a, mm, z @ y)


def _shift_invert(A, M, count, kernel, *, tol, maxiter):
    n = A.shape[0]
    A = sp.csc_matrix(A)
    M = sp.csc_matrix(M)
    if count == 0:
        return np.zeros(0), np.zeros((n, 0))
    try:
        mlu = spla.splu(M, permc_spec="NATURAL", diag_pivot_thresh=0.0)
    except RuntimeError as exc:
        raise MassNotPD(f"mass factorisation failed: {exc}") from exc
    if np.any(mlu.U.diagonal() <= 0):
        raise MassNotPD("mass matrix has a non-positive pivot")

    # slightly negative shift: A - sigma M stays definite even when A is
    # singular (undeflated Neumann pencils) and ordering is unchanged
    scale = A.diagonal().sum() / M.diagonal().sum()
    sigma = -1e-8 * scale
    lu = spla.splu(sp.csc_matrix(A - sigma * M))

    if kernel is not None:
        mk = M @ kernel

        def project(x):
            return x - kernel @ (mk.T @ x)
    else:
        def project(x):
            return x

    op = spla.LinearOperator((n, n), matvec=lambda b: project(lu.solve(np.asarray(b).ravel())), dtype=float)
    rng = np.random.default_rng(20240607)
    v0 = project(rng.standard_normal(n))
    # surplus Ritz pairs guard against missing a copy of a repeated eigenvalue
    extra = min(max(6, count // 2), n - count - 1 - (0 if kernel is None else kernel.shape[1]))
    k = count + max(extra, 0)
    ncv = min(n - 1, max(2 * k + 1, k + 20))
    try:
        vals, vecs = spla.eigsh(
            A, k=k, M=M, sigma=sigma, which="LM", OPinv=op, v0=v0,
            tol=tol, maxiter=maxiter * k, ncv=ncv, mode="normal",
        )
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(f"ARPACK did not converge: {exc}") from exc
    vecs = np.column_stack([project(v) for v in vecs.T])
    vals, vecs = _rayleigh_ritz(A, M, vecs)
    return vals[:count], vecs[:, :count]


def rayleigh_quotient(A, M, x) -> float:
    x = np.asarray(x, dtype=float)
    den = float(x @ (M @ x))
    if not np.any(x) or den == 0.0:
        raise ZeroVector("Rayleigh quotient of the zero vector")
    return float(x @ (A @ x)) / den


def gram_rank(M, xs, tol: float = 1e-8) -> int:
    """Numerical rank of the M-Gram matrix of the columns/rows in ``xs``.

    ``M`` may be None for a precomputed Gram matrix passed as ``xs``.
    """
    if M is None:
        g = np.asarray(xs, dtype=float)
    else:
        x = np.column_stack([np.asarray(v, dtype=float) for v in xs])
        g = x.T @ (M @ x)
    s = np.linalg.svd(0.5 * (g + g.T), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s >= tol * s[0]))
