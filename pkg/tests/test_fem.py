import numpy as np
import pytest
import scipy.io

from biharm.domain import build_domain
from biharm.errors import BadMultiIndex, RefinementOverflow
from biharm.fem import (
    DIRICHLET,
    NEUMANN,
    assemble_hessian,
    assemble_mass,
    build_mesh,
    element_matrices,
    evaluate,
    export_matrix,
    hermite_1d,
    interpolate,
    shape_eval,
)


def poly_field(coeffs):
    """``f(points, alpha)`` for ``sum c[i, j] x^i y^j`` with mixed derivatives."""
    c = np.asarray(coeffs, dtype=float)

    def f(p, alpha):
        out = np.zeros(len(p))
        for i in range(c.shape[0]):
            for j in range(c.shape[1]):
                if c[i, j] == 0 or i < alpha[0] or j < alpha[1]:
                    continue
                fi = np.prod(np.arange(i - alpha[0] + 1, i + 1)) if alpha[0] else 1
                fj = np.prod(np.arange(j - alpha[1] + 1, j + 1)) if alpha[1] else 1
                out += c[i, j] * fi * fj * p[:, 0] ** (i - alpha[0]) * p[:, 1] ** (j - alpha[1])
        return out

    return f


class TestHermite:
    def test_partition_of_unity(self):
        xi = np.linspace(0, 1, 11)
        vals = hermite_1d(xi, 0, 0.3)
        np.testing.assert_allclose(vals[:, 0] + vals[:, 2], 1.0, atol=1e-15)

    def test_nodal_interpolation(self):
        h = 0.25
        v0 = hermite_1d(np.array([0.0, 1.0]), 0, h)
        v1 = hermite_1d(np.array([0.0, 1.0]), 1, h)
        np.testing.assert_allclose(v0, [[1, 0, 0, 0], [0, 0, 1, 0]], atol=1e-15)
        np.testing.assert_allclose(v1, [[0, 1, 0, 0], [0, 0, 0, 1]], atol=1e-15)

    def test_shape_eval_bad_index(self):
        with pytest.raises(BadMultiIndex):
            shape_eval([0.0, 0.0], 1.0, 0, [0.5, 0.5], (3, 0))
        with pytest.raises(BadMultiIndex):
            shape_eval([0.0, 0.0], 1.0, 16, [0.5, 0.5], (0, 0))


class TestMesh:
    def test_single_cell_counts(self, unit_square):
        assert build_mesh(unit_square, 1, NEUMANN).n_dofs == 16
        assert build_mesh(unit_square, 1, DIRICHLET).n_free == 0

    def test_interior_nodes_free(self, unit_square):
        mesh = build_mesh(unit_square, 4, DIRICHLET)
        assert mesh.n_free == 9 * 4

    def test_cube_counts(self, cube):
        assert build_mesh(cube, 2, NEUMANN).n_dofs == 27 * 8
        assert build_mesh(cube, 2, DIRICHLET).n_free == 8

    def test_lshape_counts(self, lshape):
        mesh = build_mesh(lshape, 2, NEUMANN)
        # 5x5 lattice minus the 2x2 upper-right block strictly outside
        assert mesh.n_dofs == (25 - 4) * 4

    def test_overflow(self, square):
        with pytest.raises(RefinementOverflow):
            build_mesh(square, 64, NEUMANN, dof_cap=1000)

    def test_bad_bc(self, square):
        with pytest.raises(ValueError):
            build_mesh(square, 2, "robin")

    def test_free_full_round_trip(self, lshape):
        mesh = build_mesh(lshape, 3, DIRICHLET)
        x = np.arange(mesh.n_free, dtype=float)
        np.testing.assert_array_equal(mesh.to_free(mesh.to_full(x)), x)


class TestAssembly:
    @pytest.mark.parametrize("bc", [DIRICHLET, NEUMANN])
    def test_exact_symmetry(self, lshape, bc):
        mesh = build_mesh(lshape, 4, bc)
        for mat in (assemble_hessian(mesh), assemble_mass(mesh)):
            assert abs(mat - mat.T).max() == 0.0

    def test_element_matrices_3d_symmetric(self):
        ke, me = element_matrices(3, 0.5)
        assert ke.shape == (64, 64)
        np.testing.assert_array_equal(ke, ke.T)
        assert np.all(np.linalg.eigvalsh(me) > 0)

    def test_mass_of_constant(self, lshape):
        mesh = build_mesh(lshape, 3, NEUMANN)
        one = interpolate(mesh, poly_field([[1.0]]))
        assert one @ (assemble_mass(mesh) @ one) == pytest.approx(3.0, rel=1e-13)

    def test_energy_of_xy(self, unit_square):
        # |D^2(xy)|^2 = 2 pointwise, so the Hessian energy on the unit square is 2
        mesh = build_mesh(unit_square, 4, NEUMANN)
        u = interpolate(mesh, poly_field([[0, 0], [0, 1.0]]))
        assert u @ (assemble_hessian(mesh) @ u) == pytest.approx(2.0, rel=1e-13)

    def test_energy_of_quadratic(self, unit_square):
        # u = x^2 + 3 y^2: Hessian diag(2, 6), energy 4 + 36 = 40
        mesh = build_mesh(unit_square, 3, NEUMANN)
        u = interpolate(mesh, poly_field([[0, 0, 3.0], [0, 0, 0], [1.0, 0, 0]]))
        assert u @ (assemble_hessian(mesh) @ u) == pytest.approx(40.0, rel=1e-13)

    def test_affine_in_kernel(self, square):
        mesh = build_mesh(square, 6, NEUMANN)
        A = assemble_hessian(mesh)
        for c in ([[1.0]], [[0], [1.0]], [[0, 1.0]]):
            assert np.linalg.norm(A @ interpolate(mesh, poly_field(c))) < 1e-10

    def test_assembly_is_deterministic(self, lshape):
        a1 = assemble_hessian(build_mesh(lshape, 4, NEUMANN))
        a2 = assemble_hessian(build_mesh(lshape, 4, NEUMANN))
        np.testing.assert_array_equal(a1.indptr, a2.indptr)
        np.testing.assert_array_equal(a1.data, a2.data)


class TestEvaluate:
    def test_bicubic_reproduced(self, lshape):
        rng = np.random.default_rng(1)
        c = rng.standard_normal((4, 4))
        mesh = build_mesh(lshape, 2, NEUMANN)
        u = interpolate(mesh, poly_field(c))
        pts = np.array([[0.3, 0.2], [1.7, 0.9], [0.1, 1.8], [1.0, 1.0], [0.5, 0.5]])
        np.testing.assert_allclose(evaluate(mesh, u, pts), poly_field(c)(pts, (0, 0)), rtol=1e-12)
        np.testing.assert_allclose(
            evaluate(mesh, u, pts, (1, 1)), poly_field(c)(pts, (1, 1)), rtol=1e-11, atol=1e-11
        )

    def test_gradient_continuous_across_faces(self, unit_square):
        rng = np.random.default_rng(2)
        mesh = build_mesh(unit_square, 2, NEUMANN)
        u = rng.standard_normal(mesh.n_free)
        lookup = {tuple(c): i for i, c in enumerate(mesh.cell_lattice)}
        left, right = lookup[(0, 0)], lookup[(1, 0)]
        pts = np.column_stack([np.full(5, 0.5), np.linspace(0.0, 0.5, 5)])
        for der in ((0, 0), (1, 0), (0, 1)):
            a = evaluate(mesh, u, pts, der, cells=np.full(5, left))
            b = evaluate(mesh, u, pts, der, cells=np.full(5, right))
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_dirichlet_field_vanishes_on_boundary(self, lshape):
        rng = np.random.default_rng(3)
        mesh = build_mesh(lshape, 3, DIRICHLET)
        u = rng.standard_normal(mesh.n_free)
        # includes the re-entrant edges of the L
        pts = np.array([[1.0, 1.5], [1.5, 1.0], [0.0, 0.7], [2.0, 0.3], [0.4, 2.0]])
        for der in ((0, 0), (1, 0), (0, 1)):
            np.testing.assert_allclose(evaluate(mesh, u, pts, der), 0.0, atol=1e-12)

    def test_outside_point(self, lshape):
        mesh = build_mesh(lshape, 2, NEUMANN)
        with pytest.raises(ValueError):
            evaluate(mesh, np.zeros(mesh.n_free), [[1.5, 1.5]])


def test_export_round_trip(tmp_path, lshape):
    mesh = build_mesh(lshape, 2, DIRICHLET)
    M = assemble_mass(mesh)
    path = tmp_path / "mass.mtx"
    export_matrix(path, M, comment="mass")
    back = scipy.io.mmread(str(path)).tocsr()
    assert abs(back - M).max() < 1e-15 * abs(M).max()
