import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biharm.domain import (
    QuadratureRule,
    ReflectionMap,
    build_domain,
    detect_symmetry_frame,
    dump_domain,
    integrate,
    is_symmetric,
    load_domain,
    parse_domain,
    reflect_cells,
)
from biharm.errors import (
    BadDimension,
    DisconnectedDomain,
    DomainFileError,
    InputError,
    NonFiniteValue,
    OverlappingCells,
)


class TestBuild:
    def test_square_geometry(self, square):
        assert square.dimension == 2
        assert square.volume == pytest.approx(1.0)
        lo, hi = square.bounding_box
        np.testing.assert_allclose(lo, [-0.5, -0.5])
        np.testing.assert_allclose(hi, [0.5, 0.5])
        np.testing.assert_allclose(square.center, [0.0, 0.0])

    def test_lshape_volume(self, lshape):
        assert lshape.volume == pytest.approx(3.0)

    def test_cells_are_sorted(self):
        dom = build_domain(2, 0.5, [(1, 0), (0, 0)])
        assert dom.cells == ((0, 0), (1, 0))

    def test_disconnected(self):
        with pytest.raises(DisconnectedDomain):
            build_domain(2, 1.0, [(0, 0), (2, 0)])

    def test_corner_contact_is_disconnected(self):
        with pytest.raises(DisconnectedDomain):
            build_domain(2, 1.0, [(0, 0), (1, 1)])

    def test_overlap(self):
        with pytest.raises(OverlappingCells):
            build_domain(2, 1.0, [(0, 0), (0, 0)])

    @pytest.mark.parametrize("d", [1, 4])
    def test_bad_dimension(self, d):
        with pytest.raises(BadDimension):
            build_domain(d, 1.0, [(0,) * d])

    def test_errors_are_input_errors(self):
        assert issubclass(BadDimension, InputError)
        assert issubclass(DomainFileError, InputError)


class TestParse:
    def test_round_trip(self, lshape):
        assert parse_domain(dump_domain(lshape)) == lshape

    def test_unknown_key_has_line(self):
        text = "dimension: 2\ncell_size: 1.0\ncolour: red\ncells:\n  - [0, 0]\n"
        with pytest.raises(DomainFileError) as info:
            parse_domain(text)
        assert info.value.line == 3

    def test_missing_cells(self):
        with pytest.raises(DomainFileError):
            parse_domain("dimension: 2\ncell_size: 1.0\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DomainFileError):
            load_domain(tmp_path / "absent.dom")

    def test_malformed_yaml(self):
        with pytest.raises(DomainFileError):
            parse_domain("dimension: [2\n")


class TestSymmetry:
    def test_square_frame(self, square):
        frame = detect_symmetry_frame(square)
        assert [(r.axis, r.plane_offset) for r in frame] == [(0, 0.0), (1, 0.0)]

    def test_rect_frame(self, rect):
        assert {r.axis for r in detect_symmetry_frame(rect)} == {0, 1}

    def test_lshape_has_no_axis_plane(self, lshape):
        assert detect_symmetry_frame(lshape) == []

    def test_cube_frame(self, cube):
        assert len(detect_symmetry_frame(cube)) == 3

    def test_off_centre_plane(self, square):
        assert not is_symmetric(square, ReflectionMap(0, 0.25))

    def test_reflect_cells_lshape(self, lshape):
        assert set(reflect_cells(lshape, ReflectionMap(0, 1.0))) != set(lshape.cells)

    @given(
        axis=st.integers(0, 2),
        plane=st.floats(-10, 10, allow_nan=False),
        pts=st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=3),
    )
    def test_reflection_is_involution(self, axis, plane, pts):
        r = ReflectionMap(axis, plane)
        x = np.array(pts)
        np.testing.assert_allclose(r.apply(r.apply(x)), x, rtol=0, atol=1e-9)


class TestQuadrature:
    def test_weights_sum_to_one(self):
        for rule in (QuadratureRule(), QuadratureRule(5, 3)):
            _, w = rule.reference(3)
            assert w.sum() == pytest.approx(1.0, abs=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(p=st.integers(0, 23), q=st.integers(0, 23))
    def test_monomials_exact(self, p, q):
        dom = build_domain(2, 1.0, [(0, 0)])
        val = integrate(dom, lambda x: x[:, 0] ** p * x[:, 1] ** q)
        assert val == pytest.approx(1.0 / ((p + 1) * (q + 1)), rel=1e-13)

    def test_volume_of_lshape(self, lshape):
        assert integrate(lshape, lambda x: np.ones(len(x))) == pytest.approx(3.0, rel=1e-15)

    def test_odd_function_on_centred_square(self, square):
        assert abs(integrate(square, lambda x: x[:, 0] ** 3 * x[:, 1] ** 2)) < 1e-16

    def test_non_finite(self, square):
        with pytest.raises(NonFiniteValue):
            integrate(square, lambda x: np.full(len(x), np.nan))

    def test_frequency_subdivision(self):
        assert QuadratureRule.for_frequency(1.0, 1.0).subdivisions == 1
        assert QuadratureRule.for_frequency(50.0, 1.0).subdivisions == 25

    def test_high_frequency_trig(self):
        dom = build_domain(2, 1.0, [(0, 0)])
        w = 40.0
        rule = QuadratureRule.for_frequency(2 * w, 1.0)
        val = integrate(dom, lambda x: np.sin(w * x[:, 0]) ** 2, rule)
        exact = 0.5 - np.sin(2 * w) / (4 * w)
        assert val == pytest.approx(exact, rel=1e-14)
