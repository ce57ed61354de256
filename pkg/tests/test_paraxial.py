import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cryofocus.errors import AfocalImageError, EmptySystemError, InvalidElementError
from cryofocus.paraxial import (
    OpticalSystem,
    RayTransferMatrix,
    cardinal_points,
    compose,
    compound_two_lens,
    element_matrix,
    gap,
    image_solve,
    relay_defocus_power,
    relay_offsets,
    thin_lens,
)

focal = st.floats(10, 1000) | st.floats(-1000, -10)
length = st.floats(0, 1000)
element = st.one_of(focal.map(thin_lens), length.map(gap))


def numpy_product(elements):
    out = np.eye(2)
    for e in elements:
        if e.kind == "gap":
            m = np.array([[1.0, e.length], [0.0, 1.0]])
        else:
            m = np.array([[1.0, 0.0], [-1.0 / e.focal_length, 1.0]])
        out = m @ out
    return out


def test_element_matrices():
    assert element_matrix(gap(0)) == RayTransferMatrix.identity()
    assert element_matrix(thin_lens(20)).as_array() == pytest.approx(np.array([[1, 0], [-0.05, 1]]))
    assert element_matrix(gap(7.5)).as_array() == pytest.approx(np.array([[1, 7.5], [0, 1]]))


def test_gap_after_lens_determinant():
    m = compose([thin_lens(250), gap(500)])
    assert m.determinant == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("bad", [lambda: thin_lens(0), lambda: gap(-1), lambda: thin_lens(float("inf"))])
def test_invalid_elements(bad):
    with pytest.raises(InvalidElementError):
        bad()


def test_compose_empty():
    with pytest.raises(EmptySystemError):
        compose([])
    assert compose([gap(0)]) == RayTransferMatrix.identity()


def test_4f_relay_inverts():
    m = compose([gap(250), thin_lens(250), gap(500), thin_lens(250), gap(250)])
    assert m.as_array() == pytest.approx(np.array([[-1, 0], [0, -1]]), abs=1e-12)


def test_objective_tube_afocal():
    m = compose([thin_lens(20), gap(540), thin_lens(520)])
    assert abs(m.c) < 1e-12
    assert cardinal_points(m).afocal


def test_cardinal_points_thin_lens():
    cp = cardinal_points(compose([thin_lens(20)]))
    assert cp.effective_focal_length == pytest.approx(20)
    assert cp.front_principal_offset == pytest.approx(0)
    assert cp.back_principal_offset == pytest.approx(0)
    assert cp.back_focal_distance == pytest.approx(20)
    assert cp.front_focal_distance == pytest.approx(20)


def test_cardinal_points_two_lens():
    cp = cardinal_points(compose([thin_lens(20), thin_lens(520)]))
    assert cp.effective_focal_length == pytest.approx(1 / (1 / 20 + 1 / 520))
    assert cp.effective_focal_length == pytest.approx(19.259, abs=5e-4)


def test_cardinal_points_thick_pair_by_ray_trace():
    # principal planes located by tracing a marginal parallel ray
    f1, f2, sep = 50.0, 80.0, 30.0
    m = compose([thin_lens(f1), gap(sep), thin_lens(f2)])
    cp = cardinal_points(m)
    y, u = m.trace_ray(1.0, 0.0)
    assert cp.back_focal_distance == pytest.approx(-y / u)
    assert cp.back_focal_distance - cp.back_principal_offset == pytest.approx(cp.effective_focal_length)
    # reverse trace for the front side
    mr = compose([thin_lens(f2), gap(sep), thin_lens(f1)])
    y, u = mr.trace_ray(1.0, 0.0)
    assert cp.front_focal_distance == pytest.approx(-y / u)


def test_4f_relay_afocal():
    assert cardinal_points(compose([thin_lens(250), gap(500), thin_lens(250)])).afocal


def test_afocal_has_no_numbers():
    cp = cardinal_points(RayTransferMatrix(-1, 50, 0, -1))
    assert cp.afocal and cp.effective_focal_length is None


def test_compound_two_lens():
    assert compound_two_lens(20, 520, 0) == pytest.approx(19.259, abs=5e-4)
    assert compound_two_lens(20, 520, 540) is None
    assert compound_two_lens(20, 520, 1) == pytest.approx(1 / (1 / 20 + 1 / 520 - 1 / 10400))
    assert compound_two_lens(20, 520, 1) == pytest.approx(19.295, abs=5e-4)
    with pytest.raises(InvalidElementError):
        compound_two_lens(0, 520)


@given(focal, focal)
def test_compound_matches_matrix(fo, ft):
    f = compound_two_lens(fo, ft, 0)
    cp = cardinal_points(compose([thin_lens(fo), gap(0), thin_lens(ft)]))
    if f is None:
        assert cp.afocal
    else:
        assert cp.effective_focal_length == pytest.approx(f, rel=1e-9)


def test_relay_defocus_power():
    assert relay_defocus_power(0, 250, 0, 200) == 0
    assert relay_defocus_power(1, 250, 0, 200) == pytest.approx(1.6e-5)
    assert 1 / relay_defocus_power(1, 250, 0, 200) == pytest.approx(62500)
    assert relay_defocus_power(1, 250, 1, 200) == pytest.approx(4.1e-5)
    assert 1 / relay_defocus_power(1, 250, 1, 200) == pytest.approx(24390, rel=1e-4)
    with pytest.raises(InvalidElementError):
        relay_defocus_power(1, -250, 0, 200)


def test_relay_power_matches_matrix():
    # the formula is first order in the spacing error
    elems = [thin_lens(250), gap(501), thin_lens(250), gap(450), thin_lens(200), gap(400), thin_lens(200)]
    m = compose(elems)
    assert abs(m.c) == pytest.approx(relay_defocus_power(1, 250, 0, 200), rel=1e-2)
    assert relay_offsets(OpticalSystem(elems)) == pytest.approx([1.0, 0.0])


def test_image_solve():
    s = image_solve(20, 40)
    assert (s.s_t, s.magnification) == pytest.approx((40, 1))
    s = image_solve(20, 20.770)
    assert s.s_t == pytest.approx(539.48, abs=0.01)
    assert s.magnification == pytest.approx(25.97, abs=0.01)
    with pytest.raises(AfocalImageError):
        image_solve(20, 20)


@given(st.floats(10, 500), st.floats(1.05, 20))
def test_image_solve_conjugate(f, ratio):
    s = image_solve(f, f * ratio)
    assert 1 / s.s_o + 1 / s.s_t == pytest.approx(1 / f, rel=1e-12)
    assert s.magnification == pytest.approx(s.s_t / s.s_o, rel=1e-9)


@settings(max_examples=50)
@given(st.floats(10, 500), st.floats(1.05, 20), st.floats(-1, 1))
def test_magnification_by_ray_trace(f, ratio, h):
    # two rays from the same object point must meet at height -M*h
    s = image_solve(f, f * ratio)
    m = compose([gap(s.s_o), thin_lens(f), gap(s.s_t)])
    y1, _ = m.trace_ray(h, 0.0)
    y2, _ = m.trace_ray(h, 0.01)
    assert y1 == pytest.approx(y2, abs=1e-9 * max(1, abs(y1)))
    if abs(h) > 1e-3:
        assert -y1 / h == pytest.approx(s.magnification, rel=1e-9)
    assert -m.a == pytest.approx(s.magnification, rel=1e-9)


@given(st.lists(element, min_size=1, max_size=8))
def test_compose_matches_numpy_and_unit_det(elements):
    m = compose(elements)
    ref = numpy_product(elements)
    scale = np.abs(ref).max()
    assert np.allclose(m.as_array(), ref, rtol=1e-12, atol=1e-12 * scale)
    assert m.determinant == pytest.approx(1.0, abs=1e-12 * max(1.0, scale**2))


@given(st.lists(element, min_size=2, max_size=8), st.data())
def test_compose_associative(elements, data):
    k = data.draw(st.integers(1, len(elements) - 1))
    whole = compose(elements)
    grouped = compose(elements[k:]) @ compose(elements[:k])
    scale = max(1.0, np.abs(whole.as_array()).max())
    assert np.allclose(whole.as_array(), grouped.as_array(), rtol=1e-12, atol=1e-12 * scale)


@given(element)
def test_element_unit_det(e):
    assert element_matrix(e).determinant == pytest.approx(1.0, abs=1e-15)
