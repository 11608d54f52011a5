import numpy as np
import pytest
from hypothesis import given, strategies as st

from modalwave import modal
from modalwave.specialfn import SphericalPoint, spherical_h1_all, sph_harm


@given(st.integers(0, 200).flatmap(lambda l: st.tuples(st.just(l), st.integers(-l, l))))
def test_flatten_roundtrip(lp):
    l, p = lp
    i = modal.mode_flatten(l, p)
    assert modal.mode_unflatten(i) == (l, p)


def test_flat_order_is_contiguous():
    idx = [modal.mode_flatten(l, p) for l in range(6) for p in range(-l, l + 1)]
    assert idx == list(range(36))
    assert modal.n_modes(5) == 36
    assert modal.order_of(36) == 5
    assert list(modal.degrees(2)) == [0, 1, 1, 1, 2, 2, 2, 2, 2]


def test_invalid_modes():
    with pytest.raises(ValueError):
        modal.mode_flatten(2, 3)
    with pytest.raises(ValueError):
        modal.ModeIndex(-1, 0)
    with pytest.raises(ValueError):
        modal.order_of(10)
    with pytest.raises(ValueError):
        modal.outgoing_basis(2, 1.0, np.zeros(3))


def test_modal_vector():
    v = modal.ModalVector.unit(3, 2, -1)
    assert v.truncation == 3
    assert v[2, -1] == 1.0
    assert np.count_nonzero(v.coefficients) == 1


def test_scalar_eval_matches_components():
    k = 2 * np.pi
    pt = SphericalPoint(1.3, 0.7, 2.1)
    val = modal.eval_outgoing(modal.ModeIndex(3, -2), k, pt)
    ref = spherical_h1_all(3, k * 1.3)[3] * sph_harm(3, -2, 0.7, 2.1)
    assert val == pytest.approx(ref, rel=1e-13)


def test_regular_basis_finite_at_origin():
    b = modal.regular_basis(3, 1.0, np.zeros(3))
    expected = np.zeros(16, complex)
    expected[0] = 1 / np.sqrt(4 * np.pi)
    np.testing.assert_allclose(b, expected, atol=1e-15)


@pytest.mark.parametrize("fn", [modal.outgoing_basis_grad, modal.regular_basis_grad])
def test_gradient_against_finite_difference(fn):
    rng = np.random.default_rng(1)
    k = 1.7
    pts = rng.normal(size=(6, 3)) * 2.0
    _, g = fn(4, k, pts)
    base = modal.outgoing_basis if fn is modal.outgoing_basis_grad else modal.regular_basis
    h = 1e-6
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        fd = (base(4, k, pts + e) - base(4, k, pts - e)) / (2 * h)
        np.testing.assert_allclose(g[:, axis, :], fd, rtol=1e-6, atol=1e-7)


def test_helmholtz_equation():
    # (laplacian + k^2) u = 0 away from the origin, via second differences
    k = 1.3
    p = np.array([0.8, -0.5, 1.1])
    h = 1e-3
    u0 = modal.outgoing_basis(3, k, p)
    lap = -6 * u0
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        lap = lap + modal.outgoing_basis(3, k, p + e) + modal.outgoing_basis(3, k, p - e)
    lap /= h * h
    assert np.max(np.abs(lap + k * k * u0)) < 1e-4 * np.max(np.abs(u0))


def test_source_field_superposition():
    rng = np.random.default_rng(2)
    s = rng.normal(size=9) + 1j * rng.normal(size=9)
    pts = rng.normal(size=(5, 3)) + 3.0
    f = modal.eval_source_field(s, 1.0, pts)
    np.testing.assert_allclose(f, modal.outgoing_basis(2, 1.0, pts) @ s)
    assert isinstance(modal.eval_source_field(s, 1.0, pts[0]), complex)
