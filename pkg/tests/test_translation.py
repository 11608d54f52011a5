import numpy as np
import pytest

from modalwave import translation as tr
from modalwave.modal import ModeIndex, n_modes, outgoing_basis, regular_basis
from modalwave.specialfn import sph_harm_all, spherical_jn_all


def projected_coefficients(n, m, L, d, k, rho):
    """Regular-mode coefficients of u_n^m about d by quadrature on a sphere of radius rho."""
    nt = 48
    x, w = np.polynomial.legendre.leggauss(nt)
    nphi = 96
    phi = 2 * np.pi * np.arange(nphi) / nphi
    T, P = np.meshgrid(np.arccos(x), phi, indexing="ij")
    W = np.repeat(w, nphi) * (2 * np.pi / nphi)
    T, P = T.ravel(), P.ravel()
    pts = np.asarray(d) + rho * np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
    u = outgoing_basis(n, k, pts)[:, n * n + n + m]
    proj = (u * W) @ sph_harm_all(L, T, P).conj()
    j = spherical_jn_all(L, k * rho)
    deg = np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1)
    return proj / j[deg]


@pytest.mark.parametrize("n,m,d", [(0, 0, [0.3, -0.2, 1.5]), (2, 1, [1.0, 2.0, -0.5]), (3, -2, [-1.2, 0.4, 0.9])])
def test_matrix_column_matches_projection(n, m, d):
    k, L = 2.0, 5
    H = tr.translation_matrices(L, n, d, k)
    ref = projected_coefficients(n, m, L, d, k, rho=0.6)
    np.testing.assert_allclose(H[:, n * n + n + m], ref, rtol=1e-8, atol=1e-10 * np.max(np.abs(ref)))


def test_sparse_map_matches_termwise_sum():
    d = np.array([0.7, -1.1, 0.4])
    k = 1.4
    H = tr.translation_matrices(3, 2, d, k)
    for l in range(4):
        for p in range(-l, l + 1):
            for n in range(3):
                for m in range(-n, n + 1):
                    a = tr.translation_coefficient(n, m, l, p, d, k)
                    assert H[l * l + l + p, n * n + n + m] == pytest.approx(a, rel=1e-12, abs=1e-14)


def test_stacked_displacements():
    rng = np.random.default_rng(0)
    d = rng.normal(size=(2, 3, 3))
    H = tr.translation_matrices(2, 1, d, 1.0)
    assert H.shape == (2, 3, 9, 4)
    np.testing.assert_allclose(H[1, 2], tr.translation_matrices(2, 1, d[1, 2], 1.0))


def test_gradient_against_finite_difference():
    d = np.array([0.9, 0.3, -1.4])
    k = 1.1
    H, dH = tr.translation_matrices_grad(2, 2, d, k)
    h = 1e-6
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        fd = (tr.translation_matrices(2, 2, d + e, k) - tr.translation_matrices(2, 2, d - e, k)) / (2 * h)
        np.testing.assert_allclose(dH[a], fd, rtol=1e-6, atol=1e-8)


def test_field_reconstruction_converges():
    d = np.array([0.0, 4.0, 15.0]) * 2 * np.pi
    mode = ModeIndex(4, 2)
    rng = np.random.default_rng(5)
    pts = d + rng.normal(size=(30, 3)) * 0.5 * 2 * np.pi / 3
    errs = [tr.verify_addition(mode, d, 1.0, L, pts).max_abs_error for L in (4, 8, 12)]
    assert errs[0] > errs[1] > errs[2]


def test_convergence_region_is_enforced():
    d = np.array([0.0, 0.0, 2.0])
    assert tr.in_convergence_region([[0, 0, 1.0]], d)[0]
    assert not tr.in_convergence_region([[0, 0, -0.1]], d)[0]
    with pytest.raises(ValueError):
        tr.verify_addition(ModeIndex(1, 0), d, 1.0, 4, [[0.0, 0.0, 4.5]])
    with pytest.raises(ValueError):
        tr.translation_matrices(1, 1, np.zeros(3), 1.0)


def test_translation_matrix_wrapper():
    T = tr.build_translation_matrix(3, 1, [1.0, 0.0, 0.0], 2.0)
    assert (T.L_dst, T.N_src) == (3, 1)
    assert T.entries.shape == (n_modes(3), n_modes(1))
    s = np.ones(4)
    np.testing.assert_allclose(T @ s, T.entries @ s)


def test_regular_modes_reproduce_field_near_center():
    # expansion evaluated at d itself equals the (0,0) term only
    d = np.array([0.5, 0.5, 1.0])
    H = tr.translation_matrices(6, 2, d, 1.5)
    v0 = regular_basis(6, 1.5, np.zeros(3))
    np.testing.assert_allclose(v0 @ H, outgoing_basis(2, 1.5, d), rtol=1e-12)
