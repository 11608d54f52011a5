import numpy as np
import pytest

from modalwave import coupling
from modalwave.scene import Scatterer, Scene
from modalwave.translation import translation_matrices

from _scenes import gaussian_elimination, weakly_coupled_scenes


def small_scene(t=0.4, L=1, J=3, seed=0):
    rng = np.random.default_rng(seed)
    n = (L + 1) ** 2
    pos = rng.uniform(-2, 2, size=(J, 3))
    pos[:, 0] += 3.0 * np.arange(J)
    scs = [Scatterer(p, t * np.exp(2j * np.pi * rng.random(n))) for p in pos]
    return Scene(1.0, [0.0, 0.0, 8.0], L, scs), rng.standard_normal((L + 1) ** 2) + 0j


def test_assembly_blocks_match_pairwise_translations():
    scene, s = small_scene(J=3)
    sysm = coupling.assemble(scene, s)
    P = scene.positions
    for j in range(3):
        assert not np.any(sysm.H[j, j])
        for i in range(3):
            if i != j:
                np.testing.assert_allclose(sysm.H[j, i], translation_matrices(1, 1, P[j] - P[i], scene.k))
        blk = sysm.M[sysm.slice(j)]
        for i in range(3):
            np.testing.assert_allclose(blk[:, sysm.slice(i)], sysm.T[j] @ sysm.H[j, i])
        np.testing.assert_allclose(sysm.c[sysm.slice(j)], sysm.T[j] @ sysm.Hs[j] @ s)


def test_direct_matches_gaussian_elimination():
    for scene, s, _ in list(weakly_coupled_scenes(6)):
        sysm = coupling.assemble(scene, s)
        ref = gaussian_elimination(np.eye(sysm.dim) - sysm.M, sysm.c)
        got = coupling.solve_direct(sysm).solution
        assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(ref)


@pytest.mark.parametrize("method,omega", [("jacobi", 1.0), ("gauss_seidel", 1.0), ("sor", 0.5), ("sor", 1.3)])
def test_iterative_solvers_converge(method, omega):
    scene, s = small_scene(t=0.2)
    sysm = coupling.assemble(scene, s)
    ref = coupling.solve_direct(sysm).solution
    rep = coupling.solve(sysm, method, omega, max_iters=2000, tol=1e-12)
    assert rep.converged and not rep.diverged
    assert np.linalg.norm(rep.solution - ref) <= 1e-10 * np.linalg.norm(ref)
    assert rep.residual_history == sorted(rep.residual_history, reverse=True) or method == "sor"


def test_born_identity():
    scene, s = small_scene(t=0.3)
    sysm = coupling.assemble(scene, s)
    partial = np.zeros_like(sysm.c)
    term = sysm.c.copy()
    for k in range(1, 11):
        partial = partial + term
        term = sysm.M @ term
        rep = coupling.solve_jacobi(sysm, max_iters=k, tol=0.0)
        assert np.linalg.norm(rep.solution - partial) <= 1e-14 * np.linalg.norm(partial)


def test_sor_one_equals_gauss_seidel():
    scene, s = small_scene(t=0.3, J=4)
    sysm = coupling.assemble(scene, s)
    for k in range(1, 8):
        a = coupling.solve_sor(sysm, 1.0, max_iters=k, tol=0.0).solution
        b = coupling.solve_gauss_seidel(sysm, max_iters=k, tol=0.0).solution
        np.testing.assert_array_equal(a, b)


def test_multi_beam_columns_are_independent():
    scene, _ = small_scene()
    rng = np.random.default_rng(4)
    S = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    both = coupling.solve_direct(coupling.assemble(scene, S)).solution
    for col in range(3):
        one = coupling.solve_direct(coupling.assemble(scene, S[:, col])).solution
        np.testing.assert_allclose(both[:, col], one, rtol=1e-12, atol=1e-15)


def test_single_scatterer_has_no_coupling():
    scene, s = small_scene(J=1)
    sysm = coupling.assemble(scene, s)
    b = coupling.solve_direct(sysm).solution
    np.testing.assert_allclose(b, sysm.T[0] @ sysm.Hs[0] @ s)


def test_spectral_radius_against_eigvals():
    scene, s = small_scene(t=0.5, J=4)
    sysm = coupling.assemble(scene, s)
    for which, omega in (("jacobi", 1.0), ("gauss_seidel", 1.0), ("sor", 0.5)):
        G = coupling.iteration_matrix(sysm, which, omega)
        ref = np.max(np.abs(np.linalg.eigvals(G)))
        assert coupling.spectral_radius(sysm, which, omega) == pytest.approx(ref, rel=1e-6)


def test_divergence_is_flagged():
    scene, s = small_scene(t=40.0, J=4)
    sysm = coupling.assemble(scene, s)
    assert coupling.spectral_radius(sysm) > 1
    rep = coupling.solve_jacobi(sysm, max_iters=500, tol=0.0)
    assert rep.diverged and rep.residual_history[-1] > coupling.DIVERGENCE_FACTOR


def test_errors():
    scene, s = small_scene(J=2)
    scene.scatterers[1].anchor = scene.scatterers[0].position.copy()
    with pytest.raises(ValueError, match="coincide"):
        coupling.assemble(scene, s)
    scene, s = small_scene()
    with pytest.raises(ValueError):
        coupling.assemble(scene, np.ones(9))
    with pytest.raises(ValueError):
        coupling.solve_sor(coupling.assemble(scene, s), 2.0)
    with pytest.raises(ValueError):
        coupling.solve(coupling.assemble(scene, s), "cg")


def test_singular_system_raises():
    # choose T so that I - M is exactly singular for two scatterers
    scene, s = small_scene(J=2, L=0)
    sysm = coupling.assemble(scene, s)
    # det(I - M) = 1 - t0 t1 h01 h10
    t = 1.0 / (sysm.H[0, 1][0, 0] * sysm.H[1, 0][0, 0])
    scene = scene.with_t_blocks([np.array([[t]]), np.array([[1.0]])])
    with pytest.raises(coupling.SolverError):
        coupling.solve_direct(coupling.assemble(scene, s))


def test_convergence_csv(tmp_path):
    scene, s = small_scene(t=0.2)
    sysm = coupling.assemble(scene, s)
    reps = [coupling.solve_jacobi(sysm, 3, 0.0), coupling.solve_sor(sysm, 0.5, 2, 0.0)]
    coupling.write_convergence_csv(tmp_path / "c.csv", reps)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "iteration,method,residual"
    assert len(lines) == 6
