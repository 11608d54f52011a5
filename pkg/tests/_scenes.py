"""Seeded scenes shared by the unit and acceptance tests."""

import numpy as np

from modalwave.coupling import assemble, spectral_radius
from modalwave.modal import n_modes
from modalwave.scene import random_scene


def weakly_coupled_scenes(count=20, rho_max=0.9, seed=1234):
    """``count`` scenes cycling J over 2..20 and L over 0..3, rescaled until rho(M) < rho_max.

    Yields ``(scene, s, rho)``.
    """
    Js = list(range(2, 21))
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        J = Js[i % len(Js)]
        L = i % 4
        half = 1.5 * max(2.0, J ** (1 / 3))
        scene = random_scene(rng, J, [-half] * 3, [half] * 3, L, 1.0, [0.0, 0.0, 4 * half], L,
                             t_scale=1.0, min_separation=0.8)
        s = rng.standard_normal(n_modes(L)) + 1j * rng.standard_normal(n_modes(L))
        rho = spectral_radius(assemble(scene, s), "jacobi")
        while rho >= rho_max:
            scene = scene.with_t_blocks(scene.t_blocks * (0.8 * rho_max / rho))
            rho = spectral_radius(assemble(scene, s), "jacobi")
        yield scene, s, rho


def gaussian_elimination(A, b):
    """Dense solve with partial pivoting, written out in full."""
    A = np.array(A, dtype=complex)
    b = np.array(b, dtype=complex)
    n = A.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        f = A[col + 1:, col] / A[col, col]
        A[col + 1:, col:] -= np.outer(f, A[col, col:])
        b[col + 1:] -= f[:, None] * b[col] if b.ndim > 1 else f * b[col]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - A[row, row + 1:] @ x[row + 1:]) / A[row, row]
    return x


def gradient_problem(seed, J=3, L=1, n_beams=2, n_rx=20, diagonal=True):
    """Small fitting problem with perturbed parameters so the loss is not stationary.

    Returns ``(params, template, S, measurements)``.
    """
    from modalwave.inverse import FitParameters, MeasurementSet, forward_predict

    rng = np.random.default_rng([seed, 99])
    truth = random_scene(rng, J, [-2, -2, -1], [2, 2, 1], L, 1.0, [0.0, 0.0, 6.0], L,
                         t_scale=0.4, min_separation=1.0)
    ns = n_modes(L)
    S = (rng.standard_normal((ns, n_beams)) + 1j * rng.standard_normal((ns, n_beams))) / np.sqrt(2)
    pts = np.column_stack([rng.uniform(-4, 4, n_rx), rng.uniform(-4, 4, n_rx), np.full(n_rx, -3.0)])
    true_params = FitParameters.from_scene(truth, diagonal=diagonal)
    meas = MeasurementSet.from_fields(pts, forward_predict(true_params, truth, S, pts))
    p = true_params.copy()
    p.t = p.t + 0.1 * (rng.standard_normal(p.t.shape) + 1j * rng.standard_normal(p.t.shape))
    p.offsets = p.offsets + rng.uniform(-0.1, 0.1, p.offsets.shape)
    return p, truth, S, meas
