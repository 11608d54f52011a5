"""Addition-theorem translation of outgoing expansions into regular ones.

An outgoing mode about one origin, evaluated at ``r = d + r'`` with
``|r'| < |d|``, is rewritten as a sum of regular modes about ``d``::

    u_n^m(r) = sum_{l,p} a_{nm}^{lp}(d) v_l^p(r - d)

Each coefficient is a finite sum over ``q`` of ``conj(Y_q^{p-m}(d)) h_q(k|d|)``
times constant Gaunt-type weights.  Because ``conj(Y_q^mu) h_q = (-1)^mu
u_q^{-mu}``, a whole translation matrix is a fixed sparse linear map applied
to the outgoing basis evaluated at ``d``; the map is tabulated once per
``(L_dst, N_src)`` and reused for every displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .modal import ModeIndex, n_modes, outgoing_basis, outgoing_basis_grad, regular_basis
from .specialfn import wigner3j

# relative margin for the strict |r'| < |d| convergence condition
CONVERGENCE_MARGIN = 1e-9


@lru_cache(maxsize=None)
def translation_weights(L_dst: int, N_src: int) -> sp.csr_matrix:
    """Sparse map from outgoing-basis values at ``d`` to flattened matrix entries.

    Shape ``((L_dst + N_src + 1)**2, n_modes(L_dst) * n_modes(N_src))``; column
    ``row * n_modes(N_src) + col`` holds the coefficient for regular mode
    ``row = flat(l, p)`` and outgoing mode ``col = flat(n, m)``.
    """
    ncol = n_modes(N_src)
    rows, cols, vals = [], [], []
    for l in range(L_dst + 1):
        for p in range(-l, l + 1):
            row = l * l + l + p
            for n in range(N_src + 1):
                for m in range(-n, n + 1):
                    col = n * n + n + m
                    mu = p - m
                    for q in range(abs(n - l), n + l + 1):
                        if (q + l + n) % 2 or abs(mu) > q:
                            continue
                        w3 = wigner3j(n, l, q, m, -p, mu) * wigner3j(n, l, q, 0, 0, 0)
                        if w3 == 0.0:
                            continue
                        w = (4.0 * math.pi * (-1) ** p * 1j ** ((q + l - n) % 4) * w3
                             * math.sqrt((2 * n + 1) * (2 * l + 1) * (2 * q + 1) / (4.0 * math.pi)))
                        # conj(Y_q^mu) h_q == (-1)^mu u_q^{-mu}
                        w *= (-1) ** (mu % 2)
                        rows.append(q * q + q - mu)
                        cols.append(row * ncol + col)
                        vals.append(w)
    W = sp.csr_matrix(
        (np.array(vals, dtype=complex), (rows, cols)),
        shape=(n_modes(L_dst + N_src), n_modes(L_dst) * ncol),
    )
    return W


def _check_displacements(d):
    d = np.asarray(d, dtype=float)
    if np.any(np.linalg.norm(d, axis=-1) == 0.0):
        raise ValueError("coincident expansion centers: translation needs |d| > 0")
    return d


def translation_matrices(L_dst: int, N_src: int, d, k: float) -> np.ndarray:
    """Translation matrices for a stack of displacements ``d`` (shape ``(..., 3)``).

    Returns shape ``d.shape[:-1] + (n_modes(L_dst), n_modes(N_src))``.
    """
    d = _check_displacements(d)
    U = outgoing_basis(L_dst + N_src, k, d)
    W = translation_weights(L_dst, N_src)
    flat = (W.T @ U.reshape(-1, U.shape[-1]).T).T
    return flat.reshape(d.shape[:-1] + (n_modes(L_dst), n_modes(N_src)))


def translation_matrices_grad(L_dst: int, N_src: int, d, k: float):
    """Translation matrices and their derivatives with respect to ``d``.

    Returns ``(H, dH)`` with ``dH`` shaped ``(..., 3, rows, cols)``.
    """
    d = _check_displacements(d)
    U, G = outgoing_basis_grad(L_dst + N_src, k, d)
    W = translation_weights(L_dst, N_src)
    shape = (n_modes(L_dst), n_modes(N_src))
    H = (W.T @ U.reshape(-1, U.shape[-1]).T).T.reshape(d.shape[:-1] + shape)
    dH = (W.T @ G.reshape(-1, G.shape[-1]).T).T.reshape(d.shape[:-1] + (3,) + shape)
    return H, dH


def translation_coefficient(n: int, m: int, l: int, p: int, d, k: float) -> complex:
    """Single coefficient ``a_{nm}^{lp}(d)``, evaluated term by term."""
    if abs(m) > n or abs(p) > l:
        raise ValueError("invalid mode indices")
    d = _check_displacements(d)
    U = outgoing_basis(n + l, k, d)
    total = 0j
    mu = p - m
    for q in range(abs(n - l), n + l + 1):
        if (q + l + n) % 2 or abs(mu) > q:
            continue
        w3 = wigner3j(n, l, q, m, -p, mu) * wigner3j(n, l, q, 0, 0, 0)
        if w3 == 0.0:
            continue
        conj_y_h = (-1) ** (mu % 2) * U[q * q + q - mu]
        total += (4.0 * math.pi * (-1) ** p * 1j ** ((q + l - n) % 4) * w3
                  * math.sqrt((2 * n + 1) * (2 * l + 1) * (2 * q + 1) / (4.0 * math.pi)) * conj_y_h)
    return complex(total)


@dataclass(frozen=True)
class TranslationMatrix:
    """Dense translation matrix: rows are regular modes at the destination."""

    entries: np.ndarray
    displacement: np.ndarray
    k: float

    @property
    def L_dst(self) -> int:
        return int(round(math.sqrt(self.entries.shape[0]))) - 1

    @property
    def N_src(self) -> int:
        return int(round(math.sqrt(self.entries.shape[1]))) - 1

    def __matmul__(self, other):
        return self.entries @ other


def build_translation_matrix(L_dst: int, N_src: int, d, k: float) -> TranslationMatrix:
    d = np.asarray(d, dtype=float).reshape(3)
    return TranslationMatrix(translation_matrices(L_dst, N_src, d, k), d.copy(), float(k))


@dataclass
class AdditionReport:
    max_abs_error: float
    rms_error: float
    abs_error: np.ndarray
    direct: np.ndarray
    expanded: np.ndarray


def in_convergence_region(points, d) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    d = np.asarray(d, dtype=float)
    rel = np.linalg.norm(points - d, axis=-1)
    return rel < np.linalg.norm(d) * (1.0 - CONVERGENCE_MARGIN)


def verify_addition(source_mode: ModeIndex, d, k: float, L: int, eval_points) -> AdditionReport:
    """Compare an outgoing mode at ``eval_points`` with its order-``L`` re-expansion about ``d``.

    ``eval_points`` are absolute positions with the source at the origin.
    Raises ``ValueError`` if any point lies outside the convergence ball.
    """
    pts = np.asarray(eval_points, dtype=float).reshape(-1, 3)
    d = np.asarray(d, dtype=float).reshape(3)
    if not np.all(in_convergence_region(pts, d)):
        raise ValueError("evaluation points must satisfy |r - d| < |d| (addition-theorem convergence region)")
    n, m = source_mode.l, source_mode.p
    direct = outgoing_basis(n, k, pts)[:, source_mode.flat]
    # only column (n, m) of the matrix is needed
    H = translation_matrices(L, n, d, k)[:, source_mode.flat]
    expanded = regular_basis(L, k, pts - d) @ H
    err = np.abs(direct - expanded)
    return AdditionReport(
        max_abs_error=float(err.max()),
        rms_error=float(np.sqrt(np.mean(err**2))),
        abs_error=err,
        direct=direct,
        expanded=expanded,
    )
