"""Mode indexing and evaluation of outgoing / regular spherical-wave bases.

Modes ``(l, p)`` with ``|p| <= l`` are flattened as ``l*l + l + p`` so a
truncation order ``L`` owns the contiguous slice ``[0, (L+1)**2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .specialfn import (
    SphericalPoint,
    cart_to_sph,
    spherical_h1_all,
    spherical_jn_all,
    sph_harm_all,
)


@dataclass(frozen=True)
class ModeIndex:
    l: int
    p: int

    def __post_init__(self):
        if self.l < 0 or abs(self.p) > self.l:
            raise ValueError(f"invalid mode (l={self.l}, p={self.p})")

    @property
    def flat(self) -> int:
        return mode_flatten(self.l, self.p)


def mode_flatten(l: int, p: int) -> int:
    if l < 0 or abs(p) > l:
        raise ValueError(f"invalid mode (l={l}, p={p}): need |p| <= l")
    return l * l + l + p


def mode_unflatten(index: int) -> tuple[int, int]:
    if index < 0:
        raise ValueError(f"flat mode index must be >= 0, got {index}")
    l = int(np.sqrt(index))
    # guard against sqrt rounding for large indices
    while l * l > index:
        l -= 1
    while (l + 1) ** 2 <= index:
        l += 1
    return l, index - l * l - l


def n_modes(order: int) -> int:
    return (order + 1) ** 2


def order_of(size: int) -> int:
    """Truncation order of a coefficient vector with ``size`` entries."""
    order = int(round(np.sqrt(size))) - 1
    if order < 0 or (order + 1) ** 2 != size:
        raise ValueError(f"coefficient length {size} is not a perfect square")
    return order


@lru_cache(maxsize=None)
def degrees(order: int) -> np.ndarray:
    """Degree ``l`` of every flat slot up to ``order`` (read-only)."""
    out = np.array([l for l in range(order + 1) for _ in range(2 * l + 1)], dtype=int)
    out.flags.writeable = False
    return out


@dataclass
class ModalVector:
    """Complex modal coefficients over a truncated mode set."""

    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex).ravel()
        order_of(self.coefficients.size)

    @property
    def truncation(self) -> int:
        return order_of(self.coefficients.size)

    @classmethod
    def zeros(cls, order: int) -> "ModalVector":
        return cls(np.zeros(n_modes(order), dtype=complex))

    @classmethod
    def unit(cls, order: int, l: int, p: int) -> "ModalVector":
        c = np.zeros(n_modes(order), dtype=complex)
        c[mode_flatten(l, p)] = 1.0
        return cls(c)

    def __getitem__(self, lp):
        return self.coefficients[mode_flatten(*lp)]


# --------------------------------------------------------------------------
# vectorised bases


def _as_points(points):
    if isinstance(points, SphericalPoint):
        return points.to_cartesian()
    return np.asarray(points, dtype=float)


def outgoing_basis(order: int, k: float, points) -> np.ndarray:
    """``h_l(k r) Y_l^p`` for all modes, shape ``points.shape[:-1] + (n_modes,)``."""
    r, theta, phi = cart_to_sph(_as_points(points))
    if np.any(r <= 0):
        raise ValueError("outgoing basis is singular at r = 0 (point on an expansion center)")
    h = spherical_h1_all(order, k * r)
    return h[..., degrees(order)] * sph_harm_all(order, theta, phi)


def regular_basis(order: int, k: float, points) -> np.ndarray:
    """``j_l(k r) Y_l^p`` for all modes; finite at the origin."""
    r, theta, phi = cart_to_sph(_as_points(points))
    j = spherical_jn_all(order, k * r)
    return j[..., degrees(order)] * sph_harm_all(order, theta, phi)


@lru_cache(maxsize=None)
def _ladder_tables(order: int):
    """Index/weight tables mapping order+1 basis values to Cartesian derivatives.

    For any spherical-Bessel family ``psi_l^m = f_l(kr) Y_l^m``::

        d_z psi_l^m        = k [A(l,m) psi_{l-1}^m - A(l+1,m) psi_{l+1}^m]
        (d_x + i d_y) psi  = k [B psi_{l-1}^{m+1} + C psi_{l+1}^{m+1}]
        (d_x - i d_y) psi  = -k [D psi_{l-1}^{m-1} + E psi_{l+1}^{m-1}]
    """
    n = n_modes(order)
    src = {"z": [], "p": [], "m": []}
    for l in range(order + 1):
        for m in range(-l, l + 1):
            i = l * l + l + m
            terms_z = []
            if l >= 1 and abs(m) <= l - 1:
                terms_z.append(((l - 1) ** 2 + l - 1 + m, np.sqrt((l * l - m * m) / ((2 * l - 1) * (2 * l + 1)))))
            terms_z.append(((l + 1) ** 2 + l + 1 + m, -np.sqrt(((l + 1) ** 2 - m * m) / ((2 * l + 1) * (2 * l + 3)))))
            terms_p = []
            if l >= 1 and abs(m + 1) <= l - 1:
                terms_p.append(((l - 1) ** 2 + l - 1 + m + 1, np.sqrt((l - m) * (l - m - 1) / ((2 * l - 1) * (2 * l + 1)))))
            terms_p.append(((l + 1) ** 2 + l + 1 + m + 1, np.sqrt((l + m + 1) * (l + m + 2) / ((2 * l + 1) * (2 * l + 3)))))
            terms_m = []
            if l >= 1 and abs(m - 1) <= l - 1:
                terms_m.append(((l - 1) ** 2 + l - 1 + m - 1, -np.sqrt((l + m) * (l + m - 1) / ((2 * l - 1) * (2 * l + 1)))))
            terms_m.append(((l + 1) ** 2 + l + 1 + m - 1, -np.sqrt((l - m + 1) * (l - m + 2) / ((2 * l + 1) * (2 * l + 3)))))
            for key, terms in (("z", terms_z), ("p", terms_p), ("m", terms_m)):
                for j, w in terms:
                    src[key].append((i, j, w))
    n_big = n_modes(order + 1)
    mats = {}
    for key, entries in src.items():
        M = np.zeros((n_big, n))
        for i, j, w in entries:
            M[j, i] += w
        mats[key] = M
    return mats


def _basis_gradient(values_up: np.ndarray, order: int, k: float) -> np.ndarray:
    mats = _ladder_tables(order)
    dz = k * (values_up @ mats["z"])
    dp = k * (values_up @ mats["p"])
    dm = k * (values_up @ mats["m"])
    dx = 0.5 * (dp + dm)
    dy = -0.5j * (dp - dm)
    return np.stack([dx, dy, dz], axis=-2)


def outgoing_basis_grad(order: int, k: float, points, with_values: bool = True):
    """Cartesian gradient of every outgoing basis function.

    Returns ``(values, grad)`` with ``grad`` shaped ``(..., 3, n_modes)``; the
    derivative is taken with respect to the evaluation point.
    """
    up = outgoing_basis(order + 1, k, points)
    grad = _basis_gradient(up, order, k)
    if with_values:
        return up[..., : n_modes(order)], grad
    return grad


def regular_basis_grad(order: int, k: float, points):
    up = regular_basis(order + 1, k, points)
    return up[..., : n_modes(order)], _basis_gradient(up, order, k)


# --------------------------------------------------------------------------
# scalar evaluation


def eval_outgoing(mode: ModeIndex, k: float, point) -> complex:
    """``h_l(k r) Y_l^p`` at a single point (Cartesian array or SphericalPoint)."""
    return complex(outgoing_basis(mode.l, k, point)[..., mode.flat])


def eval_regular(mode: ModeIndex, k: float, point) -> complex:
    return complex(regular_basis(mode.l, k, point)[..., mode.flat])


def eval_source_field(s, k: float, points):
    """Field radiated by source coefficients ``s`` at points relative to the source."""
    coeffs = s.coefficients if isinstance(s, ModalVector) else np.asarray(s, dtype=complex)
    basis = outgoing_basis(order_of(coeffs.size), k, points)
    out = basis @ coeffs
    return complex(out) if np.ndim(out) == 0 else out
