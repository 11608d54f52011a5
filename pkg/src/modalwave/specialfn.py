"""Scalar special functions for scalar spherical-wave expansions.

Spherical Bessel / Neumann / Hankel functions, orthonormal complex spherical
harmonics (Condon-Shortley phase) and Wigner-3j symbols.  Every scalar entry
point has a vectorised ``*_all`` companion returning all orders up to a
maximum at once; the higher layers only use the vectorised forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_ORDER = 128

_FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class SphericalPoint:
    """Point in spherical coordinates (theta from +z, phi in [0, 2*pi))."""

    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if not self.r >= 0.0:
            raise ValueError(f"radius must be >= 0, got {self.r}")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))

    @classmethod
    def from_cartesian(cls, xyz) -> "SphericalPoint":
        r, theta, phi = cart_to_sph(np.asarray(xyz, dtype=float))
        return cls(float(r), float(theta), float(phi))

    def to_cartesian(self) -> np.ndarray:
        return sph_to_cart(self.r, self.theta, self.phi)


def cart_to_sph(xyz):
    """Convert ``(..., 3)`` Cartesian points to ``(r, theta, phi)`` arrays.

    The origin maps to ``theta = phi = 0``; phi is wrapped into ``[0, 2*pi)``.
    """
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    rho = np.hypot(x, y)
    r = np.hypot(rho, z)
    theta = np.arctan2(rho, z)
    phi = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    return r, theta, phi


def sph_to_cart(r, theta, phi):
    r, theta, phi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, theta, phi)))
    st = np.sin(theta)
    return np.stack([r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)], axis=-1)


# --------------------------------------------------------------------------
# radial functions


def _check_order(n):
    if int(n) != n or n < 0:
        raise ValueError(f"order must be a nonnegative integer, got {n}")
    if n > MAX_ORDER:
        raise ValueError(f"order {n} exceeds MAX_ORDER={MAX_ORDER}")
    return int(n)


def spherical_jn_all(nmax: int, x) -> np.ndarray:
    """Return ``j_0(x) .. j_nmax(x)`` stacked along a new last axis.

    Upward recurrence where it is stable (``x > nmax``), Miller's downward
    recurrence normalised against ``j_0`` / ``j_1`` elsewhere.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise ValueError("spherical Bessel argument must be finite and >= 0")
    out = np.zeros(x.shape + (nmax + 1,))
    flat_x = x.ravel()
    flat = out.reshape(-1, nmax + 1)

    zero = flat_x == 0.0
    flat[zero, 0] = 1.0

    big = flat_x > nmax
    if np.any(big):
        xb = flat_x[big]
        jb = np.empty((xb.size, nmax + 1))
        jb[:, 0] = np.sin(xb) / xb
        if nmax >= 1:
            jb[:, 1] = np.sin(xb) / xb**2 - np.cos(xb) / xb
        for n in range(1, nmax):
            jb[:, n + 1] = (2 * n + 1) / xb * jb[:, n] - jb[:, n - 1]
        flat[big] = jb

    small = ~zero & ~big
    if np.any(small):
        flat[small] = _miller_jn(nmax, flat_x[small])
    return out


def _miller_jn(nmax, x):
    keep = max(nmax, 1)
    start = keep + int(math.sqrt(40.0 * keep)) + 16
    f_next = np.zeros_like(x)
    f_cur = np.full_like(x, 1e-300)
    vals = np.zeros((x.size, keep + 1))
    for n in range(start, 0, -1):
        f_prev = (2 * n + 1) / x * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        # rescale on the fly; already stored orders are rescaled with it
        big = np.abs(f_cur) > 1e250
        if np.any(big):
            f_cur[big] *= 1e-250
            f_next[big] *= 1e-250
            vals[big] *= 1e-250
        if n - 1 <= keep:
            vals[:, n - 1] = f_cur
    j0 = np.sin(x) / x
    j1 = np.sin(x) / x**2 - np.cos(x) / x
    use0 = np.abs(j0) >= np.abs(j1)
    scale = np.where(use0, j0, j1) / np.where(use0, vals[:, 0], vals[:, 1])
    return (vals * scale[:, None])[:, : nmax + 1]


def spherical_yn_all(nmax: int, x) -> np.ndarray:
    """Return ``y_0(x) .. y_nmax(x)``; upward recurrence is stable for y."""
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("spherical Neumann argument must be finite and > 0")
    out = np.empty(x.shape + (nmax + 1,))
    out[..., 0] = -np.cos(x) / x
    if nmax >= 1:
        out[..., 1] = -np.cos(x) / x**2 - np.sin(x) / x
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, nmax):
            out[..., n + 1] = (2 * n + 1) / x * out[..., n] - out[..., n - 1]
    return out


def spherical_h1_all(nmax: int, x) -> np.ndarray:
    """Spherical Hankel functions of the first kind, ``h_n = j_n + i y_n``."""
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("spherical Hankel function is singular at x <= 0")
    return spherical_jn_all(nmax, x) + 1j * spherical_yn_all(nmax, x)


def radial_derivative(f: np.ndarray, x) -> np.ndarray:
    """Derivative of a stacked radial family ``f_0..f_N`` (j, y or h) at x.

    Uses ``f_0' = -f_1`` and ``f_n' = f_{n-1} - (n+1) f_n / x``; the last
    order is therefore lost and the result has one order less than ``f``.
    """
    x = np.asarray(x, dtype=float)[..., None]
    n = np.arange(f.shape[-1] - 1)
    d = np.empty(f.shape[:-1] + (f.shape[-1] - 1,), dtype=f.dtype)
    d[..., 0] = -f[..., 1]
    d[..., 1:] = f[..., :-2] - (n[1:] + 1) / x * f[..., 1:-1]
    return d


def spherical_bessel_j(l: int, x: float) -> float:
    l = _check_order(l)
    return float(spherical_jn_all(l, float(x))[l])


def spherical_bessel_y(n: int, x: float) -> float:
    n = _check_order(n)
    return float(spherical_yn_all(n, float(x))[n])


def spherical_hankel1(n: int, x: float) -> complex:
    n = _check_order(n)
    return complex(spherical_h1_all(n, float(x))[n])


# --------------------------------------------------------------------------
# angular functions


def _flat(l, m):
    return l * l + l + m


def legendre_normalized_all(lmax: int, theta) -> np.ndarray:
    """Normalised associated Legendre factors for ``m >= 0``.

    Returns ``P[..., flat(l, m)]`` such that ``Y_l^m = P * exp(i m phi)`` for
    ``m >= 0`` (orthonormal, Condon-Shortley phase).  Negative-m slots are
    left at zero.  Uses ``sin(theta)`` directly, so the poles need no special
    treatment.
    """
    theta = np.asarray(theta, dtype=float)
    ct = np.cos(theta)
    st = np.sin(theta)
    P = np.zeros(theta.shape + ((lmax + 1) ** 2,))
    pmm = np.full(theta.shape, 1.0 / math.sqrt(_FOUR_PI))
    for m in range(lmax + 1):
        if m > 0:
            pmm = -math.sqrt((2 * m + 1) / (2 * m)) * st * pmm
        P[..., _flat(m, m)] = pmm
        if m + 1 > lmax:
            break
        p1 = math.sqrt(2 * m + 3) * ct * pmm
        P[..., _flat(m + 1, m)] = p1
        p2, p1 = pmm, p1
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            p = a * (ct * p1 - b * p2)
            P[..., _flat(l, m)] = p
            p2, p1 = p1, p
    return P


def sph_harm_all(lmax: int, theta, phi) -> np.ndarray:
    """All ``Y_l^m(theta, phi)`` with ``l <= lmax`` in flat ``l*l+l+m`` order."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta, phi = np.broadcast_arrays(theta, phi)
    P = legendre_normalized_all(lmax, theta)
    Y = np.zeros(P.shape, dtype=complex)
    for m in range(lmax + 1):
        e = np.exp(1j * m * phi)
        sign = -1.0 if m % 2 else 1.0
        for l in range(m, lmax + 1):
            pos = P[..., _flat(l, m)] * e
            Y[..., _flat(l, m)] = pos
            if m:
                Y[..., _flat(l, -m)] = sign * np.conj(pos)
    return Y


def sph_harm(l: int, m: int, theta: float, phi: float) -> complex:
    """Orthonormal complex spherical harmonic ``Y_l^m`` (Condon-Shortley)."""
    l = _check_order(l)
    if abs(m) > l:
        raise ValueError(f"|m| must not exceed l, got l={l}, m={m}")
    return complex(sph_harm_all(l, theta, phi)[_flat(l, m)])


# --------------------------------------------------------------------------
# Wigner 3j


@lru_cache(maxsize=None)
def _log_factorial(n: int) -> float:
    return math.lgamma(n + 1)


def wigner3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner-3j symbol for integer arguments via the Racah single sum.

    Returns exactly ``0.0`` whenever a selection rule fails.  Terms are
    accumulated as ``exp(log-factorial sums)`` scaled by the largest term.
    """
    if m1 + m2 + m3 != 0:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if j3 < abs(j1 - j2) or j3 > j1 + j2:
        return 0.0
    if m1 == m2 == m3 == 0 and (j1 + j2 + j3) % 2:
        return 0.0
    lf = _log_factorial
    log_pref = 0.5 * (
        lf(j1 + j2 - j3) + lf(j1 - j2 + j3) + lf(-j1 + j2 + j3) - lf(j1 + j2 + j3 + 1)
        + lf(j1 + m1) + lf(j1 - m1) + lf(j2 + m2) + lf(j2 - m2) + lf(j3 + m3) + lf(j3 - m3)
    )
    tmin = max(0, j2 - j3 - m1, j1 - j3 + m2)
    tmax = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    if tmin > tmax:
        return 0.0
    logs = []
    signs = []
    for t in range(tmin, tmax + 1):
        logs.append(-(lf(t) + lf(j3 - j2 + t + m1) + lf(j3 - j1 + t - m2)
                      + lf(j1 + j2 - j3 - t) + lf(j1 - t - m1) + lf(j2 - t + m2)))
        signs.append(-1.0 if t % 2 else 1.0)
    top = max(logs)
    total = math.fsum(s * math.exp(v - top) for s, v in zip(signs, logs))
    phase = -1.0 if (j1 - j2 - m3) % 2 else 1.0
    return phase * total * math.exp(top + log_pref)
