"""Beam patterns, spherical-harmonic beam fitting and beam-space extrapolation.

A directional pattern ``F(theta, phi)`` is projected onto ``Y_l^m`` up to
``L_max`` at a far-field radius ``r0``; dividing by ``h_l(k r0)`` turns the
angular coefficients into source coefficients ``s``.  Given the per-beam
scattering coefficients ``B`` of a static scene and the matching ``S``, the
Tikhonov-regularised system function ``Q = B S^H (S S^H + mu I)^{-1}`` maps
a new source vector to scattering coefficients.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .coupling import assemble, solve_direct
from .modal import degrees, mode_unflatten, n_modes, order_of
from .specialfn import spherical_h1_all, sph_harm_all

FAR_FIELD_FACTOR = 10.0


class IllPosedError(ValueError):
    """Unregularised system function requested for a singular ``S S^H``."""


@dataclass(frozen=True)
class BeamPattern:
    """Gaussian beam ``A exp(-(k_t dtheta^2 + k_p dphi^2) / sigma^2)``; angles in radians."""

    A: float = 1.0
    k_theta: float = 1.0
    k_phi: float = 1.0
    sigma: float = 0.5
    theta0: float = 0.0
    phi0: float = 0.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("beam amplitude A must be positive")
        if not self.sigma > 0:
            raise ValueError("beam width sigma must be positive")
        if self.k_theta < 0 or self.k_phi < 0:
            raise ValueError("shape factors k_theta, k_phi must be >= 0")

    @classmethod
    def from_degrees(cls, theta0_deg, phi0_deg, A=1.0, k_theta=1.0, k_phi=1.0, sigma=0.5) -> "BeamPattern":
        return cls(float(A), float(k_theta), float(k_phi), float(sigma),
                   math.radians(theta0_deg), math.radians(phi0_deg))

    @classmethod
    def from_dict(cls, d: dict) -> "BeamPattern":
        """Config entry ``{A, k_theta, k_phi, sigma, theta0_deg, phi0_deg}``."""
        missing = [key for key in ("theta0_deg", "phi0_deg") if key not in d]
        if missing:
            raise KeyError(f"beam entry is missing {missing}")
        return cls.from_degrees(d["theta0_deg"], d["phi0_deg"], d.get("A", 1.0), d.get("k_theta", 1.0),
                                d.get("k_phi", 1.0), d.get("sigma", 0.5))

    def to_dict(self) -> dict:
        return {"A": self.A, "k_theta": self.k_theta, "k_phi": self.k_phi, "sigma": self.sigma,
                "theta0_deg": math.degrees(self.theta0), "phi0_deg": math.degrees(self.phi0)}


def wrap_angle(x):
    """Wrap to ``(-pi, pi]``."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


def gaussian_beam(pattern: BeamPattern, theta, phi):
    """Evaluate the pattern; the azimuth difference is wrapped to ``(-pi, pi]``."""
    dt = np.asarray(theta, dtype=float) - pattern.theta0
    dp = wrap_angle(np.asarray(phi, dtype=float) - pattern.phi0)
    return pattern.A * np.exp(-(pattern.k_theta * dt**2 + pattern.k_phi * dp**2) / pattern.sigma**2)


def steering_grid(theta0_deg, phi0_deg, **shape) -> list:
    """Beams steered to every ``(theta0, phi0)`` pair, theta outermost."""
    return [BeamPattern.from_degrees(t, p, **shape) for t in theta0_deg for p in phi0_deg]


# --------------------------------------------------------------------------
# fitting


def far_field_radius(L_max: int, k: float) -> float:
    """Smallest radius accepted by :func:`fit_beam_coefficients`."""
    return FAR_FIELD_FACTOR * (L_max + 1) ** 2 / k


def sphere_quadrature(n_theta: int, n_phi: int):
    """Gauss-Legendre in ``cos(theta)`` times trapezoid in ``phi``.

    Exact for band-limited integrands of degree ``< min(2 n_theta, n_phi)``.
    Returns flattened ``theta, phi, weights``.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.repeat(w, n_phi) * (2.0 * np.pi / n_phi)
    return T.ravel(), P.ravel(), W


def project_pattern(values_fn, L_max: int, n_theta: int | None = None, n_phi: int | None = None) -> np.ndarray:
    """Angular coefficients ``a_l^m = int F conj(Y_l^m) dOmega`` of a callable ``F(theta, phi)``."""
    n_theta = max(2 * (L_max + 1), n_theta or 128)
    n_phi = max(4 * (L_max + 1), n_phi or 256)
    theta, phi, w = sphere_quadrature(n_theta, n_phi)
    F = np.asarray(values_fn(theta, phi))
    Y = sph_harm_all(L_max, theta, phi)
    return (F * w) @ Y.conj()


def fit_beam_coefficients(pattern, L_max: int, r0: float, k: float,
                          n_theta: int | None = None, n_phi: int | None = None) -> np.ndarray:
    """Source coefficients ``s_l^m = a_l^m / h_l(k r0)`` of a beam pattern.

    ``pattern`` is a :class:`BeamPattern` or any callable ``F(theta, phi)``.
    ``r0`` must satisfy ``k r0 >= 10 (L_max + 1)^2``.
    """
    if L_max < 0:
        raise ValueError("L_max must be >= 0")
    floor = FAR_FIELD_FACTOR * (L_max + 1) ** 2
    if not k * r0 >= floor * (1.0 - 1e-12):
        raise ValueError(f"r0 = {r0} is not in the far field: need k*r0 >= {floor:g}, got {k * r0:g}")
    fn = (lambda t, p: gaussian_beam(pattern, t, p)) if isinstance(pattern, BeamPattern) else pattern
    a = project_pattern(fn, L_max, n_theta, n_phi)
    h = spherical_h1_all(L_max, k * r0)
    return a / h[degrees(L_max)]


def synthesize_pattern(s, k: float, r0: float, theta, phi) -> np.ndarray:
    """Angular profile ``sum s_l^m h_l(k r0) Y_l^m(theta, phi)``."""
    s = np.asarray(s, dtype=complex)
    L = order_of(s.size)
    a = s * spherical_h1_all(L, k * r0)[degrees(L)]
    return sph_harm_all(L, theta, phi) @ a


def pattern_deviation(pattern: BeamPattern, s, k: float, r0: float, n_theta: int = 181, n_phi: int = 361) -> float:
    """Maximum ``|F - F_synth|`` over a uniform angular grid (poles included)."""
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = np.linspace(-np.pi, np.pi, n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    diff = gaussian_beam(pattern, T, P) - synthesize_pattern(s, k, r0, T, P)
    return float(np.max(np.abs(diff)))


# --------------------------------------------------------------------------
# system function


@dataclass
class BeamSystem:
    B: np.ndarray
    S: np.ndarray
    Q_matrix: np.ndarray
    mu: float
    cond_S: float

    @property
    def q(self) -> int:
        return self.S.shape[1]


def condition_number(S) -> float:
    sv = np.linalg.svd(np.asarray(S), compute_uv=False)
    if sv.size == 0 or sv[-1] == 0.0:
        return math.inf
    return float(sv[0] / sv[-1])


def build_system_function(B, S, mu: float) -> BeamSystem:
    """``Q = B S^H (S S^H + mu I)^{-1}``.

    Raises :class:`IllPosedError` when ``mu == 0`` and ``S S^H`` is
    numerically singular (including fewer beams than source modes).
    """
    B = np.asarray(B, dtype=complex)
    S = np.asarray(S, dtype=complex)
    if B.ndim != 2 or S.ndim != 2 or B.shape[1] != S.shape[1]:
        raise ValueError(f"B {B.shape} and S {S.shape} must be matrices with one column per beam")
    if mu < 0:
        raise ValueError("mu must be >= 0")
    cond = condition_number(S)
    ns = S.shape[0]
    G = S @ S.conj().T + mu * np.eye(ns)
    if mu == 0:
        sv = np.linalg.svd(S, compute_uv=False)
        rank_ok = S.shape[1] >= ns and sv[-1] > sv[0] * ns * np.finfo(float).eps
        if not rank_ok:
            raise IllPosedError(f"S S^H is singular without regularisation (cond(S) = {cond:.3e})")
    # G is Hermitian, so Q^H = G^{-1} (B S^H)^H
    Q = np.linalg.solve(G, (B @ S.conj().T).conj().T).conj().T
    return BeamSystem(B, S, Q, float(mu), cond)


def extrapolate_beam(Q_matrix, s_new) -> np.ndarray:
    """Scattering coefficients ``Q s_new`` (vector or one column per beam)."""
    Q = np.asarray(Q_matrix)
    s_new = np.asarray(s_new, dtype=complex)
    if s_new.shape[0] != Q.shape[1]:
        raise ValueError(f"source vector has {s_new.shape[0]} rows, system function expects {Q.shape[1]}")
    return Q @ s_new


def physical_system_function(scene) -> np.ndarray:
    """``(I - T H)^{-1} T H_s`` of a scene, shape ``(J n, n_modes(N))``."""
    ns = n_modes(scene.source_truncation)
    return solve_direct(assemble(scene, np.eye(ns, dtype=complex))).solution


# --------------------------------------------------------------------------
# metrics and io


def mse(pred, truth) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(truth)) ** 2))


def mae(pred, truth) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(truth))))


def nmse(pred, truth) -> float:
    truth = np.asarray(truth)
    den = np.sum(np.abs(truth) ** 2)
    if den == 0:
        raise ValueError("NMSE undefined for an all-zero reference")
    return float(np.sum(np.abs(np.asarray(pred) - truth) ** 2) / den)


def coefficient_rows(s):
    s = np.asarray(s, dtype=complex).ravel()
    order_of(s.size)
    for i, v in enumerate(s):
        l, p = mode_unflatten(i)
        yield l, p, v


def write_coefficients_csv(path, s) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l", "p", "re", "im"])
        for l, p, v in coefficient_rows(s):
            w.writerow([l, p, f"{v.real:.17g}", f"{v.imag:.17g}"])


def read_coefficients_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    size = max(int(r["l"]) for r in rows) + 1
    s = np.zeros(size * size, dtype=complex)
    for r in rows:
        l, p = int(r["l"]), int(r["p"])
        s[l * l + l + p] = float(r["re"]) + 1j * float(r["im"])
    return s
