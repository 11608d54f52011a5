"""Scene model, receiver-side field synthesis and radiomaps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import coupling
from .modal import n_modes, order_of, outgoing_basis

COMPONENTS = ("direct", "scattered", "total")


@dataclass
class Scatterer:
    """One scatterer: anchor, learnable offset and its scattering (T) matrix."""

    anchor: np.ndarray
    t_matrix: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    diagonal: bool = False

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float).reshape(3)
        self.offset = np.asarray(self.offset, dtype=float).reshape(3)
        t = np.asarray(self.t_matrix, dtype=complex)
        if t.ndim == 1:
            t = np.diag(t)
            self.diagonal = True
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"T-matrix must be square, got shape {t.shape}")
        order_of(t.shape[0])
        if self.diagonal and np.any(t[~np.eye(t.shape[0], dtype=bool)]):
            raise ValueError("diagonal scatterer has nonzero off-diagonal T entries")
        self.t_matrix = t

    @property
    def truncation(self) -> int:
        return order_of(self.t_matrix.shape[0])

    @property
    def position(self) -> np.ndarray:
        return self.anchor + self.offset


@dataclass
class Scene:
    wavelength: float
    source_position: np.ndarray
    source_truncation: int
    scatterers: list
    L: int | None = None

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        self.source_position = np.asarray(self.source_position, dtype=float).reshape(3)
        if self.source_truncation < 0:
            raise ValueError("source truncation must be >= 0")
        orders = {sc.truncation for sc in self.scatterers}
        if self.L is None:
            if len(orders) > 1:
                raise ValueError(f"scatterers mix truncation orders {sorted(orders)}")
            self.L = orders.pop() if orders else 0
        elif orders and orders != {self.L}:
            raise ValueError(f"all scatterers must use truncation L={self.L}, found {sorted(orders)}")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def J(self) -> int:
        return len(self.scatterers)

    @property
    def positions(self) -> np.ndarray:
        if not self.scatterers:
            return np.zeros((0, 3))
        return np.array([sc.position for sc in self.scatterers])

    @property
    def t_blocks(self) -> np.ndarray:
        n = n_modes(self.L)
        if not self.scatterers:
            return np.zeros((0, n, n), dtype=complex)
        return np.array([sc.t_matrix for sc in self.scatterers])

    def with_t_blocks(self, blocks, offsets=None) -> "Scene":
        offsets = [sc.offset for sc in self.scatterers] if offsets is None else offsets
        new = [replace(sc, t_matrix=np.asarray(t), offset=np.asarray(o, dtype=float))
               for sc, t, o in zip(self.scatterers, blocks, offsets)]
        return replace(self, scatterers=new)


@dataclass(frozen=True)
class PlaneGrid:
    """Axis-aligned rectangular receiver grid.

    ``plane_axis`` is the normal of the plane; the two remaining axes vary,
    the first one fastest.  The fixed coordinate is taken from ``corner_min``.
    """

    corner_min: tuple
    corner_max: tuple
    nx: int
    ny: int
    plane_axis: str = "z"

    def points(self) -> np.ndarray:
        lo = np.asarray(self.corner_min, dtype=float)
        hi = np.asarray(self.corner_max, dtype=float)
        axis = "xyz".index(self.plane_axis)
        a, b = [i for i in range(3) if i != axis]
        u = np.linspace(lo[a], hi[a], self.nx)
        v = np.linspace(lo[b], hi[b], self.ny)
        pts = np.empty((self.ny, self.nx, 3))
        pts[..., axis] = lo[axis]
        pts[..., a] = u[None, :]
        pts[..., b] = v[:, None]
        return pts.reshape(-1, 3)


@dataclass
class Radiomap:
    points: np.ndarray
    direct: np.ndarray
    scattered: np.ndarray
    component: str = "total"

    @property
    def total(self) -> np.ndarray:
        return self.direct + self.scattered

    def values(self, component: str | None = None) -> np.ndarray:
        component = component or self.component
        if component not in COMPONENTS:
            raise ValueError(f"unknown component {component!r}")
        return getattr(self, component)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "sor"
    omega: float = 0.5
    max_iters: int = 10
    tol: float = 0.0


class SolverDivergence(RuntimeError):
    def __init__(self, report):
        super().__init__(f"{report.method} solver diverged after {report.iterations} iterations")
        self.report = report


# --------------------------------------------------------------------------
# fields


def _coeffs(s):
    return np.asarray(getattr(s, "coefficients", s), dtype=complex)


def eval_direct(scene: Scene, s, r) -> np.ndarray:
    """Line-of-sight field of the source at points ``r`` (``(..., 3)``)."""
    s = _coeffs(s)
    rel = np.asarray(r, dtype=float) - scene.source_position
    return outgoing_basis(order_of(s.shape[0]), scene.k, rel) @ s


def eval_scattered(scene: Scene, b, r) -> np.ndarray:
    """Scattered field ``sum_j sum_lp b_j,lp u_lp(r - r_j)``.

    ``b`` is the stacked coefficient vector (``(J*n,)`` or ``(J*n, n_beams)``).
    """
    r = np.asarray(r, dtype=float)
    b = np.asarray(b, dtype=complex)
    n = n_modes(scene.L)
    extra = b.shape[1:]
    bj = b.reshape((scene.J, n) + extra)
    out = np.zeros(r.shape[:-1] + extra, dtype=complex)
    if scene.J == 0:
        return out
    rel = r[..., None, :] - scene.positions
    U = outgoing_basis(scene.L, scene.k, rel)  # (..., J, n)
    if not extra:
        return np.einsum("...jn,jn->...", U, bj)
    return np.einsum("...jn,jnb->...b", U, bj)


def solve_scene(scene: Scene, s, solver: SolverConfig = SolverConfig()):
    system = coupling.assemble(scene, s)
    report = coupling.solve(system, solver.method, solver.omega, solver.max_iters, solver.tol)
    if report.diverged:
        raise SolverDivergence(report)
    return system, report


def compute_radiomap(scene: Scene, s, grid, components: str = "total",
                     solver: SolverConfig = SolverConfig()) -> Radiomap:
    """Solve the coupled system once and evaluate fields on the grid."""
    if components not in COMPONENTS:
        raise ValueError(f"unknown component {components!r}")
    pts = grid.points() if hasattr(grid, "points") else np.asarray(grid, dtype=float)
    s = _coeffs(s)
    direct = np.zeros(pts.shape[:-1], dtype=complex)
    scattered = np.zeros(pts.shape[:-1], dtype=complex)
    if components in ("scattered", "total") and scene.J:
        _, report = solve_scene(scene, s, solver)
        scattered = eval_scattered(scene, report.solution, pts)
    if components in ("direct", "total"):
        direct = eval_direct(scene, s, pts)
    return Radiomap(pts, direct, scattered, components)


# --------------------------------------------------------------------------
# virtual scatterers


def sample_ball(rng, count: int, radius: float, min_separation: float = 0.0,
                max_tries: int = 10000) -> np.ndarray:
    """Uniform points in a ball; with ``min_separation`` set, draws are rejected sequentially."""
    if min_separation <= 0:
        v = rng.standard_normal((count, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * radius * rng.random(count)[:, None] ** (1.0 / 3.0)
    out = []
    tries = 0
    while len(out) < count:
        if tries >= max_tries:
            raise ValueError(f"could not place {count} points {min_separation} apart in a ball of radius {radius}")
        tries += 1
        v = rng.standard_normal(3)
        v *= radius * rng.random() ** (1.0 / 3.0) / np.linalg.norm(v)
        if any(np.linalg.norm(v - q) < min_separation for q in out):
            continue
        out.append(v)
    return np.array(out).reshape(count, 3)


def init_t_diag(rng, count: int, order: int, gamma: float) -> np.ndarray:
    """Seeded complex Gaussian diagonal entries with std ``0.1*sqrt(gamma)``."""
    n = n_modes(order)
    z = (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))) / math.sqrt(2.0)
    return 0.1 * math.sqrt(gamma) * z


def expand_virtual_scene(scene: Scene, L2: int, replicas_per_anchor: int,
                         placement_radius: float | None = None, gamma: float = 1.0,
                         seed: int = 0, min_separation: float | None = None) -> Scene:
    """Replace each scatterer by ``replicas_per_anchor`` order-``L2`` virtual ones.

    Replicas share the original anchor; their initial offsets are drawn
    uniformly from a ball of ``placement_radius`` (default a quarter
    wavelength), at least ``min_separation`` apart (default equal to the
    radius) so the initial coupling stays bounded.  A single replica keeps
    a zero offset.
    """
    if L2 > scene.L:
        raise ValueError(f"virtual order L2={L2} must not exceed the scene order {scene.L}")
    if replicas_per_anchor < 1:
        raise ValueError("replicas_per_anchor must be >= 1")
    if placement_radius is None:
        placement_radius = 0.25 * scene.wavelength
    if min_separation is None:
        min_separation = placement_radius
    if replicas_per_anchor > 1 and not placement_radius > 0:
        raise ValueError("placement radius must be > 0 when replicas share an anchor")
    rng = np.random.default_rng(seed)
    count = scene.J * replicas_per_anchor
    t = init_t_diag(rng, count, L2, gamma)
    virtual = []
    for j, sc in enumerate(scene.scatterers):
        if replicas_per_anchor == 1:
            offs = np.zeros((1, 3))
        else:
            offs = sample_ball(rng, replicas_per_anchor, placement_radius, min_separation)
        for r in range(replicas_per_anchor):
            virtual.append(Scatterer(sc.anchor.copy(), t[j * replicas_per_anchor + r], offs[r], diagonal=True))
    out = Scene(scene.wavelength, scene.source_position.copy(), scene.source_truncation, virtual, L2)
    coupling.check_positions(out.positions, out.source_position)
    return out


def random_scene(rng, count: int, corner_min, corner_max, L: int, wavelength: float,
                 source_position, source_truncation: int, t_scale: float = 0.3,
                 min_separation: float | None = None, t_model: str = "phase") -> Scene:
    """Uniformly placed scatterers with seeded diagonal T entries.

    ``t_model="phase"`` gives ``t_scale * exp(i a)``; ``"passive"`` gives the
    lossless form ``t_scale * (exp(i a) - 1) / 2`` whose entries lie in the
    left half-plane.  ``a`` is uniform on ``[0, 2 pi)``.
    """
    if t_model not in ("phase", "passive"):
        raise ValueError(f"unknown T model {t_model!r}")
    lo = np.asarray(corner_min, dtype=float)
    hi = np.asarray(corner_max, dtype=float)
    min_sep = wavelength if min_separation is None else min_separation
    pos = []
    tries = 0
    while len(pos) < count:
        tries += 1
        if tries > 10000 * max(count, 1):
            raise ValueError("could not place scatterers with the requested separation")
        p = lo + (hi - lo) * rng.random(3)
        if all(np.linalg.norm(p - q) >= min_sep for q in pos):
            pos.append(p)
    n = n_modes(L)
    phases = np.exp(2j * np.pi * rng.random((count, n)))
    t = t_scale * (phases if t_model == "phase" else 0.5 * (phases - 1.0))
    scs = [Scatterer(p, t[j], diagonal=True) for j, p in enumerate(pos)]
    return Scene(wavelength, source_position, source_truncation, scs, L)


# --------------------------------------------------------------------------
# serialisation (JSON-compatible dicts; complex numbers as [re, im])


def _cplx(v):
    a = np.asarray(v, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def _pairs(z):
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).tolist()


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _vec3(value, where):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected 3 numbers, got {value!r}") from None
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{where}: expected 3 finite numbers, got {value!r}")
    return a


def _need(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{where}.{key}: required field missing")
    return d[key]


def scatterer_from_dict(d, where="scatterer") -> Scatterer:
    anchor = _vec3(_need(d, "anchor", where), f"{where}.anchor")
    offset = _vec3(d.get("offset", [0, 0, 0]), f"{where}.offset")
    L = _need(d, "truncation", where)
    if not isinstance(L, int) or L < 0:
        raise ConfigError(f"{where}.truncation: expected a nonnegative integer")
    n = n_modes(L)
    if "t_diag" in d:
        t = _cplx(d["t_diag"])
        if t.shape != (n,):
            raise ConfigError(f"{where}.t_diag: expected {n} [re, im] pairs")
        return Scatterer(anchor, t, offset, diagonal=True)
    if "t_full" in d:
        t = _cplx(d["t_full"])
        if t.shape != (n, n):
            raise ConfigError(f"{where}.t_full: expected a {n}x{n} matrix of [re, im] pairs")
        return Scatterer(anchor, t, offset)
    raise ConfigError(f"{where}: one of t_diag / t_full is required")


def scene_from_dict(cfg) -> Scene:
    wl = _need(cfg, "wavelength", "scene")
    if not isinstance(wl, (int, float)) or wl <= 0:
        raise ConfigError("scene.wavelength: expected a positive number")
    src = _need(cfg, "source", "scene")
    pos = _vec3(_need(src, "position", "scene.source"), "scene.source.position")
    N = _need(src, "truncation", "scene.source")
    if not isinstance(N, int) or N < 0:
        raise ConfigError("scene.source.truncation: expected a nonnegative integer")
    scs = [scatterer_from_dict(d, f"scene.scatterers[{i}]") for i, d in enumerate(cfg.get("scatterers", []))]
    try:
        return Scene(float(wl), pos, N, scs, cfg.get("inter_scatterer_truncation"))
    except ValueError as exc:
        raise ConfigError(f"scene: {exc}") from None


def scene_to_dict(scene: Scene) -> dict:
    scs = []
    for sc in scene.scatterers:
        d = {"anchor": sc.anchor.tolist(), "offset": sc.offset.tolist(), "truncation": sc.truncation}
        if sc.diagonal:
            d["t_diag"] = _pairs(np.diag(sc.t_matrix))
        else:
            d["t_full"] = _pairs(sc.t_matrix)
        scs.append(d)
    return {
        "wavelength": scene.wavelength,
        "source": {"position": scene.source_position.tolist(), "truncation": scene.source_truncation},
        "inter_scatterer_truncation": scene.L,
        "scatterers": scs,
    }


def grid_from_dict(d, where="grid") -> PlaneGrid:
    lo = _vec3(_need(d, "corner_min", where), f"{where}.corner_min")
    hi = _vec3(_need(d, "corner_max", where), f"{where}.corner_max")
    nx, ny = _need(d, "nx", where), _need(d, "ny", where)
    for name, v in (("nx", nx), ("ny", ny)):
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"{where}.{name}: expected a positive integer")
    axis = d.get("plane_axis", "z")
    if axis not in ("x", "y", "z"):
        raise ConfigError(f"{where}.plane_axis: expected one of x, y, z")
    return PlaneGrid(tuple(lo), tuple(hi), nx, ny, axis)


def solver_from_dict(d, where="solver") -> SolverConfig:
    d = d or {}
    method = d.get("method", "sor")
    if method not in ("direct", "jacobi", "gauss_seidel", "sor"):
        raise ConfigError(f"{where}.method: unknown solver {method!r}")
    omega = float(d.get("omega", 0.5))
    if method == "sor" and not 0 < omega < 2:
        raise ConfigError(f"{where}.omega: must lie in (0, 2)")
    max_iters = d.get("max_iters", 10)
    if not isinstance(max_iters, int) or max_iters < 0:
        raise ConfigError(f"{where}.max_iters: expected a nonnegative integer")
    tol = float(d.get("tol", 0.0))
    if tol < 0:
        raise ConfigError(f"{where}.tol: must be >= 0")
    return SolverConfig(method, omega, max_iters, tol)


def sources_matrix(sources: Sequence) -> np.ndarray:
    """Stack source coefficient vectors as the columns of an ``(ns, n_beams)`` matrix."""
    return np.stack([_coeffs(s) for s in sources], axis=1)
