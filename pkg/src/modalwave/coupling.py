"""Global multi-scatterer block system and its direct / iterative solvers.

The coupled scattering coefficients satisfy ``(I - M) b = c`` with
``M = T H`` (zero diagonal blocks) and ``c = T H_s s``.  Block ``(j, i)`` of
``M`` is ``T_j H_ij`` where ``H_ij`` re-expands outgoing modes about scatterer
``i`` as regular modes about scatterer ``j`` (displacement ``r_j - r_i``).

All iterative methods start from ``b = 0``, so ``k`` Jacobi sweeps equal the
order-``k`` Born (Neumann) partial sum.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .modal import n_modes
from .translation import translation_matrices

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6
DENSE_LIMIT = 4096


class SolverError(RuntimeError):
    """Raised for singular systems or failed spectral-radius estimates."""


@dataclass
class BlockSystem:
    """Assembled coupled system.

    Attributes
    ----------
    T : (J, n, n) complex
        Per-scatterer scattering matrices.
    H : (J, J, n, n) complex
        ``H[j, i]`` is the translation from scatterer ``i`` to ``j``; the
        diagonal blocks are zero.
    Hs : (J, n, ns) complex
        Source-to-scatterer translations.
    s : (ns,) or (ns, n_beams) complex
        Source coefficients; several beams share one assembly.
    """

    T: np.ndarray
    H: np.ndarray
    Hs: np.ndarray
    s: np.ndarray

    @property
    def J(self) -> int:
        return self.T.shape[0]

    @property
    def block(self) -> int:
        return self.T.shape[1]

    @property
    def L(self) -> int:
        return int(round(np.sqrt(self.block))) - 1

    @property
    def dim(self) -> int:
        return self.J * self.block

    @cached_property
    def M(self) -> np.ndarray:
        MB = np.einsum("jab,jibc->jaic", self.T, self.H)
        return MB.reshape(self.dim, self.dim)

    @cached_property
    def c(self) -> np.ndarray:
        c = np.einsum("jab,jbc,c...->ja...", self.T, self.Hs, self.s)
        return c.reshape((self.dim,) + self.s.shape[1:])

    def slice(self, j: int) -> slice:
        return slice(j * self.block, (j + 1) * self.block)

    def residual(self, b: np.ndarray) -> float:
        cn = np.linalg.norm(self.c)
        r = np.linalg.norm(b - self.M @ b - self.c)
        if cn == 0.0:
            return float(r)
        return float(r / cn)

    def lower_upper(self):
        """Strictly block-lower and block-upper parts of ``M``."""
        mask = np.repeat(np.repeat(np.tril(np.ones((self.J, self.J)), -1), self.block, 0), self.block, 1)
        lower = self.M * mask
        return lower, self.M - lower


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    method: str = ""


def check_positions(positions, source_position=None, atol: float = 0.0):
    """Raise ``ValueError`` naming the first coincident pair of centers."""
    pos = np.asarray(positions, dtype=float)
    J = pos.shape[0]
    if J > 1:
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        dist[np.diag_indices(J)] = np.inf
        bad = np.argwhere(dist <= atol)
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"scatterers {i} and {j} coincide at {pos[i].tolist()}")
    if source_position is not None:
        ds = np.linalg.norm(pos - np.asarray(source_position, dtype=float), axis=-1)
        bad = np.flatnonzero(ds <= atol)
        if bad.size:
            raise ValueError(f"scatterer {bad[0]} coincides with the source")


def coupling_blocks(positions, L: int, k: float) -> np.ndarray:
    """``H[j, i]`` = translation over ``r_j - r_i``; zero diagonal."""
    pos = np.asarray(positions, dtype=float)
    J = pos.shape[0]
    n = n_modes(L)
    H = np.zeros((J, J, n, n), dtype=complex)
    if J > 1:
        jj, ii = np.nonzero(~np.eye(J, dtype=bool))
        H[jj, ii] = translation_matrices(L, L, pos[jj] - pos[ii], k)
    return H


def source_blocks(positions, source_position, L: int, N: int, k: float) -> np.ndarray:
    d = np.asarray(positions, dtype=float) - np.asarray(source_position, dtype=float)
    return translation_matrices(L, N, d, k)


def assemble(scene, s) -> BlockSystem:
    """Assemble the block system for a scene and source coefficients ``s``.

    ``s`` may be a ModalVector, a coefficient vector, or an ``(ns, n_beams)``
    matrix of several beams.
    """
    s = getattr(s, "coefficients", s)
    s = np.asarray(s, dtype=complex)
    if s.shape[0] != n_modes(scene.source_truncation):
        raise ValueError(
            f"source coefficients have {s.shape[0]} rows, expected {n_modes(scene.source_truncation)}"
        )
    pos = scene.positions
    check_positions(pos, scene.source_position)
    H = coupling_blocks(pos, scene.L, scene.k)
    Hs = source_blocks(pos, scene.source_position, scene.L, scene.source_truncation, scene.k)
    return BlockSystem(T=scene.t_blocks, H=H, Hs=Hs, s=s)


# --------------------------------------------------------------------------
# solvers


def solve_direct(system: BlockSystem) -> SolveReport:
    A = np.eye(system.dim) - system.M
    try:
        lu = sla.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover - defensive
        raise SolverError(f"direct factorization failed: {exc}") from exc
    rcond = _rcond_estimate(A, lu)
    if rcond < np.finfo(float).eps:
        raise SolverError(f"I - M is numerically singular (condition estimate {1.0 / max(rcond, 1e-300):.3e})")
    b = sla.lu_solve(lu, system.c)
    res = system.residual(b)
    if res > 1e-10:
        # one step of iterative refinement
        b = b + sla.lu_solve(lu, system.c - (b - system.M @ b))
        res = system.residual(b)
    return SolveReport(b, [res], 1, res <= 1e-10, False, "direct")


def _rcond_estimate(A, lu):
    anorm = np.linalg.norm(A, 1)
    if anorm == 0.0:
        return 0.0
    gecon = sla.get_lapack_funcs("gecon", (lu[0],))
    rcond, info = gecon(lu[0], anorm, norm="1")
    return float(rcond)


def _run(system, step, max_iters, tol, method, divergence_factor=DIVERGENCE_FACTOR):
    b = np.zeros_like(system.c)
    history = []
    diverged = False
    for it in range(max_iters):
        b = step(b)
        res = system.residual(b)
        history.append(res)
        if not np.isfinite(res) or res > divergence_factor:
            diverged = True
            log.info("%s diverged at iteration %d (residual %.3e)", method, it + 1, res)
            break
        if tol > 0 and res <= tol:
            break
    converged = bool(history) and not diverged and history[-1] <= tol
    return SolveReport(b, history, len(history), converged, diverged, method)


def solve_jacobi(system: BlockSystem, max_iters: int = 200, tol: float = 1e-8,
                 divergence_factor: float = DIVERGENCE_FACTOR) -> SolveReport:
    M, c = system.M, system.c
    return _run(system, lambda b: M @ b + c, max_iters, tol, "jacobi", divergence_factor)


def _sweep(system, omega):
    M, c = system.M, system.c
    slices = [system.slice(j) for j in range(system.J)]

    def step(b):
        b = b.copy()
        for sl in slices:
            gs = M[sl] @ b + c[sl]
            b[sl] = gs if omega is None else (1.0 - omega) * b[sl] + omega * gs
        return b

    return step


def solve_gauss_seidel(system: BlockSystem, max_iters: int = 200, tol: float = 1e-8,
                       divergence_factor: float = DIVERGENCE_FACTOR) -> SolveReport:
    return _run(system, _sweep(system, None), max_iters, tol, "gauss_seidel", divergence_factor)


def solve_sor(system: BlockSystem, omega: float, max_iters: int = 200, tol: float = 1e-8,
              divergence_factor: float = DIVERGENCE_FACTOR) -> SolveReport:
    if not 0.0 < omega < 2.0:
        raise ValueError(f"relaxation factor must lie in (0, 2), got {omega}")
    return _run(system, _sweep(system, float(omega)), max_iters, tol, "sor", divergence_factor)


def solve(system: BlockSystem, method: str = "sor", omega: float = 0.5, max_iters: int = 200,
          tol: float = 1e-8, divergence_factor: float = DIVERGENCE_FACTOR) -> SolveReport:
    """Dispatch to a solver.  Iterative runs stop once the relative residual
    exceeds ``divergence_factor`` (the report is then flagged ``diverged``)."""
    if method == "direct":
        return solve_direct(system)
    if method == "jacobi":
        return solve_jacobi(system, max_iters, tol, divergence_factor)
    if method in ("gauss_seidel", "gs"):
        return solve_gauss_seidel(system, max_iters, tol, divergence_factor)
    if method == "sor":
        return solve_sor(system, omega, max_iters, tol, divergence_factor)
    raise ValueError(f"unknown solver method {method!r}")


# --------------------------------------------------------------------------
# convergence diagnostics


def iteration_matrix(system: BlockSystem, which: str = "jacobi", omega: float = 1.0) -> np.ndarray:
    """Dense iteration matrix of the chosen method."""
    if which == "jacobi":
        return system.M.copy()
    lower, upper = system.lower_upper()
    eye = np.eye(system.dim)
    if which == "gauss_seidel":
        return sla.solve_triangular(eye - lower, upper, lower=True, unit_diagonal=True)
    if which == "sor":
        return sla.solve_triangular(eye - omega * lower, (1.0 - omega) * eye + omega * upper,
                                    lower=True, unit_diagonal=True)
    raise ValueError(f"unknown iteration {which!r}")


def spectral_radius(system: BlockSystem, which: str = "jacobi", omega: float = 1.0,
                    max_iters: int = 2000, rtol: float = 1e-10, seed: int = 0) -> float:
    """Spectral radius of the Jacobi / Gauss-Seidel / SOR iteration matrix.

    Power iteration first; when the dominant eigenvalue is not isolated (the
    iteration stalls) falls back to a dense eigensolve.
    """
    if which not in ("jacobi", "gauss_seidel", "sor"):
        raise ValueError(f"unknown iteration {which!r}")
    if system.dim > DENSE_LIMIT:
        raise SolverError(f"system dimension {system.dim} exceeds dense limit {DENSE_LIMIT}")
    G = iteration_matrix(system, which, omega)
    if not np.any(G):
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(system.dim) + 1j * rng.standard_normal(system.dim)
    x /= np.linalg.norm(x)
    for _ in range(max_iters):
        y = G @ x
        lam = np.vdot(x, y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        if np.linalg.norm(y - lam * x) <= rtol * ny:
            return float(abs(lam))
        x = y / ny
    log.debug("power iteration stalled for %s; using dense eigensolve", which)
    try:
        return float(np.max(np.abs(np.linalg.eigvals(G))))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"spectral radius estimate failed: {exc}") from exc


def write_convergence_csv(path, reports) -> None:
    """Write ``iteration, method, residual`` rows for several solve reports."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "method", "residual"])
        for rep in reports:
            for i, r in enumerate(rep.residual_history, start=1):
                w.writerow([i, rep.method, repr(float(r))])
