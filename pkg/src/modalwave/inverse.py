"""Joint estimation of scattering matrices and scatterer offsets.

The forward map runs a fixed number of solver iterations, so it is a plain
composition of linear-algebra steps and the analytic gradient is obtained by
reverse-mode accumulation through

    field evaluation  <-  unrolled solver  <-  (T, H, H_s)  <-  positions.

Complex gradients follow the convention ``g = dL/dRe(z) + i dL/dIm(z)``;
for ``z_out = A z_in`` this gives ``g_in = A^H g_out`` and ``g_A = g_out z_in^H``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import check_positions
from .modal import n_modes, outgoing_basis, outgoing_basis_grad
from .scene import Scatterer, Scene, SolverConfig, init_t_diag
from .seeding import substream
from .translation import translation_matrices, translation_matrices_grad

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


@dataclass
class FitParameters:
    """Optimisation variables: T entries (diagonal or full) and offsets."""

    t: np.ndarray
    offsets: np.ndarray
    diagonal: bool = True

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=complex)
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(-1, 3)
        expected = 2 if self.diagonal else 3
        if self.t.ndim != expected:
            raise ValueError(f"T entries must have {expected} dims, got shape {self.t.shape}")

    @property
    def J(self) -> int:
        return self.t.shape[0]

    @property
    def block(self) -> int:
        return self.t.shape[1]

    def t_blocks(self) -> np.ndarray:
        if not self.diagonal:
            return self.t
        out = np.zeros((self.J, self.block, self.block), dtype=complex)
        idx = np.arange(self.block)
        out[:, idx, idx] = self.t
        return out

    @property
    def n_t(self) -> int:
        return self.t.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.t.real.ravel(), self.t.imag.ravel(), self.offsets.ravel()])

    def unflatten(self, vec) -> "FitParameters":
        vec = np.asarray(vec, dtype=float)
        n = self.n_t
        if vec.size != 2 * n + self.offsets.size:
            raise ValueError("parameter vector has the wrong length")
        t = (vec[:n] + 1j * vec[n:2 * n]).reshape(self.t.shape)
        return FitParameters(t, vec[2 * n:].reshape(self.offsets.shape), self.diagonal)

    def copy(self) -> "FitParameters":
        return FitParameters(self.t.copy(), self.offsets.copy(), self.diagonal)

    @classmethod
    def from_scene(cls, scene: Scene, diagonal: bool | None = None) -> "FitParameters":
        blocks = scene.t_blocks
        if diagonal is None:
            diagonal = all(sc.diagonal for sc in scene.scatterers)
        t = np.diagonal(blocks, axis1=1, axis2=2).copy() if diagonal else blocks.copy()
        return cls(t, np.array([sc.offset for sc in scene.scatterers]).reshape(-1, 3), diagonal)

    def to_scene(self, template: Scene) -> Scene:
        scs = [Scatterer(sc.anchor.copy(), t, off, diagonal=self.diagonal)
               for sc, t, off in zip(template.scatterers, self.t, self.offsets)]
        return replace(template, scatterers=scs)


@dataclass
class MeasurementSet:
    """Complex field records ``(beam, receiver, y_meas, y_ref)``.

    ``y_ref`` is a positive per-record normalisation magnitude.
    """

    points: np.ndarray
    rx_index: np.ndarray
    beam: np.ndarray
    y_meas: np.ndarray
    y_ref: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.rx_index = np.asarray(self.rx_index, dtype=int)
        self.beam = np.asarray(self.beam, dtype=int)
        self.y_meas = np.asarray(self.y_meas, dtype=complex)
        self.y_ref = np.asarray(self.y_ref, dtype=float)
        if not (self.rx_index.shape == self.beam.shape == self.y_meas.shape == self.y_ref.shape):
            raise ValueError("measurement record arrays must share one length")
        if np.any(~(self.y_ref > 0)):
            raise ValueError("y_ref must be strictly positive for every record")

    @property
    def Q(self) -> int:
        return self.y_meas.size

    @property
    def n_beams(self) -> int:
        return int(self.beam.max()) + 1 if self.Q else 0

    @classmethod
    def from_fields(cls, points, fields, floor: float = 1e-12) -> "MeasurementSet":
        """Records for every (receiver, beam) of an ``(R, n_beams)`` field array.

        ``y_ref = |field|`` floored at ``floor * max|field|``.
        """
        fields = np.asarray(fields, dtype=complex)
        if fields.ndim == 1:
            fields = fields[:, None]
        R, nb = fields.shape
        rx, beam = np.meshgrid(np.arange(R), np.arange(nb), indexing="ij")
        y = fields.ravel()
        mag = np.abs(y)
        ref = np.maximum(mag, floor * mag.max()) if mag.max() > 0 else np.ones_like(mag)
        return cls(points, rx.ravel(), beam.ravel(), y, ref)

    def subset(self, idx) -> "MeasurementSet":
        return MeasurementSet(self.points, self.rx_index[idx], self.beam[idx], self.y_meas[idx], self.y_ref[idx])


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, **kw)


# --------------------------------------------------------------------------
# forward map


@dataclass
class _Tape:
    P: np.ndarray
    T: np.ndarray
    H: np.ndarray
    Hs: np.ndarray
    HsS: np.ndarray
    M: np.ndarray
    c: np.ndarray
    snaps: list
    b: np.ndarray
    U: np.ndarray
    pairs: tuple
    dH: np.ndarray | None = None
    dHs: np.ndarray | None = None
    dU: np.ndarray | None = None


def _positions(template: Scene, params: FitParameters) -> np.ndarray:
    return np.array([sc.anchor for sc in template.scatterers]).reshape(-1, 3) + params.offsets


def _unrolled_solve(M, c, block, solver: SolverConfig):
    """Run the solver for exactly ``solver.max_iters`` iterations from zero."""
    if solver.method == "direct":
        b = np.linalg.solve(np.eye(M.shape[0]) - M, c)
        return b, [np.zeros_like(c), b]
    b = np.zeros_like(c)
    snaps = [b]
    J = M.shape[0] // block
    omega = None
    if solver.method == "sor":
        omega = solver.omega
    for _ in range(solver.max_iters):
        if solver.method == "jacobi":
            b = M @ b + c
        else:
            b = b.copy()
            for j in range(J):
                sl = slice(j * block, (j + 1) * block)
                gs = M[sl] @ b + c[sl]
                b[sl] = gs if omega is None else (1.0 - omega) * b[sl] + omega * gs
        snaps.append(b)
    return b, snaps


def _unrolled_backward(M, c, snaps, g, block, solver: SolverConfig):
    """Adjoint of ``_unrolled_solve``: returns ``(G_M, g_c)``."""
    G_M = np.zeros_like(M)
    g_c = np.zeros_like(c)
    if solver.method == "direct":
        b = snaps[-1]
        g_c = np.linalg.solve((np.eye(M.shape[0]) - M).conj().T, g)
        return g_c @ b.conj().T, g_c
    g = g.copy()
    J = M.shape[0] // block
    MH = M.conj().T
    omega = solver.omega if solver.method == "sor" else 1.0
    for k in range(len(snaps) - 2, -1, -1):
        old, new = snaps[k], snaps[k + 1]
        if solver.method == "jacobi":
            G_M += g @ old.conj().T
            g_c += g
            g = MH @ g
            continue
        state = new.copy()
        for j in range(J - 1, -1, -1):
            sl = slice(j * block, (j + 1) * block)
            state[sl] = old[sl]
            gj = g[sl].copy()
            G_M[sl] += omega * (gj @ state.conj().T)
            g_c[sl] += omega * gj
            g += omega * (MH[:, sl] @ gj)
            g[sl] = (1.0 - omega) * gj
    return G_M, g_c


def _forward(params: FitParameters, template: Scene, sources, points, solver, need_grad=False) -> _Tape:
    k = template.k
    L, N = template.L, template.source_truncation
    P = _positions(template, params)
    check_positions(P, template.source_position)
    J = P.shape[0]
    n = n_modes(L)
    S = np.asarray(sources, dtype=complex)
    if S.ndim == 1:
        S = S[:, None]
    jj, ii = np.nonzero(~np.eye(J, dtype=bool))
    H = np.zeros((J, J, n, n), dtype=complex)
    dH = dHs = dU = None
    if need_grad:
        if J > 1:
            Hp, dH = translation_matrices_grad(L, L, P[jj] - P[ii], k)
            H[jj, ii] = Hp
        Hs, dHs = translation_matrices_grad(L, N, P - template.source_position, k)
    else:
        if J > 1:
            H[jj, ii] = translation_matrices(L, L, P[jj] - P[ii], k)
        Hs = translation_matrices(L, N, P - template.source_position, k)
    T = params.t_blocks()
    M = np.einsum("jab,jibc->jaic", T, H).reshape(J * n, J * n)
    HsS = Hs @ S  # (J, n, nb)
    c = np.einsum("jab,jbc->jac", T, HsS).reshape(J * n, -1)
    b, snaps = _unrolled_solve(M, c, n, solver)
    rel = np.asarray(points, dtype=float)[:, None, :] - P[None, :, :]
    if need_grad:
        U, dU = outgoing_basis_grad(L, k, rel)
    else:
        U = outgoing_basis(L, k, rel)
    return _Tape(P, T, H, Hs, HsS, M, c, snaps, b, U, (jj, ii), dH, dHs, dU)


def _field(tape: _Tape) -> np.ndarray:
    J, n = tape.T.shape[:2]
    return np.einsum("rjn,jnb->rb", tape.U, tape.b.reshape(J, n, -1))


def forward_predict(params: FitParameters, template: Scene, sources, rx_points,
                    solver: SolverConfig = SolverConfig()) -> np.ndarray:
    """Scattered field ``(R, n_beams)`` at ``rx_points`` for every beam column of ``sources``."""
    return _field(_forward(params, template, sources, rx_points, solver))


def loss(y, measurements: MeasurementSet, targets=None) -> float:
    """Mean of ``|y_q - y_meas_q|^2 / y_ref_q^2`` over the records.

    ``y`` is either the ``(R, n_beams)`` prediction array or a per-record vector.
    """
    if measurements.Q == 0:
        raise ValueError("loss needs at least one measurement record")
    y = np.asarray(y)
    yq = y[measurements.rx_index, measurements.beam] if y.ndim == 2 else y
    tgt = measurements.y_meas if targets is None else targets
    return float(np.mean(np.abs(yq - tgt) ** 2 / measurements.y_ref**2))


def _backward(tape: _Tape, G_Y: np.ndarray, solver: SolverConfig, diagonal: bool):
    J, n = tape.T.shape[:2]
    bj = tape.b.reshape(J, n, -1)
    g_b = np.einsum("rjn,rb->jnb", tape.U.conj(), G_Y).reshape(J * n, -1)
    G_U = np.einsum("rb,jnb->rjn", G_Y, bj.conj())
    dP = -np.einsum("rjn,rjan->ja", G_U.conj(), tape.dU).real

    G_M, g_c = _unrolled_backward(tape.M, tape.c, tape.snaps, g_b, n, solver)
    GMB = G_M.reshape(J, n, J, n).transpose(0, 2, 1, 3)
    G_T = np.einsum("jiab,jicb->jac", GMB, tape.H.conj())
    gcj = g_c.reshape(J, n, -1)
    G_T += np.einsum("jab,jcb->jac", gcj, tape.HsS.conj())

    jj, ii = tape.pairs
    if jj.size:
        G_H = np.einsum("jba,jbc->jac", tape.T[jj].conj(), GMB[jj, ii])
        dd = np.einsum("pac,pxac->px", G_H.conj(), tape.dH).real
        np.add.at(dP, jj, dd)
        np.add.at(dP, ii, -dd)
    return G_T, gcj, dP


def loss_and_gradient(params: FitParameters, template: Scene, sources, measurements: MeasurementSet,
                      solver: SolverConfig = SolverConfig(), targets=None):
    """Loss and its gradient over the flattened real parameterisation."""
    S = np.asarray(sources, dtype=complex)
    if S.ndim == 1:
        S = S[:, None]
    tape = _forward(params, template, S, measurements.points, solver, need_grad=True)
    Y = _field(tape)
    tgt = measurements.y_meas if targets is None else targets
    yq = Y[measurements.rx_index, measurements.beam]
    w = 1.0 / measurements.y_ref**2
    resid = yq - tgt
    value = float(np.mean(np.abs(resid) ** 2 * w))
    G_Y = np.zeros_like(Y)
    np.add.at(G_Y, (measurements.rx_index, measurements.beam), (2.0 / measurements.Q) * w * resid)

    G_T, gcj, dP = _backward(tape, G_Y, solver, params.diagonal)
    # c_j = T_j Hs_j S  ->  G_Hs_j = T_j^H g_c_j S^H
    G_Hs = np.einsum("jba,jbc,dc->jad", tape.T.conj(), gcj, S.conj())
    dP += np.einsum("jad,jxad->jx", G_Hs.conj(), tape.dHs).real

    if params.diagonal:
        gt = np.diagonal(G_T, axis1=1, axis2=2)
    else:
        gt = G_T
    grad = np.concatenate([gt.real.ravel(), gt.imag.ravel(), dP.ravel()])
    return value, grad


def gradient(params: FitParameters, template: Scene, sources, batch: MeasurementSet,
             solver: SolverConfig = SolverConfig(), mode: str = "analytic", h: float = 1e-6,
             targets=None) -> np.ndarray:
    """Gradient of the loss over ``params.flatten()``.

    ``mode="finite_difference"`` uses central differences with a relative
    step ``h`` (scaled by ``max(|x_i|, 1)`` for T entries and by the
    wavelength for offsets).
    """
    if mode == "analytic":
        _, g = loss_and_gradient(params, template, sources, batch, solver, targets)
    elif mode == "finite_difference":
        x0 = params.flatten()
        scale = np.ones_like(x0)
        scale[2 * params.n_t:] = template.wavelength
        steps = h * np.maximum(np.abs(x0), scale)
        g = np.empty_like(x0)

        def f(x):
            p = params.unflatten(x)
            return loss(forward_predict(p, template, sources, batch.points, solver), batch, targets)

        for i in range(x0.size):
            xp = x0.copy()
            xm = x0.copy()
            xp[i] += steps[i]
            xm[i] -= steps[i]
            g[i] = (f(xp) - f(xm)) / (2.0 * steps[i])
    else:
        raise ValueError(f"unknown gradient mode {mode!r}")
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise FitError(f"non-finite gradient entry at parameter index {bad[0]}")
    return g


# --------------------------------------------------------------------------
# constraints and optimiser


def project_constraints(params: FitParameters, gamma: float, offset_radius: float) -> FitParameters:
    """Enforce ``sigma_max(T_j) <= sqrt(gamma)`` and ``|offset_j| <= offset_radius``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if offset_radius < 0:
        raise ValueError("offset radius must be >= 0")
    bound = math.sqrt(gamma)
    out = params.copy()
    if out.diagonal:
        mag = np.abs(out.t)
        over = mag > bound
        out.t[over] *= bound / mag[over]
    else:
        for j in range(out.J):
            smax = np.linalg.norm(out.t[j], 2)
            if smax > bound:
                out.t[j] *= bound / smax
    norms = np.linalg.norm(out.offsets, axis=1)
    over = norms > offset_radius
    if np.any(over):
        out.offsets[over] *= (offset_radius / norms[over])[:, None]
    return out


def adam_step(state: AdamState, params: FitParameters, grad, lr_t: float, lr_offset: float,
              gamma: float | None = None, offset_radius: float | None = None):
    """One Adam update with separate learning rates, then projection."""
    g = np.asarray(grad, dtype=float)
    x = params.flatten()
    if state.m.size != x.size:
        raise ValueError("optimizer state does not match the parameter vector")
    lr = np.full(x.size, lr_t)
    lr[2 * params.n_t:] = lr_offset
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    x = x - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_params = params.unflatten(x)
    if gamma is not None:
        new_params = project_constraints(new_params, gamma, np.inf if offset_radius is None else offset_radius)
    return replace(state, m=m, v=v, step=step), new_params


# --------------------------------------------------------------------------
# fitting


@dataclass
class FitConfig:
    gamma: float
    offset_radius: float
    epochs: int = 3000
    batch_fraction: float = 0.15
    noise_std: float = 0.0
    seed: int = 0
    lr_t: float = 1e-3
    lr_offset: float = 5e-4
    optimize_offsets: bool = True
    solver: SolverConfig = SolverConfig("sor", 0.5, 10, 0.0)
    # learning rates decay geometrically to lr * lr_decay at the last epoch
    lr_decay: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.offset_radius < 0:
            raise ValueError("offset_radius must be >= 0")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")


@dataclass
class FitResult:
    params: FitParameters
    final_params: FitParameters
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    aborted: bool = False


def initial_parameters(template: Scene, gamma: float, seed: int = 0) -> FitParameters:
    """Diagonal T entries ~ CN(0, (0.1 sqrt(gamma))^2), zero offsets."""
    rng = substream(seed, "init")
    t = init_t_diag(rng, template.J, template.L, gamma)
    return FitParameters(t, np.zeros((template.J, 3)), True)


def fit(template: Scene, sources, measurements: MeasurementSet, config: FitConfig,
        initial: FitParameters | None = None, validation: MeasurementSet | None = None) -> FitResult:
    """Stochastic mini-batch Adam fit of T entries and (optionally) offsets.

    Every epoch samples ``batch_fraction`` of the (receiver x beam) records
    without replacement, perturbs their targets with complex Gaussian noise of
    std ``noise_std * y_ref``, and takes one Adam step.  Validation uses all
    records of ``validation`` (default: the training set) without noise.
    Row ``e`` of the loss curves is evaluated at the parameters after ``e``
    steps, so ``epochs`` steps give ``epochs + 1`` rows.
    """
    if measurements.Q == 0:
        raise ValueError("no measurements")
    S = np.asarray(sources, dtype=complex)
    if S.ndim == 1:
        S = S[:, None]
    params = initial.copy() if initial is not None else initial_parameters(template, config.gamma, config.seed)
    params = project_constraints(params, config.gamma, config.offset_radius)
    state = AdamState.zeros(params.flatten().size, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    val_set = validation if validation is not None else measurements
    batch_size = max(1, int(round(config.batch_fraction * measurements.Q)))
    lr_offset = config.lr_offset if config.optimize_offsets else 0.0

    result = FitResult(params.copy(), params.copy())
    best = np.inf
    for epoch in range(config.epochs + 1):
        idx = np.sort(substream(config.seed, "batch", epoch).choice(measurements.Q, batch_size, replace=False))
        batch = measurements.subset(idx)
        noise_rng = substream(config.seed, "noise", epoch)
        noise = (noise_rng.standard_normal(batch_size) + 1j * noise_rng.standard_normal(batch_size)) / math.sqrt(2.0)
        targets = batch.y_meas + config.noise_std * batch.y_ref * noise
        try:
            train, grad = loss_and_gradient(params, template, S, batch, config.solver, targets)
            val = loss(forward_predict(params, template, S, val_set.points, config.solver), val_set)
        except ValueError as exc:
            log.warning("forward evaluation failed at epoch %d: %s", epoch, exc)
            result.aborted = True
            break
        if not (np.isfinite(train) and np.isfinite(val) and np.all(np.isfinite(grad))):
            log.warning("non-finite loss at epoch %d; stopping", epoch)
            result.aborted = True
            break
        result.train_loss.append(train)
        result.val_loss.append(val)
        result.final_params = params.copy()
        if val < best:
            best = val
            result.best_epoch = epoch
            result.params = params.copy()
        if epoch == config.epochs:
            break
        if not config.optimize_offsets:
            grad[2 * params.n_t:] = 0.0
        scale = config.lr_decay ** (epoch / max(config.epochs - 1, 1))
        state, params = adam_step(state, params, grad, scale * config.lr_t, scale * lr_offset,
                                  config.gamma, config.offset_radius)
    return result
