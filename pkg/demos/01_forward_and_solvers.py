# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Forward model and coupled solvers
#
# A source radiates a truncated outgoing spherical-wave expansion. Every
# scatterer maps the regular expansion of its incident field to an outgoing
# one through its T-matrix, and the scatterers illuminate each other.

# %%
import json
from pathlib import Path

import numpy as np

from modalwave import coupling, translation
from modalwave.cli import plan_solver_compare
from modalwave.modal import ModeIndex
from modalwave.scene import PlaneGrid, SolverConfig, compute_radiomap, random_scene

# %% [markdown]
# ## Addition theorem
# Re-expanding an outgoing mode about a displaced center converges as the
# truncation order grows, inside the ball |r - d| < |d|.

# %%
d = np.array([0.0, 4.0, 15.0]) * 2 * np.pi
pts = PlaneGrid(tuple(d - [0, 9.4, 9.4]), tuple(d + [0, 9.4, 9.4]), 30, 30, "x").points()
for L in (3, 7, 11, 15):
    rep = translation.verify_addition(ModeIndex(4, 2), d, 1.0, L, pts)
    print(f"L={L:2d}  max error {rep.max_abs_error:.2e}  rms {rep.rms_error:.2e}")

# %% [markdown]
# ## A random scene and its radiomap

# %%
rng = np.random.default_rng(0)
scene = random_scene(rng, 8, [-5, -5, -1], [5, 5, 1], 2, 1.0, [0, 0, 20], 2, t_scale=0.3)
s = np.zeros(9, complex)
s[0] = 1.0
grid = PlaneGrid((-10, -10, -6), (10, 10, -6), 41, 41)
rm = compute_radiomap(scene, s, grid, "total", SolverConfig("direct"))
print("direct field rms   ", np.sqrt(np.mean(np.abs(rm.direct) ** 2)))
print("scattered field rms", np.sqrt(np.mean(np.abs(rm.scattered) ** 2)))

# %% [markdown]
# ## Iterative solvers
# k Jacobi iterations from zero are the order-k Born (Neumann) approximation.
# When the spectral radius of the coupling matrix is below one, Jacobi,
# Gauss-Seidel and SOR all reach the direct solution.

# %%
system = coupling.assemble(scene, s)
print("rho(jacobi) =", round(coupling.spectral_radius(system), 4))
ref = coupling.solve_direct(system).solution
for method, omega in (("jacobi", 1.0), ("gauss_seidel", 1.0), ("sor", 0.5)):
    rep = coupling.solve(system, method, omega, max_iters=200, tol=1e-12)
    err = np.linalg.norm(rep.solution - ref) / np.linalg.norm(ref)
    print(f"{method:13s} {rep.iterations:4d} iterations, error vs direct {err:.1e}")

# %% [markdown]
# ## Strong coupling
# Densely packed strong scatterers (the seeded scene of
# configs/solver_compare_strong.json) push rho above one. Jacobi and
# Gauss-Seidel blow up, while under-relaxed SOR still contracts.

# %%
cfg = json.loads((Path(__file__).resolve().parents[1] / "configs" / "solver_compare_strong.json").read_text())
plan = plan_solver_compare(cfg, cfg["seed"])
sys2 = coupling.assemble(plan.scene, plan.S)
for method, omega in (("jacobi", 1.0), ("gauss_seidel", 1.0), ("sor", 0.5)):
    rho = coupling.spectral_radius(sys2, method, omega)
    rep = coupling.solve(sys2, method, omega, max_iters=40, tol=0.0, divergence_factor=1e12)
    h = rep.residual_history
    print(f"{method:13s} rho {rho:.3f}  residual {h[0]:.2e} -> {h[-1]:.2e}")
