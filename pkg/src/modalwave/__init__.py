"""Modal spherical-wave multi-scatterer channel model.

Scatterers are represented by scattering (T) matrices acting on truncated
spherical-wave expansions; translations between centers use the addition
theorem, and the coupled system is solved directly or iteratively.
"""

from . import beams, coupling, inverse, modal, scene, specialfn, translation
from .beams import BeamPattern, build_system_function, fit_beam_coefficients
from .coupling import assemble, solve, spectral_radius
from .inverse import FitConfig, FitParameters, MeasurementSet, fit, gradient
from .modal import ModeIndex, ModalVector
from .scene import PlaneGrid, Scatterer, Scene, SolverConfig, compute_radiomap, random_scene
from .translation import translation_matrices, verify_addition

__version__ = "0.1.0"

__all__ = [
    "beams", "coupling", "inverse", "modal", "scene", "specialfn", "translation",
    "BeamPattern", "build_system_function", "fit_beam_coefficients",
    "assemble", "solve", "spectral_radius",
    "FitConfig", "FitParameters", "MeasurementSet", "fit", "gradient",
    "ModeIndex", "ModalVector",
    "PlaneGrid", "Scatterer", "Scene", "SolverConfig", "compute_radiomap", "random_scene",
    "translation_matrices", "verify_addition",
]
