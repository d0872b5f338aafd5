"""blochforge: Bloch band structures of periodic Schroedinger operators,
algebraic coupled mode equations, nonlinear Bloch wave continuation for the
stationary Gross-Pitaevskii equation, asymptotic-error verification, and 1D
localized-solution and time-evolution experiments."""

__version__ = "0.1.0"

from .grid import ComplexField, TorusGrid, inner_product, l2_norm, sobolev_norm
from .potentials import PotentialSpec, sample_potential
from .modeset import KPoint, ModeSelection, closure_S3, is_consistent

__all__ = [
    "ComplexField",
    "TorusGrid",
    "inner_product",
    "l2_norm",
    "sobolev_norm",
    "PotentialSpec",
    "sample_potential",
    "KPoint",
    "ModeSelection",
    "closure_S3",
    "is_consistent",
    "__version__",
]
