"""Convected Helmholtz duct solver with a modified absorbing layer.

Subpackages:
    duct     geometry, transverse modes, axial dispersion
    specfun  Bessel/Hankel functions with an explicit accuracy contract
    greens   semi-analytic kernel representations and solution oracles
    noise    discretized spatial white noise on a nested mesh
    pml      absorption profile, layer modes, Robin coefficients, bounds
    solver   per-mode 1D finite-element solves and field assembly
    harness  Monte Carlo convergence studies and rate fitting
    cli      configuration parsing, subcommands, CSV emission
"""

from .duct import (
    DispersionTable,
    DuctConfig,
    axial_wavenumbers,
    axial_wavenumbers64,
    cutoff_numbers,
    dispersion_residual,
    dispersion_table,
    mode_shape,
)
from .errors import (
    ConfigError,
    CutoffResonanceError,
    DegenerateLayerError,
    DomainError,
    DuctpmlError,
    GridMismatchError,
    InsufficientDataError,
    RepresentationError,
    SingularityError,
    StudyError,
)
from .noise import (
    ModalFunctionSource,
    ModeBoxSource,
    NoiseMesh,
    NoiseRealization,
    build_mesh,
    coarsen,
    evaluate_wh,
    modal_source_coefficients,
    sample,
)
from .pml import PmlProfile
from .solver import Grid1D, ModalSolution, solve_full

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
