"""Gaussian-beam link models for FSO systems assisted by reflecting surfaces.

Submodules
----------
geometry
    Link geometry, beam propagation and surface/lens configurations.
special_functions
    Complex error function, Owen's T and the Gamma-Gamma distribution.
wave_optics_oracle
    Numerical field oracle (direct quadrature and Fresnel erf form).
gml_models
    Closed-form geometric-and-misalignment loss (GML) and regime selection.
turbulence_channel
    Path loss, Gamma-Gamma turbulence, outage probability and diversity.
placement
    Optimal surface, mirror and relay placement.
experiments
    Figure reproductions, regime maps and oracle cross-validation.
scenario
    TOML scenario files for batch runs.
cli
    Command-line entry point ``fso-irs-lab``.
"""
from .errors import (
    ConvergenceError,
    DegenerateGeometryError,
    DomainError,
    FsoIrsError,
    OscillationBudgetError,
    ScenarioError,
)
from .geometry import BeamParams, IrsConfig, LensConfig, LinkGeometry, Profile

__version__ = "0.1.0"

__all__ = [
    "BeamParams",
    "ConvergenceError",
    "DegenerateGeometryError",
    "DomainError",
    "FsoIrsError",
    "IrsConfig",
    "LensConfig",
    "LinkGeometry",
    "OscillationBudgetError",
    "Profile",
    "ScenarioError",
]
