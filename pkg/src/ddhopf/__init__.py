"""Spectral-Galerkin Hopf bifurcation toolkit for doubly diffusive convection
with artificial compressibility."""

__version__ = "0.1.0"

from .basis import (Params, ModeIndex, SpectralField, NormReport, mode_table,
                    inner_eps, norms, divergence, helmholtz_project,
                    field_to_json, field_from_json)
from .operators import (assemble_L, assemble_L_adjoint, assemble_L_incomp,
                        apply_K, nonlinear_N, bilinear_M)
from .spectrum import (EigenData, critical_R1, transversality_check,
                       mode_matrix_incomp, mode_matrix_ac, eig_leading,
                       project_P_eps, single_mode_hopf, single_mode_steady,
                       SteadyOnsetFirst, NoCrossing)

__all__ = [
    "__version__",
    "Params", "ModeIndex", "SpectralField", "NormReport", "mode_table",
    "inner_eps", "norms", "divergence", "helmholtz_project",
    "field_to_json", "field_from_json",
    "assemble_L", "assemble_L_adjoint", "assemble_L_incomp",
    "apply_K", "nonlinear_N", "bilinear_M",
    "EigenData", "critical_R1", "transversality_check",
    "mode_matrix_incomp", "mode_matrix_ac", "eig_leading", "project_P_eps",
    "single_mode_hopf", "single_mode_steady", "SteadyOnsetFirst", "NoCrossing",
]
