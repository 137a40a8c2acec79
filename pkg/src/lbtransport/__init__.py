"""Multi-terminal Landauer-Buttiker transport through a finite scatterer
coupled to semi-infinite tight-binding leads."""
from .model import (
    CouplingTerm,
    DirectContactTerm,
    LeadSpec,
    ModelValidationError,
    ReservoirState,
    ScattererSpec,
    SystemModel,
    band,
    open_channels,
    validate_model,
)
from .scattering import bound_states, s_matrix, scattering_residuals, t_matrix
from .transport import fermi_dirac, positivity_verdict, transport

__version__ = "0.1.0"

__all__ = [
    "CouplingTerm",
    "DirectContactTerm",
    "LeadSpec",
    "ModelValidationError",
    "ReservoirState",
    "ScattererSpec",
    "SystemModel",
    "band",
    "bound_states",
    "fermi_dirac",
    "open_channels",
    "positivity_verdict",
    "s_matrix",
    "scattering_residuals",
    "t_matrix",
    "transport",
    "validate_model",
]
