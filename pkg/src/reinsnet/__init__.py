"""Equilibrium liabilities, clearing and stress studies for reinsurance networks."""

__version__ = "0.1.0"

from .network import (UNLIMITED, Contract, Firm, InvalidNetworkError, LineGraphSystem,
                      NetworkDimensionError, ReinsuranceNetwork, Role, build_line_graph,
                      liabilities_matrix, net_liabilities, validate_network)
from .liabilities import (ActivationState, LiabilitySolution, Status, StructuralFailure,
                          activation_state, phi, solve, solve_fixed_point_iteration,
                          solve_no_caps, solve_with_caps)
from .diagnostics import (Certificate, StructureReport, detect_hundred_percent_cycle,
                          enumerate_feasible_activations, omega_certificate, omega_matrix,
                          spectral_radius)
from .clearing import ClearingResult, clear, clearing_vector, end_equities, uncovered_primary_liabilities

__all__ = [
    "UNLIMITED", "Contract", "Firm", "InvalidNetworkError", "LineGraphSystem",
    "NetworkDimensionError", "ReinsuranceNetwork", "Role", "build_line_graph",
    "liabilities_matrix", "net_liabilities", "validate_network",
    "ActivationState", "LiabilitySolution", "Status", "StructuralFailure", "activation_state",
    "phi", "solve", "solve_fixed_point_iteration", "solve_no_caps", "solve_with_caps",
    "Certificate", "StructureReport", "detect_hundred_percent_cycle",
    "enumerate_feasible_activations", "omega_certificate", "omega_matrix", "spectral_radius",
    "ClearingResult", "clear", "clearing_vector", "end_equities", "uncovered_primary_liabilities",
]
