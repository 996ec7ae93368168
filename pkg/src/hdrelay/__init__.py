"""Capacity and buffer-aided relaying for state-dependent half-duplex relay channels."""

from .capacity_solver import (
    CapacityReport,
    Decision,
    LinkSelectionPolicy,
    PerStateCapacities,
    brute_force_capacity,
    evaluate_policy,
    per_state_capacities,
    policy_from_rho,
    solve_capacity,
    solve_from_capacities,
)
from .channel_model import (
    JointStatePmf,
    RelayChannelSpec,
    StateChannel,
    StateSpace,
    make_spec,
    marginal_state_pmfs,
    validate_spec,
)
from .mutual_information import CapacityResult, blahut_arimoto, mutual_information

__version__ = "0.1.0"
