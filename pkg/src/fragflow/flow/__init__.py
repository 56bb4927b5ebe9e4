"""Noising, CTMC rates, Euler steps, the joint loss and the sampling loop."""

from fragflow.flow.noise import MASK, FlowState, prior_state, sample_training_triple, time_grid
from fragflow.flow.rates import detailed_balance_residuals, edge_db_rates, edge_rate, node_db_rates, node_rate
from fragflow.flow.steps import InvalidKernel, euler_edge_step, euler_latent_step, euler_node_step

__all__ = [
    "MASK",
    "FlowState",
    "InvalidKernel",
    "detailed_balance_residuals",
    "edge_db_rates",
    "edge_rate",
    "euler_edge_step",
    "euler_latent_step",
    "euler_node_step",
    "node_db_rates",
    "node_rate",
    "prior_state",
    "sample_training_triple",
    "time_grid",
]
