"""Conditional CTMC rates for the masked node chain and the binary edge chain,
plus detailed-balance terms.

Node marginal given target x₁: p_t(x₁) = t, p_t(MASK) = 1 - t.
Edge marginal given target ε₁ with a uniform Bernoulli prior:
p_t(ε₁) = (1 + t) / 2, p_t(¬ε₁) = (1 - t) / 2.
"""

from __future__ import annotations

import numpy as np


def _check_t(t) -> None:
    if np.any(np.asarray(t) >= 1.0) or np.any(np.asarray(t) < 0.0):
        raise ValueError("rates are defined for 0 <= t < 1")


def node_marginal(t):
    """(p_t(x₁), p_t(MASK))."""
    return t, 1.0 - t


def edge_marginal(t):
    """(p_t(ε₁), p_t(¬ε₁))."""
    return (1.0 + t) / 2.0, (1.0 - t) / 2.0


def node_rate(t):
    """Base rate MASK -> x₁. Rates out of a de-masked node are zero."""
    _check_t(t)
    return 1.0 / (1.0 - t)


def edge_rate(t):
    """Base rate ¬ε₁ -> ε₁. The reverse base rate is zero."""
    _check_t(t)
    return 1.0 / (1.0 - t)


def node_db_rates(t, eta: float):
    """Balanced detailed-balance pair (x₁ -> MASK, MASK -> x₁) = (η, η t / (1 - t))."""
    _check_t(t)
    return eta * np.ones_like(np.asarray(t, dtype=np.float64)), eta * t / (1.0 - t)


def edge_db_rates(t, eta: float):
    """Detailed-balance pair (ε₁ -> ¬ε₁, ¬ε₁ -> ε₁) = (η, η (1 + t) / (1 - t))."""
    _check_t(t)
    return eta * np.ones_like(np.asarray(t, dtype=np.float64)), eta * (1.0 + t) / (1.0 - t)


def node_total_demask_rate(t, eta: float):
    """MASK -> x₁ including the detailed-balance term: (1 + η t) / (1 - t)."""
    return node_rate(t) + node_db_rates(t, eta)[1]


def expected_edge_flip_rate(current, p_present, t, eta: float):
    """Rate of leaving ``current`` ∈ {0, 1}, in expectation over the
    posterior P(ε₁ = 1) = ``p_present``. Exact since the state space is binary."""
    current = np.asarray(current)
    p_present = np.asarray(p_present, dtype=np.float64)
    p_differs = np.where(current == 1, 1.0 - p_present, p_present)
    away, toward = edge_db_rates(t, eta)
    return p_differs * (edge_rate(t) + toward) + (1.0 - p_differs) * away


def detailed_balance_residuals(t, eta_node: float, eta_edge: float):
    """|p(a) R(a, b) - p(b) R(b, a)| for the node and edge DB pairs."""
    to_mask, from_mask = node_db_rates(t, eta_node)
    p1, pm = node_marginal(t)
    node = np.abs(p1 * to_mask - pm * from_mask)
    away, toward = edge_db_rates(t, eta_edge)
    q1, q0 = edge_marginal(t)
    edge = np.abs(q1 * away - q0 * toward)
    return node, edge
