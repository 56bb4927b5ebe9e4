"""Classifier guidance from a noisy property predictor.

A first-order Taylor expansion of the predictor's squared error around the
current state gives, for a candidate state e,

    log multiplier(e) = -(λ_X / σ²) ⟨∇_state ‖μ(X_t, t) - c‖², e - e_current⟩

so candidates that lower the predicted error gain probability. The latent
velocity is shifted by -(λ_X / σ²) ∇_z ‖μ - c‖².
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

ROW_FLOOR = 1e-30


class DegenerateRow(FloatingPointError):
    pass


@dataclass(frozen=True)
class GuidanceConfig:
    name: str = "ring_count"
    target: float = 0.0
    lambda_x: float = 0.0
    sigma2: float = 1.0
    lambda_bag: float = 0.0

    def __post_init__(self):
        if self.lambda_x < 0 or self.lambda_bag < 0:
            raise ValueError("guidance strengths must be >= 0")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")


def conditioned_kernel(rows: np.ndarray, multipliers: np.ndarray) -> np.ndarray:
    """Elementwise tilt of probability rows, renormalized."""
    p = np.asarray(rows, dtype=np.float64) * np.asarray(multipliers, dtype=np.float64)
    total = p.sum(-1, keepdims=True)
    if not np.isfinite(total).all() or (total < ROW_FLOOR).any():
        raise DegenerateRow("all kernel mass annihilated by guidance")
    return p / total


def tilt_kernel(rows: np.ndarray, log_mult: np.ndarray) -> np.ndarray:
    """``conditioned_kernel`` with log multipliers, computed in log space.

    Each row is shifted by its largest supported log weight, so strong guidance
    cannot underflow a row whose largest multiplier sits on a zero-mass entry.
    """
    with np.errstate(divide="ignore"):
        logp = np.log(np.asarray(rows, dtype=np.float64)) + np.asarray(log_mult, dtype=np.float64)
    top = logp.max(-1, keepdims=True)
    if not np.isfinite(top).all():
        raise DegenerateRow("kernel row has no finite tilted mass")
    w = np.exp(logp - top)
    return w / w.sum(-1, keepdims=True)


def guidance_factors(predictor, node_states, edge_states, node_mask, t, z, cfg: GuidanceConfig):
    """Log multipliers for node and edge candidates and the latent shift.

    node_states: (B, n, V+1) one-hot (MASK last); edge_states: (B, n, n, 2)
    one-hot; z: (B, d). Returns numpy arrays (node_log, edge_log, z_shift).
    """
    node_states = torch.as_tensor(node_states).detach().clone().requires_grad_(True)
    edge_states = torch.as_tensor(edge_states).detach().clone().requires_grad_(True)
    z = torch.as_tensor(z).detach().clone().requires_grad_(True)
    dtype = node_states.dtype
    t = torch.as_tensor(t, dtype=dtype).reshape(-1).expand(node_states.shape[0])
    if cfg.lambda_x == 0:
        b, n, s = node_states.shape
        return np.zeros((b, n, s)), np.zeros((b, n, n, 2)), np.zeros(tuple(z.shape))
    with torch.enable_grad():
        mu = predictor(node_states, edge_states, torch.as_tensor(node_mask), t, z)
        err = (mu - cfg.target).pow(2).sum()
        inputs = (node_states, edge_states, z)
        grads = torch.autograd.grad(err, inputs, allow_unused=True)
        # A predictor may ignore an input; its gradient is then zero.
        g_node, g_edge, g_z = (torch.zeros_like(x) if g is None else g for g, x in zip(grads, inputs))
    scale = cfg.lambda_x / cfg.sigma2
    g_node = g_node.detach().double()
    g_edge = g_edge.detach().double()
    # Symmetrize: the pair (i, j) and (j, i) describe one edge.
    g_edge = g_edge + g_edge.transpose(1, 2)
    cur_node = (g_node * node_states.detach().double()).sum(-1, keepdim=True)
    cur_edge = (g_edge * edge_states.detach().double()).sum(-1, keepdim=True)
    node_log = -scale * (g_node - cur_node)
    edge_log = -scale * (g_edge - cur_edge)
    return node_log.numpy(), edge_log.numpy(), (-scale * g_z.detach().double()).numpy()
