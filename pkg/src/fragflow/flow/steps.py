"""Euler steps of the node, edge and latent dynamics.

Node kernels are rows over |V| + 1 states with MASK in the last column.
"""

from __future__ import annotations

import numpy as np

from fragflow.flow.noise import MASK
from fragflow.flow.rates import expected_edge_flip_rate, node_total_demask_rate
from fragflow.guidance import tilt_kernel

KERNEL_TOL = 1e-6


class InvalidKernel(FloatingPointError):
    pass


def clamp_kernel(off_diagonal: np.ndarray, diagonal_index: np.ndarray) -> np.ndarray:
    """Turn off-diagonal transition mass (rows, states) into probability rows.

    Negative entries go to zero; if the remaining mass exceeds one the row is
    rescaled to one; the diagonal takes the residual.
    """
    if not np.isfinite(off_diagonal).all():
        raise InvalidKernel("kernel has non-finite entries")
    off = np.maximum(off_diagonal, 0.0)
    rows = np.arange(off.shape[0])
    off[rows, diagonal_index] = 0.0
    total = off.sum(-1, keepdims=True)
    off = np.where(total > 1.0, off / np.where(total > 0, total, 1.0), off)
    off[rows, diagonal_index] = 1.0 - off.sum(-1)
    if np.abs(off.sum(-1) - 1.0).max() > KERNEL_TOL or (off < -KERNEL_TOL).any():
        raise InvalidKernel("kernel row does not normalize")
    return np.maximum(off, 0.0)


def node_kernel(states: np.ndarray, posterior: np.ndarray, t: float, dt: float, eta: float) -> np.ndarray:
    """Rows over |V| + 1 states for nodes in ``states`` (MASK = -1).

    Masked node: jump to x with probability post(x) (1 + η t) / (1 - t) dt.
    De-masked node at x: return to MASK with probability η post(x) dt.
    """
    states = np.asarray(states, dtype=np.int64).reshape(-1)
    post = np.asarray(posterior, dtype=np.float64).reshape(len(states), -1)
    v = post.shape[1]
    masked = states == MASK
    off = np.zeros((len(states), v + 1))
    off[masked, :v] = post[masked] * node_total_demask_rate(t, eta) * dt
    idx = np.nonzero(~masked)[0]
    off[idx, v] = eta * post[idx, states[idx]] * dt
    diag = np.where(masked, v, states)
    return clamp_kernel(off, diag)


def draw_categorical(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row with uniforms ``u``."""
    cdf = np.cumsum(rows, axis=-1)
    cdf[:, -1] = np.inf
    return (u[:, None] >= cdf).sum(-1)


def euler_node_step(
    states: np.ndarray,
    posterior: np.ndarray,
    t: float,
    dt: float,
    eta: float,
    u: np.ndarray,
    log_multipliers: np.ndarray | None = None,
    final: bool = False,
) -> np.ndarray:
    """One Euler step for a flat array of nodes; ``u`` holds one uniform per node.

    ``log_multipliers`` (same shape as the kernel) tilt rows before the draw.
    On the ``final`` step every still-masked node takes its posterior argmax.
    """
    kernel = node_kernel(states, posterior, t, dt, eta)
    if log_multipliers is not None:
        kernel = tilt_kernel(kernel, log_multipliers)
    v = kernel.shape[1] - 1
    new = draw_categorical(kernel, u)
    new = np.where(new == v, MASK, new)
    if final:
        post = np.asarray(posterior).reshape(len(new), -1)
        new = np.where(new == MASK, post.argmax(-1), new)
    return new


def edge_flip_probability(current, p_present, t: float, dt: float, eta: float) -> np.ndarray:
    return np.clip(expected_edge_flip_rate(current, p_present, t, eta) * dt, 0.0, 1.0)


def euler_edge_step(
    current: np.ndarray,
    p_present: np.ndarray,
    t: float,
    dt: float,
    eta: float,
    u: np.ndarray,
    log_multipliers: np.ndarray | None = None,
) -> np.ndarray:
    """Step for a flat array of binary edge states; ``log_multipliers`` has
    shape (k, 2) over {absent, present}."""
    current = np.asarray(current, dtype=np.int64)
    flip = edge_flip_probability(current, p_present, t, dt, eta)
    if log_multipliers is not None:
        rows = np.zeros((len(current), 2))
        rows[np.arange(len(current)), current] = 1.0 - flip
        rows[np.arange(len(current)), 1 - current] = flip
        rows = tilt_kernel(rows, log_multipliers)
        return (u >= rows[:, 0]).astype(np.int64)
    return np.where(u < flip, 1 - current, current)


def euler_latent_step(z: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    return z + v * dt
