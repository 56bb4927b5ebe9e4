"""Forward noising and the time grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK = -1


@dataclass
class FlowState:
    nodes: np.ndarray  # (n,) vocab ids, MASK where masked
    edges: np.ndarray  # (n, n) bool, symmetric, zero diagonal
    z: np.ndarray  # (d_z,)
    t: float

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=bool)
        if e.shape != (len(self.nodes), len(self.nodes)):
            raise ValueError("edge matrix shape does not match node count")
        if not (e == e.T).all() or e.diagonal().any():
            raise ValueError("edges must be symmetric without self-loops")
        self.edges = e


def symmetric_bernoulli(n: int, p, rng: np.random.Generator) -> np.ndarray:
    """Symmetric boolean matrix with i.i.d. upper-triangle entries."""
    u = rng.random((n, n))
    iu = np.triu_indices(n, 1)
    out = np.zeros((n, n), dtype=bool)
    p = np.broadcast_to(np.asarray(p, dtype=np.float64), (n, n))
    out[iu] = u[iu] < p[iu]
    return out | out.T


def prior_state(n: int, latent_dim: int, rng: np.random.Generator) -> FlowState:
    return FlowState(
        np.full(n, MASK, dtype=np.int64),
        symmetric_bernoulli(n, 0.5, rng),
        rng.standard_normal(latent_dim),
        0.0,
    )


def sample_training_triple(nodes, edges, z1, rng: np.random.Generator, t: float | None = None):
    """Draw t ~ U[0, 1] (unless given) and X_t from the conditional path.

    Returns (t, X_t, z₀). Nodes keep their target with probability t, else
    MASK; edges keep theirs with probability t, else are redrawn uniformly;
    z_t = (1 - t) z₀ + t z₁.
    """
    if t is None:
        t = float(rng.random())
    nodes = np.asarray(nodes, dtype=np.int64)
    n = len(nodes)
    keep = rng.random(n) < t
    nt = np.where(keep, nodes, MASK)
    keep_e = symmetric_bernoulli(n, t, rng)
    noise = symmetric_bernoulli(n, 0.5, rng)
    et = np.where(keep_e, np.asarray(edges, dtype=bool), noise)
    z1 = np.asarray(z1, dtype=np.float64)
    z0 = rng.standard_normal(z1.shape)
    zt = (1.0 - t) * z0 + t * z1
    return t, FlowState(nt, et, zt, t), z0


def time_grid(steps: int, distortion: str = "polydec") -> np.ndarray:
    """``steps + 1`` increasing times from 0 to 1."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    u = np.linspace(0.0, 1.0, steps + 1)
    if distortion == "uniform":
        return u
    if distortion == "polydec":
        g = 2.0 * u - u * u
        g[-1] = 1.0
        return g
    raise ValueError(f"unknown distortion {distortion!r}")
