"""Fragment bags: sampling, in-bag Info-NCE posterior and loss, conditional
reweighting of the bag distribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import torch
from scipy.optimize import brentq
from torch import nn


class TooManyPositives(ValueError):
    pass


class PositiveNotInBag(ValueError):
    pass


@dataclass(frozen=True)
class BagConfig:
    n_train: int = 128
    n_inference: int = 128
    t_pred: float = 1.0
    t_bag: float = 1.0
    lambda_bag: float = 0.0

    def __post_init__(self):
        if self.n_train < 2 or self.n_inference < 2:
            raise ValueError("bag size must be >= 2")
        if self.t_pred <= 0 or self.t_bag <= 0:
            raise ValueError("temperatures must be > 0")
        if self.lambda_bag < 0:
            raise ValueError("lambda_bag must be >= 0")


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def gumbel_top_k(log_weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of a size-``k`` draw without replacement, proportional to
    ``exp(log_weights)``; identical in law to i.i.d. draws with duplicates
    rejected. Returned sorted."""
    g = log_weights + rng.gumbel(size=log_weights.shape)
    k = min(k, int(np.isfinite(log_weights).sum()))
    top = np.argpartition(-g, k - 1)[:k] if k > 0 else np.zeros(0, dtype=np.int64)
    return np.sort(top)


def sample_bag_train(positives: Iterable[int], marginal: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """All positives plus negatives drawn from ``marginal`` up to size ``n``."""
    pos = np.unique(np.fromiter(positives, dtype=np.int64))
    if len(pos) > n:
        raise TooManyPositives(f"{len(pos)} positives exceed bag size {n}")
    logw = _log(np.asarray(marginal, dtype=np.float64)).copy()
    logw[pos] = -np.inf
    neg = gumbel_top_k(logw, n - len(pos), rng)
    return np.sort(np.concatenate([pos, neg]))


def tempered_log_marginal(marginal: np.ndarray, t_bag: float = 1.0) -> np.ndarray:
    return _log(np.asarray(marginal, dtype=np.float64)) / t_bag


def sample_bag_inference(marginal: np.ndarray, n: int, t_bag: float, rng: np.random.Generator) -> np.ndarray:
    if n > len(marginal):
        raise ValueError(f"bag size {n} exceeds vocabulary size {len(marginal)}")
    return gumbel_top_k(tempered_log_marginal(marginal, t_bag), n, rng)


def inclusion_probabilities(log_weights: np.ndarray, n: int) -> np.ndarray:
    """Approximate P(x in bag) for a size-``n`` draw without replacement.

    Uses π(x) = 1 - exp(-τ w(x)) with τ chosen so that Σ π = n (Rosén's
    approximation for successive sampling); exact at n = 1 in the small-w
    limit and at n = number of nonzero weights.
    """
    lw = np.asarray(log_weights, dtype=np.float64)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    support = int(np.count_nonzero(w))
    if n >= support:
        return (w > 0).astype(np.float64)
    tau = brentq(lambda s: np.sum(-np.expm1(-s * w)) - n, 0.0, 2.0 * n / w[w > 0].min(), xtol=1e-12)
    return -np.expm1(-tau * w)


def bag_log_weights(log_weights: np.ndarray, n: int) -> np.ndarray:
    """log(p_bag / π): per-fragment offset that turns in-bag softmax over ratio
    scores into a consistent estimate of p_bag(x) f(x) for set-valued bags.

    For small bags π ≈ n p_bag and the offset is nearly constant; for a bag
    covering the vocabulary π = 1 and the posterior is exact.
    """
    lw = np.asarray(log_weights, dtype=np.float64)
    logp = lw - np.logaddexp.reduce(lw[np.isfinite(lw)])
    pi = inclusion_probabilities(lw, n)
    out = np.full(len(lw), -np.inf)
    keep = pi > 0
    out[keep] = logp[keep] - np.log(pi[keep])
    return out


def infonce_posterior(scores, multiplicity=None) -> np.ndarray:
    """p(x) = m(x) f(x) / Σ_bag m f for positive ratio scores f.

    ``multiplicity`` weights each bag member by how often it was drawn; with
    i.i.d. draws from p₁ the estimate is self-normalized importance sampling
    and reaches the exact posterior when m = p₁ over the whole vocabulary.
    """
    f = np.asarray(scores, dtype=np.float64)
    if (f <= 0).any():
        raise ValueError("scores must be positive")
    if multiplicity is not None:
        f = f * np.asarray(multiplicity, dtype=np.float64)
    return f / f.sum(-1, keepdims=True)


def posterior_from_logits(logits, t_pred: float = 1.0, in_bag=None, offset=None):
    """Softmax of ``logits / t_pred + offset`` restricted to ``in_bag``
    (boolean mask)."""
    if isinstance(logits, torch.Tensor):
        x = logits / t_pred
        if offset is not None:
            x = x + torch.as_tensor(offset, dtype=x.dtype)
        if in_bag is not None:
            x = x.masked_fill(~in_bag, float("-inf"))
        return torch.softmax(x, dim=-1)
    x = np.asarray(logits, dtype=np.float64) / t_pred
    if offset is not None:
        x = x + offset
    if in_bag is not None:
        x = np.where(in_bag, x, -np.inf)
    x = x - x.max(-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(-1, keepdims=True)


def infonce_loss(logits: torch.Tensor, positive: torch.Tensor) -> torch.Tensor:
    """Mean over rows of -log softmax(logits)[positive]; ``positive`` holds
    in-bag column indices, -1 meaning the target is absent."""
    if logits.shape[0] == 0:
        return logits.sum() * 0.0
    if (positive < 0).any() or (positive >= logits.shape[-1]).any():
        raise PositiveNotInBag("positive target missing from bag")
    return nn.functional.cross_entropy(logits, positive)


def conditional_reweight(marginal: np.ndarray, mu: np.ndarray, target: float, lambda_bag: float) -> np.ndarray:
    """p(x | c) ∝ p₁(x) exp(-λ_B (μ(x) - c)²), computed in log space."""
    if lambda_bag < 0:
        raise ValueError("lambda_bag must be >= 0")
    p = np.asarray(marginal, dtype=np.float64)
    if lambda_bag == 0:
        return p.copy()
    logp = _log(p) - lambda_bag * (np.asarray(mu, dtype=np.float64) - target) ** 2
    logp -= logp.max()
    w = np.exp(logp)
    return w / w.sum()
