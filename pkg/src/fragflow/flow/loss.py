"""Joint training objective: Info-NCE over masked nodes, edge BCE, latent MSE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from fragflow.bag import infonce_loss, sample_bag_train
from fragflow.flow.model import FlowModel, pad_batch
from fragflow.flow.noise import MASK, sample_training_triple


@dataclass(frozen=True)
class LossWeights:
    alpha_edge: float = 5.0
    alpha_latent: float = 1.0

    def __post_init__(self):
        if self.alpha_edge <= 0 or self.alpha_latent <= 0:
            raise ValueError("loss weights must be positive")


@dataclass
class FlowExample:
    nodes: np.ndarray  # vocab ids
    edges: np.ndarray  # (n, n) bool
    z1: np.ndarray  # encoder posterior mean


def joint_loss(node_logits, node_targets, edge_logits, edge_targets, velocity, velocity_target, weights: LossWeights):
    """Returns (total, node, edge, latent) scalars."""
    l_node = infonce_loss(node_logits, node_targets)
    if edge_logits.numel():
        l_edge = nn.functional.binary_cross_entropy_with_logits(edge_logits, edge_targets)
    else:
        l_edge = edge_logits.sum() * 0.0
    l_lat = (velocity - velocity_target).pow(2).mean()
    total = l_node + weights.alpha_edge * l_edge + weights.alpha_latent * l_lat
    return total, l_node, l_edge, l_lat


def flow_loss(
    model: FlowModel,
    examples: Sequence[FlowExample],
    rng: np.random.Generator,
    bag_size: int,
    weights: LossWeights = LossWeights(),
):
    """Noise a batch, build one shared bag holding every masked target, and
    evaluate the joint loss."""
    noisy = [sample_training_triple(ex.nodes, ex.edges, ex.z1, rng) for ex in examples]
    ts = np.array([t for t, _, _ in noisy])
    batch = pad_batch([s.nodes for _, s, _ in noisy], [s.edges for _, s, _ in noisy], ts, [s.z for _, s, _ in noisy])
    targets = np.full(batch.nodes.shape, MASK, dtype=np.int64)
    target_adj = np.zeros(batch.adjacency.shape, dtype=bool)
    for i, ex in enumerate(examples):
        targets[i, : len(ex.nodes)] = ex.nodes
        target_adj[i, : len(ex.nodes), : len(ex.nodes)] = ex.edges
    masked = (batch.nodes == MASK) & batch.node_mask
    positives = targets[masked]
    # A batch can hold more distinct targets than the bag size; the bag then
    # grows to hold them all rather than dropping targets.
    bag_size = max(bag_size, len(np.unique(positives)))
    bag = sample_bag_train(positives, model.vocab.marginal, bag_size, rng)
    visible = batch.nodes[batch.node_mask & ~masked]
    table_ids = np.union1d(bag, visible)
    table = model.embed(table_ids)
    H, edge_logits, v = model(batch, table_ids, table)
    bag_rows = np.searchsorted(table_ids, bag)
    pos_in_bag = np.searchsorted(bag, positives)
    node_logits = H[torch.from_numpy(masked)] @ table[torch.from_numpy(bag_rows)].T
    iu = np.triu_indices(batch.nodes.shape[1], 1)
    pair_mask = (batch.node_mask[:, :, None] & batch.node_mask[:, None, :])[:, iu[0], iu[1]]
    e_logits = edge_logits[:, iu[0], iu[1]][torch.from_numpy(pair_mask)]
    e_targets = torch.from_numpy(target_adj[:, iu[0], iu[1]][pair_mask]).to(e_logits.dtype)
    z0 = np.stack([z0 for _, _, z0 in noisy])
    z1 = np.stack([ex.z1 for ex in examples])
    v_target = torch.from_numpy(z1 - z0).to(v.dtype)
    return joint_loss(node_logits, torch.from_numpy(pos_in_bag), e_logits, e_targets, v, v_target, weights)
