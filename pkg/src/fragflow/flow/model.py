"""Flow network bundle and dense batch assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from fragflow.coarse.ae import TemplateArrays
from fragflow.flow.noise import MASK
from fragflow.frag import Vocabulary
from fragflow.neural.features import collate
from fragflow.neural.models import CoarseNet, FragmentEmbedder, NetConfig, build


@dataclass
class DenseBatch:
    nodes: np.ndarray  # (B, n) vocab ids, MASK, or MASK for padding
    node_mask: np.ndarray  # (B, n) bool
    adjacency: np.ndarray  # (B, n, n) bool
    t: np.ndarray  # (B,)
    z: np.ndarray  # (B, d)


def pad_batch(nodes: Sequence[np.ndarray], edges: Sequence[np.ndarray], t, z) -> DenseBatch:
    b = len(nodes)
    n = max((len(x) for x in nodes), default=0)
    out_nodes = np.full((b, n), MASK, dtype=np.int64)
    mask = np.zeros((b, n), dtype=bool)
    adj = np.zeros((b, n, n), dtype=bool)
    for i, (x, e) in enumerate(zip(nodes, edges)):
        k = len(x)
        out_nodes[i, :k] = x
        mask[i, :k] = True
        adj[i, :k, :k] = e
    return DenseBatch(out_nodes, mask, adj, np.asarray(t, dtype=np.float64), np.asarray(z, dtype=np.float64))


class FlowModel(nn.Module):
    """Fragment embedder E(x) plus the coarse network f_θ."""

    def __init__(self, cfg: NetConfig, vocab: Vocabulary, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab
        self.templates = TemplateArrays(vocab)
        self.embedder = build(FragmentEmbedder(cfg.frag_hidden, cfg.embed_dim, cfg.frag_rounds), seed)
        self.net = build(CoarseNet(cfg), seed + 1)
        self.arities = torch.from_numpy(vocab.arities.copy())

    def embed(self, ids: np.ndarray) -> torch.Tensor:
        batch = collate([self.templates[int(i)] for i in ids])
        return self.embedder(batch.to(torch.get_default_dtype()))

    def forward(self, batch: DenseBatch, table_ids: np.ndarray, table: torch.Tensor):
        """Run f_θ; ``table[k]`` is the embedding of vocab id ``table_ids[k]``.

        Returns (H, edge_logits, v) as in ``CoarseNet``.
        """
        lookup = np.full(len(self.vocab), -1, dtype=np.int64)
        lookup[table_ids] = np.arange(len(table_ids))
        is_mask = batch.nodes == MASK
        ids = np.where(is_mask, 0, batch.nodes)
        rows = lookup[ids]
        if (rows[~is_mask & batch.node_mask] < 0).any():
            raise KeyError("node type missing from embedding table")
        node_emb = table[torch.from_numpy(np.maximum(rows, 0))]
        dtype = table.dtype
        return self.net(
            node_emb,
            torch.from_numpy(is_mask),
            self.arities[torch.from_numpy(ids)],
            torch.from_numpy(batch.adjacency).to(dtype),
            torch.from_numpy(batch.node_mask),
            torch.from_numpy(batch.t).to(dtype),
            torch.from_numpy(batch.z).to(dtype),
        )
