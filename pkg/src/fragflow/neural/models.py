"""Network architectures.

All coarse-graph networks take dense padded batches: ``(B, n, ...)`` node
tensors, ``(B, n, n, ...)`` pair tensors and a boolean ``node_mask``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from fragflow.neural.features import ATOM_FEATURE_DIM, BOND_FEATURE_DIM, GraphBatch, rrwp, time_features
from fragflow.neural.layers import MLP, SparseMPNN, segment_sum, xavier_init

MAX_ARITY = 5
MAX_COARSE_DEGREE = 6
MAX_SLACK = 4


@dataclass(frozen=True)
class NetConfig:
    embed_dim: int = 64
    frag_hidden: int = 64
    frag_rounds: int = 3
    hidden: int = 128
    edge_hidden: int = 64
    rounds: int = 3
    rrwp_steps: int = 6
    time_width: int = 16
    latent_dim: int = 32
    ae_hidden: int = 64
    ae_rounds: int = 3
    predictor_hidden: int = 64
    predictor_rounds: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


class FragmentEmbedder(nn.Module):
    """Sum-pooled message passing over fragment templates."""

    def __init__(self, hidden: int = 64, embed: int = 64, rounds: int = 3):
        super().__init__()
        self.atom_in = nn.Linear(ATOM_FEATURE_DIM, hidden)
        self.mpnn = SparseMPNN(hidden, BOND_FEATURE_DIM, rounds)
        self.readout = nn.Linear(hidden, embed)

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        h = self.mpnn(self.atom_in(batch.x), batch.src, batch.dst, batch.edge_attr)
        return self.readout(segment_sum(h, batch.graph, batch.n_graphs))


def _one_hot(index: torch.Tensor, width: int, dtype: torch.dtype) -> torch.Tensor:
    return nn.functional.one_hot(index.clamp(0, width - 1), width).to(dtype)


def _pair_mask(node_mask: torch.Tensor) -> torch.Tensor:
    return node_mask.unsqueeze(-1) & node_mask.unsqueeze(-2)


class PairBlock(nn.Module):
    """One round of dense node/pair message passing."""

    def __init__(self, hidden: int, edge_hidden: int):
        super().__init__()
        self.pair = MLP(2 * hidden + edge_hidden, hidden, edge_hidden)
        self.pair_norm = nn.LayerNorm(edge_hidden)
        self.to_node = nn.Linear(edge_hidden, hidden)
        self.node = MLP(2 * hidden, hidden, hidden)
        self.node_norm = nn.LayerNorm(hidden)

    def forward(self, h, e, node_mask):
        n = h.shape[1]
        hi = h.unsqueeze(2).expand(-1, -1, n, -1)
        hj = h.unsqueeze(1).expand(-1, n, -1, -1)
        e = self.pair_norm(e + self.pair(torch.cat([hi, hj, e], dim=-1)))
        w = node_mask.unsqueeze(1).unsqueeze(-1).to(h.dtype)
        agg = (self.to_node(e) * w).sum(2)
        h = self.node_norm(h + self.node(torch.cat([h, agg], dim=-1)))
        return h, e


class CoarseNet(nn.Module):
    """Flow backbone: node embeddings H, symmetric edge logits, latent velocity."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        d_node = (
            cfg.embed_dim + (MAX_ARITY + 2) + (MAX_COARSE_DEGREE + 1) + (2 * MAX_SLACK + 1) + cfg.time_width + cfg.latent_dim
        )
        self.mask_embedding = nn.Parameter(torch.zeros(cfg.embed_dim))
        self.node_in = nn.Linear(d_node, cfg.hidden)
        self.edge_in = nn.Linear(2 + cfg.rrwp_steps + 1, cfg.edge_hidden)
        self.blocks = nn.ModuleList(PairBlock(cfg.hidden, cfg.edge_hidden) for _ in range(cfg.rounds))
        self.node_head = MLP(cfg.hidden, cfg.hidden, cfg.embed_dim)
        self.edge_head = MLP(cfg.edge_hidden + 2 * cfg.hidden, cfg.hidden, 1)
        d_lat = cfg.hidden + cfg.latent_dim + cfg.time_width
        self.velocity_head = MLP(d_lat, cfg.hidden, cfg.latent_dim)

    def forward(self, node_emb, is_mask, arity, adjacency, node_mask, t, z):
        """
        node_emb: (B, n, embed) fragment embeddings (ignored where is_mask)
        is_mask: (B, n) bool; arity: (B, n) long; adjacency: (B, n, n) {0,1}
        node_mask: (B, n) bool marking real nodes; t: (B,); z: (B, d_z)
        """
        dtype = node_emb.dtype
        b, n, _ = node_emb.shape
        adjacency = adjacency.to(dtype) * _pair_mask(node_mask).to(dtype)
        mask_f = is_mask.unsqueeze(-1).to(dtype)
        x = node_emb * (1 - mask_f) + self.mask_embedding * mask_f
        arity_feat = torch.cat(
            [_one_hot(arity, MAX_ARITY + 1, dtype) * (1 - mask_f), mask_f], dim=-1
        )
        degree = adjacency.sum(-1).round().long()
        # Free junctions (arity - degree) of de-masked nodes, signed.
        slack = (arity - degree).clamp(-MAX_SLACK, MAX_SLACK) + MAX_SLACK
        slack_feat = _one_hot(slack, 2 * MAX_SLACK + 1, dtype) * (1 - mask_f)
        temb = time_features(t.to(dtype), self.cfg.time_width)
        node_in = torch.cat(
            [
                x,
                arity_feat,
                _one_hot(degree, MAX_COARSE_DEGREE + 1, dtype),
                slack_feat,
                temb.unsqueeze(1).expand(-1, n, -1),
                z.unsqueeze(1).expand(-1, n, -1),
            ],
            dim=-1,
        )
        h = self.node_in(node_in)
        eye = torch.eye(n, dtype=dtype).expand(b, -1, -1)
        edge_in = torch.cat(
            [
                torch.stack([1 - adjacency, adjacency], dim=-1),
                rrwp(adjacency, self.cfg.rrwp_steps),
                eye.unsqueeze(-1),
            ],
            dim=-1,
        )
        e = self.edge_in(edge_in)
        for block in self.blocks:
            h, e = block(h, e, node_mask)
        H = self.node_head(h)
        e_sym = e + e.transpose(1, 2)
        hi = h.unsqueeze(2).expand(-1, -1, n, -1)
        hj = h.unsqueeze(1).expand(-1, n, -1, -1)
        edge_logits = self.edge_head(torch.cat([e_sym, hi + hj, hi * hj], dim=-1)).squeeze(-1)
        w = node_mask.unsqueeze(-1).to(dtype)
        pooled = (h * w).sum(1) / w.sum(1).clamp(min=1.0)
        v = self.velocity_head(torch.cat([pooled, z, temb], dim=-1))
        return H, edge_logits, v


class NoisyPropertyPredictor(nn.Module):
    """μ(X_t, t): property regression from relaxed node and edge states.

    Nodes arrive as distributions over |V| + 1 states (MASK last), edges as
    2-channel distributions, so gradients with respect to states exist.
    """

    def __init__(self, cfg: NetConfig, vocab_size: int):
        super().__init__()
        self.cfg = cfg
        hidden = cfg.predictor_hidden
        self.state_table = nn.Parameter(torch.zeros(vocab_size + 1, hidden))
        self.node_in = nn.Linear(hidden + 1 + cfg.time_width + cfg.latent_dim, hidden)
        self.edge_in = nn.Linear(3, hidden)
        self.blocks = nn.ModuleList(PairBlock(hidden, hidden) for _ in range(cfg.predictor_rounds))
        self.head = MLP(hidden, hidden, 1)

    def reset_table(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.state_table.copy_(torch.randn(self.state_table.shape, generator=gen) * 0.1)

    def forward(self, node_probs, edge_probs, node_mask, t, z):
        """node_probs: (B, n, V+1); edge_probs: (B, n, n, 2) over {absent, present}."""
        dtype = node_probs.dtype
        b, n, _ = node_probs.shape
        pm = _pair_mask(node_mask).to(dtype).unsqueeze(-1)
        edge_probs = edge_probs * pm
        soft_degree = edge_probs[..., 1].sum(-1, keepdim=True)
        temb = time_features(t.to(dtype), self.cfg.time_width)
        x = node_probs @ self.state_table
        h = self.node_in(
            torch.cat(
                [x, soft_degree / MAX_COARSE_DEGREE, temb.unsqueeze(1).expand(-1, n, -1), z.unsqueeze(1).expand(-1, n, -1)],
                dim=-1,
            )
        )
        eye = torch.eye(n, dtype=dtype).expand(b, -1, -1).unsqueeze(-1)
        e = self.edge_in(torch.cat([edge_probs, eye], dim=-1))
        for block in self.blocks:
            h, e = block(h, e, node_mask)
        w = node_mask.unsqueeze(-1).to(dtype)
        return self.head((h * w).sum(1)).squeeze(-1)


class FragmentPropertyNet(nn.Module):
    """μ(x): expected property of molecules that contain fragment x."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.embedder = FragmentEmbedder(cfg.predictor_hidden, cfg.predictor_hidden, cfg.frag_rounds)
        self.head = MLP(cfg.predictor_hidden, cfg.predictor_hidden, 1)

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        return self.head(self.embedder(batch)).squeeze(-1)


class SlotPairNet(nn.Module):
    """Embeds each candidate slot pair of a decoder graph (templates side by
    side plus candidate edges). Shared by the encoder and the decoder."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        hidden = cfg.ae_hidden
        self.atom_in = nn.Linear(ATOM_FEATURE_DIM, hidden)
        self.mpnn = SparseMPNN(hidden, BOND_FEATURE_DIM, cfg.ae_rounds)
        self.pair = MLP(2 * hidden, hidden, cfg.latent_dim)

    def forward(self, batch: GraphBatch, pair_a: torch.Tensor, pair_b: torch.Tensor):
        h = self.mpnn(self.atom_in(batch.x), batch.src, batch.dst, batch.edge_attr)
        a, b = h[pair_a], h[pair_b]
        return self.pair(torch.cat([a + b, a * b], dim=-1))


class AEEncoder(nn.Module):
    """q(z | molecule): pools the embeddings of the slot pairs the molecule
    actually realizes."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.latent_dim
        self.out = MLP(d, cfg.ae_hidden, 2 * d)
        self.skip = nn.Linear(d, d)

    def forward(self, psi: torch.Tensor, true_graph: torch.Tensor, n_graphs: int):
        """psi: embeddings of the true pairs; true_graph: owning graph of each."""
        pooled = segment_sum(psi, true_graph, n_graphs)
        mean, raw = self.out(pooled).chunk(2, dim=-1)
        mean = mean + self.skip(pooled)
        # Smoothly bounded to (-10, 2) so early noise cannot swamp the decoder.
        logvar = -4.0 + 6.0 * torch.tanh((raw - 2.0) / 6.0)
        return mean, logvar


class AEDecoder(nn.Module):
    """Scores candidate slot pairs: alignment of the pair embedding with a
    projection of z, plus a z-conditioned prior term."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.latent_dim
        self.query = nn.Linear(d, d)
        self.prior = MLP(2 * d, cfg.ae_hidden, 1)
        self.scale = d**-0.5

    def forward(self, psi: torch.Tensor, z: torch.Tensor, pair_graph: torch.Tensor):
        zq = self.query(z)[pair_graph]
        zg = z[pair_graph]
        return (psi * zq).sum(-1) * self.scale + self.prior(torch.cat([psi, zg], dim=-1)).squeeze(-1)


def build(module: nn.Module, seed: int) -> nn.Module:
    return xavier_init(module, seed)
