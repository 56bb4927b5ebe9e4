"""Shared building blocks: seeded Xavier init, MLPs and sparse message passing."""

from __future__ import annotations

import torch
from torch import nn


def xavier_init(module: nn.Module, seed: int) -> nn.Module:
    """Uniform Xavier weights and zero biases from a private generator."""
    gen = torch.Generator().manual_seed(seed)
    for name, sub in sorted(module.named_modules(), key=lambda kv: kv[0]):
        if isinstance(sub, nn.Linear):
            with torch.no_grad():
                nn.init.xavier_uniform_(sub.weight, generator=gen)
                if sub.bias is not None:
                    sub.bias.zero_()
    return module


class MLP(nn.Sequential):
    def __init__(self, d_in: int, d_hidden: int, d_out: int):
        super().__init__(nn.Linear(d_in, d_hidden), nn.SiLU(), nn.Linear(d_hidden, d_out))


class SparseMPNN(nn.Module):
    """Residual edge-conditioned message passing over a directed edge list."""

    def __init__(self, hidden: int, edge_dim: int, rounds: int = 3):
        super().__init__()
        self.edge_in = nn.Linear(edge_dim, hidden)
        self.message = nn.ModuleList(MLP(2 * hidden, hidden, hidden) for _ in range(rounds))
        self.update = nn.ModuleList(MLP(2 * hidden, hidden, hidden) for _ in range(rounds))
        self.norm = nn.ModuleList(nn.LayerNorm(hidden) for _ in range(rounds))

    def forward(self, h: torch.Tensor, src: torch.Tensor, dst: torch.Tensor, edge_attr: torch.Tensor) -> torch.Tensor:
        e = self.edge_in(edge_attr)
        for message, update, norm in zip(self.message, self.update, self.norm):
            m = message(torch.cat([h[src], e], dim=-1))
            agg = torch.zeros_like(h).index_add(0, dst, m)
            h = norm(h + update(torch.cat([h, agg], dim=-1)))
        return h


def segment_sum(values: torch.Tensor, index: torch.Tensor, n: int) -> torch.Tensor:
    out = torch.zeros((n,) + values.shape[1:], dtype=values.dtype)
    return out.index_add(0, index, values)
