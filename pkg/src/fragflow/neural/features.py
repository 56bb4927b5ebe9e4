"""Input featurization for atom graphs and coarse graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch

from fragflow.chem import MolGraph
from fragflow.chem.elements import ELEMENT_INDEX, ELEMENT_ORDER, BondOrder

MAX_DEGREE = 5
MAX_HYDROGENS = 3
ATOM_FEATURE_DIM = len(ELEMENT_ORDER) + (MAX_DEGREE + 1) + (MAX_HYDROGENS + 1) + 3
# bond order one-hot, cut flag, candidate flag
BOND_FEATURE_DIM = 4 + 2


def _one_hot(index: int, width: int) -> np.ndarray:
    v = np.zeros(width, dtype=np.float32)
    v[min(index, width - 1)] = 1.0
    return v


def atom_features(mol: MolGraph, junction: Iterable[int] = ()) -> np.ndarray:
    """Element, degree, hydrogen count, aromatic, ring and junction flags."""
    junction = set(junction)
    for i, a in enumerate(mol.atoms):
        if a.is_wildcard:
            junction.update(j for j, _ in mol.neighbors[i])
    ring = mol.ring_atoms
    rows = []
    for i, a in enumerate(mol.atoms):
        rows.append(
            np.concatenate(
                [
                    _one_hot(ELEMENT_INDEX[a.element], len(ELEMENT_ORDER)),
                    _one_hot(mol.degree(i), MAX_DEGREE + 1),
                    _one_hot(a.hydrogens, MAX_HYDROGENS + 1),
                    np.array([a.aromatic, i in ring, i in junction], dtype=np.float32),
                ]
            )
        )
    return np.stack(rows) if rows else np.zeros((0, ATOM_FEATURE_DIM), dtype=np.float32)


def bond_features(order: BondOrder, cut: bool = False, candidate: bool = False) -> np.ndarray:
    v = np.zeros(BOND_FEATURE_DIM, dtype=np.float32)
    v[int(order) - 1] = 1.0
    v[4] = float(cut)
    v[5] = float(candidate)
    return v


@dataclass
class GraphArrays:
    """One graph as arrays; ``edges`` lists each undirected edge once."""

    x: np.ndarray
    edges: np.ndarray  # (E, 2) int64
    edge_attr: np.ndarray  # (E, BOND_FEATURE_DIM)


def mol_arrays(mol: MolGraph, cut_bonds: Iterable[int] = (), junction: Iterable[int] = ()) -> GraphArrays:
    cut = set(cut_bonds)
    edges = np.array([[b.a, b.b] for b in mol.bonds], dtype=np.int64).reshape(-1, 2)
    attr = [bond_features(b.order, k in cut) for k, b in enumerate(mol.bonds)]
    attr = np.stack(attr) if attr else np.zeros((0, BOND_FEATURE_DIM), dtype=np.float32)
    return GraphArrays(atom_features(mol, junction), edges, attr)


@dataclass
class GraphBatch:
    """Disjoint union of graphs with directed edges in both directions."""

    x: torch.Tensor
    src: torch.Tensor
    dst: torch.Tensor
    edge_attr: torch.Tensor
    graph: torch.Tensor
    n_graphs: int
    offsets: np.ndarray

    def to(self, dtype: torch.dtype) -> "GraphBatch":
        return GraphBatch(
            self.x.to(dtype), self.src, self.dst, self.edge_attr.to(dtype), self.graph, self.n_graphs, self.offsets
        )


def collate(graphs: Sequence[GraphArrays]) -> GraphBatch:
    sizes = np.array([g.x.shape[0] for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    x = np.concatenate([g.x for g in graphs]) if graphs else np.zeros((0, ATOM_FEATURE_DIM), np.float32)
    src, dst, attr = [], [], []
    for off, g in zip(offsets, graphs):
        if len(g.edges):
            e = g.edges + off
            src.append(np.concatenate([e[:, 0], e[:, 1]]))
            dst.append(np.concatenate([e[:, 1], e[:, 0]]))
            attr.append(np.concatenate([g.edge_attr, g.edge_attr]))
    cat = lambda parts, empty: np.concatenate(parts) if parts else empty
    return GraphBatch(
        x=torch.from_numpy(x),
        src=torch.from_numpy(cat(src, np.zeros(0, np.int64))),
        dst=torch.from_numpy(cat(dst, np.zeros(0, np.int64))),
        edge_attr=torch.from_numpy(cat(attr, np.zeros((0, BOND_FEATURE_DIM), np.float32))),
        graph=torch.from_numpy(np.repeat(np.arange(len(graphs)), sizes)),
        n_graphs=len(graphs),
        offsets=offsets,
    )


def rrwp(adjacency: torch.Tensor, steps: int = 6) -> torch.Tensor:
    """Random-walk probabilities P^1..P^K with P = D^-1 A, shape (..., n, n, K).

    Isolated nodes get a self-loop so every row of P is a distribution.
    """
    a = adjacency.to(torch.get_default_dtype() if not adjacency.is_floating_point() else adjacency.dtype)
    n = a.shape[-1]
    deg = a.sum(-1)
    eye = torch.eye(n, dtype=a.dtype)
    a = a + eye * (deg == 0).unsqueeze(-1).to(a.dtype)
    p = a / a.sum(-1, keepdim=True)
    out = []
    cur = p
    for _ in range(steps):
        out.append(cur)
        cur = cur @ p
    return torch.stack(out, dim=-1)


def time_features(t: torch.Tensor, width: int = 16) -> torch.Tensor:
    """Sinusoidal embedding of t in [0, 1], shape (..., width)."""
    half = width // 2
    freqs = torch.exp(torch.linspace(0.0, math.log(1000.0), half, dtype=t.dtype))
    angles = t.unsqueeze(-1) * freqs * math.pi
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
