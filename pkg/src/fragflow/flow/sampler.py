"""Euler sampling of fragment graphs and decoding to molecules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from fragflow.bag import bag_log_weights, conditional_reweight, gumbel_top_k, posterior_from_logits, tempered_log_marginal
from fragflow.chem import ChemError, MolGraph, canonical_smiles
from fragflow.coarse.ae import Autoencoder, TemplateArrays, decoder_graph, discretize
from fragflow.coarse.graph import PARSE_FAIL, CoarseGraph, reconstruct_status
from fragflow.coarse.matching import match_problem
from fragflow.flow.model import DenseBatch, FlowModel
from fragflow.flow.noise import MASK, time_grid
from fragflow.flow.steps import euler_edge_step, euler_latent_step, euler_node_step
from fragflow.guidance import GuidanceConfig, guidance_factors


@dataclass(frozen=True)
class SamplingConfig:
    n_samples: int = 1000
    steps: int = 50
    distortion: str = "polydec"
    eta_node: float = 20.0
    eta_edge: float = 0.0
    bag_size: int = 128
    t_pred: float = 1.0
    t_bag: float = 1.0
    seed: int = 0
    chunk: int = 100
    condition: GuidanceConfig | None = None


@dataclass
class Sample:
    status: str
    smiles: str | None
    nodes: tuple[int, ...]
    mol: MolGraph | None = field(default=None, repr=False)


class SizeHistogram:
    """Empirical distribution of fragment counts."""

    def __init__(self, sizes=None, *, values=None, counts=None):
        if sizes is not None:
            values, counts = np.unique(np.asarray(sizes, dtype=np.int64), return_counts=True)
        self.values = np.asarray(values, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        if len(self.values) == 0 or (self.counts <= 0).any() or (self.values < 1).any():
            raise ValueError("size histogram needs positive sizes and counts")
        self.probs = self.counts / self.counts.sum()

    def draw(self, rng: np.random.Generator) -> int:
        return int(self.values[rng.choice(len(self.values), p=self.probs)])

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SizeHistogram":
        return cls(values=d["values"], counts=d["counts"])


def relaxed_states(nodes, node_mask, adjacency, vocab_size):
    b, n = nodes.shape
    node_oh = np.zeros((b, n, vocab_size + 1))
    idx = np.where(nodes == MASK, vocab_size, nodes)
    node_oh[np.arange(b)[:, None], np.arange(n)[None, :], idx] = 1.0
    node_oh *= node_mask[..., None]
    edge_oh = np.stack([~adjacency, adjacency], axis=-1).astype(np.float64)
    return node_oh, edge_oh


@torch.no_grad()
def sample_graphs(
    model: FlowModel,
    sizes: SizeHistogram,
    cfg: SamplingConfig,
    predictor=None,
    fragment_mu: np.ndarray | None = None,
    indices: Sequence[int] | None = None,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Generate (nodes, edges, z) triples. Sample i owns the i-th RNG stream
    spawned from ``cfg.seed``, drawn in a fixed order per step, so any subset
    of ``indices`` reproduces exactly what a full run yields for it."""
    vocab = model.vocab
    v_size = len(vocab)
    cond = cfg.condition
    marginal = vocab.marginal
    if cond is not None and cond.lambda_bag > 0:
        if fragment_mu is None:
            raise ValueError("bag reweighting needs fragment property predictions")
        marginal = conditional_reweight(marginal, fragment_mu, cond.target, cond.lambda_bag)
    log_bag = tempered_log_marginal(marginal, cfg.t_bag)
    bag_n = min(cfg.bag_size, v_size)
    offset = torch.from_numpy(bag_log_weights(log_bag, bag_n))
    all_ids = np.arange(v_size)
    table = model.embed(all_ids)
    grid = time_grid(cfg.steps, cfg.distortion)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_samples)
    indices = list(range(cfg.n_samples)) if indices is None else list(indices)
    d = model.cfg.latent_dim
    out = []
    for start in range(0, len(indices), cfg.chunk):
        rngs = [np.random.default_rng(seeds[i]) for i in indices[start : start + cfg.chunk]]
        b = len(rngs)
        counts = [sizes.draw(r) for r in rngs]
        n = max(counts)
        nodes = np.full((b, n), MASK, dtype=np.int64)
        node_mask = np.zeros((b, n), dtype=bool)
        adj = np.zeros((b, n, n), dtype=bool)
        z = np.zeros((b, d))
        for i, (r, k) in enumerate(zip(rngs, counts)):
            node_mask[i, :k] = True
            iu = np.triu_indices(k, 1)
            e = np.zeros((k, k), dtype=bool)
            e[iu] = r.random(len(iu[0])) < 0.5
            adj[i, :k, :k] = e | e.T
            z[i] = r.standard_normal(d)
        for step in range(cfg.steps):
            t = float(grid[step])
            dt = float(grid[step + 1] - grid[step])
            final = step == cfg.steps - 1
            in_bag = np.zeros((b, v_size), dtype=bool)
            for i, r in enumerate(rngs):
                in_bag[i, gumbel_top_k(log_bag, bag_n, r)] = True
                cur = nodes[i, : counts[i]]
                in_bag[i, cur[cur != MASK]] = True
            batch = DenseBatch(nodes, node_mask, adj, np.full(b, t), z)
            H, edge_logits, vel = model(batch, all_ids, table)
            logits = (H @ table.T).double()
            post = posterior_from_logits(logits, cfg.t_pred, torch.from_numpy(in_bag[:, None, :]), offset).numpy()
            p_edge = torch.sigmoid(edge_logits.double()).numpy()
            vel = vel.double().numpy()
            node_log = edge_log = None
            if cond is not None and cond.lambda_x > 0 and predictor is not None:
                node_oh, edge_oh = relaxed_states(nodes, node_mask, adj, v_size)
                dtype = next(predictor.parameters()).dtype
                node_log, edge_log, shift = guidance_factors(
                    predictor,
                    torch.from_numpy(node_oh).to(dtype),
                    torch.from_numpy(edge_oh).to(dtype),
                    node_mask,
                    t,
                    torch.from_numpy(z).to(dtype),
                    cond,
                )
                vel = vel + shift
            for i, r in enumerate(rngs):
                k = counts[i]
                u = r.random(k)
                mult = None if node_log is None else node_log[i, :k]
                nodes[i, :k] = euler_node_step(nodes[i, :k], post[i, :k], t, dt, cfg.eta_node, u, mult, final)
                iu = np.triu_indices(k, 1)
                ue = r.random(len(iu[0]))
                emult = None if edge_log is None else edge_log[i][iu]
                flat = euler_edge_step(adj[i][iu].astype(np.int64), p_edge[i][iu], t, dt, cfg.eta_edge, ue, emult)
                e = np.zeros((k, k), dtype=bool)
                e[iu] = flat.astype(bool)
                adj[i, :k, :k] = e | e.T
            z = euler_latent_step(z, vel, dt)
        for i in range(b):
            k = counts[i]
            out.append((nodes[i, :k].copy(), adj[i, :k, :k].copy(), z[i].copy()))
    return out


@torch.no_grad()
def decode_graphs(ae: Autoencoder, vocab, graphs, chunk: int = 100) -> list[Sample]:
    """Slot scores from the AE decoder, blossom matching, reconstruction."""
    templates = ae_templates(ae, vocab)
    results: list[Sample] = []
    for start in range(0, len(graphs), chunk):
        part = graphs[start : start + chunk]
        coarse_list, problems, dec, pas, pbs, zs = [], [], [], [], [], []
        for nodes, edges, z in part:
            coarse = CoarseGraph.from_edges(
                nodes.tolist(), [int(vocab.arities[x]) for x in nodes], zip(*np.nonzero(np.triu(edges, 1)))
            )
            problem = match_problem(coarse)
            g, pa, pb = decoder_graph(coarse, problem, templates)
            coarse_list.append(coarse)
            problems.append(problem)
            dec.append(g)
            pas.append(pa)
            pbs.append(pb)
            zs.append(z)
        z = torch.from_numpy(np.stack(zs)).to(torch.get_default_dtype())
        scores = ae.decode_arrays(dec, pas, pbs, z)
        for coarse, problem, s in zip(coarse_list, problems, scores):
            matching = discretize(coarse, problem, s)
            status, mol = reconstruct_status(coarse, matching, vocab)
            smiles = None
            if mol is not None:
                try:
                    smiles = canonical_smiles(mol)
                except ChemError:
                    status, mol = PARSE_FAIL, None
            results.append(Sample(status, smiles, tuple(coarse.nodes), mol))
    return results


_TEMPLATE_CACHE: dict[int, object] = {}


def ae_templates(ae: Autoencoder, vocab):
    key = id(vocab)
    cached = _TEMPLATE_CACHE.get(key)
    if cached is None or cached.vocab is not vocab:
        cached = TemplateArrays(vocab)
        _TEMPLATE_CACHE[key] = cached
    return cached


def sample(
    model: FlowModel,
    ae: Autoencoder,
    sizes: SizeHistogram,
    cfg: SamplingConfig,
    predictor=None,
    fragment_mu=None,
    indices: Sequence[int] | None = None,
) -> list[Sample]:
    graphs = sample_graphs(model, sizes, cfg, predictor, fragment_mu, indices)
    return decode_graphs(ae, model.vocab, graphs, cfg.chunk)
