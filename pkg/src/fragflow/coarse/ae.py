"""Coarse-to-fine autoencoder: encode atom connectivity into z, decode slot-pair
scores, discretize with maximum-weight matching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from fragflow.chem import BondOrder, MolGraph, canonical_smiles
from fragflow.coarse.graph import CoarseGraph, Matching, reconstruct_status, to_coarse
from fragflow.coarse.matching import MatchProblem, blossom_match, match_problem, resolve_matching
from fragflow.frag import Vocabulary
from fragflow.neural.features import GraphArrays, bond_features, collate, mol_arrays
from fragflow.neural.models import AEDecoder, AEEncoder, NetConfig, SlotPairNet, build

BETA = 1e-4


class TemplateArrays:
    """Cached featurized templates, one per vocabulary id."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._cache: dict[int, GraphArrays] = {}

    def __getitem__(self, vid: int) -> GraphArrays:
        if vid not in self._cache:
            self._cache[vid] = mol_arrays(self.vocab.template(vid).graph)
        return self._cache[vid]


_CANDIDATE_ATTR = bond_features(BondOrder.SINGLE, candidate=True)


def decoder_graph(coarse: CoarseGraph, problem: MatchProblem, templates: TemplateArrays):
    """Templates side by side plus one candidate edge per slot pair.

    Returns the graph arrays and the wildcard-atom index of each candidate's
    two slots.
    """
    xs, edges, attrs = [], [], []
    slot_atom: dict[tuple[int, int], int] = {}
    offset = 0
    for node, vid in enumerate(coarse.nodes):
        g = templates[vid]
        xs.append(g.x)
        edges.append(g.edges + offset)
        attrs.append(g.edge_attr)
        for s, w in enumerate(templates.vocab.template(vid).wildcards):
            slot_atom[(node, s)] = offset + w
        offset += g.x.shape[0]
    pa = np.array([slot_atom[problem.slots[i]] for i, _ in problem.candidates], dtype=np.int64)
    pb = np.array([slot_atom[problem.slots[j]] for _, j in problem.candidates], dtype=np.int64)
    if len(pa):
        edges.append(np.stack([pa, pb], axis=1))
        attrs.append(np.repeat(_CANDIDATE_ATTR[None], len(pa), axis=0))
    return (
        GraphArrays(
            np.concatenate(xs),
            np.concatenate(edges).reshape(-1, 2),
            np.concatenate(attrs).reshape(-1, _CANDIDATE_ATTR.shape[0]),
        ),
        pa,
        pb,
    )


@dataclass
class AEExample:
    smiles: str
    coarse: CoarseGraph
    truth: Matching
    problem: MatchProblem
    decoder: GraphArrays
    pair_a: np.ndarray
    pair_b: np.ndarray
    labels: np.ndarray  # 1 for candidates realized in the molecule


def prepare_example(mol: MolGraph, vocab: Vocabulary, templates: TemplateArrays) -> AEExample:
    coarse, truth = to_coarse(mol, vocab)
    problem = match_problem(coarse)
    dec, pa, pb = decoder_graph(coarse, problem, templates)
    index = problem.candidate_index()
    labels = np.zeros(len(problem.candidates), dtype=np.float32)
    for pair in truth.pairs:
        labels[index[pair]] = 1.0
    return AEExample(canonical_smiles(mol), coarse, truth, problem, dec, pa, pb, labels)


class Autoencoder(nn.Module):
    """The encoder sees which candidate pairs the molecule realizes (its atom
    connectivity given the coarse graph); the decoder sees only the candidates."""

    def __init__(self, cfg: NetConfig, seed: int = 0, beta: float = BETA):
        super().__init__()
        self.cfg = cfg
        self.beta = beta
        self.pairs = build(SlotPairNet(cfg), seed)
        self.encoder = build(AEEncoder(cfg), seed + 1)
        self.decoder = build(AEDecoder(cfg), seed + 2)

    def pair_embeddings(self, graphs, pair_as, pair_bs):
        """Flat candidate embeddings and the owning graph of each."""
        batch = collate(graphs)
        offsets = batch.offsets
        pa = np.concatenate([a + offsets[g] for g, a in enumerate(pair_as)])
        pb = np.concatenate([b + offsets[g] for g, b in enumerate(pair_bs)])
        owner = np.concatenate([np.full(len(a), g, dtype=np.int64) for g, a in enumerate(pair_as)])
        psi = self.pairs(batch.to(torch.get_default_dtype()), torch.from_numpy(pa), torch.from_numpy(pb))
        return psi, torch.from_numpy(owner)

    def _encode(self, psi, owner, examples, generator):
        true = torch.from_numpy(np.concatenate([ex.labels for ex in examples]) > 0)
        mean, logvar = self.encoder(psi[true], owner[true], len(examples))
        if generator is None:
            return mean, logvar, mean
        eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        return mean, logvar, mean + torch.exp(0.5 * logvar) * eps

    def encode(self, examples: Sequence[AEExample], generator: torch.Generator | None = None):
        """(mean, logvar, z); z is the mean when no generator is given."""
        psi, owner = self.pair_embeddings(*self._arrays(examples))
        return self._encode(psi, owner, examples, generator)

    @staticmethod
    def _arrays(examples):
        return [ex.decoder for ex in examples], [ex.pair_a for ex in examples], [ex.pair_b for ex in examples]

    def decode_arrays(self, graphs, pair_as, pair_bs, z: torch.Tensor) -> list[torch.Tensor]:
        psi, owner = self.pair_embeddings(graphs, pair_as, pair_bs)
        scores = self.decoder(psi, z.to(psi.dtype), owner)
        return list(torch.split(scores, [len(a) for a in pair_as]))

    def decode(self, examples: Sequence[AEExample], z: torch.Tensor) -> list[torch.Tensor]:
        return self.decode_arrays(*self._arrays(examples), z)

    def loss(self, examples: Sequence[AEExample], generator: torch.Generator | None = None):
        psi, owner = self.pair_embeddings(*self._arrays(examples))
        mean, logvar, z = self._encode(psi, owner, examples, generator)
        scores = torch.split(self.decoder(psi, z, owner), [len(ex.pair_a) for ex in examples])
        labels = [torch.from_numpy(ex.labels).to(mean.dtype) for ex in examples]
        return ae_loss(scores, labels, mean, logvar, self.beta)


def kl_standard_normal(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mean, exp(logvar)) || N(0, I)) per row."""
    return 0.5 * (mean.pow(2) + logvar.exp() - 1.0 - logvar).sum(-1)


def ae_loss(scores, labels, mean, logvar, beta: float = BETA):
    """Per molecule: Σ_pairs BCE + β·KL; averaged over the batch.

    Returns (loss, mean BCE sum, mean KL).
    """
    bce = torch.stack(
        [
            nn.functional.binary_cross_entropy_with_logits(s, y, reduction="sum") if len(s) else s.new_zeros(())
            for s, y in zip(scores, labels)
        ]
    )
    kl = kl_standard_normal(mean, logvar)
    return (bce + beta * kl).mean(), bce.mean(), kl.mean()


def discretize(coarse: CoarseGraph, problem: MatchProblem, scores) -> Matching:
    weights = np.asarray(scores.detach().cpu().numpy() if isinstance(scores, torch.Tensor) else scores, dtype=np.float64)
    p = problem.with_weights(weights)
    return resolve_matching(p, blossom_match(p))


@torch.no_grad()
def reconstruct_batch(model: Autoencoder, examples: Sequence[AEExample], vocab: Vocabulary, z: torch.Tensor):
    """Decode each example's coarse graph with ``z``; returns (status, mol) per example."""
    scores = model.decode(examples, z)
    out = []
    for ex, s in zip(examples, scores):
        out.append(reconstruct_status(ex.coarse, discretize(ex.coarse, ex.problem, s), vocab))
    return out


def recovered_bonds(coarse: CoarseGraph, predicted: Matching, truth: Matching, vocab: Vocabulary) -> int:
    """Ground-truth slot pairs recovered by ``predicted``, where two slots of
    a fragment count as the same when they share a symmetry class."""

    def cls(slot):
        return vocab.template(coarse.nodes[slot[0]]).slot_classes[slot[1]]

    def edge_key(pair):
        a, b = pair
        return (a[0], cls(a), b[0], cls(b))

    remaining: dict[tuple, int] = {}
    for pair in truth.pairs:
        remaining[edge_key(pair)] = remaining.get(edge_key(pair), 0) + 1
    hits = 0
    for pair in sorted(predicted.pairs):
        key = edge_key(pair)
        if remaining.get(key, 0) > 0:
            remaining[key] -= 1
            hits += 1
    return hits


@torch.no_grad()
def roundtrip_accuracy(
    model: Autoencoder, examples: Sequence[AEExample], vocab: Vocabulary, z_mode: str = "encoded", seed: int = 0, chunk: int = 64
) -> dict:
    """Graph-level and bond-level reconstruction accuracy.

    ``z_mode`` is "encoded" (posterior mean) or "random" (z ~ N(0, I)).
    Bond accuracy is the fraction of ground-truth slot pairs recovered, up
    to slot symmetry within each fragment.
    """
    gen = torch.Generator().manual_seed(seed)
    graph_ok = 0
    bonds_ok = 0
    bonds_total = 0
    for start in range(0, len(examples), chunk):
        part = examples[start : start + chunk]
        if z_mode == "encoded":
            _, _, z = model.encode(part)
        elif z_mode == "random":
            z = torch.randn((len(part), model.cfg.latent_dim), generator=gen)
        else:
            raise ValueError(f"unknown z_mode {z_mode!r}")
        scores = model.decode(part, z)
        for ex, s in zip(part, scores):
            matching = discretize(ex.coarse, ex.problem, s)
            bonds_ok += recovered_bonds(ex.coarse, matching, ex.truth, vocab)
            bonds_total += len(ex.truth.pairs)
            status, mol = reconstruct_status(ex.coarse, matching, vocab)
            if mol is not None and status == "valid" and canonical_smiles(mol) == ex.smiles:
                graph_ok += 1
    n = max(len(examples), 1)
    return {
        "graph": graph_ok / n,
        "bond": bonds_ok / bonds_total if bonds_total else 1.0,
        "n": len(examples),
    }
