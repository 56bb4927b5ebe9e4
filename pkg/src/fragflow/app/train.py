"""Training loops for the autoencoder, the flow network and the property
predictors. Every loop is single-threaded and seeded per phase, so a fixed
config reproduces checkpoints bit for bit."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from fragflow.app.config import RunConfig
from fragflow.chem import ChemError, MolGraph, descriptors, parse_smiles, read_smiles_file
from fragflow.coarse.ae import AEExample, Autoencoder, TemplateArrays, prepare_example
from fragflow.coarse.graph import UnknownFragmentError
from fragflow.flow.loss import FlowExample, flow_loss
from fragflow.flow.model import FlowModel, pad_batch
from fragflow.flow.noise import MASK, sample_training_triple
from fragflow.flow.sampler import relaxed_states
from fragflow.frag import Vocabulary
from fragflow.neural import EMA, AdamW, collate
from fragflow.neural.models import FragmentPropertyNet, NoisyPropertyPredictor, build

log = logging.getLogger("fragflow")

PHASES = {"ae": 1, "flow": 2, "predictor": 3, "fragment_predictor": 4}


class DataError(ValueError):
    pass


def phase_seed(seed: int, phase: str) -> int:
    return int(np.random.SeedSequence([seed, PHASES[phase]]).generate_state(1)[0])


def molecule_property(mol: MolGraph, name: str) -> float:
    d = descriptors(mol)
    if not hasattr(d, name):
        raise DataError(f"unknown property {name!r}")
    return float(getattr(d, name))


def load_molecules(path: str | Path) -> tuple[list[str], list[MolGraph]]:
    """Parse a SMILES file; any unparseable line is a data error."""
    try:
        smiles = read_smiles_file(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    mols = []
    for lineno, s in enumerate(smiles, 1):
        try:
            mols.append(parse_smiles(s))
        except ChemError as exc:
            raise DataError(f"{path}: entry {lineno} ({s}): {exc}") from exc
    if not mols:
        raise DataError(f"{path}: no molecules")
    return smiles, mols


class RunLog:
    """Machine-readable JSON-lines log next to the artifacts."""

    def __init__(self, path: Path | None):
        self.path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("", encoding="utf-8")

    def __call__(self, **record) -> None:
        parts = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in record.items())
        log.info(parts)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def optimizer(params, cfg: RunConfig, lr: float) -> AdamW:
    return AdamW(params, lr=lr, betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay, clip_norm=cfg.grad_clip)


def prepare_examples(
    mols: Sequence[MolGraph],
    vocab: Vocabulary,
    templates: TemplateArrays | None = None,
    skip_unknown: bool = False,
) -> list[AEExample]:
    """AE examples for ``mols``. Molecules with a fragment outside the
    vocabulary are a data error, or are dropped (and counted in the log)
    when ``skip_unknown`` is set, as for held-out splits."""
    templates = templates or TemplateArrays(vocab)
    out = []
    for m in mols:
        try:
            out.append(prepare_example(m, vocab, templates))
        except UnknownFragmentError as exc:
            if not skip_unknown:
                raise DataError(f"fragment missing from vocabulary: {exc}") from exc
    if len(out) < len(mols):
        log.info("skipped %d of %d molecules with fragments outside the vocabulary", len(mols) - len(out), len(mols))
    return out


def _batches(n: int, size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, size):
        yield perm[start : start + size]


@torch.no_grad()
def ae_validation_bce(model: Autoencoder, examples: Sequence[AEExample], chunk: int = 64) -> float:
    total = 0.0
    for start in range(0, len(examples), chunk):
        part = examples[start : start + chunk]
        _, bce, _ = model.loss(part)
        total += float(bce) * len(part)
    return total / max(len(examples), 1)


def train_autoencoder(
    cfg: RunConfig,
    train: Sequence[AEExample],
    valid: Sequence[AEExample],
    record: Callable = RunLog(None),
) -> Autoencoder:
    """Early stopping on validation BCE; returns the best model."""
    seed = phase_seed(cfg.seed, "ae")
    model = Autoencoder(cfg.net(), seed, cfg.ae_beta)
    opt = optimizer(model.parameters(), cfg, cfg.ae_lr)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    best, best_state, stale = float("inf"), copy.deepcopy(model.state_dict()), 0
    for epoch in range(cfg.ae_epochs):
        model.train()
        loss_sum = bce_sum = kl_sum = 0.0
        for idx in _batches(len(train), cfg.batch_size, rng):
            loss, bce, kl = model.loss([train[i] for i in idx], gen)
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(idx)
            bce_sum += bce.item() * len(idx)
            kl_sum += kl.item() * len(idx)
        model.eval()
        val = ae_validation_bce(model, valid) if valid else bce_sum / len(train)
        n = len(train)
        record(phase="ae", epoch=epoch, loss=loss_sum / n, bce=bce_sum / n, kl=kl_sum / n, valid_bce=val)
        if val < best:
            best, best_state, stale = val, copy.deepcopy(model.state_dict()), 0
        else:
            stale += 1
            if stale >= cfg.ae_patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return model


@torch.no_grad()
def flow_examples(model: Autoencoder, examples: Sequence[AEExample], chunk: int = 64) -> list[FlowExample]:
    """Coarse graphs paired with the encoder's posterior mean."""
    out = []
    for start in range(0, len(examples), chunk):
        part = examples[start : start + chunk]
        _, _, z = model.encode(part)
        for ex, zz in zip(part, z.double().numpy()):
            out.append(FlowExample(np.asarray(ex.coarse.nodes, dtype=np.int64), ex.coarse.adjacency.copy(), zz))
    return out


def train_flow(cfg: RunConfig, vocab: Vocabulary, examples: Sequence[FlowExample], record: Callable = RunLog(None)):
    """Returns (model with raw weights, EMA shadow)."""
    seed = phase_seed(cfg.seed, "flow")
    model = FlowModel(cfg.net(), vocab, seed)
    opt = optimizer(model.parameters(), cfg, cfg.lr)
    ema = EMA(model, cfg.ema_decay)
    rng = np.random.default_rng(seed)
    weights = cfg.loss_weights()
    bag = min(cfg.bag_train, len(vocab))
    for epoch in range(cfg.flow_epochs):
        sums = np.zeros(4)
        for idx in _batches(len(examples), cfg.batch_size, rng):
            total, l_node, l_edge, l_lat = flow_loss(model, [examples[i] for i in idx], rng, bag, weights)
            opt.zero_grad()
            total.backward()
            opt.step()
            ema.update(model)
            sums += np.array([total.item(), l_node.item(), l_edge.item(), l_lat.item()]) * len(idx)
        sums /= len(examples)
        record(phase="flow", epoch=epoch, loss=sums[0], node=sums[1], edge=sums[2], latent=sums[3])
    return model, ema


def _predictor_batch(examples: Sequence[FlowExample], targets: np.ndarray, vocab_size: int, rng: np.random.Generator):
    noisy = [sample_training_triple(ex.nodes, ex.edges, ex.z1, rng) for ex in examples]
    batch = pad_batch(
        [s.nodes for _, s, _ in noisy],
        [s.edges for _, s, _ in noisy],
        [t for t, _, _ in noisy],
        [s.z for _, s, _ in noisy],
    )
    node_oh, edge_oh = relaxed_states(batch.nodes, batch.node_mask, batch.adjacency, vocab_size)
    dtype = torch.get_default_dtype()
    return (
        torch.from_numpy(node_oh).to(dtype),
        torch.from_numpy(edge_oh).to(dtype),
        torch.from_numpy(batch.node_mask),
        torch.from_numpy(batch.t).to(dtype),
        torch.from_numpy(batch.z).to(dtype),
        torch.from_numpy(np.asarray(targets, dtype=np.float64)).to(dtype),
    )


def train_noisy_predictor(
    cfg: RunConfig,
    vocab: Vocabulary,
    examples: Sequence[FlowExample],
    targets: np.ndarray,
    record: Callable = RunLog(None),
) -> NoisyPropertyPredictor:
    """μ(X_t, t): MSE to the clean property along the same noising path."""
    seed = phase_seed(cfg.seed, "predictor")
    model = build(NoisyPropertyPredictor(cfg.net(), len(vocab)), seed)
    model.reset_table(seed)
    opt = optimizer(model.parameters(), cfg, cfg.predictor_lr)
    rng = np.random.default_rng(seed)
    targets = np.asarray(targets, dtype=np.float64)
    for epoch in range(cfg.predictor_epochs):
        total = 0.0
        for idx in _batches(len(examples), cfg.batch_size, rng):
            *inputs, y = _predictor_batch([examples[i] for i in idx], targets[idx], len(vocab), rng)
            loss = (model(*inputs) - y).pow(2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        record(phase="predictor", epoch=epoch, mse=total / len(examples))
    model.eval()
    return model


def fragment_targets(vocab: Vocabulary, examples: Sequence[FlowExample], values: np.ndarray) -> np.ndarray:
    """Mean property of the training molecules containing each fragment;
    fragments never seen fall back to the corpus mean."""
    sums = np.zeros(len(vocab))
    counts = np.zeros(len(vocab))
    for ex, v in zip(examples, values):
        for vid in set(int(x) for x in ex.nodes if x != MASK):
            sums[vid] += v
            counts[vid] += 1
    mean = float(np.mean(values)) if len(values) else 0.0
    return np.where(counts > 0, sums / np.maximum(counts, 1), mean)


def train_fragment_predictor(
    cfg: RunConfig, vocab: Vocabulary, targets: np.ndarray, record: Callable = RunLog(None)
) -> FragmentPropertyNet:
    seed = phase_seed(cfg.seed, "fragment_predictor")
    model = build(FragmentPropertyNet(cfg.net()), seed)
    opt = optimizer(model.parameters(), cfg, cfg.predictor_lr)
    templates = TemplateArrays(vocab)
    batch = collate([templates[i] for i in range(len(vocab))]).to(torch.get_default_dtype())
    y = torch.from_numpy(np.asarray(targets, dtype=np.float64)).to(torch.get_default_dtype())
    for epoch in range(cfg.fragment_predictor_epochs):
        loss = (model(batch) - y).pow(2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        if epoch % 20 == 19 or epoch == cfg.fragment_predictor_epochs - 1:
            record(phase="fragment_predictor", epoch=epoch, mse=loss.item())
    model.eval()
    return model


@torch.no_grad()
def fragment_predictions(model: FragmentPropertyNet, vocab: Vocabulary) -> np.ndarray:
    templates = TemplateArrays(vocab)
    batch = collate([templates[i] for i in range(len(vocab))]).to(torch.get_default_dtype())
    return model(batch).double().numpy()


@dataclass
class PredictorBundle:
    noisy: NoisyPropertyPredictor
    fragment: FragmentPropertyNet
    fragment_mu: np.ndarray
