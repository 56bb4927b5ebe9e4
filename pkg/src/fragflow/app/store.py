"""Checkpoint persistence for each trained component."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fragflow.app.train import PredictorBundle
from fragflow.coarse.ae import Autoencoder
from fragflow.flow.model import FlowModel
from fragflow.flow.sampler import SizeHistogram
from fragflow.frag import Vocabulary
from fragflow.neural.checkpoint import CheckpointError, load_checkpoint, load_module, module_arrays, save_checkpoint
from fragflow.neural.models import FragmentPropertyNet, NetConfig, NoisyPropertyPredictor
from fragflow.neural.optim import EMA


class VocabMismatch(CheckpointError):
    pass


def _header(kind: str, net: NetConfig, vocab: Vocabulary, **extra) -> dict:
    return {"kind": kind, "net": net.to_dict(), "vocab_digest": vocab.digest(), **extra}


def _open(path: str | Path, kind: str, vocab: Vocabulary):
    config, arrays = load_checkpoint(path)
    if config.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {config.get('kind')!r}")
    if config.get("vocab_digest") != vocab.digest():
        raise VocabMismatch(f"{path}: trained against a different vocabulary")
    return config, arrays, NetConfig(**config["net"])


def save_autoencoder(path: str | Path, model: Autoencoder, vocab: Vocabulary) -> None:
    save_checkpoint(path, _header("autoencoder", model.cfg, vocab, beta=model.beta), module_arrays(model))


def load_autoencoder(path: str | Path, vocab: Vocabulary) -> Autoencoder:
    config, arrays, net = _open(path, "autoencoder", vocab)
    model = Autoencoder(net, 0, config["beta"])
    load_module(model, arrays)
    model.eval()
    return model


def save_flow(path: str | Path, model: FlowModel, ema: EMA, sizes: SizeHistogram) -> None:
    arrays = module_arrays(model, "model.")
    arrays.update({"ema." + k: v for k, v in ema.shadow.items()})
    save_checkpoint(path, _header("flow", model.cfg, model.vocab, sizes=sizes.to_dict()), arrays)


def load_flow(path: str | Path, vocab: Vocabulary, use_ema: bool = True) -> tuple[FlowModel, SizeHistogram]:
    config, arrays, net = _open(path, "flow", vocab)
    model = FlowModel(net, vocab, 0)
    load_module(model, arrays, "ema." if use_ema else "model.")
    model.eval()
    return model, SizeHistogram.from_dict(config["sizes"])


def save_predictors(path: str | Path, bundle: PredictorBundle, vocab: Vocabulary, prop: str, net: NetConfig) -> None:
    arrays = module_arrays(bundle.noisy, "noisy.")
    arrays.update(module_arrays(bundle.fragment, "fragment."))
    arrays["fragment_mu"] = np.asarray(bundle.fragment_mu, dtype=np.float32)
    save_checkpoint(path, _header("predictor", net, vocab, property=prop), arrays)


def load_predictors(path: str | Path, vocab: Vocabulary) -> tuple[PredictorBundle, str]:
    config, arrays, net = _open(path, "predictor", vocab)
    noisy = NoisyPropertyPredictor(net, len(vocab))
    load_module(noisy, arrays, "noisy.")
    fragment = FragmentPropertyNet(net)
    load_module(fragment, arrays, "fragment.")
    noisy.eval()
    fragment.eval()
    mu = arrays["fragment_mu"].astype(np.float64)
    return PredictorBundle(noisy, fragment, mu), config["property"]
