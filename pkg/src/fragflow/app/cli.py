"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 checkpoint
version or vocabulary mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from fragflow.app import store
from fragflow.app.config import ConfigError, RunConfig, add_config_arguments, config_from_args
from fragflow.app.manifest import write_json_atomic, write_manifest
from fragflow.app.toy import toy_splits
from fragflow.app.train import (
    DataError,
    PredictorBundle,
    RunLog,
    flow_examples,
    fragment_predictions,
    fragment_targets,
    load_molecules,
    molecule_property,
    phase_seed,
    prepare_examples,
    train_autoencoder,
    train_flow,
    train_fragment_predictor,
    train_noisy_predictor,
)
from fragflow.chem import ChemError, canonical_smiles, parse_smiles, write_smiles_file
from fragflow.coarse.ae import roundtrip_accuracy
from fragflow.flow.sampler import Sample, SizeHistogram, sample
from fragflow.frag import EmptyCorpusError, Vocabulary, build_vocabulary, cut_reasons, fragment_molecule
from fragflow.metrics import evaluate
from fragflow.neural.checkpoint import CheckpointError, CheckpointVersionError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECKPOINT = 0, 2, 3, 4
INVALID_SMILES = "-"

log = logging.getLogger("fragflow")


def _load_vocab(path: Path) -> Vocabulary:
    if not path.exists():
        raise ConfigError(f"vocabulary {path} does not exist (run build-vocab first)")
    try:
        return Vocabulary.load(path)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _artifact(cfg: RunConfig, name: str) -> Path:
    return cfg.out / name


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} {path} does not exist")
    return path


# -- build-vocab ------------------------------------------------------------


def cmd_build_vocab(args) -> int:
    started = time.time()
    corpus = Path(args.corpus)
    if not corpus.exists():
        raise ConfigError(f"corpus {corpus} does not exist")
    _, mols = load_molecules(corpus)
    vocab = build_vocabulary(mols)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    vocab.save(out)
    log.info("vocabulary: %d fragments from %d molecules -> %s", len(vocab), len(mols), out)
    write_manifest(out.parent, "build-vocab", vocab.digest(), {}, [out], started)
    return EXIT_OK


# -- training ----------------------------------------------------------------


def _training_setup(args, *paths: str) -> tuple[RunConfig, Vocabulary]:
    torch.set_num_threads(1)
    cfg = config_from_args(args)
    cfg.require_paths(*paths)
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg, _load_vocab(cfg.vocab_path)


def cmd_train_ae(args) -> int:
    started = time.time()
    cfg, vocab = _training_setup(args, "train", "valid")
    _, train_mols = load_molecules(cfg.train)
    _, valid_mols = load_molecules(cfg.valid)
    train = prepare_examples(train_mols, vocab)
    valid = prepare_examples(valid_mols, vocab, skip_unknown=True)
    model = train_autoencoder(cfg, train, valid, RunLog(_artifact(cfg, "ae.log.jsonl")))
    out = _artifact(cfg, "ae.ckpt")
    store.save_autoencoder(out, model, vocab)
    write_manifest(cfg.out, "train-ae", cfg.digest(), {"ae": phase_seed(cfg.seed, "ae")}, [out, _artifact(cfg, "ae.log.jsonl")], started)
    return EXIT_OK


def _encoded_training_set(cfg: RunConfig, vocab: Vocabulary):
    _, mols = load_molecules(cfg.train)
    ae = store.load_autoencoder(_require(_artifact(cfg, "ae.ckpt"), "autoencoder checkpoint"), vocab)
    return mols, flow_examples(ae, prepare_examples(mols, vocab))


def cmd_train_flow(args) -> int:
    started = time.time()
    cfg, vocab = _training_setup(args, "train")
    _, examples = _encoded_training_set(cfg, vocab)
    model, ema = train_flow(cfg, vocab, examples, RunLog(_artifact(cfg, "flow.log.jsonl")))
    sizes = SizeHistogram([len(ex.nodes) for ex in examples])
    out = _artifact(cfg, "flow.ckpt")
    store.save_flow(out, model, ema, sizes)
    write_manifest(cfg.out, "train-flow", cfg.digest(), {"flow": phase_seed(cfg.seed, "flow")}, [out, _artifact(cfg, "flow.log.jsonl")], started)
    return EXIT_OK


def cmd_train_predictor(args) -> int:
    started = time.time()
    cfg, vocab = _training_setup(args, "train")
    mols, examples = _encoded_training_set(cfg, vocab)
    values = np.array([molecule_property(m, cfg.condition_name) for m in mols])
    record = RunLog(_artifact(cfg, f"predictor-{cfg.condition_name}.log.jsonl"))
    noisy = train_noisy_predictor(cfg, vocab, examples, values, record)
    fragment = train_fragment_predictor(cfg, vocab, fragment_targets(vocab, examples, values), record)
    mu = fragment_predictions(fragment, vocab).astype(np.float32).astype(np.float64)
    out = _artifact(cfg, f"predictor-{cfg.condition_name}.ckpt")
    store.save_predictors(out, PredictorBundle(noisy, fragment, mu), vocab, cfg.condition_name, cfg.net())
    seeds = {"predictor": phase_seed(cfg.seed, "predictor"), "fragment_predictor": phase_seed(cfg.seed, "fragment_predictor")}
    write_manifest(cfg.out, f"train-predictor-{cfg.condition_name}", cfg.digest(), seeds, [out, record.path], started)
    return EXIT_OK


# -- sampling ----------------------------------------------------------------

_WORKER: dict = {}


def _sample_chunk(indices: list[int]) -> list[Sample]:
    w = _WORKER
    torch.set_num_threads(1)
    return sample(w["flow"], w["ae"], w["sizes"], w["cfg"], w["predictor"], w["mu"], indices)


def draw_samples(flow, ae, sizes, scfg, predictor=None, mu=None, workers: int = 1) -> list[Sample]:
    """Per-sample RNG streams make the result independent of ``workers``."""
    if workers <= 1 or scfg.n_samples <= scfg.chunk:
        return sample(flow, ae, sizes, scfg, predictor, mu)
    _WORKER.update(flow=flow, ae=ae, sizes=sizes, cfg=scfg, predictor=predictor, mu=mu)
    chunks = [list(range(s, min(s + scfg.chunk, scfg.n_samples))) for s in range(0, scfg.n_samples, scfg.chunk)]
    try:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            parts = pool.map(_sample_chunk, chunks)
    finally:
        _WORKER.clear()
    return [s for part in parts for s in part]


def write_samples(path: Path, samples: Sequence[Sample], vocab: Vocabulary, cfg: RunConfig) -> None:
    header = f"vocab_digest={vocab.digest()}\nconfig_digest={cfg.digest()}\ncolumns=smiles status"
    lines = [f"{s.smiles if s.smiles else INVALID_SMILES}\t{s.status}" for s in samples]
    write_smiles_file(path, lines, header)


def read_samples(path: str | Path) -> tuple[list[str], list[str | None], dict]:
    """(statuses, smiles, header fields). Plain SMILES files are accepted:
    each line is parsed and counts as valid when it parses."""
    statuses, smiles, header = [], [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, eq, value = line[1:].strip().partition("=")
                if eq:
                    header[key] = value
                continue
            if not line.strip():
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) >= 2 and parts[1] in ("valid", "parse-fail", "unrealized-edge", "multi-component"):
                statuses.append(parts[1])
                smiles.append(None if parts[0] == INVALID_SMILES else parts[0])
                continue
            try:
                smiles.append(canonical_smiles(parse_smiles(parts[0])))
                statuses.append("valid")
            except ChemError:
                smiles.append(None)
                statuses.append("parse-fail")
    return statuses, smiles, header


def cmd_sample(args) -> int:
    started = time.time()
    torch.set_num_threads(1)
    cfg = config_from_args(args)
    cfg.out.mkdir(parents=True, exist_ok=True)
    vocab = _load_vocab(cfg.vocab_path)
    flow, sizes = store.load_flow(_require(_artifact(cfg, "flow.ckpt"), "flow checkpoint"), vocab)
    ae = store.load_autoencoder(_require(_artifact(cfg, "ae.ckpt"), "autoencoder checkpoint"), vocab)
    scfg = cfg.sampling()
    predictor = mu = None
    if scfg.condition is not None and (cfg.lambda_x > 0 or cfg.lambda_bag > 0):
        path = _require(_artifact(cfg, f"predictor-{cfg.condition_name}.ckpt"), "predictor checkpoint")
        bundle, prop = store.load_predictors(path, vocab)
        predictor, mu = bundle.noisy, bundle.fragment_mu
    samples = draw_samples(flow, ae, sizes, scfg, predictor, mu, cfg.workers)
    out = Path(args.output) if args.output else _artifact(cfg, "samples.tsv")
    write_samples(out, samples, vocab, cfg)
    n_valid = sum(s.status == "valid" for s in samples)
    log.info("sampled %d molecules, %d valid -> %s", len(samples), n_valid, out)
    write_manifest(out.parent, f"sample-{out.stem}", cfg.digest(), {"sample": cfg.sample_seed}, [out], started)
    return EXIT_OK


# -- evaluation ----------------------------------------------------------------


def cmd_eval(args) -> int:
    started = time.time()
    for name in ("generated", "train", "test"):
        if not Path(getattr(args, name)).exists():
            raise ConfigError(f"{name} file {getattr(args, name)} does not exist")
    statuses, smiles, header = read_samples(args.generated)
    if args.vocab:
        vocab = _load_vocab(Path(args.vocab))
        digest = header.get("vocab_digest")
        if digest is not None and digest != vocab.digest():
            raise store.VocabMismatch(f"{args.generated} was sampled with a different vocabulary")
    train, _ = load_molecules(args.train)
    test, _ = load_molecules(args.test)
    config = {k: header[k] for k in sorted(header) if k != "columns"}
    report = evaluate(statuses, smiles, train, test, config=config, np_likeness_enabled=not args.no_np_likeness)
    text = report.to_json()
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = out.with_name(out.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(out)
        write_manifest(out.parent, f"eval-{out.stem}", header.get("config_digest", ""), {}, [out], started)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    torch.set_num_threads(1)
    vocab = _load_vocab(Path(args.vocab))
    ae = store.load_autoencoder(_require(Path(args.ae), "autoencoder checkpoint"), vocab)
    if not Path(args.corpus).exists():
        raise ConfigError(f"corpus {args.corpus} does not exist")
    _, mols = load_molecules(args.corpus)
    examples = prepare_examples(mols, vocab, skip_unknown=True)
    result = {
        "n": len(examples),
        "encoded": roundtrip_accuracy(ae, examples, vocab, "encoded"),
        "random": roundtrip_accuracy(ae, examples, vocab, "random", seed=args.seed),
    }
    for part in ("encoded", "random"):
        result[part].pop("n")
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.output:
        write_json_atomic(args.output, result)
    sys.stdout.write(text)
    return EXIT_OK


# -- inspection ----------------------------------------------------------------


def frag_report(smiles: str) -> str:
    """Human-readable fragmentation: fragments with their ``[*]`` junctions
    and the rule behind each cut bond."""
    mol = parse_smiles(smiles)
    frag = fragment_molecule(mol)
    reasons = cut_reasons(mol, frag.cut_bonds)
    lines = [f"molecule: {canonical_smiles(mol)}", f"fragments: {len(frag.fragments)}"]
    for k, f in enumerate(frag.fragments):
        lines.append(f"  [{k}] {f.key}  atoms={','.join(map(str, f.atoms))}  junctions={f.arity}")
    lines.append(f"cut bonds: {len(frag.cut_bonds)}")
    for b in frag.cut_bonds:
        bond = mol.bonds[b]
        fa, fb = frag.atom_fragment[bond.a], frag.atom_fragment[bond.b]
        lines.append(f"  bond {bond.a}-{bond.b}  fragments {fa}-{fb}  rule={'/'.join(reasons[b])}")
    return "\n".join(lines) + "\n"


def cmd_frag(args) -> int:
    sys.stdout.write(frag_report(args.smiles))
    return EXIT_OK


def cmd_toy_corpus(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = toy_splits(args.n_train, args.n_valid, args.n_test, args.seed)
    for name, smiles in zip(("train", "valid", "test"), splits):
        write_smiles_file(out / f"{name}.smi", smiles)
    log.info("toy corpus: %s -> %s", "/".join(str(len(s)) for s in splits), out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragflow", description="Fragment-level discrete flow matching for molecules.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="fragment a corpus and write the vocabulary TSV")
    p.add_argument("--corpus", required=True, help="SMILES file")
    p.add_argument("--output", required=True, help="vocabulary TSV path")
    p.set_defaults(func=cmd_build_vocab)

    for name, func, text in (
        ("train-ae", cmd_train_ae, "train the coarse-to-fine autoencoder"),
        ("train-flow", cmd_train_flow, "train the flow network (needs ae.ckpt)"),
        ("train-predictor", cmd_train_predictor, "train the noisy and fragment property predictors"),
    ):
        p = sub.add_parser(name, help=text)
        add_config_arguments(p)
        p.set_defaults(func=func)

    p = sub.add_parser("sample", help="generate molecules; writes SMILES with per-sample status")
    add_config_arguments(p)
    p.add_argument("--output", help="samples file (default <out_dir>/samples.tsv)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="metric report for generated molecules")
    p.add_argument("--generated", required=True, help="samples file or plain SMILES file")
    p.add_argument("--train", required=True, help="training SMILES (novelty)")
    p.add_argument("--test", required=True, help="reference SMILES (distribution metrics)")
    p.add_argument("--vocab", help="refuse samples drawn with a different vocabulary")
    p.add_argument("--output", help="report path (default: stdout)")
    p.add_argument("--no-np-likeness", action="store_true", help="skip the NP-likeness divergence (reported as null)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("roundtrip", help="autoencoder reconstruction accuracy, encoded vs random z")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ae", required=True, help="autoencoder checkpoint")
    p.add_argument("--vocab", required=True)
    p.add_argument("--seed", type=int, default=0, help="seed for random z")
    p.add_argument("--output", help="also write the JSON report here")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("frag", help="print the fragmentation of one SMILES")
    p.add_argument("smiles")
    p.set_defaults(func=cmd_frag)

    p = sub.add_parser("toy-corpus", help="write a synthetic train/valid/test corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", type=int, default=3200)
    p.add_argument("--n-valid", type=int, default=400)
    p.add_argument("--n-test", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toy_corpus)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        log.addHandler(handler)
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (CheckpointVersionError, store.VocabMismatch) as exc:
        log.error("checkpoint error: %s", exc)
        return EXIT_CHECKPOINT
    except (DataError, ChemError, EmptyCorpusError, CheckpointError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
