"""Run configuration: a flat ``key = value`` file with command-line overrides."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from fragflow.bag import BagConfig
from fragflow.flow.loss import LossWeights
from fragflow.flow.sampler import SamplingConfig
from fragflow.guidance import GuidanceConfig
from fragflow.neural.models import NetConfig


class ConfigError(ValueError):
    pass


def _opt(default, help: str):
    return field(default=default, metadata={"help": help})


@dataclass
class RunConfig:
    # data and artifacts
    train: str = _opt("", "training SMILES file")
    valid: str = _opt("", "validation SMILES file")
    test: str = _opt("", "test SMILES file")
    vocab: str = _opt("", "vocabulary TSV (default: <out_dir>/vocab.tsv)")
    out_dir: str = _opt("run", "directory for checkpoints, samples, logs and manifests")
    seed: int = _opt(0, "master seed")
    # optimization
    lr: float = _opt(5e-4, "flow learning rate")
    ae_lr: float = _opt(1e-3, "autoencoder learning rate")
    predictor_lr: float = _opt(1e-3, "property predictor learning rate")
    beta1: float = _opt(0.9, "AdamW beta1")
    beta2: float = _opt(0.999, "AdamW beta2")
    weight_decay: float = _opt(0.0, "AdamW decoupled weight decay")
    grad_clip: float = _opt(4.0, "global gradient-norm clip")
    ema_decay: float = _opt(0.999, "EMA decay of flow weights")
    batch_size: int = _opt(32, "molecules per step")
    ae_epochs: int = _opt(40, "autoencoder epoch cap")
    ae_patience: int = _opt(8, "early-stop patience on validation BCE (epochs)")
    ae_beta: float = _opt(1e-4, "KL weight of the autoencoder")
    flow_epochs: int = _opt(80, "flow epochs")
    predictor_epochs: int = _opt(80, "noisy predictor epochs")
    fragment_predictor_epochs: int = _opt(200, "fragment predictor epochs")
    alpha_edge: float = _opt(5.0, "edge loss weight")
    alpha_latent: float = _opt(1.0, "latent loss weight")
    bag_train: int = _opt(128, "training bag size")
    # network sizes
    embed_dim: int = _opt(64, "fragment embedding width")
    frag_hidden: int = _opt(64, "fragment embedder hidden width")
    frag_rounds: int = _opt(3, "fragment embedder rounds")
    hidden: int = _opt(128, "coarse network hidden width")
    edge_hidden: int = _opt(64, "coarse network pair width")
    rounds: int = _opt(3, "coarse network rounds")
    rrwp_steps: int = _opt(6, "random-walk feature length")
    time_width: int = _opt(16, "sinusoidal time feature width")
    latent_dim: int = _opt(32, "latent size")
    ae_hidden: int = _opt(64, "autoencoder hidden width")
    ae_rounds: int = _opt(3, "autoencoder rounds")
    predictor_hidden: int = _opt(64, "predictor hidden width")
    predictor_rounds: int = _opt(2, "predictor rounds")
    # sampling
    n_samples: int = _opt(1000, "samples to draw")
    steps: int = _opt(50, "Euler steps")
    distortion: str = _opt("polydec", "time grid: uniform or polydec")
    eta_node: float = _opt(20.0, "node detailed-balance strength")
    eta_edge: float = _opt(0.0, "edge detailed-balance strength")
    bag_size: int = _opt(128, "inference bag size")
    t_pred: float = _opt(1.0, "posterior temperature")
    t_bag: float = _opt(1.0, "bag temperature")
    sample_seed: int = _opt(0, "sampling seed")
    chunk: int = _opt(100, "samples per batched forward pass")
    workers: int = _opt(1, "sampling worker processes")
    # conditioning
    condition_name: str = _opt("ring_count", "conditioning property")
    condition_value: float = _opt(float("nan"), "target value (nan: unconditional)")
    lambda_x: float = _opt(0.0, "classifier guidance strength")
    lambda_bag: float = _opt(0.0, "bag reweighting strength")
    sigma2: float = _opt(1.0, "predictor variance")

    def __post_init__(self):
        self.validate_values()

    def validate_values(self) -> None:
        for name in ("lr", "ae_lr", "predictor_lr", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0 <= self.ema_decay <= 1:
            raise ConfigError("ema_decay must lie in [0, 1]")
        if self.batch_size < 1 or self.steps < 1 or self.n_samples < 0 or self.workers < 1:
            raise ConfigError("batch_size, steps and workers must be >= 1; n_samples >= 0")
        if self.bag_train < 2 or self.bag_size < 2:
            raise ConfigError("bag sizes must be >= 2")
        if self.t_pred <= 0 or self.t_bag <= 0:
            raise ConfigError("temperatures must be > 0")
        if min(self.eta_node, self.eta_edge, self.lambda_x, self.lambda_bag) < 0:
            raise ConfigError("eta and lambda values must be >= 0")
        if self.distortion not in ("uniform", "polydec"):
            raise ConfigError(f"unknown distortion {self.distortion!r}")
        try:
            LossWeights(self.alpha_edge, self.alpha_latent)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def require_paths(self, *names: str) -> None:
        """All referenced input paths must exist."""
        for name in names:
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"{name} is not set")
            if not Path(value).exists():
                raise ConfigError(f"{name}: {value} does not exist")

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def vocab_path(self) -> Path:
        return Path(self.vocab) if self.vocab else self.out / "vocab.tsv"

    def net(self) -> NetConfig:
        return NetConfig(**{f.name: getattr(self, f.name) for f in fields(NetConfig)})

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.alpha_edge, self.alpha_latent)

    def bag(self) -> BagConfig:
        return BagConfig(self.bag_train, self.bag_size, self.t_pred, self.t_bag, self.lambda_bag)

    def condition(self) -> GuidanceConfig | None:
        if self.condition_value != self.condition_value:  # nan
            return None
        return GuidanceConfig(self.condition_name, self.condition_value, self.lambda_x, self.sigma2, self.lambda_bag)

    def sampling(self) -> SamplingConfig:
        return SamplingConfig(
            n_samples=self.n_samples,
            steps=self.steps,
            distortion=self.distortion,
            eta_node=self.eta_node,
            eta_edge=self.eta_edge,
            bag_size=self.bag_size,
            t_pred=self.t_pred,
            t_bag=self.t_bag,
            seed=self.sample_seed,
            chunk=self.chunk,
            condition=self.condition(),
        )

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if out["condition_value"] != out["condition_value"]:
            out["condition_value"] = None
        return out

    def digest(self) -> str:
        """Hash of every setting that can change results. The output location
        and the execution layout (workers, chunk) are left out."""
        d = self.to_dict()
        for key in EXECUTION_ONLY:
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


EXECUTION_ONLY = ("out_dir", "workers", "chunk")
_FIELDS = {f.name: f for f in fields(RunConfig)}
# Dotted sampling keys map onto flat fields.
_ALIASES = {"condition_lambda_x": "lambda_x", "condition_lambda_bag": "lambda_bag"}


def _key(raw: str) -> str:
    key = raw.strip().replace("-", "_").replace(".", "_")
    return _ALIASES.get(key, key)


def _convert(name: str, raw: str):
    kind = type(_FIELDS[name].default)
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _key(key)
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def format_config(cfg: RunConfig) -> str:
    lines = []
    for name, value in cfg.to_dict().items():
        lines.append(f"{name} = {'nan' if value is None else value}")
    return "\n".join(lines) + "\n"


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file; flags override it")
    group = parser.add_argument_group("config overrides")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        group.add_argument(flag, dest=f"cfg_{f.name}", default=None, metavar=type(f.default).__name__.upper(), help=f.metadata["help"])


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    for name in _FIELDS:
        raw = getattr(args, f"cfg_{name}", None)
        if raw is not None:
            values[name] = _convert(name, raw)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
