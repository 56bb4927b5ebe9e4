"""Networks, featurization, optimizer and checkpoint persistence."""

from fragflow.neural.checkpoint import (
    CheckpointError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from fragflow.neural.features import GraphBatch, collate, mol_arrays, rrwp, time_features
from fragflow.neural.models import (
    AEDecoder,
    AEEncoder,
    SlotPairNet,
    CoarseNet,
    FragmentEmbedder,
    FragmentPropertyNet,
    NetConfig,
    NoisyPropertyPredictor,
)
from fragflow.neural.optim import EMA, AdamW, NonFiniteGradient

__all__ = [
    "AEDecoder",
    "AEEncoder",
    "SlotPairNet",
    "AdamW",
    "CheckpointError",
    "CheckpointVersionError",
    "CoarseNet",
    "EMA",
    "FragmentEmbedder",
    "FragmentPropertyNet",
    "GraphBatch",
    "NetConfig",
    "NoisyPropertyPredictor",
    "NonFiniteGradient",
    "collate",
    "load_checkpoint",
    "mol_arrays",
    "rrwp",
    "save_checkpoint",
    "time_features",
]
