"""Sample-quality metrics: validity/uniqueness/novelty, KDE-based KL over
descriptors, fragment-frequency NP-likeness, SNN and scaffold similarity."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import gaussian_kde

from fragflow.chem import (
    MolGraph,
    canonical_smiles,
    descriptors,
    morgan_environments,
    morgan_fingerprint,
    murcko_scaffold,
    parse_smiles,
    tanimoto,
)

UNSUPPORTED = "unsupported: requires pretrained model"
KDE_GRID = 1000
KDE_EPS = 1e-10
DEGENERATE = float("nan")
PROPERTIES = ("heavy_atom_count", "molecular_weight", "ring_count", "aromatic_ring_count", "hba_count", "hbd_count")


def validity(statuses: Sequence[str]) -> float:
    if not statuses:
        return 0.0
    return sum(1 for s in statuses if s == "valid") / len(statuses)


def uniqueness(valid_smiles: Sequence[str]) -> float:
    if not valid_smiles:
        return 0.0
    return len(set(valid_smiles)) / len(valid_smiles)


def novelty(unique_smiles: Iterable[str], training: Iterable[str]) -> float:
    unique = set(unique_smiles)
    if not unique:
        return 0.0
    train = set(training)
    return sum(1 for s in unique if s not in train) / len(unique)


def kde_kl(generated, reference, grid_points: int = KDE_GRID, eps: float = KDE_EPS) -> float:
    """Discrete KL(reference || generated) of Gaussian KDEs (Scott's rule)
    evaluated on a shared grid spanning both samples. Returns ``DEGENERATE``
    (NaN) when either side has fewer than two distinct values."""
    gen = np.asarray(generated, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if len(gen) < 2 or len(ref) < 2 or np.ptp(gen) == 0 or np.ptp(ref) == 0:
        return DEGENERATE
    lo = min(gen.min(), ref.min())
    hi = max(gen.max(), ref.max())
    grid = np.linspace(lo, hi, grid_points)
    p = gaussian_kde(ref, bw_method="scott")(grid) + eps
    q = gaussian_kde(gen, bw_method="scott")(grid) + eps
    p /= p.sum()
    q /= q.sum()
    return float(max(np.sum(p * np.log(p / q)), 0.0))


def property_values(mols: Sequence[MolGraph], name: str) -> np.ndarray:
    return np.array([getattr(descriptors(m), name) for m in mols], dtype=np.float64)


@dataclass
class NPContributionTable:
    contributions: dict[int, float]
    radius: int = 2
    clip: tuple[float, float] = (-5.0, 5.0)


def _environment_counts(mols: Iterable[MolGraph], radius: int) -> Counter:
    counts: Counter = Counter()
    for m in mols:
        counts.update(env for atom, _, env in morgan_environments(m, radius) if not m.atoms[atom].is_wildcard)
    return counts


def build_np_table(corpus_a: Sequence[MolGraph], corpus_b: Sequence[MolGraph], radius: int = 2, smoothing: float = 1.0):
    """contribution(env) = log10((count_a + s) / (count_b + s))."""
    if not corpus_a or not corpus_b:
        raise ValueError("both corpora must be nonempty")
    a = _environment_counts(corpus_a, radius)
    b = _environment_counts(corpus_b, radius)
    table = {
        env: math.log10((a.get(env, 0) + smoothing) / (b.get(env, 0) + smoothing)) for env in sorted(set(a) | set(b))
    }
    return NPContributionTable(table, radius)


def np_likeness(mol: MolGraph, table: NPContributionTable) -> float:
    heavy = sum(1 for a in mol.atoms if not a.is_wildcard)
    if heavy == 0:
        return 0.0
    total = sum(table.contributions.get(env, 0.0) for _, _, env in morgan_environments(mol, table.radius))
    lo, hi = table.clip
    return float(min(max(total / heavy, lo), hi))


def snn(generated: Sequence[MolGraph], reference: Sequence[MolGraph]) -> float:
    """Mean over generated molecules of the max Tanimoto to the reference set."""
    if not generated or not reference:
        raise ValueError("snn needs nonempty sets")
    ref = [morgan_fingerprint(m) for m in reference]
    best = []
    for m in generated:
        fp = morgan_fingerprint(m)
        best.append(max(tanimoto(fp, r) for r in ref))
    return float(np.mean(best))


def scaffold_counts(mols: Sequence[MolGraph]) -> Counter:
    return Counter(canonical_smiles(murcko_scaffold(m)) for m in mols)


def scaffold_cosine(generated: Sequence[MolGraph], reference: Sequence[MolGraph]) -> float:
    a = scaffold_counts(generated)
    b = scaffold_counts(reference)
    keys = sorted(set(a) | set(b))
    va = np.array([a.get(k, 0) for k in keys], dtype=np.float64)
    vb = np.array([b.get(k, 0) for k in keys], dtype=np.float64)
    denom = np.linalg.norm(va) * np.linalg.norm(vb)
    return float(va @ vb / denom) if denom > 0 else 0.0


def _sig6(x):
    if isinstance(x, float):
        if not math.isfinite(x):
            return None
        return float(f"{x:.6g}")
    if isinstance(x, dict):
        return {k: _sig6(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_sig6(v) for v in x]
    return x


@dataclass
class MetricsReport:
    n_samples: int
    validity: float
    uniqueness: float
    novelty: float
    kl: dict[str, float]
    np_likeness_kl: float
    snn: float
    scaffold_cosine: float
    fcd: str = UNSUPPORTED
    npclassifier: str = UNSUPPORTED
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        """Fixed key order; floats at 6 significant digits; NaN as null."""
        return json.dumps(_sig6(asdict(self)), indent=2) + "\n"


def evaluate(
    statuses: Sequence[str],
    smiles: Sequence[str | None],
    train_smiles: Sequence[str],
    reference_smiles: Sequence[str],
    np_table: NPContributionTable | None = None,
    config: Mapping | None = None,
    np_likeness_enabled: bool = True,
) -> MetricsReport:
    """Percent-scale validity/uniqueness/novelty plus distribution metrics of
    the valid samples (duplicates kept) against ``reference_smiles``.

    Without an explicit ``np_table`` the NP-likeness contributions contrast
    the reference set with the training set.
    """
    valid = [s for st, s in zip(statuses, smiles) if st == "valid" and s is not None]
    unique = sorted(set(valid))
    parsed = {s: parse_smiles(s) for s in unique}
    gen_mols = [parsed[s] for s in valid]
    ref_mols = [parse_smiles(s) for s in reference_smiles]
    train_canon = [canonical_smiles(parse_smiles(s)) for s in train_smiles]
    kl = {}
    for name in PROPERTIES:
        if gen_mols:
            kl[name] = kde_kl(property_values(gen_mols, name), property_values(ref_mols, name))
        else:
            kl[name] = DEGENERATE
    np_kl = DEGENERATE
    if np_likeness_enabled and gen_mols:
        if np_table is None:
            np_table = build_np_table(ref_mols, [parse_smiles(s) for s in train_smiles])
        np_kl = kde_kl([np_likeness(m, np_table) for m in gen_mols], [np_likeness(m, np_table) for m in ref_mols])
    return MetricsReport(
        n_samples=len(statuses),
        validity=100.0 * validity(statuses),
        uniqueness=100.0 * uniqueness(valid),
        novelty=100.0 * novelty(unique, train_canon),
        kl=kl,
        np_likeness_kl=np_kl,
        snn=snn(gen_mols, ref_mols) if gen_mols else 0.0,
        scaffold_cosine=scaffold_cosine(gen_mols, ref_mols) if gen_mols else 0.0,
        config=dict(config or {}),
    )
