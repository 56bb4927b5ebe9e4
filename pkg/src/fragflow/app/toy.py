"""Procedural drug-like toy corpus.

Molecules are chains of one to three ring cores joined by short linkers,
with optional small substituents. Generation is a pure function of the seed.
"""

from __future__ import annotations

import numpy as np

from fragflow.chem import canonical_smiles, parse_smiles

# "X" marks an attachment site, "R"/"Q" the core's ring-closure digits.
CORES = (
    "cR(X)ccc(X)cc(X)R",
    "cR(X)ccc(X)nc(X)R",
    "cR(X)cc(X)c(X)sR",
    "cR(X)ccc(X)oR",
    "cR(X)nc(X)c(X)sR",
    "cR(X)ncc(X)cnR",
    "CR(X)CC(X)C(X)CCR",
    "NR(X)CCC(X)CCR",
    "NR(X)CCOCCR",
    "NR(X)CCN(X)CCR",
    "CR(X)CCR",
    "CR(X)CCCCR",
    "cR(X)cc(X)c(X)cQcccccQR",
    "cR(X)cccQ[nH]cc(X)cQcR",
    "cR(X)cccQcc(X)cccQcR",
    "CR(X)CCC(X)OR",
)
CORE_WEIGHTS = np.array([8, 4, 2, 2, 1, 1, 3, 3, 2, 2, 1, 1, 2, 1, 1, 1], dtype=np.float64)

SUBSTITUENTS = (
    "C", "F", "Cl", "OC", "O", "N", "C(F)(F)F", "CC", "C(C)=O", "C#N", "Br", "C(=O)O",
    "CO", "OCC", "N(C)C", "C(N)=O", "S(C)(=O)=O", "CCC",
)
SUBSTITUENT_WEIGHTS = np.array(
    [3, 2, 2, 4, 1, 1, 2, 3, 2, 2, 1, 2, 2, 2, 2, 2, 1, 2], dtype=np.float64
)

LINKERS = ("", "C", "CC", "C(=O)N", "NC(=O)", "O", "N", "C(=O)", "OC", "S(=O)(=O)N", "CCN", "NCC")
LINKER_WEIGHTS = np.array([4, 4, 2, 3, 2, 2, 2, 1, 1, 1, 1, 1], dtype=np.float64)


def _pick(rng: np.random.Generator, options, weights):
    return options[rng.choice(len(options), p=weights / weights.sum())]


def _core(rng: np.random.Generator, depth: int, child: bool, remaining: list[int], p_sub: float) -> str:
    template = _pick(rng, CORES, CORE_WEIGHTS)
    template = template.replace("R", str(2 * depth + 1)).replace("Q", str(2 * depth + 2))
    parts = template.split("(X)")
    out = [parts[0]]
    for site in range(len(parts) - 1):
        fill = ""
        if child and site == 0:
            fill = ""  # the incoming linker bonds here
        elif remaining[0] > 0 and rng.random() < 0.7:
            remaining[0] -= 1
            linker = _pick(rng, LINKERS, LINKER_WEIGHTS)
            fill = linker + _core(rng, depth + 1, True, remaining, p_sub)
        elif rng.random() < p_sub:
            fill = _pick(rng, SUBSTITUENTS, SUBSTITUENT_WEIGHTS)
        if fill:
            out.append(f"({fill})")
        out.append(parts[site + 1])
    return "".join(out)


def random_toy_smiles(rng: np.random.Generator, p_sub: float = 0.65) -> str:
    n_cores = int(rng.choice([1, 2, 3], p=[0.2, 0.5, 0.3]))
    return _core(rng, 0, False, [n_cores - 1], p_sub)


def toy_corpus(n: int, seed: int = 0) -> list[str]:
    """``n`` distinct canonical SMILES, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        smi = canonical_smiles(parse_smiles(random_toy_smiles(rng)))
        if smi not in seen:
            seen.add(smi)
            out.append(smi)
    return out


def toy_splits(n_train: int = 3200, n_valid: int = 400, n_test: int = 400, seed: int = 0):
    corpus = toy_corpus(n_train + n_valid + n_test, seed)
    return (
        corpus[:n_train],
        corpus[n_train : n_train + n_valid],
        corpus[n_train + n_valid :],
    )
