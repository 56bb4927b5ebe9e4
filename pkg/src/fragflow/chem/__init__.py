"""Atom-level chemistry: graphs, SMILES, descriptors, fingerprints, scaffolds."""

from fragflow.chem.canon import canonical_ranks, canonical_smiles, symmetry_classes
from fragflow.chem.descriptors import (
    EMPTY_SCAFFOLD,
    Descriptors,
    Fingerprint,
    descriptors,
    morgan_environments,
    morgan_fingerprint,
    murcko_scaffold,
    ring_count,
    tanimoto,
)
from fragflow.chem.elements import WILDCARD, BondOrder
from fragflow.chem.errors import (
    ChargedAtomError,
    ChemError,
    KekulizationError,
    MultiComponentError,
    SmilesSyntaxError,
    UnclosedRingError,
    UnsupportedElementError,
    ValenceError,
)
from fragflow.chem.io import read_smiles_file, write_smiles_file
from fragflow.chem.mol import Atom, Bond, MolGraph, build_molecule, check_valence
from fragflow.chem.smiles import parse_smiles

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "ChargedAtomError",
    "ChemError",
    "Descriptors",
    "EMPTY_SCAFFOLD",
    "Fingerprint",
    "KekulizationError",
    "MolGraph",
    "MultiComponentError",
    "SmilesSyntaxError",
    "UnclosedRingError",
    "UnsupportedElementError",
    "ValenceError",
    "WILDCARD",
    "build_molecule",
    "canonical_ranks",
    "canonical_smiles",
    "check_valence",
    "descriptors",
    "morgan_environments",
    "morgan_fingerprint",
    "murcko_scaffold",
    "parse_smiles",
    "read_smiles_file",
    "symmetry_classes",
    "ring_count",
    "tanimoto",
    "write_smiles_file",
]
