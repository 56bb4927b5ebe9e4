"""Molecular descriptors, Morgan fingerprints and Bemis-Murcko scaffolds."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from fragflow.chem.elements import ATOMIC_NUMBERS, MASSES, BondOrder
from fragflow.chem.mol import MolGraph, build_molecule, with_hydrogen_caps


@dataclass(frozen=True)
class Descriptors:
    molecular_weight: float
    heavy_atom_count: int
    ring_count: int
    aromatic_ring_count: int
    hba_count: int
    hbd_count: int


def ring_count(mol: MolGraph) -> int:
    """Cycle rank: |bonds| - |atoms| + components."""
    if not mol.atoms:
        return 0
    return len(mol.bonds) - len(mol.atoms) + mol.num_components


def descriptors(mol: MolGraph) -> Descriptors:
    heavy = [a for a in mol.atoms if not a.is_wildcard]
    # fsum keeps the weight independent of atom order.
    weight = math.fsum(MASSES[a.element] + a.hydrogens * MASSES["H"] for a in heavy)
    aromatic_rings = 0
    for cycle in mol.sssr:
        if all(mol.atoms[i].aromatic for i in cycle):
            aromatic_rings += 1
    hba = sum(1 for a in heavy if a.element in ("N", "O"))
    hbd = sum(1 for a in heavy if a.element in ("N", "O") and a.hydrogens > 0)
    return Descriptors(
        molecular_weight=weight,
        heavy_atom_count=len(heavy),
        ring_count=ring_count(mol),
        aromatic_ring_count=aromatic_rings,
        hba_count=hba,
        hbd_count=hbd,
    )


def _hash(obj) -> int:
    digest = hashlib.blake2b(repr(obj).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFFFFFF


def morgan_environments(mol: MolGraph, radius: int = 2) -> list[tuple[int, int, int]]:
    """(atom index, radius, environment id) for every atom and radius <= ``radius``.

    Identifiers depend only on the molecule, never on atom order.
    """
    ring = mol.ring_atoms
    current = [
        _hash((ATOMIC_NUMBERS[a.element], mol.degree(i), a.hydrogens, a.aromatic, i in ring))
        for i, a in enumerate(mol.atoms)
    ]
    out = [(i, 0, current[i]) for i in range(len(mol.atoms))]
    for r in range(1, radius + 1):
        nxt = []
        for i in range(len(mol.atoms)):
            nb = sorted((int(mol.bonds[k].order), current[j]) for j, k in mol.neighbors[i])
            nxt.append(_hash((r, current[i], tuple(nb))))
        current = nxt
        out.extend((i, r, current[i]) for i in range(len(mol.atoms)))
    return out


@dataclass(frozen=True)
class Fingerprint:
    bits: frozenset[int]
    width: int = 2048
    radius: int = 2

    def __len__(self) -> int:
        return len(self.bits)


def morgan_fingerprint(mol: MolGraph, radius: int = 2, width: int = 2048) -> Fingerprint:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if width <= 0 or width & (width - 1):
        raise ValueError("width must be a power of two")
    bits = frozenset(env % width for _, _, env in morgan_environments(mol, radius))
    return Fingerprint(bits, width, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    union = len(a.bits | b.bits)
    if union == 0:
        return 0.0
    return len(a.bits & b.bits) / union


EMPTY_SCAFFOLD = MolGraph((), ())


def murcko_scaffold(mol: MolGraph) -> MolGraph:
    """Ring systems plus linkers; acyclic input yields ``EMPTY_SCAFFOLD``.

    Terminal atoms are pruned to a fixpoint, except exocyclic double-bonded
    atoms on a retained atom (ring carbonyls), which belong to the scaffold.
    """
    if not mol.ring_bonds:
        return EMPTY_SCAFFOLD
    alive = set(range(len(mol.atoms)))
    degree = [mol.degree(i) for i in range(len(mol.atoms))]
    changed = True
    while changed:
        changed = False
        for i in sorted(alive):
            if degree[i] > 1:
                continue
            if degree[i] == 1:
                (j, k), = [(j, k) for j, k in mol.neighbors[i] if j in alive]
                if mol.bonds[k].order is BondOrder.DOUBLE and degree[j] > 2:
                    continue
            alive.discard(i)
            for j, _ in mol.neighbors[i]:
                if j in alive:
                    degree[j] -= 1
            changed = True
    remove = set(range(len(mol.atoms))) - alive
    atoms, bonds, _ = with_hydrogen_caps(mol, remove)
    return build_molecule(atoms, bonds)
