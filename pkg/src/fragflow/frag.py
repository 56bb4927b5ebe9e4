"""Rule-based fragmentation and the fragment vocabulary.

Bonds are cut when they are single, acyclic and their two endpoint
environments match one of a small BRICS-like rule table. Each cut leaves a
junction slot on both sides, written as a ``[*]`` wildcard atom in the
fragment key. Since cut bonds are bridges, the fragment adjacency of any
molecule is a tree.
"""

from __future__ import annotations

import hashlib

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from fragflow.chem import (
    Atom,
    Bond,
    BondOrder,
    MolGraph,
    build_molecule,
    canonical_smiles,
    parse_smiles,
    symmetry_classes,
)
from fragflow.chem.elements import WILDCARD


class EmptyCorpusError(ValueError):
    pass


class _Env:
    """Per-atom environment flags used by the cut rules."""

    def __init__(self, mol: MolGraph):
        self.mol = mol
        self.ring = mol.ring_atoms
        n = len(mol.atoms)
        self.el = [a.element for a in mol.atoms]
        self.deg = [mol.degree(i) for i in range(n)]
        self.multiple = [False] * n
        self.oxo = [0] * n
        for i in range(n):
            for j, k in mol.neighbors[i]:
                order = mol.bonds[k].order
                if order in (BondOrder.DOUBLE, BondOrder.TRIPLE):
                    self.multiple[i] = True
                    if order is BondOrder.DOUBLE and self.el[j] in ("O", "S"):
                        self.oxo[i] += 1

    def chain(self, i: int) -> bool:
        return i not in self.ring

    def acyl(self, i: int) -> bool:
        return self.el[i] == "C" and self.chain(i) and self.oxo[i] == 1

    def sp3_carbon(self, i: int) -> bool:
        return self.el[i] == "C" and not self.multiple[i] and not self.mol.atoms[i].aromatic

    def linker(self, i: int) -> bool:
        """Chain atom that is not terminal."""
        return self.chain(i) and self.deg[i] >= 2

    def benzylic(self, i: int) -> bool:
        return self.sp3_carbon(i) and self.linker(i) and any(
            j in self.ring for j, _ in self.mol.neighbors[i]
        )


@dataclass(frozen=True)
class CutRule:
    name: str
    test: Callable[[_Env, int, int], bool]

    def matches(self, env: _Env, i: int, j: int) -> bool:
        return self.test(env, i, j) or self.test(env, j, i)


CUT_RULES: tuple[CutRule, ...] = (
    CutRule("ring-chain", lambda e, i, j: i in e.ring and e.linker(j)),
    CutRule("ring-ring", lambda e, i, j: i in e.ring and j in e.ring),
    CutRule("amide", lambda e, i, j: e.acyl(i) and e.el[j] == "N" and e.linker(j)),
    CutRule("ester", lambda e, i, j: e.acyl(i) and e.el[j] == "O" and e.linker(j)),
    CutRule(
        "ketone",
        lambda e, i, j: e.acyl(i) and e.el[j] == "C" and e.linker(j) and not e.acyl(j),
    ),
    CutRule(
        "ether",
        lambda e, i, j: e.el[i] == "O"
        and e.linker(i)
        and not any(e.acyl(k) for k, _ in e.mol.neighbors[i])
        and e.sp3_carbon(j)
        and e.linker(j),
    ),
    CutRule(
        "amine",
        lambda e, i, j: e.el[i] == "N"
        and e.linker(i)
        and not e.multiple[i]
        and e.sp3_carbon(j)
        and e.linker(j),
    ),
    CutRule(
        "benzylic",
        lambda e, i, j: e.benzylic(i) and e.sp3_carbon(j) and e.linker(j),
    ),
    CutRule(
        "sulfonyl",
        lambda e, i, j: e.el[i] == "S" and e.oxo[i] == 2 and e.el[j] in ("N", "C") and e.linker(j),
    ),
)


def find_cut_bonds(mol: MolGraph, rules: Sequence[CutRule] = CUT_RULES) -> tuple[int, ...]:
    env = _Env(mol)
    ring_bonds = mol.ring_bonds
    cuts = []
    for k, bond in enumerate(mol.bonds):
        if bond.order is not BondOrder.SINGLE or k in ring_bonds:
            continue
        if any(rule.matches(env, bond.a, bond.b) for rule in rules):
            cuts.append(k)
    return tuple(cuts)


def cut_reasons(mol: MolGraph, cut_bonds: Iterable[int], rules: Sequence[CutRule] = CUT_RULES) -> dict[int, list[str]]:
    """Names of the rules that match each given bond."""
    env = _Env(mol)
    return {k: [r.name for r in rules if r.matches(env, mol.bonds[k].a, mol.bonds[k].b)] for k in cut_bonds}


@dataclass(frozen=True)
class Fragment:
    """Connected piece of a parent molecule.

    ``graph`` holds the fragment atoms (in parent order) followed by one
    wildcard atom per junction slot. ``slots[s] = (local junction atom,
    parent cut bond index)``; the wildcard for slot ``s`` is atom
    ``len(atoms) + s`` of ``graph``.
    """

    atoms: tuple[int, ...]
    graph: MolGraph
    slots: tuple[tuple[int, int], ...]

    @property
    def arity(self) -> int:
        return len(self.slots)

    def wildcard(self, slot: int) -> int:
        return len(self.atoms) + slot

    @cached_property
    def _canonical(self) -> tuple[str, tuple[int, ...]]:
        key, order = canonical_smiles(self.graph, return_order=True)
        wild_positions = [i for i in order if i >= len(self.atoms)]
        # canonical slot id -> local slot index
        return key, tuple(i - len(self.atoms) for i in wild_positions)

    @property
    def key(self) -> str:
        return self._canonical[0]

    @property
    def canonical_slot_of(self) -> dict[int, int]:
        """Local slot index -> slot id in the key's template."""
        return {local: c for c, local in enumerate(self._canonical[1])}


def canonical_fragment_key(fragment: Fragment) -> str:
    return fragment.key


@dataclass(frozen=True)
class Fragmentation:
    mol: MolGraph
    fragments: tuple[Fragment, ...]
    cut_bonds: tuple[int, ...]
    atom_fragment: tuple[int, ...]

    def fragment_edges(self) -> list[tuple[int, int, int]]:
        """(fragment a, fragment b, cut bond) for each cut, with a < b."""
        out = []
        for k in self.cut_bonds:
            b = self.mol.bonds[k]
            fa, fb = self.atom_fragment[b.a], self.atom_fragment[b.b]
            out.append((min(fa, fb), max(fa, fb), k))
        return out


def split_at_bonds(mol: MolGraph, cut_bonds: Iterable[int]) -> Fragmentation:
    """Remove ``cut_bonds`` and return the resulting junction-marked pieces."""
    cut = tuple(sorted(set(cut_bonds)))
    cut_set = set(cut)
    n = len(mol.atoms)
    comp = [-1] * n
    n_comp = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        comp[start] = n_comp
        stack = [start]
        while stack:
            u = stack.pop()
            for v, k in mol.neighbors[u]:
                if k in cut_set or comp[v] >= 0:
                    continue
                comp[v] = n_comp
                stack.append(v)
        n_comp += 1
    members: list[list[int]] = [[] for _ in range(n_comp)]
    for i in range(n):
        members[comp[i]].append(i)
    fragments = []
    for c in range(n_comp):
        local = {a: idx for idx, a in enumerate(members[c])}
        atoms = [mol.atoms[a] for a in members[c]]
        bonds = []
        slots = []
        for k, bond in enumerate(mol.bonds):
            if bond.a in local and bond.b in local:
                if k in cut_set:
                    raise ValueError(f"cut bond {k} does not separate its endpoints")
                bonds.append(Bond(local[bond.a], local[bond.b], bond.order))
        for k in cut:
            bond = mol.bonds[k]
            for end in (bond.a, bond.b):
                if end in local:
                    slots.append((local[end], k))
        for s, (atom, _) in enumerate(slots):
            atoms.append(Atom(WILDCARD))
            bonds.append(Bond(atom, len(members[c]) + s, BondOrder.SINGLE))
        graph = build_molecule(atoms, bonds)
        fragments.append(Fragment(tuple(members[c]), graph, tuple(slots)))
    return Fragmentation(mol, tuple(fragments), cut, tuple(comp))


def fragment_molecule(mol: MolGraph, rules: Sequence[CutRule] = CUT_RULES) -> Fragmentation:
    return split_at_bonds(mol, find_cut_bonds(mol, rules))


@dataclass(frozen=True)
class FragmentTemplate:
    """Fragment reconstructed from its key. Slot ``s`` is the ``s``-th
    wildcard in key order; ``junctions[s]`` is the atom it hangs off."""

    key: str
    graph: MolGraph
    wildcards: tuple[int, ...]
    junctions: tuple[int, ...]

    @classmethod
    def from_key(cls, key: str) -> "FragmentTemplate":
        graph = parse_smiles(key)
        wild = tuple(i for i, a in enumerate(graph.atoms) if a.is_wildcard)
        junctions = tuple(graph.neighbors[w][0][0] for w in wild)
        return cls(key, graph, wild, junctions)

    @property
    def arity(self) -> int:
        return len(self.wildcards)

    @property
    def heavy_atoms(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.graph.atoms) if not a.is_wildcard)

    @cached_property
    def slot_classes(self) -> tuple[int, ...]:
        """Symmetry class of each slot; equal classes are interchangeable."""
        classes = symmetry_classes(self.graph)
        return tuple(classes[w] for w in self.wildcards)


class Vocabulary:
    """Sorted fragment keys with occurrence counts; ids are dense in key order."""

    HEADER = "key\tcount"

    def __init__(self, counts: Mapping[str, int]):
        if not counts:
            raise EmptyCorpusError("vocabulary needs at least one fragment")
        self.keys: tuple[str, ...] = tuple(sorted(counts))
        self.counts = np.array([int(counts[k]) for k in self.keys], dtype=np.int64)
        if (self.counts < 1).any():
            raise ValueError("fragment counts must be >= 1")
        self.index = {k: i for i, k in enumerate(self.keys)}
        self._templates: dict[int, FragmentTemplate] = {}

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.keys == other.keys and bool(
            (self.counts == other.counts).all()
        )

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @cached_property
    def marginal(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def count_map(self) -> dict[str, int]:
        return dict(zip(self.keys, self.counts.tolist()))

    def template(self, idx: int) -> FragmentTemplate:
        if idx not in self._templates:
            self._templates[idx] = FragmentTemplate.from_key(self.keys[idx])
        return self._templates[idx]

    @cached_property
    def arities(self) -> np.ndarray:
        return np.array([self.template(i).arity for i in range(len(self))], dtype=np.int64)

    def merge(self, other: "Vocabulary") -> "Vocabulary":
        return Vocabulary(Counter(self.count_map()) + Counter(other.count_map()))

    def to_tsv(self) -> str:
        rows = [self.HEADER] + [f"{k}\t{c}" for k, c in zip(self.keys, self.counts.tolist())]
        return "\n".join(rows) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_tsv(), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != cls.HEADER:
            raise ValueError(f"{path}: missing vocabulary header {cls.HEADER!r}")
        counts = {}
        for n, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            key, _, count = line.partition("\t")
            if not count:
                raise ValueError(f"{path}:{n}: malformed row")
            counts[key] = int(count)
        return cls(counts)

    def digest(self) -> str:
        return hashlib.sha256(self.to_tsv().encode()).hexdigest()


def fragment_counts(corpus: Iterable[MolGraph]) -> Counter:
    counts: Counter = Counter()
    for mol in corpus:
        for frag in fragment_molecule(mol).fragments:
            counts[frag.key] += 1
    return counts


def build_vocabulary(corpus: Sequence[MolGraph]) -> Vocabulary:
    """Per-occurrence fragment counts over the corpus."""
    if not corpus:
        raise EmptyCorpusError("empty corpus")
    return Vocabulary(fragment_counts(corpus))
