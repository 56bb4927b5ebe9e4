"""Fragment-level graphs and the atom-level round trip."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fragflow.chem import Atom, Bond, BondOrder, ChemError, MolGraph, build_molecule
from fragflow.frag import Vocabulary, fragment_molecule


class UnknownFragmentError(KeyError):
    pass


class UnrealizedCoarseEdge(ValueError):
    pass


class InvalidMatching(ValueError):
    pass


SlotRef = tuple[int, int]  # (coarse node, template slot id)


@dataclass(frozen=True, eq=False)
class CoarseGraph:
    nodes: tuple[int, ...]
    arities: tuple[int, ...]
    adjacency: np.ndarray = field(repr=False)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        n = len(self.nodes)
        if adj.shape != (n, n):
            raise ValueError(f"adjacency shape {adj.shape} does not match {n} nodes")
        if not (adj == adj.T).all():
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("self-edges are not allowed")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, nodes, arities, edges) -> "CoarseGraph":
        n = len(nodes)
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            adj[i, j] = adj[j, i] = True
        return cls(tuple(int(x) for x in nodes), tuple(int(a) for a in arities), adj)

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CoarseGraph)
            and self.nodes == other.nodes
            and self.arities == other.arities
            and bool((self.adjacency == other.adjacency).all())
        )

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    def num_components(self) -> int:
        n = len(self.nodes)
        seen = [False] * n
        count = 0
        for s in range(n):
            if seen[s]:
                continue
            count += 1
            stack = [s]
            seen[s] = True
            while stack:
                u = stack.pop()
                for v in np.nonzero(self.adjacency[u])[0].tolist():
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
        return count

    def is_tree(self) -> bool:
        return len(self.nodes) > 0 and len(self.edges()) == len(self.nodes) - 1 and self.num_components() == 1


@dataclass(frozen=True)
class Matching:
    """Selected slot pairs, each stored with the smaller slot first."""

    pairs: frozenset[tuple[SlotRef, SlotRef]]

    @classmethod
    def of(cls, pairs) -> "Matching":
        return cls(frozenset(tuple(sorted((tuple(a), tuple(b)))) for a, b in pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def is_legal(self) -> bool:
        used = [s for pair in self.pairs for s in pair]
        return len(used) == len(set(used)) and all(a[0] != b[0] for a, b in self.pairs)


def to_coarse(mol: MolGraph, vocab: Vocabulary) -> tuple[CoarseGraph, Matching]:
    frag = fragment_molecule(mol)
    ids = []
    for f in frag.fragments:
        if f.key not in vocab:
            raise UnknownFragmentError(f.key)
        ids.append(vocab.index[f.key])
    # (fragment, local slot) for each side of each cut bond
    slot_of_cut: dict[int, list[SlotRef]] = {}
    for node, f in enumerate(frag.fragments):
        canon = f.canonical_slot_of
        for local, (_, k) in enumerate(f.slots):
            slot_of_cut.setdefault(k, []).append((node, canon[local]))
    pairs = [tuple(slot_of_cut[k]) for k in frag.cut_bonds]
    edges = [(a[0], b[0]) for a, b in pairs]
    coarse = CoarseGraph.from_edges(ids, [f.arity for f in frag.fragments], edges)
    return coarse, Matching.of(pairs)


def _glue(coarse: CoarseGraph, pairs, vocab: Vocabulary) -> tuple[list[Atom], list[Bond]]:
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    junction_atom: dict[SlotRef, int] = {}
    for node, vid in enumerate(coarse.nodes):
        tmpl = vocab.template(vid)
        local = {}
        for i in tmpl.heavy_atoms:
            local[i] = len(atoms)
            atoms.append(tmpl.graph.atoms[i])
        for b in tmpl.graph.bonds:
            if b.a in local and b.b in local:
                bonds.append(Bond(local[b.a], local[b.b], b.order))
        for s, j in enumerate(tmpl.junctions):
            junction_atom[(node, s)] = local[j]
    used = set()
    for a, b in pairs:
        ia, ib = junction_atom[a], junction_atom[b]
        used.update((a, b))
        bonds.append(Bond(ia, ib, BondOrder.SINGLE))
    # An unused junction slot is capped with hydrogen.
    for slot, idx in junction_atom.items():
        if slot not in used:
            at = atoms[idx]
            atoms[idx] = Atom(at.element, at.aromatic, at.hydrogens + 1, at.charge)
    return atoms, bonds


def reconstruct(coarse: CoarseGraph, matching: Matching, vocab: Vocabulary) -> MolGraph:
    """Glue fragment templates along the matched slot pairs.

    Raises ``UnrealizedCoarseEdge`` if a coarse edge has no matched pair and
    ``InvalidMatching`` if the matching joins non-adjacent nodes, realizes an
    edge twice or reuses a slot. Chemistry errors propagate as ``ChemError``.
    """
    if not matching.is_legal():
        raise InvalidMatching("slot used twice or intra-node pair")
    realized: dict[tuple[int, int], int] = {}
    for a, b in matching.pairs:
        i, j = sorted((a[0], b[0]))
        if not coarse.adjacency[i, j]:
            raise InvalidMatching(f"pair joins non-adjacent nodes {i}, {j}")
        if a[1] >= coarse.arities[a[0]] or b[1] >= coarse.arities[b[0]]:
            raise InvalidMatching("slot id out of range")
        realized[(i, j)] = realized.get((i, j), 0) + 1
    for e in coarse.edges():
        count = realized.get(e, 0)
        if count == 0:
            raise UnrealizedCoarseEdge(f"coarse edge {e} has no matched slot pair")
        if count > 1:
            raise InvalidMatching(f"coarse edge {e} realized {count} times")
    atoms, bonds = _glue(coarse, sorted(matching.pairs), vocab)
    return build_molecule(atoms, bonds, allow_wildcard=False)


VALID = "valid"
PARSE_FAIL = "parse-fail"
UNREALIZED_EDGE = "unrealized-edge"
MULTI_COMPONENT = "multi-component"
STATUSES = (VALID, PARSE_FAIL, UNREALIZED_EDGE, MULTI_COMPONENT)


def reconstruct_status(
    coarse: CoarseGraph, matching: Matching, vocab: Vocabulary
) -> tuple[str, MolGraph | None]:
    """Total version of ``reconstruct`` used by the sampler: never raises."""
    if len(coarse) == 0:
        return PARSE_FAIL, None
    try:
        mol = reconstruct(coarse, matching, vocab)
    except UnrealizedCoarseEdge:
        return UNREALIZED_EDGE, None
    except (ChemError, InvalidMatching):
        return PARSE_FAIL, None
    if mol.num_components > 1 or coarse.num_components() > 1:
        return MULTI_COMPONENT, mol
    return VALID, mol
