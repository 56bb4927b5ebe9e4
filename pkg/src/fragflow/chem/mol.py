"""Atom-level molecular graph with hydrogen, kekulization and aromaticity rules.

Hydrogens are stored as counts on heavy atoms. Aromatic bonds are kept as
``BondOrder.AROMATIC``; a Kekulé assignment is recovered on demand by a
maximum-cardinality matching over the aromatic subgraph.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx

from fragflow.chem.elements import (
    AROMATIC_CAPABLE,
    SUPPORTED_ELEMENTS,
    VALENCES,
    WILDCARD,
    BondOrder,
    lowest_valence_at_least,
    max_valence,
)
from fragflow.chem.errors import (
    ChargedAtomError,
    ChemError,
    KekulizationError,
    UnsupportedElementError,
    ValenceError,
)

MAX_RING_SIZE = 8


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    hydrogens: int = 0
    charge: int = 0

    @property
    def is_wildcard(self) -> bool:
        return self.element == WILDCARD


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class MolGraph:
    """Immutable molecular graph. Construct through :func:`build_molecule`
    or the SMILES parser so that hydrogens and aromaticity are consistent."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]

    def __post_init__(self):
        seen = set()
        n = len(self.atoms)
        for bond in self.bonds:
            if bond.a == bond.b:
                raise ChemError(f"self-bond on atom {bond.a}")
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ChemError(f"bond endpoint out of range: {bond}")
            key = frozenset((bond.a, bond.b))
            if key in seen:
                raise ChemError(f"duplicate bond {bond.a}-{bond.b}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per atom: tuple of (neighbor index, bond index)."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for k, bond in enumerate(self.bonds):
            adj[bond.a].append((bond.b, k))
            adj[bond.b].append((bond.a, k))
        return tuple(tuple(x) for x in adj)

    @cached_property
    def bond_lookup(self) -> dict[frozenset, int]:
        return {frozenset((b.a, b.b)): k for k, b in enumerate(self.bonds)}

    def bond_between(self, i: int, j: int) -> int | None:
        return self.bond_lookup.get(frozenset((i, j)))

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def valence_sum(self, i: int) -> int:
        """Bond valence sum of atom ``i`` with aromatic bonds counted as one."""
        return sum(self.bonds[k].order.valence for _, k in self.neighbors[i])

    @cached_property
    def nx_graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(len(self.atoms)))
        g.add_edges_from((b.a, b.b) for b in self.bonds)
        return g

    @cached_property
    def ring_bonds(self) -> frozenset[int]:
        bridges = {frozenset(e) for e in nx.bridges(self.nx_graph)}
        return frozenset(
            k for k, b in enumerate(self.bonds) if frozenset((b.a, b.b)) not in bridges
        )

    @cached_property
    def ring_atoms(self) -> frozenset[int]:
        out = set()
        for k in self.ring_bonds:
            out.add(self.bonds[k].a)
            out.add(self.bonds[k].b)
        return frozenset(out)

    @cached_property
    def num_components(self) -> int:
        if not self.atoms:
            return 0
        return nx.number_connected_components(self.nx_graph)

    @cached_property
    def sssr(self) -> tuple[tuple[int, ...], ...]:
        """Minimum cycle basis as atom tuples (size = cycle rank)."""
        if not self.ring_bonds:
            return ()
        cycles = nx.minimum_cycle_basis(self.nx_graph)
        return tuple(tuple(sorted(c)) for c in sorted(cycles, key=lambda c: (len(c), sorted(c))))

    @cached_property
    def kekule_orders(self) -> tuple[int, ...]:
        return tuple(kekulize(self.atoms, self.bonds))

    def with_atoms(self, atoms: Sequence[Atom]) -> "MolGraph":
        return MolGraph(tuple(atoms), self.bonds)


def default_hydrogens(element: str, aromatic: bool, bond_sum: int) -> int:
    """Implicit hydrogen count for an unbracketed atom.

    Aromatic atoms use only their lowest valence and reserve one unit for
    the pi bond when it fits; this keeps ``s``/``o`` at zero hydrogens.
    """
    if element == WILDCARD:
        return 0
    if aromatic:
        v0 = VALENCES[element][0]
        return max(0, v0 - bond_sum - 1)
    v = lowest_valence_at_least(element, bond_sum)
    if v is None:
        raise ValenceError(f"{element} cannot carry bond valence {bond_sum}")
    return v - bond_sum


def _needs_pi(atom: Atom, bond_sum: int) -> bool:
    if not atom.aromatic or atom.is_wildcard:
        return False
    return VALENCES[atom.element][0] - (bond_sum + atom.hydrogens) >= 1


def kekulize(atoms: Sequence[Atom], bonds: Sequence[Bond]) -> list[int]:
    """Return integer bond orders with aromatic bonds resolved to 1 or 2."""
    orders = [int(b.order) if b.order is not BondOrder.AROMATIC else 1 for b in bonds]
    aromatic_bonds = [k for k, b in enumerate(bonds) if b.order is BondOrder.AROMATIC]
    if not aromatic_bonds:
        return orders
    sums = [0] * len(atoms)
    for b in bonds:
        sums[b.a] += b.order.valence
        sums[b.b] += b.order.valence
    need = [_needs_pi(a, sums[i]) for i, a in enumerate(atoms)]
    g = nx.Graph()
    g.add_nodes_from(i for i, flag in enumerate(need) if flag)
    for k in aromatic_bonds:
        b = bonds[k]
        if need[b.a] and need[b.b]:
            g.add_edge(b.a, b.b, k=k)
    matching = nx.max_weight_matching(g, maxcardinality=True)
    matched = set()
    for u, v in matching:
        orders[g.edges[u, v]["k"]] = 2
        matched.update((u, v))
    missing = [i for i in g.nodes if i not in matched]
    if missing:
        raise KekulizationError(f"cannot kekulize aromatic atoms {missing}")
    return orders


def _pi_electrons(
    i: int,
    atoms: Sequence[Atom],
    bonds: Sequence[Bond],
    orders: Sequence[int],
    adj: Sequence[Sequence[tuple[int, int]]],
    ring_bonds: frozenset[int],
) -> int | None:
    atom = atoms[i]
    if atom.is_wildcard or atom.element not in AROMATIC_CAPABLE:
        return None
    doubles = [(j, k) for j, k in adj[i] if orders[k] == 2]
    if any(orders[k] == 3 for _, k in adj[i]) or len(doubles) > 1:
        return None
    if doubles:
        j, k = doubles[0]
        if k in ring_bonds:
            return 1
        if atom.element == "C" and atoms[j].element in ("O", "S", "N"):
            return 0
        return None
    total = sum(orders[k] for _, k in adj[i]) + atom.hydrogens
    if atom.element in ("N", "P", "As") and total == 3:
        return 2
    if atom.element in ("O", "S", "Se") and len(adj[i]) == 2 and atom.hydrogens == 0:
        return 2
    if atom.element == "B" and total == 3:
        return 0
    return None


def perceive_aromaticity(
    atoms: Sequence[Atom], bonds: Sequence[Bond], orders: Sequence[int]
) -> tuple[list[bool], list[bool]]:
    """Hückel-style aromaticity on simple cycles of at most 8 atoms.

    A cycle is aromatic when every member contributes a pi count (1 for a
    ring double bond, 2 for a lone-pair heteroatom, 0 for an exocyclic
    carbonyl-type carbon) and the total is 4n+2.
    """
    n = len(atoms)
    g = nx.Graph()
    g.add_nodes_from(range(n))
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, b in enumerate(bonds):
        g.add_edge(b.a, b.b, k=k)
        adj[b.a].append((b.b, k))
        adj[b.b].append((b.a, k))
    bridges = {frozenset(e) for e in nx.bridges(g)}
    ring_bonds = frozenset(
        k for k, b in enumerate(bonds) if frozenset((b.a, b.b)) not in bridges
    )
    atom_flags = [False] * n
    bond_flags = [False] * len(bonds)
    if not ring_bonds:
        return atom_flags, bond_flags
    rg = nx.Graph()
    for k in sorted(ring_bonds):
        rg.add_edge(bonds[k].a, bonds[k].b, k=k)
    contrib = {}
    for cycle in nx.simple_cycles(rg, length_bound=MAX_RING_SIZE):
        total = 0
        for i in cycle:
            if i not in contrib:
                contrib[i] = _pi_electrons(i, atoms, bonds, orders, adj, ring_bonds)
            if contrib[i] is None:
                total = None
                break
            total += contrib[i]
        if total is None or total % 4 != 2:
            continue
        for pos, i in enumerate(cycle):
            atom_flags[i] = True
            j = cycle[(pos + 1) % len(cycle)]
            bond_flags[rg.edges[i, j]["k"]] = True
    return atom_flags, bond_flags


def check_atoms(atoms: Iterable[Atom], allow_wildcard: bool = True) -> None:
    for atom in atoms:
        if atom.is_wildcard:
            if not allow_wildcard:
                raise UnsupportedElementError("wildcard atom not allowed here")
            continue
        if atom.element not in SUPPORTED_ELEMENTS:
            raise UnsupportedElementError(f"unsupported element {atom.element!r}")
        if atom.charge != 0:
            raise ChargedAtomError(f"charged atom {atom.element}{atom.charge:+d}")
        if atom.aromatic and atom.element not in AROMATIC_CAPABLE:
            raise ValenceError(f"{atom.element} cannot be aromatic")


def valence_violations(atoms: Sequence[Atom], bonds: Sequence[Bond], orders: Sequence[int]) -> list[int]:
    sums = [a.hydrogens for a in atoms]
    for b, o in zip(bonds, orders):
        sums[b.a] += o
        sums[b.b] += o
    return [i for i, a in enumerate(atoms) if sums[i] > max_valence(a.element)]


def check_valence(mol: MolGraph) -> bool:
    """True when every atom's Kekulé valence (bonds + H) is within the table."""
    try:
        orders = mol.kekule_orders
    except KekulizationError:
        return False
    return not valence_violations(mol.atoms, mol.bonds, orders)


def build_molecule(atoms: Sequence[Atom], bonds: Sequence[Bond], allow_wildcard: bool = True) -> MolGraph:
    """Normalize an atom/bond list into a :class:`MolGraph`.

    Hydrogen counts must already be resolved. Aromatic input is kekulized,
    valences are checked, and aromaticity is re-perceived from the Kekulé
    structure so that equivalent inputs yield identical graphs.
    """
    atoms = list(atoms)
    bonds = list(bonds)
    check_atoms(atoms, allow_wildcard)
    orders = kekulize(atoms, bonds)
    bad = valence_violations(atoms, bonds, orders)
    if bad:
        i = bad[0]
        raise ValenceError(f"valence exceeded on atom {i} ({atoms[i].element})")
    atom_flags, bond_flags = perceive_aromaticity(atoms, bonds, orders)
    new_atoms = tuple(replace(a, aromatic=atom_flags[i]) for i, a in enumerate(atoms))
    new_bonds = tuple(
        Bond(b.a, b.b, BondOrder.AROMATIC if bond_flags[k] else BondOrder(orders[k]))
        for k, b in enumerate(bonds)
    )
    return MolGraph(new_atoms, new_bonds)


def with_hydrogen_caps(mol: MolGraph, remove: Iterable[int]) -> tuple[list[Atom], list[Bond], list[int]]:
    """Delete atoms, adding one hydrogen per removed single bond on survivors.

    Returns new atoms, bonds and the old->new index map (-1 for removed).
    """
    remove = set(remove)
    index = []
    atoms = []
    for i, a in enumerate(mol.atoms):
        if i in remove:
            index.append(-1)
        else:
            index.append(len(atoms))
            atoms.append(a)
    bonds = []
    for b in mol.bonds:
        ia, ib = index[b.a], index[b.b]
        if ia >= 0 and ib >= 0:
            bonds.append(Bond(ia, ib, b.order))
        elif ia >= 0 or ib >= 0:
            keep = ia if ia >= 0 else ib
            if not atoms[keep].is_wildcard:
                a = atoms[keep]
                atoms[keep] = replace(a, hydrogens=a.hydrogens + b.order.valence)
    return atoms, bonds, index
