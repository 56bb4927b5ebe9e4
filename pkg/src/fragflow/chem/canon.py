"""Canonical atom ranking and SMILES writing.

Ranks come from iterative refinement of atom invariants (element, degree,
hydrogens, aromaticity, ring membership) by sorted neighbor classes. Ties
left after refinement are broken one atom at a time, each break followed by
another refinement round, so the final order is a total order determined by
the graph up to automorphism.
"""

from __future__ import annotations

from fragflow.chem.elements import (
    AROMATIC_SUBSET,
    ATOMIC_NUMBERS,
    ORGANIC_SUBSET,
    WILDCARD,
    BondOrder,
)
from fragflow.chem.mol import MolGraph, default_hydrogens


def _rank(keys: list) -> list[int]:
    order = sorted(set(keys))
    lookup = {k: r for r, k in enumerate(order)}
    return [lookup[k] for k in keys]


def _refine(mol: MolGraph, ranks: list[int]) -> list[int]:
    adj = mol.neighbors
    bonds = mol.bonds
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((int(bonds[k].order), ranks[j]) for j, k in adj[i])))
            for i in range(len(ranks))
        ]
        new = _rank(keys)
        n_new = len(set(new))
        ranks = new
        if n_new == n_classes:
            return ranks
        n_classes = n_new


def atom_invariants(mol: MolGraph) -> list[tuple]:
    ring = mol.ring_atoms
    return [
        (
            ATOMIC_NUMBERS[a.element],
            a.aromatic,
            mol.degree(i),
            a.hydrogens,
            i in ring,
            tuple(sorted(int(mol.bonds[k].order) for _, k in mol.neighbors[i])),
        )
        for i, a in enumerate(mol.atoms)
    ]


def symmetry_classes(mol: MolGraph) -> list[int]:
    """Refined invariant class per atom before tie-breaking; atoms related
    by a graph automorphism always share a class."""
    if not mol.atoms:
        return []
    return _refine(mol, _rank(atom_invariants(mol)))


def canonical_ranks(mol: MolGraph) -> list[int]:
    """Distinct rank per atom, invariant under atom relabeling."""
    n = len(mol.atoms)
    if n == 0:
        return []
    ranks = _refine(mol, _rank(atom_invariants(mol)))
    while len(set(ranks)) < n:
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = min(r for r, c in counts.items() if c > 1)
        pick = min(i for i, r in enumerate(ranks) if r == tied)
        keys = [(2 * r + (1 if (r == tied and i != pick) else 0)) for i, r in enumerate(ranks)]
        ranks = _refine(mol, _rank(keys))
    return ranks


def _atom_symbol(mol: MolGraph, i: int) -> str:
    atom = mol.atoms[i]
    if atom.element == WILDCARD:
        return "[*]"
    bracket_needed = True
    if atom.aromatic and atom.element in AROMATIC_SUBSET:
        bracket_needed = atom.hydrogens != default_hydrogens(atom.element, True, mol.valence_sum(i))
    elif not atom.aromatic and atom.element in ORGANIC_SUBSET:
        try:
            bracket_needed = atom.hydrogens != default_hydrogens(atom.element, False, mol.valence_sum(i))
        except ValueError:
            bracket_needed = True
    symbol = atom.element.lower() if atom.aromatic else atom.element
    if not bracket_needed:
        return symbol
    h = atom.hydrogens
    hpart = "" if h == 0 else ("H" if h == 1 else f"H{h}")
    return f"[{symbol}{hpart}]"


def _bond_symbol(mol: MolGraph, k: int) -> str:
    bond = mol.bonds[k]
    if bond.order is BondOrder.DOUBLE:
        return "="
    if bond.order is BondOrder.TRIPLE:
        return "#"
    if bond.order is BondOrder.AROMATIC:
        a, b = mol.atoms[bond.a], mol.atoms[bond.b]
        return "" if (a.aromatic and b.aromatic) else ":"
    if mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic:
        return "-"
    return ""


def _ring_label(num: int) -> str:
    return str(num) if num < 10 else f"%{num:02d}"


def write_smiles(mol: MolGraph, ranks: list[int]) -> tuple[str, list[int]]:
    """DFS emission in rank order. Returns the string and the atom order
    (position in the string -> atom index)."""
    n = len(mol.atoms)
    if n == 0:
        return "", []
    adj = mol.neighbors
    visited = [False] * n
    children: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    openings: list[list[int]] = [[] for _ in range(n)]  # bond indices opened here
    closings: list[list[int]] = [[] for _ in range(n)]
    used_bonds: set[int] = set()
    roots = []
    visit_pos = [0] * n
    counter = 0

    # First pass: spanning forest and ring-closure bonds.
    for root in sorted(range(n), key=lambda i: ranks[i]):
        if visited[root]:
            continue
        roots.append(root)
        visited[root] = True
        visit_pos[root] = counter
        counter += 1
        stack = [(root, iter(sorted(adj[root], key=lambda t: ranks[t[0]])))]
        while stack:
            u, it = stack[-1]
            advanced = False
            for v, k in it:
                if k in used_bonds:
                    continue
                used_bonds.add(k)
                if visited[v]:
                    openings[v].append(k)
                    closings[u].append(k)
                    continue
                visited[v] = True
                visit_pos[v] = counter
                counter += 1
                children[u].append((v, k))
                stack.append((v, iter(sorted(adj[v], key=lambda t: ranks[t[0]]))))
                advanced = True
                break
            if not advanced:
                stack.pop()

    # Second pass: emission.
    out: list[str] = []
    order: list[int] = []
    free_labels: list[int] = []
    next_label = 1
    labels: dict[int, int] = {}

    def take_label() -> int:
        nonlocal next_label
        if free_labels:
            free_labels.sort()
            return free_labels.pop(0)
        next_label += 1
        return next_label - 1

    def emit(start: int, in_bond: int | None) -> None:
        work: list = [("atom", start, in_bond)]
        while work:
            item = work.pop()
            if item[0] == "text":
                out.append(item[1])
                continue
            _, u, k_in = item
            if k_in is not None:
                out.append(_bond_symbol(mol, k_in))
            out.append(_atom_symbol(mol, u))
            order.append(u)
            # Ring closures ending here close labels opened earlier.
            for k in sorted(closings[u], key=lambda k: visit_pos[mol.bonds[k].other(u)]):
                lab = labels.pop(k)
                out.append(_ring_label(lab))
                free_labels.append(lab)
            for k in sorted(openings[u], key=lambda k: visit_pos[mol.bonds[k].other(u)]):
                lab = take_label()
                labels[k] = lab
                out.append(_bond_symbol(mol, k) + _ring_label(lab))
            kids = children[u]
            # Push in reverse so that branches come out in rank order and the
            # last child continues the main chain.
            tail = []
            for idx, (v, k) in enumerate(kids):
                if idx < len(kids) - 1:
                    tail.append([("text", "("), ("atom", v, k), ("text", ")")])
                else:
                    tail.append([("atom", v, k)])
            for group in reversed(tail):
                for entry in reversed(group):
                    work.append(entry)

    # Closings must run before later branches of an ancestor open new labels;
    # the explicit work stack emits a subtree fully before its siblings.
    for r in roots:
        if r != roots[0]:
            out.append(".")
        emit(r, None)
    return "".join(out), order


def canonical_smiles(mol: MolGraph, return_order: bool = False):
    """Canonical SMILES for ``mol``; with ``return_order`` also the emission
    order of atoms, which maps string positions back to ``mol`` indices."""
    text, order = write_smiles(mol, canonical_ranks(mol))
    if return_order:
        return text, order
    return text
