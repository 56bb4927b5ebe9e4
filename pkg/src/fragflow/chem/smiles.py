"""SMILES reader.

Supports the organic subset, bracket atoms (isotope, chirality and atom-class
fields are accepted and discarded), bond symbols ``- = # : / \\``, branches,
ring closures (digits and ``%nn``) and aromatic lowercase atoms. Charged atoms
and dot-separated components are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

from fragflow.chem.elements import (
    AROMATIC_CAPABLE,
    AROMATIC_SUBSET,
    ORGANIC_SUBSET,
    SUPPORTED_ELEMENTS,
    WILDCARD,
    BondOrder,
)
from fragflow.chem.errors import (
    ChargedAtomError,
    MultiComponentError,
    SmilesSyntaxError,
    UnclosedRingError,
    UnsupportedElementError,
)
from fragflow.chem.mol import Atom, Bond, MolGraph, build_molecule, default_hydrogens

_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
}


@dataclass
class _RawAtom:
    element: str
    aromatic: bool
    hydrogens: int | None  # None: implicit
    charge: int = 0


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[_RawAtom] = []
        self.bonds: list[tuple[int, int, BondOrder | None]] = []
        self.pairs: set[frozenset] = set()
        self.rings: dict[int, tuple[int, BondOrder | None, int]] = {}

    def error(self, message: str, pos: int | None = None) -> SmilesSyntaxError:
        return SmilesSyntaxError(message, self.text, self.pos if pos is None else pos)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def add_bond(self, a: int, b: int, order: BondOrder | None, pos: int) -> None:
        if a == b:
            raise self.error("atom bonded to itself", pos)
        key = frozenset((a, b))
        if key in self.pairs:
            raise self.error("duplicate bond", pos)
        self.pairs.add(key)
        self.bonds.append((a, b, order))

    def parse(self) -> None:
        text = self.text
        prev: int | None = None
        stack: list[int | None] = []
        pending: BondOrder | None = None
        pending_pos = -1
        while self.pos < len(text):
            ch = text[self.pos]
            start = self.pos
            if ch == "(":
                if prev is None:
                    raise self.error("branch without preceding atom")
                stack.append(prev)
                self.pos += 1
            elif ch == ")":
                if not stack:
                    raise self.error("unbalanced ')'")
                if pending is not None:
                    raise self.error("bond symbol before ')'")
                prev = stack.pop()
                self.pos += 1
            elif ch in _BOND_SYMBOLS:
                if pending is not None:
                    raise self.error("consecutive bond symbols")
                if prev is None:
                    raise self.error("bond without preceding atom")
                pending = _BOND_SYMBOLS[ch]
                pending_pos = start
                self.pos += 1
            elif ch == ".":
                raise MultiComponentError(f"multi-component SMILES not accepted: {text!r}")
            elif ch == "$":
                raise self.error("quadruple bonds unsupported")
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    raise self.error("ring closure without atom")
                if ch == "%":
                    digits = text[self.pos + 1 : self.pos + 3]
                    if len(digits) != 2 or not digits.isdigit():
                        raise self.error("malformed %nn ring closure")
                    num = int(digits)
                    self.pos += 3
                else:
                    num = int(ch)
                    self.pos += 1
                if num in self.rings:
                    other, order, _ = self.rings.pop(num)
                    if order is not None and pending is not None and order != pending:
                        raise self.error("conflicting ring-closure bond symbols", start)
                    self.add_bond(other, prev, pending if pending is not None else order, start)
                else:
                    self.rings[num] = (prev, pending, start)
                pending = None
            else:
                idx = self.read_atom()
                if prev is not None:
                    self.add_bond(prev, idx, pending, start)
                elif pending is not None:
                    raise self.error("bond without preceding atom", pending_pos)
                pending = None
                prev = idx
        if pending is not None:
            raise self.error("dangling bond symbol", pending_pos)
        if stack:
            raise self.error("unclosed branch '('")
        if self.rings:
            num, (_, _, pos) = next(iter(self.rings.items()))
            raise UnclosedRingError(f"ring bond {num} opened at position {pos} never closed: {text!r}")
        if not self.atoms:
            raise self.error("no atoms", 0)

    def read_atom(self) -> int:
        text = self.text
        ch = text[self.pos]
        if ch == "[":
            return self.read_bracket()
        if ch == "*":
            self.pos += 1
            self.atoms.append(_RawAtom(WILDCARD, False, 0))
            return len(self.atoms) - 1
        two = text[self.pos : self.pos + 2]
        if two in ("Cl", "Br"):
            symbol, aromatic = two, False
            self.pos += 2
        elif ch.upper() in ORGANIC_SUBSET or ch.upper() in AROMATIC_SUBSET:
            if ch.islower():
                if ch.upper() not in AROMATIC_SUBSET:
                    raise self.error(f"invalid aromatic symbol {ch!r}")
                symbol, aromatic = ch.upper(), True
            else:
                if ch not in ORGANIC_SUBSET:
                    raise self.error(f"unexpected character {ch!r}")
                symbol, aromatic = ch, False
            self.pos += 1
        elif ch.isalpha():
            raise UnsupportedElementError(f"unsupported element {ch!r} outside brackets in {text!r}")
        else:
            raise self.error(f"unexpected character {ch!r}")
        self.atoms.append(_RawAtom(symbol, aromatic, None))
        return len(self.atoms) - 1

    def read_bracket(self) -> int:
        text = self.text
        start = self.pos
        end = text.find("]", start)
        if end < 0:
            raise self.error("unterminated bracket atom")
        body = text[start + 1 : end]
        i = 0
        while i < len(body) and body[i].isdigit():  # isotope, ignored
            i += 1
        if i >= len(body):
            raise self.error("empty bracket atom", start)
        if body[i] == "*":
            symbol, aromatic = WILDCARD, False
            i += 1
        elif body[i : i + 2] in ("se", "as"):
            symbol, aromatic = body[i].upper() + body[i + 1], True
            i += 2
        elif body[i].islower():
            symbol, aromatic = body[i].upper(), True
            i += 1
        elif body[i].isupper():
            if i + 1 < len(body) and body[i + 1].islower():
                symbol = body[i : i + 2]
                i += 2
            else:
                symbol = body[i]
                i += 1
            aromatic = False
        else:
            raise self.error("bad bracket atom symbol", start)
        if symbol != WILDCARD and symbol not in SUPPORTED_ELEMENTS:
            raise UnsupportedElementError(f"unsupported element {symbol!r} in {text!r}")
        if aromatic and symbol not in AROMATIC_CAPABLE:
            raise self.error(f"element {symbol} cannot be aromatic", start)
        while i < len(body) and body[i] == "@":  # chirality ignored
            i += 1
        hydrogens = 0
        if i < len(body) and body[i] == "H":
            i += 1
            j = i
            while i < len(body) and body[i].isdigit():
                i += 1
            hydrogens = int(body[j:i]) if i > j else 1
        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            j = i
            while i < len(body) and body[i] == body[j]:
                i += 1
            count = i - j
            k = i
            while i < len(body) and body[i].isdigit():
                i += 1
            if i > k:
                count = int(body[k:i])
            charge = sign * count
        if i < len(body) and body[i] == ":":
            i += 1
            while i < len(body) and body[i].isdigit():
                i += 1
        if i != len(body):
            raise self.error(f"trailing characters in bracket atom [{body}]", start)
        if charge != 0:
            raise ChargedAtomError(f"charged atom [{body}] not accepted")
        self.pos = end + 1
        self.atoms.append(_RawAtom(symbol, aromatic, hydrogens, charge))
        return len(self.atoms) - 1


def parse_smiles(text: str) -> MolGraph:
    """Parse a single-component, neutral SMILES string into a MolGraph."""
    if not isinstance(text, str):
        raise TypeError("SMILES must be a string")
    text = text.strip()
    if not text:
        raise SmilesSyntaxError("empty SMILES")
    reader = _Reader(text)
    reader.parse()
    raw = reader.atoms
    bonds = []
    for a, b, order in reader.bonds:
        if order is None:
            both = raw[a].aromatic and raw[b].aromatic
            order = BondOrder.AROMATIC if both else BondOrder.SINGLE
        bonds.append(Bond(a, b, order))
    sums = [0] * len(raw)
    for bond in bonds:
        sums[bond.a] += bond.order.valence
        sums[bond.b] += bond.order.valence
    atoms = []
    for i, r in enumerate(raw):
        h = r.hydrogens
        if h is None:
            h = default_hydrogens(r.element, r.aromatic, sums[i])
        atoms.append(Atom(r.element, r.aromatic, h, r.charge))
    mol = build_molecule(atoms, bonds)
    if mol.num_components > 1:
        raise MultiComponentError(f"disconnected molecule: {text!r}")
    return mol
