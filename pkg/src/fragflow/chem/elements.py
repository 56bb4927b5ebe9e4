"""Element table: supported symbols, allowed valences and atomic masses."""

from __future__ import annotations

from enum import IntEnum

WILDCARD = "*"

# Allowed valence states, lowest first. Used both for implicit hydrogen
# assignment and for the validity check (max entry is the ceiling).
VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "F": (1,),
    "Si": (4,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "Cl": (1,),
    "As": (3, 5),
    "Se": (2, 4, 6),
    "Br": (1,),
    "I": (1,),
}

SUPPORTED_ELEMENTS = frozenset(VALENCES)

MASSES: dict[str, float] = {
    "H": 1.008,
    "B": 10.81,
    "C": 12.011,
    "N": 14.007,
    "O": 15.999,
    "F": 18.998,
    "Si": 28.085,
    "P": 30.974,
    "S": 32.06,
    "Cl": 35.45,
    "As": 74.922,
    "Se": 78.971,
    "Br": 79.904,
    "I": 126.904,
}

ATOMIC_NUMBERS: dict[str, int] = {
    WILDCARD: 0,
    "B": 5,
    "C": 6,
    "N": 7,
    "O": 8,
    "F": 9,
    "Si": 14,
    "P": 15,
    "S": 16,
    "Cl": 17,
    "As": 33,
    "Se": 34,
    "Br": 35,
    "I": 53,
}

# Symbols that may appear outside brackets.
ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S"})
# Elements that may carry an aromatic flag at all (bracketed for Se/As).
AROMATIC_CAPABLE = frozenset({"B", "C", "N", "O", "P", "S", "Se", "As"})

# Fixed element ordering for one-hot features.
ELEMENT_ORDER: tuple[str, ...] = (
    WILDCARD, "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "As", "Se", "Br", "I",
)
ELEMENT_INDEX = {e: i for i, e in enumerate(ELEMENT_ORDER)}


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> int:
        """Contribution to the valence sum, with aromatic counted as one."""
        return 1 if self is BondOrder.AROMATIC else int(self)


def max_valence(element: str) -> int:
    if element == WILDCARD:
        return 1
    return VALENCES[element][-1]


def lowest_valence_at_least(element: str, value: int) -> int | None:
    """Smallest allowed valence >= value, or None if none fits."""
    if element == WILDCARD:
        return 1 if value <= 1 else None
    for v in VALENCES[element]:
        if v >= value:
            return v
    return None
