from __future__ import annotations


class ChemError(ValueError):
    """Base class for molecule construction and parsing failures."""


class SmilesSyntaxError(ChemError):
    def __init__(self, message: str, text: str = "", position: int = -1):
        self.text = text
        self.position = position
        if position >= 0:
            message = f"{message} at position {position}: {text!r}"
        super().__init__(message)


class UnsupportedElementError(ChemError):
    pass


class ValenceError(ChemError):
    pass


class KekulizationError(ValenceError):
    """Aromatic system admits no alternating single/double assignment."""


class UnclosedRingError(ChemError):
    pass


class MultiComponentError(ChemError):
    pass


class ChargedAtomError(ChemError):
    pass
