from __future__ import annotations


class SmilesError(ValueError):
    """Base class for SMILES parse failures. ``offset`` is a byte offset into the input."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class EmptyInput(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    pass


class UnmatchedRingClosure(SmilesError):
    pass


class UnbalancedParenthesis(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class ValenceViolation(SmilesError):
    pass


class NoKekuleAssignment(ValueError):
    """No alternating single/double assignment satisfies the aromatic atoms."""


class GraphInvariantError(ValueError):
    """A MoleculeGraph was built with inconsistent atoms or bonds."""
