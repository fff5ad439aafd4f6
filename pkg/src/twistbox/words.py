"""Mapping-class words: free words over twist symbols with free reduction.

A word is stored as a tuple of (symbol, exponent) pairs, reduced so that
adjacent pairs never share a symbol and no exponent is zero.  Flow-time and
conjugacy map pieces contribute the empty word; only Dehn twists carry
symbols.
"""

from __future__ import annotations

from typing import Iterable, Tuple


def twist_symbol(gamma: Tuple[int, int]) -> str:
    """Symbol for the twist along the transverse torus directed by gamma."""
    return "τ(%d,%d)" % (int(gamma[0]), int(gamma[1]))


class Word:
    """A freely reduced word over an alphabet of twist symbols."""

    __slots__ = ("_letters",)

    def __init__(self, letters: Iterable[Tuple[str, int]] = ()):
        reduced: list[list] = []
        for sym, exp in letters:
            exp = int(exp)
            if exp == 0:
                continue
            if reduced and reduced[-1][0] == sym:
                reduced[-1][1] += exp
                if reduced[-1][1] == 0:
                    reduced.pop()
            else:
                reduced.append([sym, exp])
        self._letters = tuple((s, e) for s, e in reduced)

    @property
    def letters(self) -> Tuple[Tuple[str, int], ...]:
        return self._letters

    def is_identity(self) -> bool:
        return not self._letters

    def __mul__(self, other: "Word") -> "Word":
        """Concatenation: ``self`` first, then ``other`` (application order)."""
        return Word(self._letters + other._letters)

    def inverse(self) -> "Word":
        return Word((s, -e) for s, e in reversed(self._letters))

    def __eq__(self, other) -> bool:
        return isinstance(other, Word) and self._letters == other._letters

    def __hash__(self):
        return hash(self._letters)

    def __len__(self) -> int:
        return sum(abs(e) for _, e in self._letters)

    def __str__(self) -> str:
        # Letters are printed in application order: the leftmost symbol is
        # the twist applied first.
        if not self._letters:
            return "e"
        parts = []
        for sym, exp in self._letters:
            if exp == 1:
                parts.append(sym)
            else:
                parts.append("%s^%d" % (sym, exp))
        return "·".join(parts)

    def __repr__(self) -> str:
        return "Word(%s)" % str(self)
