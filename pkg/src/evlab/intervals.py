"""Exact unions of half-open intervals in [0, 1) and their images/preimages
under piecewise affine maps.

Endpoints are ``Fraction``s. Everything here is measure-level: two pieces
that share an endpoint are merged, and membership of single endpoints is
never decided (it is irrelevant for Lebesgue measure and for positive-length
overlap tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

Pieces = tuple[tuple[Fraction, Fraction], ...]

MAX_PIECES = 10**6


class PieceBlowup(RuntimeError):
    """Raised when an interval union exceeds the piece budget."""


def _normalize(pieces: Iterable[tuple[Fraction, Fraction]]) -> Pieces:
    items = sorted((lo, hi) for lo, hi in pieces if hi > lo)
    out: list[tuple[Fraction, Fraction]] = []
    for lo, hi in items:
        if out and lo <= out[-1][1]:
            if hi > out[-1][1]:
                out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return tuple(out)


@dataclass(frozen=True)
class IntervalSet:
    """Finite disjoint union of intervals inside [0, 1]."""

    pieces: Pieces = ()

    @classmethod
    def of(cls, pieces: Iterable[tuple]) -> "IntervalSet":
        return cls(_normalize((Fraction(a), Fraction(b)) for a, b in pieces))

    @classmethod
    def full(cls) -> "IntervalSet":
        return cls(((Fraction(0), Fraction(1)),))

    def __len__(self) -> int:
        return len(self.pieces)

    def __iter__(self):
        return iter(self.pieces)

    @property
    def is_empty(self) -> bool:
        return not self.pieces

    def measure(self) -> Fraction:
        return sum((hi - lo for lo, hi in self.pieces), Fraction(0))

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(_normalize(self.pieces + other.pieces))

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        a, b = self.pieces, other.pieces
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if hi > lo:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet(tuple(out))

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        b = other.pieces
        for lo, hi in self.pieces:
            cur = lo
            for blo, bhi in b:
                if bhi <= cur:
                    continue
                if blo >= hi:
                    break
                if blo > cur:
                    out.append((cur, blo))
                cur = max(cur, bhi)
                if cur >= hi:
                    break
            if cur < hi:
                out.append((cur, hi))
        return IntervalSet(_normalize(out))

    def overlaps(self, other: "IntervalSet") -> bool:
        """Positive-length intersection."""
        return not self.intersect(other).is_empty

    def contains(self, x) -> bool:
        x = Fraction(x)
        return any(lo < x < hi for lo, hi in self.pieces)


def ball(center, radius, topology: str = "circle") -> IntervalSet:
    """Open ball B_r(c) as an interval union (circle wraps around)."""
    c, r = Fraction(center), Fraction(radius)
    if r <= 0:
        return IntervalSet()
    if topology == "circle":
        if 2 * r >= 1:
            return IntervalSet.full()
        lo, hi = c - r, c + r
        pieces = []
        for shift in (-1, 0, 1):
            pieces.append((max(lo + shift, Fraction(0)), min(hi + shift, Fraction(1))))
        return IntervalSet(_normalize(pieces))
    return IntervalSet(_normalize([(max(c - r, Fraction(0)), min(c + r, Fraction(1)))]))


def _wrap_pieces(lo: Fraction, hi: Fraction) -> list[tuple[Fraction, Fraction]]:
    """Reduce an unreduced interval [lo, hi) onto the circle."""
    if hi - lo >= 1:
        return [(Fraction(0), Fraction(1))]
    k = math.floor(lo)
    lo, hi = lo - k, hi - k
    if hi <= 1:
        return [(lo, hi)]
    return [(lo, Fraction(1)), (Fraction(0), hi - 1)]


def _affine_branches(fmap) -> Sequence:
    if not getattr(fmap, "exact_affine", False):
        raise ValueError("exact interval propagation needs an exact-affine map")
    return fmap.branches


def image(fmap, s: IntervalSet, max_pieces: int = MAX_PIECES) -> IntervalSet:
    """f(S) as an interval union."""
    out = []
    for br in _affine_branches(fmap):
        dom = IntervalSet(((br.a, br.b),))
        for lo, hi in s.intersect(dom):
            y0, y1 = br.slope * lo + br.intercept, br.slope * hi + br.intercept
            y0, y1 = min(y0, y1), max(y0, y1)
            if fmap.topology == "circle":
                out.extend(_wrap_pieces(y0, y1))
            else:
                out.append((max(y0, Fraction(0)), min(y1, Fraction(1))))
    res = IntervalSet(_normalize(out))
    if len(res) > max_pieces:
        raise PieceBlowup(f"{len(res)} pieces")
    return res


def preimage(fmap, s: IntervalSet, max_pieces: int = MAX_PIECES) -> IntervalSet:
    """f^{-1}(S) as an interval union."""
    out = []
    for br in _affine_branches(fmap):
        ya, yb = br.slope * br.a + br.intercept, br.slope * br.b + br.intercept
        jlo, jhi = min(ya, yb), max(ya, yb)
        shifts = range(math.floor(jlo) - 1, math.ceil(jhi) + 1) if fmap.topology == "circle" else (0,)
        for m in shifts:
            for lo, hi in s:
                tlo, thi = max(lo + m, jlo), min(hi + m, jhi)
                if thi <= tlo:
                    continue
                x0 = (tlo - br.intercept) / br.slope
                x1 = (thi - br.intercept) / br.slope
                out.append((min(x0, x1), max(x0, x1)))
    res = IntervalSet(_normalize(out))
    if len(res) > max_pieces:
        raise PieceBlowup(f"{len(res)} pieces")
    return res


def preimage_iter(fmap, s: IntervalSet, p: int, max_pieces: int = MAX_PIECES) -> IntervalSet:
    for _ in range(p):
        s = preimage(fmap, s, max_pieces)
    return s
