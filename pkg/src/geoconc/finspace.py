"""Finite topological spaces with explicit open-set families.

A finite space whose opens contain the empty and total sets and are closed
under pairwise union and intersection is automatically Alexandrov: every
point has a smallest open neighbourhood, and the opens are exactly the
up-sets of the specialization preorder.  Spaces are therefore stored as the
minimal-open table over a sorted point tuple, which makes structural
equality bit-exact; the full open family is derived on demand.

Point identifiers are opaque strings at the API boundary.  Internally each
space fixes a dense index order (the sorted point tuple) and subsets of
points are bitmasks over that order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

MAX_OPENS = 500_000


def bits_iter(bits: int):
    """Yield the set bit positions of ``bits`` in increasing order."""
    while bits:
        low = bits & -bits
        yield low.bit_length() - 1
        bits ^= low


def popcount(bits: int) -> int:
    return bits.bit_count()


class SpaceError(ValueError):
    """Invalid finite-space data."""


class MissingEmptyOrTotal(SpaceError):
    def __init__(self, which: str):
        self.which = which
        super().__init__(f"open family must contain the {which} set")


class NotClosedUnderUnion(SpaceError):
    def __init__(self, a, b):
        self.witness = (sorted(a), sorted(b))
        super().__init__(
            f"union of opens {sorted(a)} and {sorted(b)} is not in the family"
        )


class NotClosedUnderIntersection(SpaceError):
    def __init__(self, a, b):
        self.witness = (sorted(a), sorted(b))
        super().__init__(
            f"intersection of opens {sorted(a)} and {sorted(b)} is not in the family"
        )


class UnknownPoint(SpaceError):
    def __init__(self, point):
        self.point = point
        super().__init__(f"unknown point {point!r}")


class NotContinuous(SpaceError):
    def __init__(self, point, detail=""):
        self.point = point
        super().__init__(f"map is not continuous at {point!r}{detail}")


@dataclass(frozen=True)
class FinSpace:
    """A finite Alexandrov space: sorted points plus minimal-open bitmasks."""

    points: tuple[str, ...]
    min_bits: tuple[int, ...]

    @classmethod
    def from_min_opens(cls, min_open_map: Mapping[str, Iterable[str]]) -> "FinSpace":
        """Build a space from a point -> minimal-open-neighbourhood table.

        The table must describe a preorder: reflexive (x in minOpen(x)) and
        transitive (y in minOpen(x) implies minOpen(y) subset of minOpen(x)).
        """
        points = tuple(sorted(min_open_map))
        if len(points) != len(min_open_map):
            raise SpaceError("duplicate point identifiers")
        idx = {p: i for i, p in enumerate(points)}
        rows = []
        for p in points:
            b = 0
            for q in min_open_map[p]:
                if q not in idx:
                    raise UnknownPoint(q)
                b |= 1 << idx[q]
            if not b >> idx[p] & 1:
                raise SpaceError(f"minimal open of {p!r} must contain {p!r}")
            rows.append(b)
        for i, b in enumerate(rows):
            for j in bits_iter(b):
                if rows[j] & ~b:
                    raise SpaceError(
                        f"minimal opens not transitive: minOpen({points[j]!r}) "
                        f"is not contained in minOpen({points[i]!r})"
                    )
        return cls(points, tuple(rows))

    # -- indexing helpers -------------------------------------------------

    @property
    def npoints(self) -> int:
        return len(self.points)

    @property
    def full_bits(self) -> int:
        return (1 << len(self.points)) - 1

    @cached_property
    def _index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.points)}

    def index(self, point: str) -> int:
        try:
            return self._index[point]
        except KeyError:
            raise UnknownPoint(point) from None

    def bits_of(self, names: Iterable[str]) -> int:
        b = 0
        for name in names:
            b |= 1 << self.index(name)
        return b

    def names_of(self, bits: int) -> tuple[str, ...]:
        return tuple(self.points[i] for i in bits_iter(bits))

    # -- topology ----------------------------------------------------------

    def min_open(self, point: str) -> frozenset[str]:
        """Smallest open containing ``point``."""
        return frozenset(self.names_of(self.min_bits[self.index(point)]))

    def is_open_bits(self, bits: int) -> bool:
        return all(self.min_bits[i] | bits == bits for i in bits_iter(bits))

    def interior_bits(self, bits: int) -> int:
        out = 0
        for i in bits_iter(bits):
            if self.min_bits[i] | bits == bits:
                out |= 1 << i
        return out

    @cached_property
    def opens(self) -> tuple[int, ...]:
        """All opens as sorted bitmasks (the up-sets of specialization)."""
        seen = {0}
        frontier = [0]
        while frontier:
            o = frontier.pop()
            for mb in self.min_bits:
                u = o | mb
                if u not in seen:
                    if len(seen) >= MAX_OPENS:
                        raise SpaceError(
                            f"open family larger than {MAX_OPENS}; "
                            "this operation needs a desk-scale space"
                        )
                    seen.add(u)
                    frontier.append(u)
        return tuple(sorted(seen))

    def specialization(self) -> frozenset[tuple[str, str]]:
        """Pairs (x, y) with y in minOpen(x); a reflexive transitive relation."""
        pairs = []
        for i, b in enumerate(self.min_bits):
            for j in bits_iter(b):
                pairs.append((self.points[i], self.points[j]))
        return frozenset(pairs)


def validate_space(points: Iterable[str], opens: Iterable[Iterable[str]]) -> FinSpace:
    """Check an explicit open family and return the space it describes.

    Raises MissingEmptyOrTotal / NotClosedUnderUnion /
    NotClosedUnderIntersection; the closure errors name a witness pair.
    """
    pts = tuple(sorted(points))
    if len(pts) != len(set(pts)):
        raise SpaceError("duplicate point identifiers")
    idx = {p: i for i, p in enumerate(pts)}
    family = []
    for o in opens:
        names = tuple(o)
        b = 0
        for q in names:
            if q not in idx:
                raise UnknownPoint(q)
            b |= 1 << idx[q]
        family.append((b, names))
    fam_bits = {b for b, _ in family}
    full = (1 << len(pts)) - 1
    if 0 not in fam_bits:
        raise MissingEmptyOrTotal("empty")
    if full not in fam_bits:
        raise MissingEmptyOrTotal("total")
    uniq = sorted(fam_bits)
    for a, b in itertools.combinations(uniq, 2):
        if a | b not in fam_bits:
            raise NotClosedUnderUnion(
                [pts[i] for i in bits_iter(a)], [pts[i] for i in bits_iter(b)]
            )
        if a & b not in fam_bits:
            raise NotClosedUnderIntersection(
                [pts[i] for i in bits_iter(a)], [pts[i] for i in bits_iter(b)]
            )
    rows = []
    for i in range(len(pts)):
        m = full
        for b in uniq:
            if b >> i & 1:
                m &= b
        rows.append(m)
    return FinSpace(pts, tuple(rows))


def is_closed(space: FinSpace, subset: Iterable[str]) -> bool:
    """True iff the complement of ``subset`` is open."""
    bits = space.bits_of(subset)
    comp = space.full_bits & ~bits
    return space.is_open_bits(comp)


def open_cover_check(space: FinSpace, family: Iterable[Iterable[str]]) -> bool:
    """True iff every member is open and the union is the whole space."""
    union = 0
    for member in family:
        b = space.bits_of(member)
        if not space.is_open_bits(b):
            return False
        union |= b
    return union == space.full_bits


# -- continuous maps ------------------------------------------------------


@dataclass(frozen=True)
class CtsMap:
    source: FinSpace
    target: FinSpace
    mapping: tuple[int, ...]  # source index -> target index

    def apply(self, point: str) -> str:
        return self.target.points[self.mapping[self.source.index(point)]]

    def as_dict(self) -> dict[str, str]:
        return {
            p: self.target.points[self.mapping[i]]
            for i, p in enumerate(self.source.points)
        }

    def image_bits(self, bits: int) -> int:
        out = 0
        for i in bits_iter(bits):
            out |= 1 << self.mapping[i]
        return out

    def preimage_bits(self, bits: int) -> int:
        out = 0
        for i, j in enumerate(self.mapping):
            if bits >> j & 1:
                out |= 1 << i
        return out

    def is_bijective(self) -> bool:
        return (
            self.source.npoints == self.target.npoints
            and len(set(self.mapping)) == self.source.npoints
        )


def continuity_ok(source: FinSpace, target: FinSpace, mapping: tuple[int, ...]) -> bool:
    """Specialization-preserving check: f(minOpen(x)) inside minOpen(f(x))."""
    for i, j in enumerate(mapping):
        tgt_min = target.min_bits[j]
        for k in bits_iter(source.min_bits[i]):
            if not tgt_min >> mapping[k] & 1:
                return False
    return True


def cts_map(source: FinSpace, target: FinSpace, assignment: Mapping[str, str]) -> CtsMap:
    """Build a continuous map from a total point assignment."""
    mapping = []
    for p in source.points:
        if p not in assignment:
            raise UnknownPoint(p)
        mapping.append(target.index(assignment[p]))
    mapping = tuple(mapping)
    for i, j in enumerate(mapping):
        tgt_min = target.min_bits[j]
        for k in bits_iter(source.min_bits[i]):
            if not tgt_min >> mapping[k] & 1:
                raise NotContinuous(
                    source.points[i],
                    f": image of minOpen({source.points[i]!r}) leaves "
                    f"minOpen({target.points[j]!r})",
                )
    return CtsMap(source, target, mapping)


def preimage_continuity_check(f: CtsMap) -> bool:
    """Literal definition: the preimage of every open is open."""
    return all(f.source.is_open_bits(f.preimage_bits(o)) for o in f.target.opens)


def identity_map(space: FinSpace) -> CtsMap:
    return CtsMap(space, space, tuple(range(space.npoints)))


def compose_maps(g: CtsMap, f: CtsMap) -> CtsMap:
    if f.target != g.source:
        raise SpaceError("composition mismatch")
    return CtsMap(f.source, g.target, tuple(g.mapping[j] for j in f.mapping))


# -- subspaces and products ------------------------------------------------


def subspace(parent: FinSpace, carrier: Iterable[str]) -> tuple[FinSpace, CtsMap]:
    """Subspace on ``carrier`` with its inclusion map into ``parent``."""
    carrier_bits = parent.bits_of(carrier)
    pts = parent.names_of(carrier_bits)
    sub_index = {p: i for i, p in enumerate(pts)}
    rows = []
    for p in pts:
        m = parent.min_bits[parent.index(p)] & carrier_bits
        b = 0
        for j in bits_iter(m):
            b |= 1 << sub_index[parent.points[j]]
        rows.append(b)
    sub = FinSpace(pts, tuple(rows))
    incl = CtsMap(sub, parent, tuple(parent.index(p) for p in pts))
    return sub, incl


def product_name(p: str, q: str) -> str:
    return f"({p},{q})"


def product_space(x: FinSpace, y: FinSpace) -> FinSpace:
    """Product topology; minOpen((p,q)) = minOpen(p) x minOpen(q)."""
    table = {}
    for p in x.points:
        pm = x.min_open(p)
        for q in y.points:
            qm = y.min_open(q)
            table[product_name(p, q)] = [
                product_name(a, b) for a in pm for b in qm
            ]
    return FinSpace.from_min_opens(table)


def product_projections(x: FinSpace, y: FinSpace, prod: FinSpace) -> tuple[CtsMap, CtsMap]:
    split = {name: _split_product_name(name) for name in prod.points}
    p1 = cts_map(prod, x, {n: split[n][0] for n in prod.points})
    p2 = cts_map(prod, y, {n: split[n][1] for n in prod.points})
    return p1, p2


def pair_into_product(f: CtsMap, g: CtsMap, prod: FinSpace) -> CtsMap:
    if f.source != g.source:
        raise SpaceError("pairing needs a common source")
    assignment = {
        p: product_name(f.apply(p), g.apply(p)) for p in f.source.points
    }
    return cts_map(f.source, prod, assignment)


def _split_product_name(name: str) -> tuple[str, str]:
    # names are built by product_name; split at the comma with balanced parens
    body = name[1:-1]
    depth = 0
    for i, ch in enumerate(body):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            return body[:i], body[i + 1:]
    raise SpaceError(f"not a product point name: {name!r}")
