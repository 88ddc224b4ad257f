"""Order atlases, local po-spaces and dimaps on finite spaces.

An equivalence class of order atlases is represented by its canonical germ
family: one partial order per minimal open neighbourhood.  Two atlases are
equivalent exactly when their germ families coincide, and the germ family,
read as an atlas of minimal-open charts, refines every member of its class.
That normal form is what makes every predicate in this module a terminating
enumeration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Optional

from .finspace import (
    CtsMap,
    FinSpace,
    NotContinuous,
    SpaceError,
    UnknownPoint,
    bits_iter,
    compose_maps,
    continuity_ok,
    cts_map,
    identity_map,
    is_closed,
    popcount,
    product_name,
    product_space,
    subspace,
)

Relation = frozenset  # of (i, j) index pairs, always reflexive on its carrier


class AtlasError(ValueError):
    """Invalid chart or atlas data."""


class DifferentSpace(AtlasError):
    pass


class NotDimap(ValueError):
    """A point map that fails the chart-monotonicity condition."""


# -- relations ---------------------------------------------------------------


def closure_pairs(pairs: Iterable[tuple[int, int]], carrier: Iterable[int]) -> frozenset:
    """Reflexive-transitive closure of ``pairs`` over ``carrier``."""
    rel = {(i, i) for i in carrier}
    rel.update(pairs)
    changed = True
    while changed:
        changed = False
        for (a, b), (c, d) in itertools.product(tuple(rel), tuple(rel)):
            if b == c and (a, d) not in rel:
                rel.add((a, d))
                changed = True
    return frozenset(rel)


def is_partial_order(rel: frozenset, carrier_bits: int) -> bool:
    members = set(bits_iter(carrier_bits))
    for i, j in rel:
        if i not in members or j not in members:
            return False
        if i != j and (j, i) in rel:
            return False
    for i in members:
        if (i, i) not in rel:
            return False
    for (a, b), (c, d) in itertools.product(rel, rel):
        if b == c and (a, d) not in rel:
            return False
    return True


def restrict_relation(rel: frozenset, bits: int) -> frozenset:
    return frozenset((i, j) for i, j in rel if bits >> i & 1 and bits >> j & 1)


# -- charts and atlases -------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    """An open carrier (bitmask) with a partial order on it."""

    carrier: int
    order: Relation

    def sort_key(self):
        return (self.carrier, tuple(sorted(self.order)))


@dataclass(frozen=True)
class OrderAtlas:
    space: FinSpace
    charts: tuple[Chart, ...]


def order_atlas(space: FinSpace, charts: Iterable[Chart]) -> OrderAtlas:
    """Validate cover, chart orders and pairwise compatibility."""
    uniq = sorted(set(charts), key=Chart.sort_key)
    union = 0
    for ch in uniq:
        if not space.is_open_bits(ch.carrier):
            raise AtlasError(
                f"chart carrier {list(space.names_of(ch.carrier))} is not open"
            )
        if not is_partial_order(ch.order, ch.carrier):
            raise AtlasError(
                f"chart order on {list(space.names_of(ch.carrier))} "
                "is not a partial order"
            )
        union |= ch.carrier
    if union != space.full_bits:
        raise AtlasError("chart carriers do not cover the space")
    for a, b in itertools.combinations(uniq, 2):
        ov = a.carrier & b.carrier
        if restrict_relation(a.order, ov) != restrict_relation(b.order, ov):
            raise AtlasError(
                f"chart orders disagree on "
                f"{list(space.names_of(ov))}"
            )
    return OrderAtlas(space, tuple(uniq))


def chart_from_names(
    space: FinSpace,
    carrier: Iterable[str],
    pairs: Iterable[tuple[str, str]],
    close: bool = True,
) -> Chart:
    bits = space.bits_of(carrier)
    idx_pairs = [(space.index(a), space.index(b)) for a, b in pairs]
    if close:
        rel = closure_pairs(idx_pairs, bits_iter(bits))
    else:
        rel = frozenset(idx_pairs) | frozenset((i, i) for i in bits_iter(bits))
    return Chart(bits, rel)


# -- germ families and local po-spaces ---------------------------------------


@dataclass(frozen=True)
class GermFamily:
    """Canonical form of an atlas class: one order per minimal open."""

    space: FinSpace
    germs: tuple[Relation, ...]  # indexed like space.points; carrier = min_bits[i]

    def germ_chart(self, i: int) -> Chart:
        return Chart(self.space.min_bits[i], self.germs[i])

    def as_atlas(self) -> OrderAtlas:
        return order_atlas(
            self.space, [self.germ_chart(i) for i in range(self.space.npoints)]
        )


def germ_family(space: FinSpace, germs: Iterable[Relation]) -> GermFamily:
    germs = tuple(germs)
    if len(germs) != space.npoints:
        raise AtlasError("one germ per point required")
    for i, rel in enumerate(germs):
        if not is_partial_order(rel, space.min_bits[i]):
            raise AtlasError(
                f"germ at {space.points[i]!r} is not a partial order on its "
                "minimal open"
            )
    for i, j in itertools.combinations(range(space.npoints), 2):
        ov = space.min_bits[i] & space.min_bits[j]
        if restrict_relation(germs[i], ov) != restrict_relation(germs[j], ov):
            raise AtlasError(
                f"germs at {space.points[i]!r} and {space.points[j]!r} disagree "
                f"on {list(space.names_of(ov))}"
            )
    return GermFamily(space, germs)


@dataclass(frozen=True)
class LocalPoSpace:
    space: FinSpace
    germs: tuple[Relation, ...]

    @property
    def points(self) -> tuple[str, ...]:
        return self.space.points

    def germ_family(self) -> GermFamily:
        return GermFamily(self.space, self.germs)

    def germ_at(self, point: str) -> frozenset[tuple[str, str]]:
        i = self.space.index(point)
        return frozenset(
            (self.space.points[a], self.space.points[b]) for a, b in self.germs[i]
        )


def make_lps(
    space: FinSpace,
    germ_pairs: Mapping[str, Iterable[tuple[str, str]]] | None = None,
) -> LocalPoSpace:
    """Local po-space from generating germ pairs (closed and validated)."""
    germs = []
    for i, p in enumerate(space.points):
        pairs = [] if germ_pairs is None else list(germ_pairs.get(p, ()))
        idx_pairs = [(space.index(a), space.index(b)) for a, b in pairs]
        carrier = space.min_bits[i]
        for a, b in idx_pairs:
            if not (carrier >> a & 1 and carrier >> b & 1):
                raise AtlasError(
                    f"germ pair ({space.points[a]!r}, {space.points[b]!r}) leaves "
                    f"minOpen({p!r})"
                )
        germs.append(closure_pairs(idx_pairs, bits_iter(carrier)))
    fam = germ_family(space, germs)
    return LocalPoSpace(space, fam.germs)


def free_lps(space: FinSpace) -> LocalPoSpace:
    """Equality germs: the free local po-space on a space."""
    return LocalPoSpace(
        space,
        tuple(
            frozenset((i, i) for i in bits_iter(b)) for b in space.min_bits
        ),
    )


def forget(m: LocalPoSpace) -> FinSpace:
    return m.space


def lps_from_atlas(atlas: OrderAtlas) -> LocalPoSpace:
    fam = canonicalize(atlas)
    return LocalPoSpace(fam.space, fam.germs)


# -- po-space verdicts --------------------------------------------------------


def is_pospace_order(space: FinSpace, pairs: Iterable[tuple[str, str]]) -> str:
    """Classify a global relation: 'invalid', 'strict' or 'relaxed'.

    'strict' means the order is a partial order whose graph is closed in the
    self-product topology; 'relaxed' means a partial order that is not.
    """
    idx_pairs = {(space.index(a), space.index(b)) for a, b in pairs}
    rel = idx_pairs | {(i, i) for i in range(space.npoints)}
    if not is_partial_order(frozenset(rel), space.full_bits):
        return "invalid"
    prod = product_space(space, space)
    graph = [
        product_name(space.points[i], space.points[j]) for i, j in rel
    ]
    return "strict" if is_closed(prod, graph) else "relaxed"


# -- canonicalization and equivalence ----------------------------------------


def canonicalize(atlas: OrderAtlas) -> GermFamily:
    """Germ family of an atlas: restrict any chart containing x to minOpen(x)."""
    space = atlas.space
    germs = []
    for i in range(space.npoints):
        mbits = space.min_bits[i]
        chart = next(ch for ch in atlas.charts if ch.carrier >> i & 1)
        germs.append(restrict_relation(chart.order, mbits))
    return germ_family(space, germs)


def atlases_equivalent(a: OrderAtlas, b: OrderAtlas) -> bool:
    if a.space != b.space:
        raise DifferentSpace("atlases live on different spaces")
    return canonicalize(a) == canonicalize(b)


def refines(fine: OrderAtlas, coarse: OrderAtlas) -> bool:
    """For every coarse chart and point, some fine chart sits inside it with
    the same order."""
    for ch in coarse.charts:
        for x in bits_iter(ch.carrier):
            if not any(
                sub.carrier >> x & 1
                and sub.carrier | ch.carrier == ch.carrier
                and restrict_relation(ch.order, sub.carrier) == sub.order
                for sub in fine.charts
            ):
                return False
    return True


def common_refinement(a: OrderAtlas, b: OrderAtlas) -> Optional[OrderAtlas]:
    """Intersection atlas when the two classes agree, else None.

    Carrier intersections keep the shared order where the chart orders agree;
    where they disagree the intersection is refined into minimal-open germ
    charts instead.
    """
    if a.space != b.space:
        raise DifferentSpace("atlases live on different spaces")
    if canonicalize(a) != canonicalize(b):
        return None
    germs = canonicalize(a)
    space = a.space
    charts: list[Chart] = []
    for ca, cb in itertools.product(a.charts, b.charts):
        ov = ca.carrier & cb.carrier
        if not ov:
            continue
        ra = restrict_relation(ca.order, ov)
        rb = restrict_relation(cb.order, ov)
        if ra == rb:
            charts.append(Chart(ov, ra))
        else:
            for x in bits_iter(ov):
                charts.append(germs.germ_chart(x))
    return order_atlas(space, charts)


def common_refinement_search(a: OrderAtlas, b: OrderAtlas) -> Optional[OrderAtlas]:
    """Brute-force decision: collect every open that carries the same order
    inside a chart of each atlas, and test whether those candidate charts
    assemble into a common refinement in the literal for-all/exists sense."""
    if a.space != b.space:
        raise DifferentSpace("atlases live on different spaces")
    space = a.space
    candidates: set[Chart] = set()
    for o in space.opens:
        for ca, cb in itertools.product(a.charts, b.charts):
            if o & ~ca.carrier or o & ~cb.carrier:
                continue
            ra = restrict_relation(ca.order, o)
            if ra == restrict_relation(cb.order, o):
                candidates.add(Chart(o, ra))
    union = 0
    for ch in candidates:
        union |= ch.carrier
    if union != space.full_bits:
        return None
    try:
        t = order_atlas(space, candidates)
    except AtlasError:
        return None
    if refines(t, a) and refines(t, b):
        return t
    return None


# -- subspace structure -------------------------------------------------------


def inherited_structure(m: LocalPoSpace, carrier: Iterable[str]) -> LocalPoSpace:
    """Subspace with germs restricted to the inherited minimal opens."""
    sub, incl = subspace(m.space, carrier)
    germs = []
    for i, p in enumerate(sub.points):
        parent_idx = m.space.index(p)
        sub_min = sub.min_bits[i]
        rel = set()
        for j, k in m.germs[parent_idx]:
            pj, pk = m.space.points[j], m.space.points[k]
            if pj in sub._index and pk in sub._index:
                jj, kk = sub.index(pj), sub.index(pk)
                if sub_min >> jj & 1 and sub_min >> kk & 1:
                    rel.add((jj, kk))
        germs.append(frozenset(rel))
    fam = germ_family(sub, germs)
    return LocalPoSpace(sub, fam.germs)


def inclusion_dimap(m: LocalPoSpace, carrier: Iterable[str]) -> "Dimap":
    sub = inherited_structure(m, carrier)
    return dimap(sub, m, {p: p for p in sub.points})


# -- dimaps -------------------------------------------------------------------


@dataclass(frozen=True)
class Dimap:
    source: LocalPoSpace
    target: LocalPoSpace
    mapping: tuple[int, ...]

    def apply(self, point: str) -> str:
        return self.target.space.points[self.mapping[self.source.space.index(point)]]

    def as_dict(self) -> dict[str, str]:
        return {
            p: self.target.space.points[self.mapping[i]]
            for i, p in enumerate(self.source.space.points)
        }

    def as_cts(self) -> CtsMap:
        return CtsMap(self.source.space, self.target.space, self.mapping)


def check_dimap(f: CtsMap | Dimap, m: LocalPoSpace, n: LocalPoSpace) -> bool:
    """Germ-level monotonicity: around every point z, pairs ordered by the
    germ at z map to pairs ordered by the germ at f(z)."""
    mapping = f.mapping
    for z in range(m.space.npoints):
        w = mapping[z]
        pre = 0
        for i, j in enumerate(mapping):
            if n.space.min_bits[w] >> j & 1:
                pre |= 1 << i
        window = m.space.min_bits[z] & pre
        tgt_germ = n.germs[w]
        for x, y in m.germs[z]:
            if window >> x & 1 and window >> y & 1:
                if (mapping[x], mapping[y]) not in tgt_germ:
                    return False
    return True


def chart_condition(
    mapping: tuple[int, ...], src_chart: Chart, tgt_chart: Chart
) -> bool:
    """The single-chart monotonicity clause for a point map."""
    window = [
        i
        for i in bits_iter(src_chart.carrier)
        if tgt_chart.carrier >> mapping[i] & 1
    ]
    for x, y in itertools.product(window, window):
        if (x, y) in src_chart.order and (mapping[x], mapping[y]) not in tgt_chart.order:
            return False
    return True


def dimap(
    m: LocalPoSpace, n: LocalPoSpace, assignment: Mapping[str, str]
) -> Dimap:
    """Validated dimap constructor; raises NotContinuous or NotDimap."""
    c = cts_map(m.space, n.space, assignment)
    d = Dimap(m, n, c.mapping)
    if not check_dimap(d, m, n):
        raise NotDimap("point map violates germ monotonicity")
    return d


def identity_dimap(m: LocalPoSpace) -> Dimap:
    return Dimap(m, m, tuple(range(m.space.npoints)))


def compose_dimaps(g: Dimap, f: Dimap) -> Dimap:
    if f.target != g.source:
        raise SpaceError("composition mismatch")
    return Dimap(f.source, g.target, tuple(g.mapping[j] for j in f.mapping))


def is_iso(f: Dimap) -> bool:
    cts = f.as_cts()
    if not cts.is_bijective():
        return False
    inv = tuple(
        f.mapping.index(j) for j in range(f.target.space.npoints)
    )
    if not continuity_ok(f.target.space, f.source.space, inv):
        return False
    return check_dimap(CtsMap(f.target.space, f.source.space, inv), f.target, f.source)


def inverse_dimap(f: Dimap) -> Dimap:
    if not is_iso(f):
        raise NotDimap("not an isomorphism")
    inv = tuple(f.mapping.index(j) for j in range(f.target.space.npoints))
    return Dimap(f.target, f.source, inv)


# -- the exhaustive oracle ----------------------------------------------------


@lru_cache(maxsize=None)
def realizable_charts(m: LocalPoSpace) -> tuple[Chart, ...]:
    """Every chart that occurs in some atlas of m's equivalence class.

    A chart qualifies iff its order restricts to the germ on each minimal
    open inside the carrier and agrees with every germ on the carrier's
    overlap with that germ's minimal open.
    """
    out = []
    for o in m.space.opens:
        out.extend(Chart(o, rel) for rel in _realizable_orders(m, o))
    return tuple(sorted(out, key=Chart.sort_key))


def _realizable_orders(m: LocalPoSpace, carrier: int) -> list[frozenset]:
    space = m.space
    members = list(bits_iter(carrier))
    forced: set[tuple[int, int]] = {(i, i) for i in members}
    determined: set[tuple[int, int]] = set(forced)
    for z in range(space.npoints):
        ov = space.min_bits[z] & carrier
        ov_members = list(bits_iter(ov))
        for i, j in itertools.product(ov_members, ov_members):
            determined.add((i, j))
            if (i, j) in m.germs[z]:
                forced.add((i, j))
    base = closure_pairs(forced, members)
    if any((i, j) in base and (j, i) in base and i != j for i, j in base):
        return []
    if any(p in base and p not in forced for p in determined):
        return []
    free = [
        (i, j)
        for i, j in itertools.product(members, members)
        if i != j and (i, j) not in determined
    ]
    results: list[frozenset] = []

    def extend(rel: frozenset, banned: frozenset, k: int):
        if k == len(free):
            results.append(rel)
            return
        pair = free[k]
        if pair in rel:
            extend(rel, banned, k + 1)
            return
        # leave the pair out
        extend(rel, banned | {pair}, k + 1)
        # or put it in, provided the closure stays a partial order and does
        # not create determined-absent or previously excluded pairs
        grown = closure_pairs(rel | {pair}, members)
        ok = True
        for i, j in grown:
            if i != j and (j, i) in grown:
                ok = False
                break
            if (i, j) in banned:
                ok = False
                break
            if (i, j) in determined and (i, j) not in forced:
                ok = False
                break
        if ok:
            extend(grown, banned, k + 1)

    extend(base, frozenset(), 0)
    return results


def check_dimap_oracle(f: CtsMap | Dimap, m: LocalPoSpace, n: LocalPoSpace) -> bool:
    """Direct for-all/exists evaluation of chart monotonicity.

    Quantifies over every realizable chart of the codomain; the minimal-open
    germ atlas is the universal witness on the domain side, since it refines
    every atlas in the class chart-by-chart.
    """
    mapping = f.mapping
    germ_charts = [
        Chart(m.space.min_bits[z], m.germs[z]) for z in range(m.space.npoints)
    ]
    for tgt in realizable_charts(n):
        for src in germ_charts:
            if not chart_condition(mapping, src, tgt):
                return False
    return True


def class_atlases(m: LocalPoSpace, max_charts: int = 14) -> tuple[OrderAtlas, ...]:
    """Every atlas in the class, for spaces tiny enough to enumerate."""
    charts = [ch for ch in realizable_charts(m) if ch.carrier]
    if len(charts) > max_charts:
        raise SpaceError(
            f"{len(charts)} realizable charts; class enumeration is only "
            "for tiny spaces"
        )
    out = []
    for r in range(1, len(charts) + 1):
        for combo in itertools.combinations(charts, r):
            union = 0
            for ch in combo:
                union |= ch.carrier
            if union != m.space.full_bits:
                continue
            ok = True
            for ca, cb in itertools.combinations(combo, 2):
                ov = ca.carrier & cb.carrier
                if restrict_relation(ca.order, ov) != restrict_relation(cb.order, ov):
                    ok = False
                    break
            if ok:
                out.append(OrderAtlas(m.space, tuple(sorted(combo, key=Chart.sort_key))))
    return tuple(out)


def check_dimap_literal(f: CtsMap | Dimap, m: LocalPoSpace, n: LocalPoSpace) -> bool:
    """The quantifier structure evaluated verbatim over whole atlases."""
    mapping = f.mapping
    for v in class_atlases(n):
        if not any(
            all(
                chart_condition(mapping, src, tgt)
                for src in u.charts
                for tgt in v.charts
            )
            for u in class_atlases(m)
        ):
            return False
    return True


# -- hom-set enumeration ------------------------------------------------------


def _assignment_order(space: FinSpace) -> list[int]:
    n = space.npoints
    if n == 0:
        return []
    remaining = set(range(n))
    start = min(remaining, key=lambda i: (popcount(space.min_bits[i]), i))
    order = [start]
    remaining.discard(start)
    while remaining:
        def score(i):
            s = 0
            for j in order:
                if space.min_bits[i] >> j & 1 or space.min_bits[j] >> i & 1:
                    s += 1
            return (-s, i)
        nxt = min(remaining, key=score)
        order.append(nxt)
        remaining.discard(nxt)
    return order


@lru_cache(maxsize=None)
def _germ_triples(m: LocalPoSpace) -> tuple[tuple[int, int, int], ...]:
    out = []
    for z in range(m.space.npoints):
        for x, y in m.germs[z]:
            if x != y:
                out.append((z, x, y))
    return tuple(out)


def enumerate_dimaps(
    m: LocalPoSpace,
    n: LocalPoSpace,
    fixed: tuple[tuple[int, int], ...] = (),
    allowed: tuple[int, ...] | None = None,
) -> tuple[Dimap, ...]:
    """All dimaps m -> n, by backtracking over point assignments.

    ``fixed`` pins (source index, target index) pairs; ``allowed`` optionally
    gives a bitmask of permitted images per source point.  The result is
    sorted by mapping tuple, so it is deterministic.
    """
    key = (m, n, fixed, allowed)
    cached = _dimap_cache.get(key)
    if cached is not None:
        return cached
    src, tgt = m.space, n.space
    nsrc, ntgt = src.npoints, tgt.npoints
    if nsrc == 0:
        result = (Dimap(m, n, ()),)
        _dimap_cache[key] = result
        return result
    pinned: dict[int, int] = {}
    for i, j in fixed:
        if i in pinned and pinned[i] != j:
            _dimap_cache[key] = ()
            return ()
        pinned[i] = j
    order = sorted(_assignment_order(src), key=lambda i: (i not in pinned,))
    order = [i for i in order if i in pinned] + [
        i for i in _assignment_order(src) if i not in pinned
    ]
    triples = _germ_triples(m)
    mapping = [-1] * nsrc
    results: list[Dimap] = []

    def consistent(i: int) -> bool:
        q = mapping[i]
        for j in bits_iter(src.min_bits[i]):
            if mapping[j] >= 0 and not tgt.min_bits[q] >> mapping[j] & 1:
                return False
        for j in range(nsrc):
            if mapping[j] >= 0 and src.min_bits[j] >> i & 1:
                if not tgt.min_bits[mapping[j]] >> q & 1:
                    return False
        for z, x, y in triples:
            if i in (z, x, y) and mapping[z] >= 0 and mapping[x] >= 0 and mapping[y] >= 0:
                if (mapping[x], mapping[y]) not in n.germs[mapping[z]]:
                    return False
        return True

    def rec(k: int):
        if k == len(order):
            results.append(Dimap(m, n, tuple(mapping)))
            return
        i = order[k]
        if i in pinned:
            candidates = [pinned[i]]
        elif allowed is not None:
            candidates = list(bits_iter(allowed[i]))
        else:
            candidates = range(ntgt)
        for q in candidates:
            mapping[i] = q
            if consistent(i):
                rec(k + 1)
            mapping[i] = -1

    rec(0)
    results.sort(key=lambda d: d.mapping)
    result = tuple(results)
    _dimap_cache[key] = result
    return result


_dimap_cache: dict = {}


# -- products and the free/forget adjunction ---------------------------------


def product(m: LocalPoSpace, n: LocalPoSpace) -> LocalPoSpace:
    """Product space with componentwise germ orders."""
    prod = product_space(m.space, n.space)
    germs = []
    for name in prod.points:
        p, q = _split(name)
        ip, iq = m.space.index(p), n.space.index(q)
        rel = set()
        for a, b in m.germs[ip]:
            for c, d in n.germs[iq]:
                rel.add(
                    (
                        prod.index(product_name(m.space.points[a], n.space.points[c])),
                        prod.index(product_name(m.space.points[b], n.space.points[d])),
                    )
                )
        germs.append(frozenset(rel))
    fam = germ_family(prod, tuple(germs))
    return LocalPoSpace(prod, fam.germs)


def _split(name: str) -> tuple[str, str]:
    from .finspace import _split_product_name

    return _split_product_name(name)


def enumerate_cts_maps(x: FinSpace, y: FinSpace) -> tuple[CtsMap, ...]:
    """All continuous maps, for hom-set comparisons with the free structure."""
    out = []
    for image in itertools.product(range(y.npoints), repeat=x.npoints):
        if continuity_ok(x, y, image):
            out.append(CtsMap(x, y, image))
    return tuple(out)
