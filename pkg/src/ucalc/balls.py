"""Clopen ball geometry in Z_p^d: balls, regions, partitions, cutoffs.

A ball is center + p^k * O^d with the center reduced mod p^k, so every
ball has exactly one representation.  Two balls are either disjoint or
nested, which keeps all the region algebra exact and finite.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from .padic import PadicVector, fraction_valuation


class EmptyRegion(ValueError):
    """An operation that needs points was handed an empty region."""


class CoverIncomplete(ValueError):
    """Some point of the region lies in no cover member."""


class NotContained(ValueError):
    """Containment precondition K subset of U fails."""


def _coord_int(fr, p, k):
    """Value of an O-integral Fraction mod p**k, as an int in [0, p**k)."""
    if fraction_valuation(fr, p) < 0:
        raise ValueError("point has a coordinate outside O: %r" % (fr,))
    m = p ** k
    num, den = fr.numerator, fr.denominator
    return num * pow(den, -1, m) % m if m > 1 else 0


class Ball:
    """center + p^k O^d with canonical center digits."""

    __slots__ = ("ctx", "k", "ints")

    def __init__(self, center, k):
        if not isinstance(center, PadicVector):
            raise TypeError("center must be a PadicVector")
        ctx = center.ctx
        if not isinstance(k, int) or k < 0:
            raise ValueError("ball level must be a nonnegative int, got %r" % (k,))
        if k > ctx.N:
            raise ValueError(
                "ball level %d exceeds the context precision N=%d" % (k, ctx.N)
            )
        if center.dim < 1:
            raise ValueError("ball needs dimension >= 1")
        ints = []
        for c in center.coords:
            if not c.is_zero and c.v < 0:
                raise ValueError("ball center must lie in O^d")
            ints.append(_coord_int(c.to_fraction(), ctx.p, k))
        self.ctx = ctx
        self.k = k
        self.ints = tuple(ints)

    @classmethod
    def from_ints(cls, ctx, ints, k):
        b = cls.__new__(cls)
        if k > ctx.N:
            raise ValueError(
                "ball level %d exceeds the context precision N=%d" % (k, ctx.N)
            )
        m = ctx.p ** k
        b.ctx = ctx
        b.k = k
        b.ints = tuple(i % m for i in ints)
        return b

    @property
    def d(self):
        return len(self.ints)

    @property
    def center(self):
        return self.ctx.vector(self.ints)

    def contains_ints(self, ints, level):
        """Membership of a point given as ints mod p**level, level >= k."""
        m = self.ctx.p ** self.k
        return all(x % m == c for x, c in zip(ints, self.ints))

    def contains_fractions(self, frs):
        p = self.ctx.p
        for fr in frs:
            if fraction_valuation(fr, p) < 0:
                return False
        pt = tuple(_coord_int(Fraction(fr), p, self.k) for fr in frs)
        return pt == self.ints

    def contains_point(self, x):
        return self.contains_fractions(x.to_fractions())

    def relation(self, other):
        return ball_relation(self, other)

    def parent(self):
        if self.k == 0:
            raise ValueError("the root ball has no parent")
        return Ball.from_ints(self.ctx, self.ints, self.k - 1)

    def children(self):
        p, k = self.ctx.p, self.k
        step = p ** k
        out = []
        for off in itertools.product(range(p), repeat=self.d):
            ints = tuple(c + step * o for c, o in zip(self.ints, off))
            out.append(Ball.from_ints(self.ctx, ints, k + 1))
        return out

    def level_reps(self, m):
        """All points of the ball mod p**m, as int tuples, m >= k."""
        if m < self.k:
            raise ValueError("representative level %d below ball level %d" % (m, self.k))
        p = self.ctx.p
        step = p ** self.k
        span = p ** (m - self.k)
        for off in itertools.product(range(span), repeat=self.d):
            yield tuple(c + step * o for c, o in zip(self.ints, off))

    def to_chart(self, frs):
        """Ambient point -> chart coordinates z with x = c + p^k z."""
        s = Fraction(self.ctx.p) ** self.k
        return tuple((Fraction(fr) - c) / s for fr, c in zip(frs, self.ints))

    def from_chart(self, zs):
        s = Fraction(self.ctx.p) ** self.k
        return tuple(c + s * Fraction(z) for z, c in zip(zs, self.ints))

    def __eq__(self, other):
        if not isinstance(other, Ball):
            return NotImplemented
        return (
            self.ctx.p == other.ctx.p
            and self.k == other.k
            and self.ints == other.ints
        )

    def __hash__(self):
        return hash((self.ctx.p, self.k, self.ints))

    def __repr__(self):
        return "Ball(p=%d, k=%d, center=%s)" % (self.ctx.p, self.k, list(self.ints))


def ball_relation(b1, b2):
    """One of "equal", "disjoint", "B1_contains_B2", "B2_contains_B1"."""
    if b1.ctx.p != b2.ctx.p or b1.d != b2.d:
        raise ValueError("balls live in different spaces")
    if b1.k == b2.k:
        return "equal" if b1.ints == b2.ints else "disjoint"
    if b1.k < b2.k:
        m = b1.ctx.p ** b1.k
        if all(c2 % m == c1 for c1, c2 in zip(b1.ints, b2.ints)):
            return "B1_contains_B2"
        return "disjoint"
    m = b2.ctx.p ** b2.k
    if all(c1 % m == c2 for c1, c2 in zip(b1.ints, b2.ints)):
        return "B2_contains_B1"
    return "disjoint"


class ClopenRegion:
    """Finite disjoint union of balls, canonicalized at construction.

    Canonical form: nested balls absorbed, complete sibling families
    merged into their parent, pieces sorted by (level, center digits).
    """

    __slots__ = ("balls",)

    def __init__(self, balls):
        balls = list(balls)
        if balls:
            p, d = balls[0].ctx.p, balls[0].d
            for b in balls:
                if b.ctx.p != p or b.d != d:
                    raise ValueError("region mixes balls from different spaces")
        kept = []
        for b in sorted(balls, key=lambda b: (b.k, b.ints)):
            if not any(ball_relation(big, b) in ("equal", "B1_contains_B2") for big in kept):
                kept.append(b)
        # merge complete sibling families, finest level first
        while True:
            by_parent = {}
            for b in kept:
                if b.k > 0:
                    by_parent.setdefault((b.k, b.parent().ints), []).append(b)
            full = None
            for (k, pints), sibs in sorted(by_parent.items(), reverse=True):
                if len(sibs) == sibs[0].ctx.p ** sibs[0].d:
                    full = (k, pints, sibs)
                    break
            if full is None:
                break
            k, pints, sibs = full
            kept = [b for b in kept if b not in sibs]
            kept.append(Ball.from_ints(sibs[0].ctx, pints, k - 1))
        self.balls = tuple(sorted(kept, key=lambda b: (b.k, b.ints)))

    @property
    def empty(self):
        return not self.balls

    @property
    def ctx(self):
        if not self.balls:
            raise EmptyRegion("empty region has no context")
        return self.balls[0].ctx

    @property
    def d(self):
        if not self.balls:
            raise EmptyRegion("empty region has no dimension")
        return self.balls[0].d

    def max_level(self):
        return max((b.k for b in self.balls), default=0)

    def contains_fractions(self, frs):
        return any(b.contains_fractions(frs) for b in self.balls)

    def contains_point(self, x):
        return any(b.contains_point(x) for b in self.balls)

    def contains_ball(self, b):
        return any(
            ball_relation(piece, b) in ("equal", "B1_contains_B2")
            for piece in self.balls
        )

    def contains_region(self, other):
        return all(self.contains_ball(b) for b in other.balls)

    def intersect(self, other):
        out = []
        for a in self.balls:
            for b in other.balls:
                rel = ball_relation(a, b)
                if rel in ("equal", "B2_contains_B1"):
                    out.append(a)
                elif rel == "B1_contains_B2":
                    out.append(b)
        return ClopenRegion(out)

    def minus(self, other):
        remaining = list(self.balls)
        for cut in other.balls:
            next_remaining = []
            for b in remaining:
                rel = ball_relation(b, cut)
                if rel == "disjoint":
                    next_remaining.append(b)
                elif rel in ("equal", "B2_contains_B1"):
                    continue
                else:
                    # cut is strictly inside b: split b down to cut's level
                    stack = [b]
                    while stack:
                        x = stack.pop()
                        rel2 = ball_relation(x, cut)
                        if rel2 == "disjoint":
                            next_remaining.append(x)
                        elif rel2 == "B1_contains_B2":
                            stack.extend(x.children())
            remaining = next_remaining
        return ClopenRegion(remaining)

    def union(self, other):
        return ClopenRegion(list(self.balls) + list(other.balls))

    def level_points(self, m):
        """All points of the region mod p**m, canonical order."""
        if m < self.max_level():
            raise ValueError("level %d is coarser than the region's pieces" % m)
        for b in self.balls:
            yield from b.level_reps(m)

    def __eq__(self, other):
        if not isinstance(other, ClopenRegion):
            return NotImplemented
        return self.balls == other.balls

    def __hash__(self):
        return hash(self.balls)

    def __repr__(self):
        return "ClopenRegion(%s)" % (list(self.balls),)


class IndicatorFunction:
    """Characteristic function of a clopen region; locally constant."""

    __slots__ = ("support",)

    def __init__(self, support):
        self.support = support

    def __call__(self, x):
        return 1 if self.support.contains_point(x) else 0

    def at_fractions(self, frs):
        return 1 if self.support.contains_fractions(frs) else 0

    def __repr__(self):
        return "IndicatorFunction(%r)" % (self.support,)


def decompose(region):
    """Canonical minimal ball decomposition of a nonempty region."""
    if region.empty:
        raise EmptyRegion("cannot decompose an empty region")
    return list(region.balls)


def subordinate_partition(region, cover):
    """Partition the region into balls, each tagged with the first cover
    member containing it; raises CoverIncomplete with a witness point."""
    if region.empty:
        raise EmptyRegion("cannot partition an empty region")
    out = []
    remaining = region
    for i, member in enumerate(cover):
        if remaining.empty:
            break
        inter = remaining.intersect(member)
        if inter.empty:
            continue
        out.extend((b, i) for b in inter.balls)
        remaining = remaining.minus(inter)
    if not remaining.empty:
        m = max(
            region.max_level(),
            remaining.max_level(),
            max((c.max_level() for c in cover if not c.empty), default=0),
        )
        witness = next(remaining.level_points(m))
        raise CoverIncomplete(
            "region point %s (mod p^%d) lies in no cover member" % (list(witness), m)
        )
    return out


def partition_of_unity(region, cover):
    """One indicator per cover member; they sum to 1 on the region."""
    parts = subordinate_partition(region, cover)
    buckets = {i: [] for i in range(len(cover))}
    for b, i in parts:
        buckets[i].append(b)
    return [IndicatorFunction(ClopenRegion(buckets[i])) for i in range(len(cover))]


def cutoff(inner, outer):
    """Indicator equal to 1 on `inner`, supported inside `outer`.

    The support is `inner` coarsened greedily: any ball whose parent
    still fits inside `outer` is replaced by that parent, repeatedly.
    """
    if inner.empty:
        raise EmptyRegion("cutoff needs a nonempty inner region")
    if not outer.contains_region(inner):
        raise NotContained("inner region is not contained in the outer one")
    current = inner
    while True:
        grown = []
        for b in current.balls:
            if b.k > 0 and outer.contains_ball(b.parent()):
                grown.append(b.parent())
            else:
                grown.append(b)
        nxt = ClopenRegion(grown)
        if nxt == current:
            break
        current = nxt
    return IndicatorFunction(current)


def verify_partition(region, parts, cover, level):
    """Exhaustively check a tagged partition at the given level.

    Every point of the region mod p**level must lie in exactly one part
    ball, and that ball's tagged cover member must contain it.  Returns
    the number of points checked.
    """
    m = max(level, region.max_level(), max((b.k for b, _ in parts), default=0))
    for b, i in parts:
        if not region.contains_ball(b):
            raise ValueError("part ball %r sticks out of the region" % (b,))
        if not cover[i].contains_ball(b):
            raise ValueError("part ball %r not inside cover member %d" % (b, i))
    count = 0
    for pt in region.level_points(m):
        hits = [j for j, (b, _) in enumerate(parts) if b.contains_ints(pt, m)]
        if len(hits) != 1:
            raise ValueError(
                "point %s (mod p^%d) covered %d times" % (list(pt), m, len(hits))
            )
        count += 1
    return count


def ball_to_json(b):
    from .padic import vector_to_json

    return {"center": vector_to_json(b.center), "k": b.k}


def ball_from_json(obj):
    from .padic import vector_from_json

    if not isinstance(obj, dict) or "center" not in obj or "k" not in obj:
        raise ValueError("ball must be an object with center and k")
    if not isinstance(obj["k"], int):
        raise ValueError("ball level k must be an int")
    return Ball(vector_from_json(obj["center"]), obj["k"])


def region_to_json(r):
    return {"balls": [ball_to_json(b) for b in r.balls]}


def region_from_json(obj):
    if not isinstance(obj, dict) or "balls" not in obj or not isinstance(obj["balls"], list):
        raise ValueError("region must be an object with a balls array")
    return ClopenRegion([ball_from_json(b) for b in obj["balls"]])
