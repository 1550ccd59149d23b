"""Difference-quotient calculus for piecewise polynomial maps on Z_p^d.

A FunctionModel is a finite family of polynomial pieces over disjoint
balls.  All evaluation runs on exact rationals derived from the stored
digits and truncates once at the output, so every identity that holds
in Q holds bit-exactly at precision N when no coefficient overflows
the digit window.

Difference quotients: dq1 evaluates (f(x+ty) - f(x))/t, with the t = 0
case filled in by formal differentiation of the piece polynomial (its
unique continuous extension).  dqk iterates this through nested points,
and braced_eval evaluates the reordered variant through the recursive
defining permutation of its arguments.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from . import _poly
from .padic import INF, PadicScalar, PadicVector, fraction_valuation
from .balls import Ball, ClopenRegion, ball_relation


class OutOfDomain(ValueError):
    """Evaluation point outside the model's domain (or piece structure)."""


class CompositionUncertified(ValueError):
    """No valid composition certificate could be produced."""


class CertificateInvalid(ValueError):
    """A supplied composition certificate fails its image check."""


class NotProductPartition(ValueError):
    """curry needs a model built with explicit product structure."""


class MembershipFailure(ValueError):
    """A scaling-check argument leaves the higher-order domain."""


class FunctionModel:
    """Piecewise polynomial map from a clopen region of Z_p^d to Q_p^e.

    pieces: list of (Ball, coeffs) with coeffs a dict mapping exponent
    tuples (length d) to PadicVector values (length e).  Ball pieces
    must be pairwise disjoint; the domain is their union.
    """

    __slots__ = ("pieces", "domain", "d", "e", "ctx", "factors", "_frac", "_sym")

    def __init__(self, pieces, e=None, factors=None):
        pieces = [(b, dict(c)) for b, c in pieces]
        if not pieces:
            raise ValueError("a model needs at least one piece")
        ctx = pieces[0][0].ctx
        d = pieces[0][0].d
        for b, _ in pieces:
            if b.ctx.p != ctx.p or b.d != d:
                raise ValueError("pieces live in different spaces")
        for (b1, _), (b2, _) in itertools.combinations(pieces, 2):
            if ball_relation(b1, b2) != "disjoint":
                raise ValueError("piece balls %r and %r overlap" % (b1, b2))
        if e is None:
            for _, coeffs in pieces:
                for vec in coeffs.values():
                    e = vec.dim
                    break
                if e is not None:
                    break
        if e is None:
            raise ValueError("codomain dimension e is required for zero models")
        frac = {}
        for b, coeffs in pieces:
            polys = [dict() for _ in range(e)]
            for exps, vec in coeffs.items():
                if len(exps) != d or any(n < 0 or not isinstance(n, int) for n in exps):
                    raise ValueError("bad exponent tuple %r" % (exps,))
                if vec.dim != e:
                    raise ValueError("coefficient dimension %d, expected %d" % (vec.dim, e))
                if vec.ctx != ctx:
                    raise ValueError("coefficient context differs from ball context")
                for j, c in enumerate(vec.coords):
                    q = c.to_fraction()
                    if q:
                        polys[j][tuple(exps)] = q
            frac[b] = tuple(polys)
        self.pieces = tuple(pieces)
        self.domain = ClopenRegion([b for b, _ in pieces])
        self.d = d
        self.e = e
        self.ctx = ctx
        self.factors = dict(factors) if factors else None
        self._frac = frac
        self._sym = {}

    def piece_balls(self):
        return [b for b, _ in self.pieces]

    def _find_piece(self, frs):
        for b, _ in self.pieces:
            if b.contains_fractions(frs):
                return b
        raise OutOfDomain("point %s outside the model domain" % (list(frs),))

    def _eval_fr(self, frs):
        b = self._find_piece(frs)
        return tuple(_poly.evaluate(P, frs) for P in self._frac[b])

    def _vec(self, frs):
        return self.ctx.vector([self.ctx.from_fraction(q) for q in frs])

    def eval(self, x):
        return self._vec(self._eval_fr(x.to_fractions()))

    def _symbolic(self, ball, j):
        """Polynomials of the order-j quotient of this piece, flat layout."""
        key = (ball, j)
        if key in self._sym:
            return self._sym[key]
        if j == 0:
            polys = self._frac[ball]
        else:
            lower, _ = self._symbolic(ball, j - 1)
            n = _nvars(self.d, j - 1)
            polys = _dq1_symbolic(lower, n)
        grads = tuple(tuple(_poly.diff(P, i) for i in range(_nvars(self.d, j))) for P in polys)
        self._sym[key] = (polys, grads)
        return self._sym[key]

    def __repr__(self):
        return "FunctionModel(p=%d, d=%d, e=%d, pieces=%d)" % (
            self.ctx.p,
            self.d,
            self.e,
            len(self.pieces),
        )


def _nvars(d, j):
    return (2 ** j) * (d + 1) - 1


def _dq1_symbolic(polys, n):
    """One quotient step on a polynomial tuple over n variables.

    New layout: old point block at 0..n-1, direction block at n..2n-1,
    the quotient parameter at slot 2n.
    """
    m = 2 * n + 1
    subs = [
        _poly.add(_poly.var(m, i), _poly.mul(_poly.var(m, m - 1), _poly.var(m, n + i)))
        for i in range(n)
    ]
    out = []
    for P in polys:
        shifted = _poly.subst(P, subs, m)
        base = _poly.rename(P, list(range(n)), m)
        out.append(_poly.div_var(_poly.sub(shifted, base), m - 1))
    return tuple(out)


def evaluate(f, x):
    """Value of the unique piece containing x, truncated once."""
    return f.eval(x)


class DQPoint:
    """Point of an iterated difference-quotient domain: (x, y, t) where
    x and y are vectors (order 1) or DQPoints of equal shape."""

    __slots__ = ("x", "y", "t")

    def __init__(self, x, y, t):
        if type(x) is not type(y):
            raise ValueError("x and y must have the same shape")
        if isinstance(x, DQPoint):
            if x.order != y.order:
                raise ValueError("x and y must have the same order")
        elif not isinstance(x, PadicVector):
            raise TypeError("x must be a PadicVector or DQPoint")
        if not isinstance(t, PadicScalar):
            raise TypeError("t must be a PadicScalar")
        self.x = x
        self.y = y
        self.t = t

    @property
    def order(self):
        return 1 if isinstance(self.x, PadicVector) else self.x.order + 1

    def __repr__(self):
        return "DQPoint(order=%d)" % self.order


def _fr_point(pt):
    if isinstance(pt, PadicVector):
        return ("leaf", pt.to_fractions())
    return ("node", _fr_point(pt.x), _fr_point(pt.y), pt.t.to_fraction())


def _fr_shift(a, b, t):
    """Componentwise a + t*b on point trees."""
    if a[0] == "leaf":
        return ("leaf", tuple(x + t * y for x, y in zip(a[1], b[1])))
    return ("node", _fr_shift(a[1], b[1], t), _fr_shift(a[2], b[2], t), a[3] + t * b[3])


def _fr_leaves(node):
    if node[0] == "leaf":
        yield node[1]
    else:
        yield from _fr_leaves(node[1])
        yield from _fr_leaves(_fr_shift(node[1], node[2], node[3]))


def _fr_flatten(node):
    if node[0] == "leaf":
        return list(node[1])
    return _fr_flatten(node[1]) + _fr_flatten(node[2]) + [node[3]]


def _fr_order(node):
    return 0 if node[0] == "leaf" else 1 + _fr_order(node[1])


def dq_domain_contains(f, pt):
    """Membership of a (possibly nested) point in the quotient domain."""
    node = pt if isinstance(pt, tuple) else _fr_point(pt)
    return all(f.domain.contains_fractions(leaf) for leaf in _fr_leaves(node))


def _common_piece(f, leaves):
    ball = None
    for leaf in leaves:
        if not f.domain.contains_fractions(leaf):
            raise OutOfDomain("point %s outside the model domain" % (list(leaf),))
        b = f._find_piece(leaf)
        if ball is None:
            ball = b
        elif b != ball:
            raise OutOfDomain(
                "zero quotient parameter needs all evaluation points in one piece "
                "ball; found points in %r and %r" % (ball, b)
            )
    return ball


def _dqk_fr(f, node):
    if node[0] == "leaf":
        return f._eval_fr(node[1])
    _, a, b, t = node
    if t != 0:
        va = _dqk_fr(f, a)
        vb = _dqk_fr(f, _fr_shift(a, b, t))
        return tuple((q - r) / t for q, r in zip(vb, va))
    j = _fr_order(a)
    ball = _common_piece(f, _fr_leaves(a))
    polys, grads = f._symbolic(ball, j)
    fx = _fr_flatten(a)
    fy = _fr_flatten(b)
    out = []
    for grad in grads:
        val = Fraction(0)
        for i, yv in enumerate(fy):
            if yv:
                val += _poly.evaluate(grad[i], fx) * yv
        out.append(val)
    return tuple(out)


def dqk(f, pt, k):
    """Order-k difference quotient at a nested point."""
    if pt.order != k:
        raise ValueError("point has order %d, expected %d" % (pt.order, k))
    return f._vec(_dqk_fr(f, _fr_point(pt)))


def dq1(f, pt):
    """First difference quotient; formal derivative at t = 0."""
    return dqk(f, pt, 1)


def directional(f, x, dirs):
    """Iterated formal directional derivative of the piece at x."""
    if not dirs:
        raise ValueError("directional needs at least one direction")
    frs = x.to_fractions()
    ball = f._find_piece(frs)
    cur = f._frac[ball]
    for v in dirs:
        vf = v.to_fractions()
        nxt = []
        for P in cur:
            acc = {}
            for i, c in enumerate(vf):
                if c:
                    acc = _poly.add(acc, _poly.scale(_poly.diff(P, i), c))
            nxt.append(acc)
        cur = tuple(nxt)
    return f._vec(tuple(_poly.evaluate(P, frs) for P in cur))


@dataclass
class CheckReport:
    lhs: object
    rhs: object
    equal: bool
    limit: object = None
    limit_consistent: object = None


def _local_coeffs(polys, ball):
    """Piece polynomials rewritten in chart coordinates z, x = c + p^k z."""
    d = ball.d
    scale = Fraction(ball.ctx.p) ** ball.k
    subs = [
        _poly.add(_poly.const(d, Fraction(c)), _poly.scale(_poly.var(d, i), scale))
        for i, c in enumerate(ball.ints)
    ]
    return tuple(_poly.subst(P, subs, d) for P in polys)


def _image_bound(f, ball):
    """Exact value at the center plus a radius bound: image ⊆ val + p^s O^e."""
    local = _local_coeffs(f._frac[ball], ball)
    zero = (0,) * f.d
    val = tuple(P.get(zero, Fraction(0)) for P in local)
    s = INF
    p = f.ctx.p
    for P in local:
        for e, c in P.items():
            if any(e):
                s = min(s, fraction_valuation(c, p))
    return val, s


def _image_in_ball(f, ball, target):
    """Certify f(ball) ⊆ target; returns (ok, method, witness)."""
    val, s = _image_bound(f, ball)
    if not target.contains_fractions(val):
        return False, "center", tuple(val)
    if s >= target.k:
        return True, "bound", None
    if s < 0:
        return False, "unbounded", None
    # integral chart coefficients make f 1-Lipschitz in the chart variable,
    # which loses ball.k digits in ambient terms: sampling must be fine
    # enough that target membership survives a p^m perturbation
    m = ball.k + target.k
    for ints in ball.level_reps(m):
        frs = tuple(Fraction(i) for i in ints)
        if not target.contains_fractions(f._eval_fr(frs)):
            return False, "exhaustive", ints
    return True, "exhaustive", None


def compose(g, f, certificate):
    """Composite model g∘f on f's partition, after verifying that the
    certificate maps every piece of f into the stated piece of g."""
    if f.e != g.d:
        raise ValueError("codomain of f (%d) does not match domain of g (%d)" % (f.e, g.d))
    g_balls = set(g.piece_balls())
    new_pieces = []
    for ball, _ in f.pieces:
        if ball not in certificate:
            raise CertificateInvalid("no certificate entry for piece %r" % (ball,))
        target = certificate[ball]
        if target not in g_balls:
            raise CertificateInvalid("certificate target %r is not a piece of g" % (target,))
        ok, method, witness = _image_in_ball(f, ball, target)
        if not ok:
            raise CertificateInvalid(
                "piece %r does not map into %r (%s check, witness %r)"
                % (ball, target, method, witness)
            )
        subs = list(f._frac[ball])
        comp = tuple(_poly.subst(Q, subs, f.d) for Q in g._frac[target])
        coeffs = _polys_to_coeffs(comp, f.ctx, g.e)
        new_pieces.append((ball, coeffs))
    return FunctionModel(new_pieces, e=g.e)


def _polys_to_coeffs(polys, ctx, e):
    by_exp = {}
    for j, P in enumerate(polys):
        for exps, c in P.items():
            by_exp.setdefault(exps, [Fraction(0)] * e)[j] = c
    return {
        exps: ctx.vector([ctx.from_fraction(q) for q in vals])
        for exps, vals in by_exp.items()
    }


def find_certificate(g, f):
    """Search a composition certificate, refining f's pieces as needed.

    Returns (f_refined, certificate).  Raises CompositionUncertified when
    some piece cannot be certified even at the finest representable level.
    """
    queue = [(b, c) for b, c in f.pieces]
    done = []
    cert = {}
    while queue:
        ball, coeffs = queue.pop()
        sub = FunctionModel([(ball, coeffs)], e=f.e)
        val, _ = _image_bound(sub, ball)
        target = None
        for gb, _ in g.pieces:
            if gb.contains_fractions(val):
                target = gb
                break
        if target is None:
            raise CompositionUncertified(
                "image point %s of piece %r lies outside the domain of g"
                % (list(val), ball)
            )
        ok, _, _ = _image_in_ball(sub, ball, target)
        if ok:
            done.append((ball, coeffs))
            cert[ball] = target
            continue
        if ball.k >= ball.ctx.N:
            raise CompositionUncertified(
                "piece %r cannot be certified at the finest level" % (ball,)
            )
        for child in ball.children():
            queue.append((child, coeffs))
    refined = FunctionModel(done, e=f.e)
    return refined, cert


def check_chain_rule(f, g, pt):
    """Compare dq1 of a certified composite against the chained quotients.

    Both sides run on exact rationals derived from the stored coefficients,
    truncating only in the report, so the identity is checked bit for bit.
    """
    if pt.order != 1:
        raise ValueError("chain rule check takes an order-1 point")
    refined, cert = find_certificate(g, f)
    h = compose(g, refined, cert)
    tree = _fr_point(pt)
    lhs_fr = _dqk_fr(h, tree)
    fx = refined._eval_fr(list(pt.x.to_fractions()))
    fdq = _dqk_fr(refined, tree)
    rhs_fr = _dqk_fr(g, ("node", ("leaf", fx), ("leaf", fdq), pt.t.to_fraction()))
    return CheckReport(lhs=h._vec(lhs_fr), rhs=g._vec(rhs_fr), equal=lhs_fr == rhs_fr)


class BracedPoint:
    """Argument pack of the reordered order-k quotient: 2^k vectors
    followed by 2^k - 1 scalars, the last scalar being the outer
    quotient parameter."""

    __slots__ = ("xs", "ss")

    def __init__(self, xs, ss):
        xs = tuple(xs)
        ss = tuple(ss)
        n = len(xs)
        if n < 2 or n & (n - 1):
            raise ValueError("need a power of two vectors, got %d" % n)
        if len(ss) != n - 1:
            raise ValueError("need %d scalars for %d vectors, got %d" % (n - 1, n, len(ss)))
        for x in xs:
            if not isinstance(x, PadicVector):
                raise TypeError("vector slots must be PadicVectors")
        for s in ss:
            if not isinstance(s, PadicScalar):
                raise TypeError("scalar slots must be PadicScalars")
        self.xs = xs
        self.ss = ss

    @property
    def k(self):
        return len(self.xs).bit_length() - 1

    def to_dqpoint(self):
        """Nested point whose iterated quotient is the reordered one:
        the first half of the vectors with the first half of the scalars
        forms the base point, the second halves the displacement, and
        the final scalar is the outer parameter."""
        if len(self.xs) == 2:
            return DQPoint(self.xs[0], self.xs[1], self.ss[0])
        h = len(self.xs) // 2
        first = BracedPoint(self.xs[:h], self.ss[: h - 1])
        second = BracedPoint(self.xs[h:], self.ss[h - 1 : 2 * h - 2])
        return DQPoint(first.to_dqpoint(), second.to_dqpoint(), self.ss[2 * h - 2])


def braced_eval(f, pt):
    """Reordered order-k quotient via the defining argument permutation."""
    return dqk(f, pt.to_dqpoint(), pt.k)


def braced_domain_contains(f, pt):
    return dq_domain_contains(f, pt.to_dqpoint())


def scaling_exponents(k):
    """Exponent data (i per vector, j per scalar, l) of the rescaling
    symmetry, generated by the doubling induction from the base case
    i = (0, 1), j = (0), l = 1."""
    if k < 1:
        raise ValueError("order must be >= 1")
    i, j, ell = [0, 1], [0], 1
    for _ in range(k - 1):
        i = [2 * a for a in i] + [2 * a + 1 for a in i]
        j = [2 * b + 1 for b in j] + [2 * b for b in j] + [0]
        ell = 2 * ell + 1
    return i, j, ell


def _braced_tree(xs, ss):
    """Fraction tree of a braced argument pack (tuples of Fractions)."""
    if len(xs) == 2:
        return ("node", ("leaf", tuple(xs[0])), ("leaf", tuple(xs[1])), ss[0])
    h = len(xs) // 2
    return (
        "node",
        _braced_tree(xs[:h], ss[: h - 1]),
        _braced_tree(xs[h:], ss[h - 1 : 2 * h - 2]),
        ss[2 * h - 2],
    )


def check_scaling(f, k, xs, pvec, t):
    """Verify f^{k}(x, t*p) = t^(-l) f^{k}(t^i x, t^-j p) exactly.

    The rescaled argument pack is built on exact rationals (a truncated
    power of t would shift the evaluation points), both packs are
    membership-checked, and the two sides compared as exact rationals.
    """
    if t.is_zero:
        raise ValueError("the scaling factor t must be nonzero")
    i, j, ell = scaling_exponents(k)
    if len(xs) != len(i) or len(pvec) != len(j):
        raise ValueError("expected %d vectors and %d scalars for order %d" % (len(i), len(j), k))
    tf = t.to_fraction()
    xs_fr = [x.to_fractions() for x in xs]
    ss_fr = [s.to_fraction() for s in pvec]
    lhs_tree = _braced_tree(xs_fr, [tf * q for q in ss_fr])
    rhs_tree = _braced_tree(
        [tuple(tf ** a * c for c in x) for x, a in zip(xs_fr, i)],
        [tf ** (-b) * q for q, b in zip(ss_fr, j)],
    )
    if not dq_domain_contains(f, lhs_tree):
        raise MembershipFailure("the unscaled argument pack leaves the order-%d domain" % k)
    if not dq_domain_contains(f, rhs_tree):
        raise MembershipFailure("the rescaled argument pack leaves the order-%d domain" % k)
    lhs_fr = _dqk_fr(f, lhs_tree)
    rhs_raw = _dqk_fr(f, rhs_tree)
    factor = tf ** (-ell)
    rhs_fr = tuple(factor * q for q in rhs_raw)
    return CheckReport(lhs=f._vec(lhs_fr), rhs=f._vec(rhs_fr), equal=lhs_fr == rhs_fr)


def _refine_common(f, g):
    """Restrict two models to the common refinement of their partitions."""
    pieces_f, pieces_g = [], []
    for bf, cf in f.pieces:
        for bg, cg in g.pieces:
            rel = ball_relation(bf, bg)
            if rel == "disjoint":
                continue
            b = bf if rel in ("equal", "B2_contains_B1") else bg
            pieces_f.append((b, cf))
            pieces_g.append((b, cg))
    if not pieces_f:
        raise OutOfDomain("the two models have disjoint domains")
    return FunctionModel(pieces_f, e=f.e), FunctionModel(pieces_g, e=g.e)


def model_add(f, g):
    if f.e != g.e:
        raise ValueError("codomain mismatch")
    rf, rg = _refine_common(f, g)
    pieces = []
    for (b, _), (_, _) in zip(rf.pieces, rg.pieces):
        polys = tuple(
            _poly.add(P, Q) for P, Q in zip(rf._frac[b], rg._frac[b])
        )
        pieces.append((b, _polys_to_coeffs(polys, f.ctx, f.e)))
    return FunctionModel(pieces, e=f.e)


def model_scale(f, s):
    q = s.to_fraction() if isinstance(s, PadicScalar) else Fraction(s)
    pieces = []
    for b, _ in f.pieces:
        polys = tuple(_poly.scale(P, q) for P in f._frac[b])
        pieces.append((b, _polys_to_coeffs(polys, f.ctx, f.e)))
    return FunctionModel(pieces, e=f.e)


def model_sub(f, g):
    return model_add(f, model_scale(g, -1))


def identity_model(region):
    """The identity map of a region, one linear piece per ball."""
    ctx = region.ctx
    d = region.d
    pieces = []
    for b in region.balls:
        coeffs = {}
        for i in range(d):
            exps = tuple(1 if j == i else 0 for j in range(d))
            coeffs[exps] = ctx.vector([1 if j == i else 0 for j in range(d)])
        pieces.append((b, coeffs))
    return FunctionModel(pieces, e=d)


def constant_model(region, value):
    pieces = [(b, {(0,) * region.d: value}) for b in region.balls]
    return FunctionModel(pieces, e=value.dim)


def zero_model(region, e):
    pieces = [(b, {}) for b in region.balls]
    return FunctionModel(pieces, e=e)


def check_eval_derivative(gamma, eta, x, y, t):
    """Difference quotient of the evaluation map (gamma, x) -> gamma(x)
    in both arguments against its closed form."""
    if t.is_zero:
        raise ValueError("t must be nonzero here")
    moved = model_add(gamma, model_scale(eta, t))
    xf = x.to_fractions()
    tf = t.to_fraction()
    shifted = tuple(a + tf * b for a, b in zip(xf, y.to_fractions()))
    lhs_fr = tuple(
        (u - v) / tf for u, v in zip(moved._eval_fr(shifted), gamma._eval_fr(xf))
    )
    dq = _dqk_fr(gamma, _fr_point(DQPoint(x, y, t)))
    eta_val = eta._eval_fr(shifted)
    rhs_fr = tuple(a + b for a, b in zip(dq, eta_val))
    return CheckReport(
        lhs=gamma._vec(lhs_fr), rhs=gamma._vec(rhs_fr), equal=lhs_fr == rhs_fr
    )


def check_composition_derivative(gamma, eta, gamma1, eta1, t, x):
    """Difference quotient of (gamma, eta) -> gamma∘eta at a sample point,
    against the closed form; the t = 0 limit form is checked against
    directional() as an independent route."""
    if t.is_zero:
        raise ValueError("t must be nonzero here")
    tf = t.to_fraction()
    xf = x.to_fractions()
    eta_x = eta._eval_fr(xf)
    eta1_x = eta1._eval_fr(xf)
    moved_eta = tuple(a + tf * b for a, b in zip(eta_x, eta1_x))
    moved_gamma = model_add(gamma, model_scale(gamma1, t))
    lhs_fr = tuple(
        (u - v) / tf
        for u, v in zip(moved_gamma._eval_fr(moved_eta), gamma._eval_fr(eta_x))
    )
    ex = gamma._vec(eta_x)
    e1x = gamma._vec(eta1_x)
    dq = _dqk_fr(gamma, _fr_point(DQPoint(ex, e1x, t)))
    rhs_fr = tuple(a + b for a, b in zip(dq, gamma1._eval_fr(moved_eta)))
    # limit form: formal derivative route vs directional(), both exact
    dq0 = _dqk_fr(gamma, _fr_point(DQPoint(ex, e1x, gamma.ctx.zero())))
    limit_fr = tuple(a + b for a, b in zip(dq0, gamma1._eval_fr(eta_x)))
    dir_route = directional(gamma, ex, [e1x])
    g1_route = gamma._vec(gamma1._eval_fr(eta_x))
    limit_vec = gamma._vec(limit_fr)
    limit_ok = limit_vec == dir_route + g1_route
    return CheckReport(
        lhs=gamma._vec(lhs_fr),
        rhs=gamma._vec(rhs_fr),
        equal=lhs_fr == rhs_fr,
        limit=limit_vec,
        limit_consistent=limit_ok,
    )


def product_model(pairs, e):
    """Model on a product domain U x V from (ball_u, ball_v, coeffs)
    triples; factor balls are refined to a common level so every piece
    is a genuine ball of the product space."""
    pieces = []
    factors = {}
    for bu, bv, coeffs in pairs:
        ctx = bu.ctx
        k = max(bu.k, bv.k)
        for su in _subdivide(bu, k):
            for sv in _subdivide(bv, k):
                ints = su.ints + sv.ints
                piece = Ball.from_ints(ctx, ints, k)
                pieces.append((piece, coeffs))
                factors[piece] = (su, sv)
    return FunctionModel(pieces, e=e, factors=factors)


def _subdivide(ball, k):
    if k == ball.k:
        return [ball]
    out = [ball]
    while out[0].k < k:
        out = [c for b in out for c in b.children()]
    return out


def curry(f, x):
    """Freeze the U-argument of a product model, yielding a model on V."""
    if f.factors is None:
        raise NotProductPartition("model was not built with product structure")
    xf = x.to_fractions()
    chosen = []
    for b, _ in f.pieces:
        bu, bv = f.factors[b]
        if bu.contains_fractions(xf):
            chosen.append((b, bu, bv))
    if not chosen:
        raise OutOfDomain("x lies outside the U factor of the product domain")
    d1 = chosen[0][1].d
    d2 = f.d - d1
    pieces = []
    for b, bu, bv in chosen:
        subs = [_poly.const(d2, q) for q in xf] + [_poly.var(d2, i) for i in range(d2)]
        polys = tuple(_poly.subst(P, subs, d2) for P in f._frac[b])
        pieces.append((bv, _polys_to_coeffs(polys, f.ctx, f.e)))
    return FunctionModel(pieces, e=f.e)


def model_to_json(f):
    from .balls import ball_to_json, region_to_json
    from .padic import vector_to_json

    pieces = []
    for b, coeffs in f.pieces:
        poly = [
            {"exps": list(exps), "coef": vector_to_json(vec)}
            for exps, vec in sorted(coeffs.items())
        ]
        pieces.append({"ball": ball_to_json(b), "poly": poly})
    out = {"domain": region_to_json(f.domain), "codim": f.e, "pieces": pieces}
    if f.factors is not None:
        out["product"] = [
            {
                "ball": ball_to_json(b),
                "u": ball_to_json(bu),
                "v": ball_to_json(bv),
            }
            for b, (bu, bv) in sorted(
                f.factors.items(), key=lambda kv: (kv[0].k, kv[0].ints)
            )
        ]
    return out


def model_from_json(obj):
    from .balls import ball_from_json, region_from_json
    from .padic import vector_from_json

    if not isinstance(obj, dict) or "pieces" not in obj or "codim" not in obj:
        raise ValueError("model must be an object with codim and pieces")
    e = obj["codim"]
    if not isinstance(e, int) or e < 1:
        raise ValueError("codim must be a positive int")
    pieces = []
    for entry in obj["pieces"]:
        ball = ball_from_json(entry["ball"])
        coeffs = {}
        for mono in entry.get("poly", []):
            exps = tuple(mono["exps"])
            coeffs[exps] = vector_from_json(mono["coef"])
        pieces.append((ball, coeffs))
    factors = None
    if "product" in obj:
        factors = {}
        for entry in obj["product"]:
            factors[ball_from_json(entry["ball"])] = (
                ball_from_json(entry["u"]),
                ball_from_json(entry["v"]),
            )
    model = FunctionModel(pieces, e=e, factors=factors)
    if "domain" in obj:
        declared = region_from_json(obj["domain"])
        if declared != model.domain:
            raise ValueError("declared domain disagrees with the piece balls")
    return model
