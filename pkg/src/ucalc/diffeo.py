"""Certified diffeomorphisms of the unit ball and compactly supported maps.

A BallEndo is a piecewise polynomial self-map of O^d with a verified range
certificate.  An Omega certificate additionally bounds the displacement
gamma - id: all its values and all its first difference quotients stay
inside the open half-radius ball.  That bound makes gamma an isometric
bijection, so inverses come from plain fixed-point iteration and every
sub-ball pulls back to a ball of the same level.

Certification is sound but not complete: a cheap per-coefficient bound is
tried first, then exhaustive evaluation at a stated level, and failures
carry witnesses instead of guesses.  Maps supported on finitely many balls
inside a larger clopen region are handled by rescaling each supported ball
onto the unit ball and certifying the chart copy.
"""

from dataclasses import dataclass
from fractions import Fraction

from . import _poly
from .balls import Ball, ClopenRegion, ball_relation
from .calculus import (
    CertificateInvalid,
    CompositionUncertified,
    FunctionModel,
    _dqk_fr,
    _image_bound,
    _image_in_ball,
    _local_coeffs,
    _polys_to_coeffs,
    compose,
    find_certificate,
    identity_model,
    model_add,
    model_sub,
)
from .padic import INF, fraction_valuation


class NotCertified(ValueError):
    """Certification found a concrete violation; witness is the failing
    (x, y, t) triple in the coordinates of the checked ball."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class IterationBudgetExceeded(RuntimeError):
    """Fixed-point inversion ran past its guaranteed step count."""


def halfball_valuation(p):
    """Least valuation v with p**-v < 1/2."""
    return 2 if p == 2 else 1


def _root_ball(ctx, d):
    return Ball.from_ints(ctx, (0,) * d, 0)


class BallEndo:
    """Self-map of the unit ball O^d with a verified range certificate.

    The model's domain must be the whole unit ball; maps of smaller balls
    are handled through their charts (see diffc_membership).
    """

    __slots__ = ("gamma", "sigma", "ball", "ctx", "d")

    def __init__(self, gamma):
        if gamma.d != gamma.e:
            raise ValueError(
                "a self-map needs matching dimensions, got d=%d, e=%d"
                % (gamma.d, gamma.e)
            )
        ball = _root_ball(gamma.ctx, gamma.d)
        if gamma.domain != ClopenRegion([ball]):
            raise ValueError("the model domain must be the unit ball O^d")
        for piece in gamma.piece_balls():
            ok, method, witness = _image_in_ball(gamma, piece, ball)
            if not ok:
                raise ValueError(
                    "range certificate failed on piece %r (%s check, witness %r)"
                    % (piece, method, witness)
                )
        self.gamma = gamma
        self.sigma = model_sub(gamma, identity_model(gamma.domain))
        self.ball = ball
        self.ctx = gamma.ctx
        self.d = gamma.d

    @classmethod
    def from_displacement(cls, sigma):
        """Build id + sigma and certify its range."""
        return cls(model_add(identity_model(sigma.domain), sigma))

    def __repr__(self):
        return "BallEndo(p=%d, d=%d, pieces=%d)" % (
            self.ctx.p,
            self.d,
            len(self.gamma.pieces),
        )


@dataclass(frozen=True)
class OmegaCertificate:
    """Proof record that the displacement and all its first quotients
    have valuation >= v_min, i.e. land in the open half-radius ball."""

    v_min: int
    method: str
    level: int = None


@dataclass(frozen=True)
class CertifiedDiffeo:
    endo: BallEndo
    cert: OmegaCertificate

    @property
    def gamma(self):
        return self.endo.gamma


def _t_classes(ctx, m):
    """Fraction representatives of every quotient parameter class mod p^m:
    t = 0 plus one member u*p^j of each unit class u mod p^(m-j)."""
    p = ctx.p
    ts = [Fraction(0)]
    for j in range(m):
        for u in range(1, p ** (m - j)):
            if u % p:
                ts.append(Fraction(u * p ** j))
    ts.append(Fraction(p ** m))
    return ts


def certify_omega(endo, m=3):
    """Certificate that the displacement stays small in values and in all
    first difference quotients.

    Sound, not complete.  The coefficient bound accepts when every local
    (piece-chart) coefficient, constant term included, has valuation at
    least v_min + k_max with k_max the finest piece level; that uniform
    margin keeps even quotients across different pieces inside the bound.
    Otherwise the quotient set is enumerated exactly at level m.  The range
    certificate already forces O-integral local coefficients, making the
    displacement 1-Lipschitz in each piece chart, so level-m data separates
    every quotient class once m covers the contraction window below.
    """
    ctx = endo.ctx
    v_min = halfball_valuation(ctx.p)
    sigma = endo.sigma
    k_max = max(b.k for b in sigma.piece_balls())
    bound_ok = True
    for ball in sigma.piece_balls():
        for P in _local_coeffs(sigma._frac[ball], ball):
            for c in P.values():
                if fraction_valuation(c, ctx.p) < v_min + k_max:
                    bound_ok = False
    if bound_ok:
        return OmegaCertificate(v_min=v_min, method="coefficient-bound")
    if m < 2 * v_min - 1:
        raise ValueError(
            "exhaustive level %d cannot separate quotient classes for p=%d; "
            "need at least %d" % (m, ctx.p, 2 * v_min - 1)
        )
    if k_max > m:
        raise ValueError(
            "pieces at level %d are finer than the exhaustive level %d" % (k_max, m)
        )
    witness = _omega_witness_search(endo, m, v_min)
    if witness is not None:
        kind, x, y, t = witness
        if kind == "quotient":
            raise NotCertified(
                "difference quotient at x=%s, y=%s, t=%s has valuation below %d"
                % (list(x), list(y), t, v_min),
                witness=(x, y, t),
            )
        raise NotCertified(
            "displacement value at x=%s has valuation below %d" % (list(x), v_min),
            witness=(x, y, t),
        )
    return OmegaCertificate(v_min=v_min, method="exhaustive", level=m)


def _omega_witness_search(endo, m, v_min):
    """Exact scan of displacement quotients and values over level-m data.

    Quotients are scanned first so a reported witness exhibits the failing
    quotient whenever one exists; value violations (zero direction, t = 0)
    are reported with the same triple shape.
    """
    sigma = endo.sigma
    p = endo.ctx.p
    reps = [tuple(Fraction(i) for i in ints) for ints in endo.ball.level_reps(m)]
    ts = _t_classes(endo.ctx, m)
    for xf in reps:
        base = sigma._eval_fr(xf)
        for yf in reps:
            for t in ts:
                if t == 0:
                    vals = _dqk_fr(sigma, ("node", ("leaf", xf), ("leaf", yf), t))
                else:
                    shifted = sigma._eval_fr(tuple(a + t * b for a, b in zip(xf, yf)))
                    vals = tuple((q2 - q1) / t for q1, q2 in zip(base, shifted))
                if any(fraction_valuation(q, p) < v_min for q in vals):
                    return ("quotient", xf, yf, t)
    zero = tuple(Fraction(0) for _ in range(endo.d))
    for xf in reps:
        if any(fraction_valuation(q, p) < v_min for q in sigma._eval_fr(xf)):
            return ("value", xf, zero, Fraction(0))
    return None


@dataclass(frozen=True)
class IsometryReport:
    checked: int
    violations: tuple


def isometry_check(g, pairs):
    """Exact comparison of the norms of gamma(x) - gamma(y) and x - y.

    Any violation indicates a certification bug, so the report should
    always come back empty.
    """
    gamma = g.endo.gamma
    p = gamma.ctx.p
    violations = []
    checked = 0
    for x, y in pairs:
        checked += 1
        xf, yf = x.to_fractions(), y.to_fractions()
        gx, gy = gamma._eval_fr(xf), gamma._eval_fr(yf)
        vin = min(fraction_valuation(a - b, p) for a, b in zip(xf, yf))
        vout = min(fraction_valuation(a - b, p) for a, b in zip(gx, gy))
        if vin != vout:
            violations.append((x, y))
    return IsometryReport(checked=checked, violations=tuple(violations))


def _reduce_mod(frs, p, M):
    mod = p ** M
    out = []
    for q in frs:
        if q.denominator % p == 0:
            raise ArithmeticError("iterate left the integers")
        out.append(Fraction(q.numerator * pow(q.denominator, -1, mod) % mod))
    return tuple(out)


def _invert_fr(endo, yf, target_v, v_min):
    """Fixed-point preimage on exact rationals, reduced mod p^M.

    Each step replaces x by y - sigma(x); the certificate bounds the
    displacement's quotients by p^-v_min, so successive iterates contract
    by at least that factor and the budget below always suffices.  The
    residual of the accepted iterate is checked exactly.
    """
    ctx = endo.ctx
    p = ctx.p
    budget = -(-target_v // v_min) + 2
    M = target_v + v_min + 2
    yf = _reduce_mod(yf, p, M)
    x = yf
    for _ in range(budget):
        nxt = _reduce_mod(
            tuple(a - q for a, q in zip(yf, endo.sigma._eval_fr(x))), p, M
        )
        gap = min(fraction_valuation(a - b, p) for a, b in zip(nxt, x))
        x = nxt
        if gap >= target_v:
            resid = min(
                fraction_valuation(a - b, p)
                for a, b in zip(endo.gamma._eval_fr(x), yf)
            )
            if resid < target_v:
                raise RuntimeError(
                    "inversion residual has valuation %s, expected >= %d; "
                    "the certificate is broken" % (resid, target_v)
                )
            return x
    raise IterationBudgetExceeded(
        "no contraction to %d digits within %d steps" % (target_v, budget)
    )


def invert_at(g, y, target_v):
    """Preimage of y under the certified map, correct to p^-target_v."""
    endo = g.endo
    ctx = endo.ctx
    if not isinstance(target_v, int) or target_v < 1:
        raise ValueError("target precision must be a positive int")
    if target_v > ctx.N:
        raise ValueError(
            "target precision %d exceeds the context precision N=%d"
            % (target_v, ctx.N)
        )
    yf = y.to_fractions()
    if not endo.ball.contains_fractions(yf):
        raise ValueError("y lies outside the unit ball")
    x = _invert_fr(endo, yf, target_v, g.cert.v_min)
    return ctx.vector([ctx.from_fraction(q) for q in x])


def _preimage_ball(g, ball):
    """Pullback of a sub-ball: same level, center pulled back by inversion."""
    if ball.k == 0:
        return ball
    yf = tuple(Fraction(i) for i in ball.ints)
    pre = _invert_fr(g.endo, yf, ball.k, g.cert.v_min)
    return Ball.from_ints(g.endo.ctx, tuple(int(q) for q in pre), ball.k)


def compose_diffeos(g1, g2):
    """g1 after g2, certified.

    The displacement law sigma = sigma2 + sigma1 o (id + sigma2) needs a
    composition certificate for the second term; it comes from the
    pullback of each sigma1 piece ball, which is again a ball of the same
    level because certified maps are isometric bijections.
    """
    e1, e2 = g1.endo, g2.endo
    if e1.ctx != e2.ctx or e1.d != e2.d:
        raise ValueError("the two maps live on different balls")
    pre = [(_preimage_ball(g2, b), b) for b in e1.sigma.piece_balls()]
    pieces = []
    cert = {}
    for ball, coeffs in e2.gamma.pieces:
        for cj, bj in pre:
            rel = ball_relation(ball, cj)
            if rel == "disjoint":
                continue
            fine = cj if rel == "B1_contains_B2" else ball
            pieces.append((fine, coeffs))
            cert[fine] = bj
    refined = FunctionModel(pieces, e=e2.d)
    comp = compose(e1.sigma, refined, cert)
    sigma = model_add(e2.sigma, comp)
    endo = BallEndo.from_displacement(sigma)
    level = max(
        (c.level for c in (g1.cert, g2.cert) if c.level is not None), default=3
    )
    return CertifiedDiffeo(endo=endo, cert=certify_omega(endo, m=level))


def induced_level_map(g, m):
    """Permutation induced on the p^(d*m) level-m cells of the ball.

    Cells are indexed by their representatives in the order produced by
    level_reps(m); entry i holds the index of the image cell.
    """
    if not isinstance(m, int) or m < 1:
        raise ValueError("level must be a positive int")
    endo = g.endo
    ctx = endo.ctx
    reps = list(endo.ball.level_reps(m))
    index = {ints: i for i, ints in enumerate(reps)}
    mod = ctx.p ** m
    out = []
    for ints in reps:
        vals = endo.gamma._eval_fr(tuple(Fraction(i) for i in ints))
        cell = tuple(q.numerator * pow(q.denominator, -1, mod) % mod for q in vals)
        out.append(index[cell])
    if len(set(out)) != len(out):
        raise RuntimeError("induced map is not a bijection; certificate is broken")
    return tuple(out)


def _image_in_region(f, ball, region):
    """Sound check that f maps the ball into the clopen region."""
    ctx = f.ctx
    val, s = _image_bound(f, ball)
    if s is INF:
        return region.contains_fractions(val)
    if s < 0 or any(fraction_valuation(q, ctx.p) < 0 for q in val):
        return False
    sk = min(s, ctx.N)
    mod = ctx.p ** sk
    ints = tuple(q.numerator * pow(q.denominator, -1, mod) % mod for q in val)
    if region.contains_ball(Ball.from_ints(ctx, ints, sk)):
        return True
    # integral local coefficients: 1-Lipschitz in the chart variable, so
    # sampling at ball.k + max_level keeps membership stable between samples
    m = ball.k + region.max_level()
    for reps in ball.level_reps(m):
        frs = tuple(Fraction(r) for r in reps)
        if not region.contains_fractions(f._eval_fr(frs)):
            return False
    return True


class CompactlySupportedEndo:
    """id + sigma on a clopen region U, identity outside the support.

    The support is the canonical union of the pieces where sigma is
    nonzero (a coarser stated support containing them is accepted), and
    id + sigma is verified to map U into U piece by piece.
    """

    __slots__ = ("U", "sigma", "support", "gamma", "ctx", "d")

    def __init__(self, U, sigma, support=None):
        if sigma.d != sigma.e:
            raise ValueError(
                "a displacement needs matching dimensions, got d=%d, e=%d"
                % (sigma.d, sigma.e)
            )
        if sigma.domain != U:
            raise ValueError("the displacement partition must cover exactly U")
        nonzero = [b for b in sigma.piece_balls() if any(sigma._frac[b])]
        if support is None:
            support = ClopenRegion(nonzero)
        else:
            if not support.empty and not U.contains_region(support):
                raise ValueError("the support must sit inside U")
            for b in nonzero:
                if not support.contains_ball(b):
                    raise ValueError(
                        "displacement is nonzero on %r outside the stated support"
                        % (b,)
                    )
        gamma = model_add(identity_model(U), sigma)
        for ball in gamma.piece_balls():
            if not _image_in_region(gamma, ball, U):
                raise ValueError("id + sigma does not map %r into U" % (ball,))
        self.U = U
        self.sigma = sigma
        self.support = support
        self.gamma = gamma
        self.ctx = sigma.ctx
        self.d = sigma.d

    def __repr__(self):
        return "CompactlySupportedEndo(p=%d, d=%d, support=%d balls)" % (
            self.ctx.p,
            self.d,
            len(self.support.balls),
        )


def endo_compose(a, b):
    """a after b on the shared region, by the displacement law
    sigma_b + sigma_a o (id + sigma_b)."""
    if a.U != b.U:
        raise ValueError("the two maps live on different regions")
    try:
        refined, cert = find_certificate(a.sigma, b.gamma)
    except CompositionUncertified as err:
        raise CertificateInvalid(str(err)) from None
    comp = compose(a.sigma, refined, cert)
    return CompactlySupportedEndo(a.U, model_add(b.sigma, comp))


@dataclass(frozen=True)
class DiffcDecision:
    accepted: bool
    certificates: dict
    witness: object = None


def _chart_displacement(sigma, ball):
    """The displacement seen in the chart of a ball: z -> sigma(c + p^k z)/p^k.

    The result is a model on the unit ball whose pieces are the chart
    images of the pieces of sigma meeting the ball.
    """
    ctx = sigma.ctx
    d = sigma.d
    scale = Fraction(ctx.p) ** ball.k
    pieces = []
    for pb in sigma.piece_balls():
        rel = ball_relation(pb, ball)
        if rel == "disjoint":
            continue
        polys = tuple(
            _poly.scale(P, 1 / scale) for P in _local_coeffs(sigma._frac[pb], ball)
        )
        if rel in ("equal", "B1_contains_B2"):
            pieces = [(_root_ball(ctx, d), _polys_to_coeffs(polys, ctx, d))]
            break
        step = ctx.p ** ball.k
        ints = tuple((i - c) // step for i, c in zip(pb.ints, ball.ints))
        chart_ball = Ball.from_ints(ctx, ints, pb.k - ball.k)
        pieces.append((chart_ball, _polys_to_coeffs(polys, ctx, d)))
    return FunctionModel(pieces, e=d)


def diffc_membership(a, m=3):
    """Decide membership of id + sigma in the diffeomorphism group of U.

    Sound and incomplete: every supported ball must be mapped into itself
    by a map whose chart copy carries a certificate.  Accepted elements
    get one CertifiedDiffeo per supported ball; rejections name the ball
    and the witness (in chart coordinates when it is a quotient triple).
    """
    certificates = {}
    for ball in a.support.balls:
        chart = _chart_displacement(a.sigma, ball)
        try:
            endo = BallEndo.from_displacement(chart)
        except ValueError as err:
            return DiffcDecision(False, {}, witness=(ball, str(err)))
        try:
            cert = certify_omega(endo, m=m)
        except NotCertified as err:
            return DiffcDecision(False, {}, witness=(ball, err.witness))
        certificates[ball] = CertifiedDiffeo(endo=endo, cert=cert)
    return DiffcDecision(True, certificates)
