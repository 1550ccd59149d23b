"""Exact arithmetic in Q_p at a fixed relative precision.

A nonzero scalar is a pair (v, u): the valuation and a unit part with
u % p != 0, standing for u * p**v known to N significant base-p digits.
Exact zero is a separate flagged value (u == 0) with valuation +inf.
All operations compute the exact rational value of the representatives
and truncate once at the end, so algebraic identities that hold in Q
hold bit-exactly here whenever no digits overflow the window.
"""

from __future__ import annotations

import math
from fractions import Fraction

INF = math.inf


class PrecisionLoss(ArithmeticError):
    """All N significant digits cancelled: result indistinguishable from zero."""


class DivisionByZero(ZeroDivisionError):
    """Inversion or division of an exact zero."""


def _is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def fraction_valuation(q, p):
    """p-adic valuation of a Fraction or int; INF for zero."""
    q = Fraction(q)
    if q == 0:
        return INF
    v = 0
    num, den = q.numerator, q.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


class PadicContext:
    """Ambient data: the prime p and the relative precision N (digit count)."""

    __slots__ = ("p", "N", "modulus")

    def __init__(self, p, N=12):
        if not _is_prime(p):
            raise ValueError("p must be prime, got %r" % (p,))
        if not isinstance(N, int) or N < 1:
            raise ValueError("precision N must be a positive integer, got %r" % (N,))
        self.p = p
        self.N = N
        self.modulus = p ** N

    def __eq__(self, other):
        return (
            isinstance(other, PadicContext)
            and self.p == other.p
            and self.N == other.N
        )

    def __hash__(self):
        return hash((self.p, self.N))

    def __repr__(self):
        return "PadicContext(p=%d, N=%d)" % (self.p, self.N)

    def zero(self):
        return PadicScalar(self, INF, 0)

    def one(self):
        return PadicScalar(self, 0, 1)

    def from_unit(self, v, u):
        """Scalar from explicit valuation and unit part."""
        return PadicScalar(self, v, u)

    def from_int(self, n):
        return self.from_fraction(Fraction(n))

    def from_fraction(self, q):
        """Truncate an exact rational to N significant digits."""
        q = Fraction(q)
        if q == 0:
            return self.zero()
        v = 0
        num, den = q.numerator, q.denominator
        p = self.p
        while num % p == 0:
            num //= p
            v += 1
        while den % p == 0:
            den //= p
            v -= 1
        u = num * pow(den, -1, self.modulus) % self.modulus
        return PadicScalar(self, v, u)

    def vector(self, values):
        """Vector from an iterable of ints, Fractions or PadicScalars."""
        coords = tuple(
            x if isinstance(x, PadicScalar) else self.from_fraction(Fraction(x))
            for x in values
        )
        return PadicVector(coords, ctx=self)


class PadicScalar:
    """One element of Q_p at relative precision N."""

    __slots__ = ("ctx", "v", "u")

    def __init__(self, ctx, v, u):
        if u == 0:
            if v != INF:
                raise ValueError("exact zero must carry valuation INF")
        else:
            if not isinstance(u, int) or not 1 <= u < ctx.modulus:
                raise ValueError("unit part out of range: %r" % (u,))
            if u % ctx.p == 0:
                raise ValueError("unit part divisible by p: %r" % (u,))
            if not isinstance(v, int):
                raise ValueError("valuation must be an int, got %r" % (v,))
        self.ctx = ctx
        self.v = v
        self.u = u

    @property
    def is_zero(self):
        return self.u == 0

    @property
    def valuation(self):
        """v(x); INF for exact zero.  |x| = p**(-v)."""
        return self.v

    def to_fraction(self):
        """Exact rational value of the representative."""
        if self.is_zero:
            return Fraction(0)
        return Fraction(self.u) * Fraction(self.ctx.p) ** self.v

    def digits(self):
        """The N significant base-p digits of the unit part, lowest first."""
        p, n = self.ctx.p, self.ctx.N
        out = []
        u = self.u
        for _ in range(n):
            out.append(u % p)
            u //= p
        return out

    def _check_ctx(self, other):
        if not isinstance(other, PadicScalar):
            return NotImplemented
        if self.ctx != other.ctx:
            raise ValueError("mixed p-adic contexts: %r vs %r" % (self.ctx, other.ctx))
        return other

    def __add__(self, other):
        other = self._check_ctx(other)
        if other is NotImplemented:
            return other
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        ctx = self.ctx
        w = min(self.v, other.v)
        s = self.u * ctx.p ** (self.v - w) + other.u * ctx.p ** (other.v - w)
        if s == 0:
            raise PrecisionLoss(
                "all %d digits cancelled in addition (p=%d)" % (ctx.N, ctx.p)
            )
        t = 0
        while s % ctx.p == 0:
            s //= ctx.p
            t += 1
        if t >= ctx.N:
            raise PrecisionLoss(
                "all %d digits cancelled in addition (p=%d)" % (ctx.N, ctx.p)
            )
        return PadicScalar(ctx, w + t, s % ctx.modulus)

    def __neg__(self):
        if self.is_zero:
            return self
        return PadicScalar(self.ctx, self.v, self.ctx.modulus - self.u)

    def __sub__(self, other):
        other = self._check_ctx(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PadicVector):
            return other.scale(self)
        other = self._check_ctx(other)
        if other is NotImplemented:
            return other
        if self.is_zero or other.is_zero:
            return self.ctx.zero()
        return PadicScalar(
            self.ctx, self.v + other.v, self.u * other.u % self.ctx.modulus
        )

    def inverse(self):
        if self.is_zero:
            raise DivisionByZero("inverse of exact zero")
        ctx = self.ctx
        return PadicScalar(ctx, -self.v, pow(self.u, -1, ctx.modulus))

    def __truediv__(self, other):
        other = self._check_ctx(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __pow__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return self.inverse() ** (-n)
        if self.is_zero:
            return self.ctx.zero() if n else self.ctx.one()
        return PadicScalar(
            self.ctx, self.v * n, pow(self.u, n, self.ctx.modulus)
        )

    def __eq__(self, other):
        if not isinstance(other, PadicScalar):
            return NotImplemented
        return self.ctx == other.ctx and self.v == other.v and self.u == other.u

    def __hash__(self):
        return hash((self.ctx, self.v, self.u))

    def __repr__(self):
        if self.is_zero:
            return "PadicScalar(p=%d, zero)" % self.ctx.p
        return "PadicScalar(p=%d, v=%r, u=%d)" % (self.ctx.p, self.v, self.u)


class PadicVector:
    """Tuple of scalars sharing one context, with the max norm."""

    __slots__ = ("coords", "ctx")

    def __init__(self, coords, ctx=None):
        coords = tuple(coords)
        if ctx is None:
            if not coords:
                raise ValueError("empty vector needs an explicit context")
            ctx = coords[0].ctx
        for c in coords:
            if c.ctx != ctx:
                raise ValueError("mixed p-adic contexts in vector")
        self.coords = coords
        self.ctx = ctx

    @property
    def dim(self):
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __getitem__(self, i):
        return self.coords[i]

    def __len__(self):
        return len(self.coords)

    def __add__(self, other):
        if not isinstance(other, PadicVector):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("dimension mismatch: %d vs %d" % (self.dim, other.dim))
        return PadicVector(
            tuple(a + b for a, b in zip(self.coords, other.coords)), ctx=self.ctx
        )

    def __sub__(self, other):
        if not isinstance(other, PadicVector):
            return NotImplemented
        return self + (-other)

    def __neg__(self):
        return PadicVector(tuple(-a for a in self.coords), ctx=self.ctx)

    def scale(self, s):
        return PadicVector(tuple(s * a for a in self.coords), ctx=self.ctx)

    def norm_valuation(self):
        """min of coordinate valuations; INF for the zero vector."""
        return min((c.v for c in self.coords), default=INF)

    def to_fractions(self):
        return tuple(c.to_fraction() for c in self.coords)

    def __eq__(self, other):
        if not isinstance(other, PadicVector):
            return NotImplemented
        return self.ctx == other.ctx and self.coords == other.coords

    def __hash__(self):
        return hash((self.ctx, self.coords))

    def __repr__(self):
        return "PadicVector(%s)" % (", ".join(repr(c) for c in self.coords))


def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def inv(a):
    return a.inverse()


def norm_max(x):
    """Valuation of the max norm: min over coordinates, INF for zero."""
    if isinstance(x, PadicVector):
        return x.norm_valuation()
    return x.valuation


def scalar_to_json(a):
    v = "inf" if a.is_zero else a.v
    return {"p": a.ctx.p, "v": v, "digits": a.digits()}


def scalar_from_json(obj):
    if not isinstance(obj, dict):
        raise ValueError("scalar must be an object, got %r" % type(obj).__name__)
    for key in ("p", "v", "digits"):
        if key not in obj:
            raise ValueError("scalar missing key %r" % key)
    p = obj["p"]
    digits = obj["digits"]
    if not isinstance(digits, list) or not digits:
        raise ValueError("digits must be a nonempty array")
    ctx = PadicContext(p, len(digits))
    for d in digits:
        if not isinstance(d, int) or not 0 <= d < p:
            raise ValueError("digit out of range for p=%d: %r" % (p, d))
    v = obj["v"]
    if v == "inf":
        if any(digits):
            raise ValueError("zero scalar must have all-zero digits")
        return ctx.zero()
    if not isinstance(v, int):
        raise ValueError("valuation must be int or \"inf\", got %r" % (v,))
    if digits[0] == 0:
        raise ValueError("leading digit must be nonzero for a nonzero scalar")
    u = 0
    for d in reversed(digits):
        u = u * p + d
    return ctx.from_unit(v, u)


def vector_to_json(x):
    return [scalar_to_json(c) for c in x.coords]


def vector_from_json(arr):
    if not isinstance(arr, list) or not arr:
        raise ValueError("vector must be a nonempty array of scalars")
    coords = [scalar_from_json(o) for o in arr]
    ctx = coords[0].ctx
    for c in coords:
        if c.ctx != ctx:
            raise ValueError("vector coordinates disagree on (p, N)")
    return PadicVector(coords, ctx=ctx)
