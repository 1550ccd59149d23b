"""Sparse multivariate polynomials over Fraction, keyed by exponent tuples.

Internal helper for the calculus machinery.  A polynomial is a plain dict
mapping exponent tuples (one slot per variable) to nonzero Fractions; the
zero polynomial is the empty dict.
"""

from fractions import Fraction


def zero():
    return {}


def const(nvars, c):
    c = Fraction(c)
    if c == 0:
        return {}
    return {(0,) * nvars: c}


def var(nvars, i):
    e = [0] * nvars
    e[i] = 1
    return {tuple(e): Fraction(1)}


def add(a, b):
    out = dict(a)
    for e, c in b.items():
        s = out.get(e, 0) + c
        if s:
            out[e] = s
        else:
            out.pop(e, None)
    return out


def neg(a):
    return {e: -c for e, c in a.items()}


def sub(a, b):
    return add(a, neg(b))


def scale(a, c):
    c = Fraction(c)
    if c == 0:
        return {}
    return {e: c * x for e, x in a.items()}


def mul(a, b):
    out = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            s = out.get(e, 0) + ca * cb
            if s:
                out[e] = s
            else:
                out.pop(e, None)
    return out


def evaluate(a, xs):
    total = Fraction(0)
    for e, c in a.items():
        term = c
        for x, k in zip(xs, e):
            if k:
                term *= x ** k
        total += term
    return total


def diff(a, i):
    out = {}
    for e, c in a.items():
        k = e[i]
        if k == 0:
            continue
        e2 = list(e)
        e2[i] = k - 1
        e2 = tuple(e2)
        s = out.get(e2, 0) + c * k
        if s:
            out[e2] = s
        else:
            out.pop(e2, None)
    return out


def subst(a, subs, nvars_new):
    """Substitute subs[i] (a poly in the new variables) for variable i."""
    powers = {}

    def power(i, k):
        key = (i, k)
        if key not in powers:
            if k == 0:
                powers[key] = const(nvars_new, 1)
            else:
                powers[key] = mul(power(i, k - 1), subs[i])
        return powers[key]

    out = {}
    for e, c in a.items():
        term = const(nvars_new, c)
        for i, k in enumerate(e):
            if k:
                term = mul(term, power(i, k))
        out = add(out, term)
    return out


def div_var(a, i):
    """Exact division by variable i; every monomial must contain it."""
    out = {}
    for e, c in a.items():
        if e[i] == 0:
            raise ValueError("polynomial not divisible by variable %d" % i)
        e2 = list(e)
        e2[i] -= 1
        out[tuple(e2)] = c
    return out


def rename(a, mapping, nvars_new):
    """Move variable i of a to slot mapping[i] of a fresh variable space."""
    out = {}
    for e, c in a.items():
        e2 = [0] * nvars_new
        for i, k in enumerate(e):
            if k:
                e2[mapping[i]] += k
        out[tuple(e2)] = c
    return out


def degree(a):
    return max((sum(e) for e in a), default=-1)
