"""Finite-dimensional algebras over Q_p with constructive inversion.

Everything runs exactly: stored scalars are lifted to rationals, linear
algebra is exact Gauss-Jordan elimination, and results are truncated once
on the way out.  "Invertible at precision N" means the pivot valuations of
the regular representation stay below N.
"""

from fractions import Fraction

from .calculus import CheckReport
from .padic import INF, PadicScalar, PadicVector, fraction_valuation, scalar_to_json, scalar_from_json


class Singular(ArithmeticError):
    pass


class NotAUnit(ArithmeticError):
    pass


class SMatrixSingular(ArithmeticError):
    pass


class PadicMatrix:
    """Square matrix of scalars sharing one context."""

    __slots__ = ("ctx", "n", "rows")

    def __init__(self, rows):
        rows = tuple(tuple(r) for r in rows)
        if not rows or any(len(r) != len(rows) for r in rows):
            raise ValueError("matrix must be square and nonempty")
        ctx = None
        for r in rows:
            for s in r:
                if not isinstance(s, PadicScalar):
                    raise TypeError("entries must be PadicScalar")
                if ctx is None:
                    ctx = s.ctx
                elif s.ctx != ctx:
                    raise ValueError("entries must share one context")
        self.ctx = ctx
        self.n = len(rows)
        self.rows = rows

    @classmethod
    def identity(cls, ctx, n):
        one, zero = ctx.one(), ctx.zero()
        return cls([[one if i == j else zero for j in range(n)] for i in range(n)])

    @classmethod
    def from_fractions(cls, ctx, frs):
        return cls([[ctx.from_fraction(q) for q in row] for row in frs])

    def to_fractions(self):
        return [[s.to_fraction() for s in r] for r in self.rows]

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def __mul__(self, other):
        if not isinstance(other, PadicMatrix):
            return NotImplemented
        if other.ctx != self.ctx or other.n != self.n:
            raise ValueError("size or context mismatch")
        a, b = self.to_fractions(), other.to_fractions()
        n = self.n
        prod = [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
        return PadicMatrix.from_fractions(self.ctx, prod)

    def __eq__(self, other):
        if not isinstance(other, PadicMatrix):
            return NotImplemented
        return self.rows == other.rows

    def __hash__(self):
        return hash(self.rows)

    def __repr__(self):
        return "PadicMatrix(n=%d, p=%d)" % (self.n, self.ctx.p)


def _gauss_inverse(frs, p):
    """Exact Gauss-Jordan on rational rows, pivoting on minimal valuation.

    Returns (inverse rows, pivot valuations in elimination order).
    """
    n = len(frs)
    aug = [list(frs[i]) + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    pivots = []
    for col in range(n):
        best, best_val = -1, INF
        for r in range(col, n):
            q = aug[r][col]
            if q == 0:
                continue
            val = fraction_valuation(q, p)
            if val < best_val:
                best, best_val = r, val
        if best < 0:
            raise Singular("no pivot in column %d" % col)
        pivots.append(best_val)
        aug[col], aug[best] = aug[best], aug[col]
        piv = aug[col][col]
        aug[col] = [q / piv for q in aug[col]]
        for r in range(n):
            if r == col or aug[r][col] == 0:
                continue
            factor = aug[r][col]
            aug[r] = [q - factor * w for q, w in zip(aug[r], aug[col])]
    return [row[n:] for row in aug], pivots


def mat_inverse_profile(M):
    """Inverse together with the pivot valuations of the elimination."""
    inv, pivots = _gauss_inverse(M.to_fractions(), M.ctx.p)
    N = M.ctx.N
    if any(v >= N for v in pivots) or sum(pivots) >= N:
        raise Singular("not invertible at precision %d (pivot valuations %r)" % (N, pivots))
    return PadicMatrix.from_fractions(M.ctx, inv), tuple(pivots)


def mat_inverse(M):
    return mat_inverse_profile(M)[0]


class StructAlgebra:
    """Algebra given by structure constants on a fixed basis.

    t[i][j][k] is the e_k coordinate of e_i * e_j; one holds the unit's
    coordinates.  Associativity and the unit laws are verified exactly on
    all basis triples when the algebra is built.
    """

    __slots__ = ("ctx", "n", "t", "one", "_mult", "_one_fr")

    def __init__(self, t, one):
        one = tuple(one)
        n = len(one)
        if n == 0:
            raise ValueError("algebra dimension must be positive")
        ctx = one[0].ctx
        if any(s.ctx != ctx for s in one):
            raise ValueError("unit coordinates must share one context")
        t = tuple(tuple(tuple(row) for row in plane) for plane in t)
        if len(t) != n or any(len(pl) != n or any(len(r) != n for r in pl) for pl in t):
            raise ValueError("structure constants must be n x n x n")
        for pl in t:
            for r in pl:
                for s in r:
                    if not isinstance(s, PadicScalar) or s.ctx != ctx:
                        raise TypeError("structure constants must be scalars in the unit's context")
        self.ctx = ctx
        self.n = n
        self.t = t
        self.one = one
        mult = []
        for i in range(n):
            row = []
            for j in range(n):
                row.append(tuple((k, t[i][j][k].to_fraction()) for k in range(n) if not t[i][j][k].is_zero))
            mult.append(tuple(row))
        self._mult = tuple(mult)
        self._one_fr = tuple(s.to_fraction() for s in one)
        self._check_axioms()

    def _basis_fr(self, i):
        return tuple(Fraction(int(j == i)) for j in range(self.n))

    def _mul_fr(self, xf, yf):
        out = [Fraction(0)] * self.n
        for i, xi in enumerate(xf):
            if xi == 0:
                continue
            row = self._mult[i]
            for j, yj in enumerate(yf):
                if yj == 0:
                    continue
                for k, c in row[j]:
                    out[k] += c * xi * yj
        return tuple(out)

    def _check_axioms(self):
        n = self.n
        for j in range(n):
            ej = self._basis_fr(j)
            if self._mul_fr(self._one_fr, ej) != ej or self._mul_fr(ej, self._one_fr) != ej:
                raise ValueError("unit laws fail at basis index %d" % j)
        for i in range(n):
            ei = self._basis_fr(i)
            for j in range(n):
                eij = self._mul_fr(ei, self._basis_fr(j))
                for k in range(n):
                    ek = self._basis_fr(k)
                    left = self._mul_fr(eij, ek)
                    right = self._mul_fr(ei, self._mul_fr(self._basis_fr(j), ek))
                    if left != right:
                        raise ValueError("associativity fails at basis triple (%d, %d, %d)" % (i, j, k))

    def coords_fr(self, x):
        if isinstance(x, PadicVector):
            if len(x) != self.n:
                raise ValueError("coordinate length mismatch")
            return x.to_fractions()
        x = tuple(x)
        if len(x) != self.n:
            raise ValueError("coordinate length mismatch")
        return tuple(s.to_fraction() for s in x)

    def vec(self, frs):
        return self.ctx.vector([self.ctx.from_fraction(q) for q in frs])

    def one_vector(self):
        return self.ctx.vector(list(self.one))

    def __repr__(self):
        return "StructAlgebra(n=%d, p=%d)" % (self.n, self.ctx.p)


def alg_mul(A, x, y):
    """Product in coordinates, exact before the final truncation."""
    return A.vec(A._mul_fr(A.coords_fr(x), A.coords_fr(y)))


def _lambda_fr(A, af):
    """Left regular representation of the element with rational coords af."""
    n = A.n
    L = [[Fraction(0)] * n for _ in range(n)]
    for i, ai in enumerate(af):
        if ai == 0:
            continue
        row = A._mult[i]
        for j in range(n):
            for k, c in row[j]:
                L[k][j] += c * ai
    return L


def _inverse_fr(A, af):
    """Exact inverse coordinates, or NotAUnit."""
    L = _lambda_fr(A, af)
    try:
        inv, pivots = _gauss_inverse(L, A.ctx.p)
    except Singular as err:
        raise NotAUnit(str(err)) from None
    N = A.ctx.N
    if any(v >= N for v in pivots) or sum(pivots) >= N:
        raise NotAUnit("regular representation is singular at precision %d" % N)
    return tuple(sum(inv[k][j] * A._one_fr[j] for j in range(A.n)) for k in range(A.n))


def alg_inverse(A, a):
    af = A.coords_fr(a)
    xf = _inverse_fr(A, af)
    assert A._mul_fr(af, xf) == A._one_fr
    return A.vec(xf)


def qp_algebra(ctx):
    """The base field as a one-dimensional algebra."""
    return StructAlgebra([[[ctx.one()]]], [ctx.one()])


def matrix_algebra(ctx, m):
    """m x m matrices with the elementary-matrix basis, row-major."""
    n = m * m
    zero, one = ctx.zero(), ctx.one()

    def idx(a, b):
        return a * m + b

    t = [[[zero] * n for _ in range(n)] for _ in range(n)]
    for a in range(m):
        for b in range(m):
            for c in range(m):
                for d in range(m):
                    if b == c:
                        row = t[idx(a, b)][idx(c, d)]
                        row[idx(a, d)] = one
    one_coords = [one if a == b else zero for a in range(m) for b in range(m)]
    return StructAlgebra(t, one_coords)


def quadratic_extension(ctx, c):
    """Q_p[X] / (X^2 - c) on the basis (1, X)."""
    zero, one = ctx.zero(), ctx.one()
    cs = ctx.from_int(c)
    t = [
        [[one, zero], [zero, one]],
        [[zero, one], [cs, zero]],
    ]
    return StructAlgebra(t, [one, zero])


def tensor_algebra(F, A):
    """Structure constants of F tensor A on the product basis.

    Basis order: (i, a) -> i * dim(A) + a.
    """
    if F.ctx != A.ctx:
        raise ValueError("factors must share one context")
    ctx = F.ctx
    n, m = F.n, A.n
    nm = n * m
    zero = ctx.zero()
    t = [[[zero] * nm for _ in range(nm)] for _ in range(nm)]
    for i in range(n):
        for j in range(n):
            fk = F._mult[i][j]
            for a in range(m):
                for b in range(m):
                    ak = A._mult[a][b]
                    for k, cf in fk:
                        for cidx, ca in ak:
                            t[i * m + a][j * m + b][k * m + cidx] = ctx.from_fraction(cf * ca)
    one_coords = []
    for i in range(n):
        fi = F._one_fr[i]
        for a in range(m):
            one_coords.append(ctx.from_fraction(fi * A._one_fr[a]))
    return StructAlgebra(t, one_coords)


def tensor_right_inverse(F, A, z):
    """Right inverse of 1 + sum_k e_k (x) z_k in F (x) A.

    Solves S(z) v = -z where S(z)_{kj} = delta_{kj} 1_A + sum_i t_{i,j,k} z_i,
    the system being flattened through the regular representation of A.
    """
    if F.ctx != A.ctx:
        raise ValueError("factors must share one context")
    n, m = F.n, A.n
    z = [A.coords_fr(zk) for zk in z]
    if len(z) != n:
        raise ValueError("z must have one A-element per basis vector of F")
    s = [[None] * n for _ in range(n)]
    for k in range(n):
        for j in range(n):
            entry = [Fraction(0)] * m
            if k == j:
                entry = list(A._one_fr)
            for i in range(n):
                cf = F.t[i][j][k].to_fraction()
                if cf == 0:
                    continue
                for a in range(m):
                    entry[a] += cf * z[i][a]
            s[k][j] = tuple(entry)
    nm = n * m
    block = [[Fraction(0)] * nm for _ in range(nm)]
    for k in range(n):
        for j in range(n):
            lam = _lambda_fr(A, s[k][j])
            for c in range(m):
                for a in range(m):
                    block[k * m + c][j * m + a] = lam[c][a]
    try:
        inv, pivots = _gauss_inverse(block, F.ctx.p)
    except Singular as err:
        raise SMatrixSingular(str(err)) from None
    N = F.ctx.N
    if any(v >= N for v in pivots) or sum(pivots) >= N:
        raise SMatrixSingular("S-matrix singular at precision %d" % N)
    stack = [z[k][a] for k in range(n) for a in range(m)]
    w = [-sum(inv[r][c] * stack[c] for c in range(nm)) for r in range(nm)]
    out = []
    for j in range(n):
        vj = tuple(w[j * m : (j + 1) * m])
        out.append(vj)
    for k in range(n):
        resid = list(z[k])
        for j in range(n):
            prod = A._mul_fr(s[k][j], out[j])
            resid = [q + r for q, r in zip(resid, prod)]
        assert all(q == 0 for q in resid)
    return [A.vec(vj) for vj in out]


def check_inversion_derivative(A, x, v, t):
    """Difference quotient of inversion against -inv(x+tv) v inv(x).

    For t = 0 the quotient is replaced by the first-order coefficient of
    the inverse of x + tv solved formally modulo t^2.
    """
    xf = A.coords_fr(x)
    vf = A.coords_fr(v)
    ix = _inverse_fr(A, xf)
    if not t.is_zero:
        tf = t.to_fraction()
        yf = tuple(q + tf * w for q, w in zip(xf, vf))
        iy = _inverse_fr(A, yf)
        lhs = tuple((q2 - q1) / tf for q1, q2 in zip(ix, iy))
        rhs = tuple(-q for q in A._mul_fr(A._mul_fr(iy, vf), ix))
        return CheckReport(lhs=A.vec(lhs), rhs=A.vec(rhs), equal=lhs == rhs)
    # (L(x) + t L(v)) (a0 + t a1) = 1 mod t^2: a0 is the inverse and
    # L(x) a1 = -L(v) a0 gives the derivative coefficient
    L1 = _lambda_fr(A, vf)
    n = A.n
    L1a0 = tuple(sum(L1[k][j] * ix[j] for j in range(n)) for k in range(n))
    L0 = _lambda_fr(A, xf)
    inv, _ = _gauss_inverse(L0, A.ctx.p)
    a1 = tuple(-sum(inv[k][j] * L1a0[j] for j in range(n)) for k in range(n))
    rhs = tuple(-q for q in A._mul_fr(A._mul_fr(ix, vf), ix))
    return CheckReport(lhs=A.vec(a1), rhs=A.vec(rhs), equal=a1 == rhs)


def algebra_to_json(A):
    return {
        "n": A.n,
        "t": [[[scalar_to_json(s) for s in row] for row in plane] for plane in A.t],
        "one": [scalar_to_json(s) for s in A.one],
    }


def algebra_from_json(obj):
    if not isinstance(obj, dict):
        raise ValueError("algebra JSON must be an object")
    n = obj.get("n")
    t = obj.get("t")
    one = obj.get("one")
    if not isinstance(n, int) or not isinstance(t, list) or not isinstance(one, list):
        raise ValueError("algebra JSON needs integer n, tensor t and unit one")
    if len(one) != n or len(t) != n:
        raise ValueError("algebra JSON dimensions disagree with n")
    one_s = [scalar_from_json(s) for s in one]
    t_s = [[[scalar_from_json(s) for s in row] for row in plane] for plane in t]
    return StructAlgebra(t_s, one_s)
