"""Normal-ordered Weyl algebra k[t]<d> with [d, t] = 1, plus local
differential operators with series coefficients.

Normal order keeps every t to the left of every d, so equality of
operators is equality of term maps.  The Fourier symbol swap substitutes
t -> d', d -> -t' and renormal-orders; applying it twice negates both
generators.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb, factorial

from .coeff import RamifiedSeries
from .diffmod import FormalConnection, Point
from .errors import ZeroOperator

Q = Fraction


class WeylOperator:
    """Element of k[t]<d> stored as a normal-ordered term map (i, j) -> c."""

    __slots__ = ("field", "terms")

    def __init__(self, field, terms):
        self.field = field
        self.terms = {}
        for ij, c in terms.items():
            c = field.elem(c)
            if not c.is_zero():
                self.terms[ij] = c

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero(field):
        return WeylOperator(field, {})

    @staticmethod
    def const(field, c):
        return WeylOperator(field, {(0, 0): c})

    @staticmethod
    def t(field):
        return WeylOperator(field, {(1, 0): field.one})

    @staticmethod
    def d(field):
        return WeylOperator(field, {(0, 1): field.one})

    # -- ring structure -------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, WeylOperator):
            other = WeylOperator.const(self.field, other)
        out = dict(self.terms)
        for ij, c in other.terms.items():
            out[ij] = out[ij] + c if ij in out else c
        return WeylOperator(self.field, out)

    __radd__ = __add__

    def __neg__(self):
        return WeylOperator(self.field, {ij: -c for ij, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, WeylOperator):
            other = WeylOperator.const(self.field, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        """Normal-ordered product via d^a t^b = sum_k k! C(a,k) C(b,k) t^(b-k) d^(a-k)."""
        if not isinstance(other, WeylOperator):
            return WeylOperator(self.field,
                                {ij: c * other for ij, c in self.terms.items()})
        out = {}
        for (i1, j1), c1 in self.terms.items():
            for (i2, j2), c2 in other.terms.items():
                c = c1 * c2
                for k in range(min(j1, i2) + 1):
                    coeff = c * (factorial(k) * comb(j1, k) * comb(i2, k))
                    ij = (i1 + i2 - k, j1 + j2 - k)
                    out[ij] = out[ij] + coeff if ij in out else coeff
        return WeylOperator(self.field, out)

    def __rmul__(self, other):
        # scalars commute; operator * operator never reaches here
        return self * other

    def __pow__(self, n):
        out = WeylOperator.const(self.field, 1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, WeylOperator) and self.terms == other.terms \
            and self.field == other.field

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items(), key=lambda kv: kv[0])))

    # -- structure ---------------------------------------------------------------

    def is_zero(self):
        return not self.terms

    @property
    def order(self):
        """Degree in d."""
        return max((j for (_, j) in self.terms), default=-1)

    @property
    def t_degree(self):
        return max((i for (i, _) in self.terms), default=-1)

    def coeff_poly(self, j):
        """The polynomial a_j(t) multiplying d^j, as a degree -> element map."""
        return {i: c for (i, jj), c in self.terms.items() if jj == j}

    def leading_coeff_poly(self):
        return self.coeff_poly(self.order)

    # -- symmetries ---------------------------------------------------------------

    def fourier_swap(self):
        """Substitute t -> d', d -> -t' and renormal-order.

        An algebra map: [-t', d'] = 1.  Applying it twice negates both
        generators.
        """
        out = {}
        for (i, j), c in self.terms.items():
            sign = c if j % 2 == 0 else -c
            # d^i t^j = sum_k k! C(i,k) C(j,k) t^(j-k) d^(i-k)
            for k in range(min(i, j) + 1):
                coeff = sign * (factorial(k) * comb(i, k) * comb(j, k))
                ij = (j - k, i - k)
                out[ij] = out[ij] + coeff if ij in out else coeff
        return WeylOperator(self.field, out)

    def negate_generators(self):
        """t -> -t, d -> -d."""
        return WeylOperator(self.field,
                            {ij: (c if (ij[0] + ij[1]) % 2 == 0 else -c)
                             for ij, c in self.terms.items()})

    def shift_t(self, x):
        """t -> t + x, exact."""
        x = self.field.elem(x)
        out = {}
        for (i, j), c in self.terms.items():
            for k in range(i + 1):
                coeff = c * comb(i, k) * x ** (i - k)
                ij = (k, j)
                out[ij] = out[ij] + coeff if ij in out else coeff
        return WeylOperator(self.field, out)

    def apply_to_poly(self, p):
        """Act on a polynomial (degree -> element map); the test oracle."""
        out = {}
        for (i, j), c in self.terms.items():
            for deg, pc in p.items():
                if deg < j:
                    continue
                fall = 1
                for s in range(j):
                    fall *= deg - s
                v = c * pc * fall
                d = deg - j + i
                out[d] = out[d] + v if d in out else v
        return {d: v for d, v in out.items() if not v.is_zero()}

    def to_str(self, tvar="t", dvar="D"):
        if not self.terms:
            return "0"
        parts = []
        for (i, j) in sorted(self.terms, key=lambda ij: (-ij[1], -ij[0])):
            c = self.terms[(i, j)]
            s = c.to_str()
            if "+" in s or "-" in s[1:]:
                s = f"({s})"
            mono = ""
            if i:
                mono += tvar + (f"^{i}" if i > 1 else "")
            if j:
                mono += ("*" if mono else "") + dvar + (f"^{j}" if j > 1 else "")
            if not mono:
                parts.append(s)
            elif s == "1":
                parts.append(mono)
            elif s == "-1":
                parts.append("-" + mono)
            else:
                parts.append(f"{s}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    def __repr__(self):
        return self.to_str()


class LocalOperator:
    """Sum a_i(u) d_u^i with truncated series coefficients on one chart."""

    def __init__(self, coeffs):
        while coeffs and coeffs[-1].is_exact_zero():
            coeffs = coeffs[:-1]
        if not coeffs:
            raise ValueError("the zero local operator is not representable")
        self.coeffs = list(coeffs)
        self.field = coeffs[0].field
        self.e = coeffs[0].e

    @property
    def order(self):
        return len(self.coeffs) - 1

    def __mul__(self, other):
        """Composition: d^i b = sum_k C(i,k) b^(k) d^(i-k)."""
        field, e = self.field, self.e
        out = [RamifiedSeries.zero(field, e)
               for _ in range(self.order + other.order + 1)]
        for i, a in enumerate(self.coeffs):
            if a.is_exact_zero():
                continue
            for j, b in enumerate(other.coeffs):
                if b.is_exact_zero():
                    continue
                bder = b
                for k in range(i + 1):
                    term = a * bder * comb(i, k)
                    out[i - k + j] = out[i - k + j] + term
                    bder = bder.derive_u()
        return LocalOperator(out)

    def __add__(self, other):
        field, e = self.field, self.e
        n = max(self.order, other.order) + 1
        out = []
        for i in range(n):
            a = self.coeffs[i] if i <= self.order else RamifiedSeries.zero(field, e)
            b = other.coeffs[i] if i <= other.order else RamifiedSeries.zero(field, e)
            out.append(a + b)
        return LocalOperator(out)

    def scale(self, s):
        return LocalOperator([c * s for c in self.coeffs])

    def apply(self, v):
        out = RamifiedSeries.zero(self.field, self.e)
        der = v
        for a in self.coeffs:
            out = out + a * der
            der = der.derive_u()
        return out

    def to_str(self, var="u", dvar="D"):
        parts = []
        for i, a in enumerate(self.coeffs):
            if a.is_provably_zero():
                continue
            head = f"({a.to_str(var)})"
            parts.append(head + (f"*{dvar}^{i}" if i > 1 else (f"*{dvar}" if i == 1 else "")))
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return self.to_str()


def poly_to_series(field, poly, point, hi=None):
    """Expand a t-polynomial (degree map) in the chart coordinate at point."""
    if point.at_infinity:
        # t = 1/z
        return RamifiedSeries(field, 1, {-i: c for i, c in poly.items()})
    x = point.x
    if x is None or x.is_zero():
        return RamifiedSeries(field, 1, dict(poly))
    # t = x + u
    out = {}
    for i, c in poly.items():
        for k in range(i + 1):
            v = c * comb(i, k) * x ** (i - k)
            out[k] = out[k] + v if k in out else v
    return RamifiedSeries(field, 1, out)


def localize(L, point):
    """Express a Weyl operator on the chart at point as a LocalOperator.

    At a finite x the coordinate is u = t - x and d_t = d_u; at infinity
    t = 1/z and d_t = -z^2 d_z, so powers renormal-order on the chart.
    """
    field = L.field
    if L.is_zero():
        raise ZeroOperator("cannot localize the zero operator")
    if not point.at_infinity:
        Lx = L.shift_t(point.x) if point.x is not None and not point.x.is_zero() else L
        n = Lx.order
        coeffs = [RamifiedSeries(field, 1, Lx.coeff_poly(j)) for j in range(n + 1)]
        return LocalOperator(coeffs)
    # chart at infinity
    minus_z2 = RamifiedSeries(field, 1, {2: -1})
    D = LocalOperator([RamifiedSeries.zero(field, 1), minus_z2])
    dpow = [LocalOperator([RamifiedSeries.one(field, 1)])]
    for _ in range(L.order):
        dpow.append(dpow[-1] * D)
    acc = None
    for j in range(L.order + 1):
        poly = L.coeff_poly(j)
        if not poly:
            continue
        pz = poly_to_series(field, poly, point)
        term = dpow[j].scale(pz)
        acc = term if acc is None else acc + term
    return acc


def companion(L, point=None, field=None, prec_hi=40):
    """Realize D/DL as a raw connection at a chart point.

    Basis puts the cyclic vector last: basis_j = d^(n-1-j) e, so
    d(basis_j) = basis_(j-1) for j >= 1 and the leading column carries
    -a_i/a_n.  Solutions-of-L convention throughout.
    """
    field = field or L.field
    point = point or Point.finite(field.zero)
    loc = localize(L, point)
    n = loc.order
    if n < 1:
        raise ZeroOperator("operator must have positive order")
    an = loc.coeffs[n]
    if an.is_provably_zero():
        raise ZeroOperator("leading coefficient vanishes at this precision")
    w = an.valuation()
    an_inv = an.inverse(hi=prec_hi + abs(w) + 2) if (an.exact and len(an.c) > 1) \
        else an.inverse()
    zero = RamifiedSeries.zero(field, 1)
    A = [[zero for _ in range(n)] for _ in range(n)]
    for j in range(1, n):
        A[j - 1][j] = RamifiedSeries.one(field, 1)
    for i in range(n):
        A[n - 1 - i][0] = -(loc.coeffs[i] * an_inv)
    return FormalConnection.raw(point, field, A, e=1)
