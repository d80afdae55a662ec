"""Exact scalar tower: rationals, one simple algebraic extension, and
truncated ramified Laurent series with explicit precision windows.

Everything here is exact.  A series knows on which exponent window
[lo, hi) its coefficients are certain; arithmetic only ever reports
digits inside the provable window, and windows shrink pessimistically
under multiplication and inversion.  A series with hi = None is exact
(a Laurent polynomial known everywhere).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import inf

from .errors import (
    IncompatibleRamification,
    NotAUnit,
    NotPolynomialTail,
    PrecisionExhausted,
)

Q = Fraction


# ---------------------------------------------------------------------------
# polynomial helpers over Q (dense tuples, lowest degree first)
# ---------------------------------------------------------------------------

def _poly_trim(p):
    while p and p[-1] == 0:
        p = p[:-1]
    return tuple(p)


def _poly_divmod(a, b):
    a = list(a)
    q = [Q(0)] * max(0, len(a) - len(b) + 1)
    inv = 1 / b[-1]
    for i in range(len(a) - len(b), -1, -1):
        f = a[i + len(b) - 1] * inv
        q[i] = f
        if f:
            for j, bj in enumerate(b):
                a[i + j] -= f * bj
    return _poly_trim(q), _poly_trim(a)


def _poly_gcd(a, b):
    a, b = _poly_trim(a), _poly_trim(b)
    while b:
        a, b = b, _poly_divmod(a, b)[1]
    return a


class CoeffField:
    """The ground field: Q, or Q[a]/(p) for a monic squarefree p of degree >= 2.

    Elements are FieldElement vectors in the power basis 1, a, ..., a^(d-1).
    """

    def __init__(self, extension=None):
        if extension is None:
            self.modulus = None
            self.degree = 1
        else:
            p = _poly_trim(tuple(Q(c) for c in extension))
            if len(p) < 3:
                raise ValueError("extension polynomial must have degree >= 2")
            if p[-1] != 1:
                raise ValueError("extension polynomial must be monic")
            g = _poly_gcd(p, _poly_trim([Q(i) * p[i] for i in range(1, len(p))]))
            if len(g) > 1:
                raise ValueError("extension polynomial must be squarefree")
            self.modulus = p
            self.degree = len(p) - 1
            # reduction table: a^k mod p for k = d .. 2d-2
            self._red = []
            d = self.degree
            cur = [-c for c in p[:-1]]  # a^d
            self._red.append(tuple(cur))
            for _ in range(d - 2):
                cur = [Q(0)] + cur
                top = cur.pop()
                if top:
                    cur = [cur[i] - top * p[i] for i in range(d)]
                self._red.append(tuple(cur))
        self._zero = None
        self._one = None

    @property
    def zero(self):
        if self._zero is None:
            self._zero = FieldElement(self, (Q(0),) * self.degree)
        return self._zero

    @property
    def one(self):
        if self._one is None:
            self._one = FieldElement(self, (Q(1),) + (Q(0),) * (self.degree - 1))
        return self._one

    def __eq__(self, other):
        return isinstance(other, CoeffField) and self.modulus == other.modulus

    def __hash__(self):
        return hash(self.modulus)

    def __repr__(self):
        if self.modulus is None:
            return "Q"
        return f"Q[a]/({_format_poly(self.modulus)})"

    def elem(self, x):
        """Coerce an int, Fraction or FieldElement into this field."""
        if isinstance(x, FieldElement):
            if x.field != self:
                if x.field.degree == 1:
                    return self.elem(x.c[0])
                raise IncompatibleRamification("element from a different field")
            return x
        v = (Q(x),) + (Q(0),) * (self.degree - 1)
        return FieldElement(self, v)

    def gen(self):
        if self.degree == 1:
            raise ValueError("the rational field has no generator")
        v = [Q(0)] * self.degree
        v[1] = Q(1)
        return FieldElement(self, tuple(v))

    def _mul(self, a, b):
        d = self.degree
        if d == 1:
            return (a[0] * b[0],)
        out = [Q(0)] * (2 * d - 1)
        for i, ai in enumerate(a):
            if ai:
                for j, bj in enumerate(b):
                    if bj:
                        out[i + j] += ai * bj
        res = out[:d]
        for k in range(d, 2 * d - 1):
            ck = out[k]
            if ck:
                red = self._red[k - d]
                for i in range(d):
                    if red[i]:
                        res[i] += ck * red[i]
        return tuple(res)

    def _inv(self, a):
        d = self.degree
        if d == 1:
            if a[0] == 0:
                raise ZeroDivisionError("division by zero field element")
            return (1 / a[0],)
        # extended Euclid in Q[x] against the modulus
        r0, r1 = self.modulus, _poly_trim(a)
        if not r1:
            raise ZeroDivisionError("division by zero field element")
        s0, s1 = (), (Q(1),)
        while len(r1) > 1:
            q, r = _poly_divmod(r0, r1)
            s = _poly_sub(s0, _poly_mul(q, s1))
            r0, r1, s0, s1 = r1, r, s1, s
        c = 1 / r1[0]
        out = [ci * c for ci in s1] + [Q(0)] * d
        return tuple(out[:d])


def _poly_mul(a, b):
    if not a or not b:
        return ()
    out = [Q(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] += ai * bj
    return _poly_trim(out)


def _poly_sub(a, b):
    n = max(len(a), len(b))
    return _poly_trim([(a[i] if i < len(a) else Q(0)) - (b[i] if i < len(b) else Q(0))
                       for i in range(n)])


def _format_poly(p, var="a"):
    terms = []
    for i in range(len(p) - 1, -1, -1):
        c = p[i]
        if not c:
            continue
        if i == 0:
            terms.append(str(c))
        else:
            head = "" if c == 1 else ("-" if c == -1 else str(c) + "*")
            terms.append(f"{head}{var}" + (f"^{i}" if i > 1 else ""))
    return " + ".join(terms).replace("+ -", "- ") if terms else "0"


RATIONALS = CoeffField()


class FieldElement:
    """An element of a CoeffField, stored in the power basis."""

    __slots__ = ("field", "c")

    def __init__(self, field, c):
        self.field = field
        self.c = c

    def __add__(self, other):
        other = self.field.elem(other)
        return FieldElement(self.field, tuple(x + y for x, y in zip(self.c, other.c)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self.field.elem(other)
        return FieldElement(self.field, tuple(x - y for x, y in zip(self.c, other.c)))

    def __rsub__(self, other):
        return self.field.elem(other) - self

    def __neg__(self):
        return FieldElement(self.field, tuple(-x for x in self.c))

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            q = Q(other)
            return FieldElement(self.field, tuple(x * q for x in self.c))
        other = self.field.elem(other)
        return FieldElement(self.field, self.field._mul(self.c, other.c))

    __rmul__ = __mul__

    def inverse(self):
        return FieldElement(self.field, self.field._inv(self.c))

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            q = Q(other)
            return FieldElement(self.field, tuple(x / q for x in self.c))
        return self * self.field.elem(other).inverse()

    def __rtruediv__(self, other):
        return self.field.elem(other) / self

    def __pow__(self, n):
        if n < 0:
            return self.inverse() ** (-n)
        out = self.field.one
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def is_zero(self):
        return all(x == 0 for x in self.c)

    def is_rational(self):
        return all(x == 0 for x in self.c[1:])

    def as_fraction(self):
        if not self.is_rational():
            raise ValueError("element is not rational")
        return self.c[0]

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.field.elem(other)
        return isinstance(other, FieldElement) and self.field == other.field and self.c == other.c

    def __hash__(self):
        return hash((self.field, self.c))

    def __repr__(self):
        return self.to_str()

    def to_str(self, gen="a"):
        if self.is_rational():
            return str(self.c[0])
        return _format_poly(self.c, gen)


@dataclass(frozen=True)
class Precision:
    """Working u-adic order, requested output order, and escalation cap."""

    t_prec: int = 24
    out_prec: int = 6
    max_escalations: int = 6

    def __post_init__(self):
        if not (self.t_prec >= self.out_prec >= 1):
            raise ValueError("need t_prec >= out_prec >= 1")

    def escalated(self):
        return Precision(2 * self.t_prec, self.out_prec, self.max_escalations)


DEFAULT_PRECISION = Precision()


class RamifiedSeries:
    """Truncated Laurent series in u with u^e = t and exact coefficients.

    Coefficients are certain on the window [lo, hi) of u-exponents and the
    series is known to vanish below lo.  hi = None marks an exact Laurent
    polynomial.  Values are immutable; every operation is a pure function.
    """

    __slots__ = ("field", "e", "c", "lo", "hi")

    def __init__(self, field, e, coeffs, lo=None, hi=None):
        if e < 1:
            raise ValueError("ramification index must be >= 1")
        c = {}
        for k, v in coeffs.items():
            v = field.elem(v)
            if not v.is_zero():
                c[k] = v
        if hi is not None:
            for k in c:
                if k >= hi:
                    raise ValueError("stored exponent outside window")
        if lo is None:
            lo = min(c) if c else (0 if hi is None else hi)
        if c and min(c) < lo:
            raise ValueError("stored exponent below window")
        if hi is not None and lo > hi:
            lo = hi
        self.field = field
        self.e = e
        self.c = c
        self.lo = lo
        self.hi = hi

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(field, e=1):
        return RamifiedSeries(field, e, {})

    @staticmethod
    def one(field, e=1):
        return RamifiedSeries(field, e, {0: field.one})

    @staticmethod
    def monomial(field, coeff, exp, e=1):
        return RamifiedSeries(field, e, {exp: coeff})

    @staticmethod
    def unknown(field, e=1, lo=0):
        """A series about which nothing is known beyond vanishing below lo."""
        return RamifiedSeries(field, e, {}, lo=lo, hi=lo)

    # -- window bookkeeping --------------------------------------------------

    @property
    def exact(self):
        return self.hi is None

    def _hi(self):
        return inf if self.hi is None else self.hi

    def is_provably_zero(self):
        """No nonzero digit anywhere on the known window."""
        return not self.c

    def is_exact_zero(self):
        return self.exact and not self.c

    def coefficient(self, k):
        """The exact coefficient of u^k; raises if k is beyond the window."""
        if k >= self._hi():
            raise PrecisionExhausted(f"coefficient of u^{k} beyond window")
        return self.c.get(k, self.field.zero)

    def known_coefficient(self, k):
        """Like coefficient() but returns None instead of raising."""
        if k >= self._hi():
            return None
        return self.c.get(k, self.field.zero)

    def valuation(self):
        """Certified u-valuation: smallest exponent with a nonzero digit.

        Returns None for a series that is provably zero on its window; use
        is_exact_zero() to distinguish the exact zero.
        """
        return min(self.c) if self.c else None

    def truncate(self, hi):
        if self.hi is not None and self.hi <= hi:
            return self
        return RamifiedSeries(self.field, self.e,
                              {k: v for k, v in self.c.items() if k < hi},
                              lo=min(self.lo, hi), hi=hi)

    def support(self):
        return sorted(self.c)

    # -- ring operations -----------------------------------------------------

    def _check(self, other):
        if self.e != other.e:
            raise IncompatibleRamification(
                f"ramification indices {self.e} and {other.e}; lift to a common cover first")
        if self.field != other.field:
            raise IncompatibleRamification("series over different coefficient fields")

    def __add__(self, other):
        if isinstance(other, (int, Fraction, FieldElement)):
            other = RamifiedSeries(self.field, self.e, {0: other})
        self._check(other)
        if self.is_exact_zero():
            return other
        if other.is_exact_zero():
            return self
        hi = None if (self.exact and other.exact) else min(self._hi(), other._hi())
        lo = min(self.lo, other.lo)
        c = dict(self.c)
        for k, v in other.c.items():
            c[k] = c[k] + v if k in c else v
        if hi is not None:
            c = {k: v for k, v in c.items() if k < hi}
        return RamifiedSeries(self.field, self.e, c, lo=lo, hi=hi)

    __radd__ = __add__

    def __neg__(self):
        return RamifiedSeries(self.field, self.e, {k: -v for k, v in self.c.items()},
                              lo=self.lo, hi=self.hi)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction, FieldElement)):
            other = RamifiedSeries(self.field, self.e, {0: other})
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, FieldElement)):
            v = self.field.elem(other)
            if v.is_zero():
                return RamifiedSeries.zero(self.field, self.e)
            return RamifiedSeries(self.field, self.e,
                                  {k: c * v for k, c in self.c.items()},
                                  lo=self.lo, hi=self.hi)
        self._check(other)
        if self.is_exact_zero() or other.is_exact_zero():
            return RamifiedSeries.zero(self.field, self.e)
        if self.exact and other.exact:
            hi = None
        else:
            hi = min(self._hi() + other.lo, other._hi() + self.lo)
            hi = None if hi == inf else hi
        lo = self.lo + other.lo
        c = {}
        for i, a in self.c.items():
            for j, b in other.c.items():
                k = i + j
                if hi is not None and k >= hi:
                    continue
                c[k] = c[k] + a * b if k in c else a * b
        return RamifiedSeries(self.field, self.e, c, lo=lo, hi=hi)

    __rmul__ = __mul__

    def shift(self, k):
        """Multiply by u^k."""
        return RamifiedSeries(self.field, self.e,
                              {i + k: v for i, v in self.c.items()},
                              lo=self.lo + k,
                              hi=None if self.exact else self.hi + k)

    def inverse(self, hi=None):
        """Multiplicative inverse on the largest provable window.

        For an exact non-monomial input, hi names the output order (the
        inverse is an infinite series).  Exact monomials invert exactly.
        """
        if not self.c:
            raise NotAUnit("no nonzero leading coefficient within the window")
        w = min(self.c)
        if len(self.c) == 1 and self.exact:
            return RamifiedSeries(self.field, self.e, {-w: self.c[w].inverse()})
        unit_len = self._hi() - w  # certain orders of the unit part
        if hi is not None:
            unit_len = min(unit_len, hi + w)
        if unit_len == inf:
            raise ValueError("inverse of an exact non-monomial needs an explicit order")
        unit_len = int(unit_len)
        if unit_len <= 0:
            raise NotAUnit("window too short to certify the unit part")
        c0 = self.c[w]
        inv0 = c0.inverse()
        out = {0: inv0}
        for k in range(1, unit_len):
            s = self.field.zero
            for j in range(1, k + 1):
                aj = self.c.get(w + j)
                if aj is not None and (k - j) in out:
                    s = s + aj * out[k - j]
            if not s.is_zero():
                out[k] = -(inv0 * s)
        return RamifiedSeries(self.field, self.e,
                              {k - w: v for k, v in out.items()},
                              lo=-w, hi=unit_len - w)

    def __pow__(self, n):
        if n < 0:
            return self.inverse() ** (-n)
        out = RamifiedSeries.one(self.field, self.e)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- calculus ------------------------------------------------------------

    def derive_u(self):
        c = {}
        for k, v in self.c.items():
            if k != 0:
                c[k - 1] = v * Q(k)
        return RamifiedSeries(self.field, self.e, c, lo=self.lo - 1,
                              hi=None if self.exact else self.hi - 1)

    def derive_t(self):
        """d/dt = (1/(e u^(e-1))) d/du; the window drops by one t-order."""
        e = self.e
        c = {}
        for k, v in self.c.items():
            if k != 0:
                c[k - e] = v * Q(k, e)
        return RamifiedSeries(self.field, self.e, c, lo=self.lo - e,
                              hi=None if self.exact else self.hi - e)

    def derive(self, wrt="u"):
        if wrt == "u":
            return self.derive_u()
        if wrt == "t":
            return self.derive_t()
        raise ValueError("wrt must be 'u' or 't'")

    # -- substitutions ---------------------------------------------------------

    def substitute_negate(self):
        """u -> -u."""
        c = {k: (v if k % 2 == 0 else -v) for k, v in self.c.items()}
        return RamifiedSeries(self.field, self.e, c, lo=self.lo, hi=self.hi)

    def substitute_shift(self, const, hi=None):
        """t -> t + c for e = 1.

        Re-centering needs the full tail, so the input must be an exact
        Laurent polynomial; negative powers expand to the requested order.
        """
        if self.e != 1:
            raise IncompatibleRamification("shift substitution requires e = 1")
        if not self.exact:
            raise NotPolynomialTail("shift substitution requires an exact Laurent polynomial")
        cval = self.field.elem(const)
        if cval.is_zero():
            return self
        field = self.field
        has_pole = any(k < 0 for k in self.c)
        if has_pole and hi is None:
            raise ValueError("shifting a pole needs an explicit output order")
        out = RamifiedSeries.zero(field)
        tpc = RamifiedSeries(field, 1, {0: cval, 1: field.one})  # t + c
        for k, v in sorted(self.c.items()):
            if k >= 0:
                out = out + (tpc ** k) * v
            else:
                inv = tpc.inverse(hi=hi + (-k - 1) + 1)
                out = out + (inv ** (-k)).truncate(hi) * v
        if has_pole:
            out = out.truncate(hi)
        return out

    def substitute_invert_chart(self):
        """t -> 1/z on an exact Laurent polynomial: exponents negate."""
        if not self.exact:
            raise NotPolynomialTail("chart inversion requires an exact Laurent polynomial")
        return RamifiedSeries(self.field, self.e, {-k: v for k, v in self.c.items()})

    def substitute(self, rule, const=None, hi=None):
        if rule == "negate_variable":
            return self.substitute_negate()
        if rule == "shift_by":
            return self.substitute_shift(const, hi=hi)
        if rule == "invert_chart":
            return self.substitute_invert_chart()
        raise ValueError(f"unknown substitution {rule!r}")

    def lift_ram(self, m):
        """Reinterpret over the cover v^m = u: exponents scale by m."""
        if m < 1:
            raise ValueError("lift factor must be >= 1")
        return RamifiedSeries(self.field, self.e * m,
                              {k * m: v for k, v in self.c.items()},
                              lo=self.lo * m,
                              hi=None if self.exact else self.hi * m)

    # -- comparisons and display -----------------------------------------------

    def agrees_with(self, other, lo=None, hi=None):
        """Equality of all digits on the common (or given) provable window."""
        self._check(other)
        wlo = max(self.lo, other.lo) if lo is None else lo
        whi = min(self._hi(), other._hi()) if hi is None else hi
        if whi == inf:
            keys = set(self.c) | set(other.c)
            return all(self.c.get(k, self.field.zero) == other.c.get(k, other.field.zero)
                       for k in keys)
        for k in range(wlo, int(whi)):
            if self.c.get(k, self.field.zero) != other.c.get(k, self.field.zero):
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, RamifiedSeries):
            return NotImplemented
        return (self.field == other.field and self.e == other.e
                and self.c == other.c and self.hi == other.hi)

    def __hash__(self):
        return hash((self.e, self.hi, tuple(sorted(self.c.items(), key=lambda kv: kv[0]))))

    def to_str(self, var=None):
        var = var or ("t" if self.e == 1 else "u")
        if not self.c:
            core = "0"
        else:
            parts = []
            for k in sorted(self.c):
                v = self.c[k]
                s = v.to_str()
                if "+" in s or ("-" in s[1:]):
                    s = f"({s})"
                if k == 0:
                    parts.append(s)
                else:
                    head = "" if s == "1" else ("-" if s == "-1" else s + "*")
                    parts.append(f"{head}{var}" + (f"^{k}" if k != 1 else ""))
            core = " + ".join(parts).replace("+ -", "- ")
        if self.exact:
            return core
        return f"{core} + O({var}^{self.hi})"

    def __repr__(self):
        return self.to_str()


def series(field, e=1, coeffs=None, lo=None, hi=None):
    """Convenience constructor used heavily by the catalog and tests."""
    return RamifiedSeries(field, e, coeffs or {}, lo=lo, hi=hi)
