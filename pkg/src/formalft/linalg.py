"""Exact linear algebra used across the engine.

Three layers:

* constant matrices over a CoeffField (row reduction, kernels, characteristic
  polynomials, integer eigen-data);
* matrices of RamifiedSeries (products, inverses and determinants with
  valuation pivoting, truncated Smith normal form over k[[u]]);
* a banded solver for truncated connection systems v' + A v = rhs, returning
  the affine space of truncated solutions with certified digits.

Windows propagate through every step, so a reported digit is always provable.
"""

from __future__ import annotations

from fractions import Fraction
from math import inf

from .coeff import FieldElement, RamifiedSeries
from .errors import HorizontalSectionExists, NotStabilized, PrecisionExhausted

Q = Fraction


# ---------------------------------------------------------------------------
# constant matrices over a CoeffField (lists of lists of FieldElement)
# ---------------------------------------------------------------------------

def fmat(field, rows):
    return [[field.elem(x) for x in row] for row in rows]


def fmat_id(field, n):
    return [[field.one if i == j else field.zero for j in range(n)] for i in range(n)]


def fmat_mul(field, A, B):
    n, m, p = len(A), len(B), len(B[0]) if B else 0
    out = [[field.zero] * p for _ in range(n)]
    for i in range(n):
        for k in range(m):
            a = A[i][k]
            if a.is_zero():
                continue
            for j in range(p):
                if not B[k][j].is_zero():
                    out[i][j] = out[i][j] + a * B[k][j]
    return out


def fmat_rref(field, rows, ncols):
    """Reduced row echelon form; returns (reduced rows, pivot columns)."""
    rows = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        pr = None
        for i in range(r, len(rows)):
            if not rows[i][c].is_zero():
                pr = i
                break
        if pr is None:
            continue
        rows[r], rows[pr] = rows[pr], rows[r]
        inv = rows[r][c].inverse()
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and not rows[i][c].is_zero():
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


def fmat_rank(field, rows, ncols):
    return len(fmat_rref(field, rows, ncols)[1])


def fmat_kernel(field, A, ncols):
    """Basis of the right kernel of A (rows of length ncols)."""
    red, pivots = fmat_rref(field, A, ncols)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        v = [field.zero] * ncols
        v[fc] = field.one
        for r, pc in enumerate(pivots):
            v[pc] = -red[r][fc]
        basis.append(v)
    return basis


def fmat_solve(field, A, b):
    """One solution x of A x = b, or None when inconsistent."""
    n = len(A)
    ncols = len(A[0]) if A else 0
    aug = [list(A[i]) + [b[i]] for i in range(n)]
    red, pivots = fmat_rref(field, aug, ncols + 1)
    if ncols in pivots:
        return None
    x = [field.zero] * ncols
    for r, pc in enumerate(pivots):
        x[pc] = red[r][ncols]
    return x


def fmat_inverse(field, A):
    n = len(A)
    aug = [list(A[i]) + list(fmat_id(field, n)[i]) for i in range(n)]
    red, pivots = fmat_rref(field, aug, 2 * n)
    if pivots[:n] != list(range(n)):
        raise ValueError("matrix not invertible")
    return [row[n:] for row in red[:n]]


def fmat_charpoly(field, A):
    """Characteristic polynomial det(xI - A), lowest degree first.

    Faddeev-LeVerrier; exact in any characteristic-zero field.
    """
    n = len(A)
    coeffs = [field.zero] * (n + 1)
    coeffs[n] = field.one
    M = fmat_id(field, n)
    c = field.one
    for k in range(1, n + 1):
        AM = fmat_mul(field, A, M)
        tr = field.zero
        for i in range(n):
            tr = tr + AM[i][i]
        c = -(tr / k)
        coeffs[n - k] = c
        M = [[AM[i][j] + (c if i == j else field.zero) for j in range(n)] for i in range(n)]
    return coeffs


def _divisors(n):
    n = abs(n)
    out = set()
    d = 1
    while d * d <= n:
        if n % d == 0:
            out.add(d)
            out.add(n // d)
        d += 1
    return sorted(out)


def poly_eval(field, poly, x):
    acc = field.zero
    for c in reversed(poly):
        acc = acc * x + c
    return acc


def poly_div_linear(field, poly, root):
    """Divide poly by (x - root); poly must vanish at root."""
    n = len(poly) - 1
    out = [field.zero] * n
    carry = field.zero
    for i in range(n - 1, -1, -1):
        carry = poly[i + 1] + carry * root
        out[i] = carry
    return out


def integer_roots(field, poly):
    """Integer roots with multiplicity of a monic polynomial over the field.

    Any integer root is a root of the rational component-0 polynomial, which
    is monic, so the rational root theorem lists all candidates.
    """
    poly = list(poly)
    roots = []
    while len(poly) > 1 and poly[0].is_zero():
        roots.append(0)
        poly = poly[1:]
    if len(poly) <= 1:
        return roots
    comp0 = [c.c[0] for c in poly]
    den = 1
    for c in comp0:
        den = den * c.denominator // _gcd_int(den, c.denominator)
    ints = [int(c * den) for c in comp0]
    cands = set()
    if ints[0] != 0:
        for d in _divisors(ints[0]):
            cands.update((d, -d))
    for r in sorted(cands, key=lambda x: (abs(x), x)):
        fr = field.elem(r)
        while len(poly) > 1 and poly_eval(field, poly, fr).is_zero():
            roots.append(r)
            poly = poly_div_linear(field, poly, fr)
    return sorted(roots)


def _gcd_int(a, b):
    while b:
        a, b = b, a % b
    return abs(a) if a else abs(b)


def rational_roots(field, poly):
    """Rational roots (with multiplicity) of a polynomial over the field."""
    poly = list(poly)
    while poly and poly[-1].is_zero():
        poly.pop()
    if len(poly) <= 1:
        return []
    roots = []
    while len(poly) > 1 and poly[0].is_zero():
        roots.append(Q(0))
        poly = poly[1:]
    if len(poly) <= 1:
        return roots
    comp0 = [c.c[0] for c in poly]
    if all(c == 0 for c in comp0):
        # no constraint from component 0; fall back to component with content
        for j in range(1, field.degree):
            comp0 = [c.c[j] for c in poly]
            if any(c != 0 for c in comp0):
                break
    den = 1
    for c in comp0:
        den = den * c.denominator // _gcd_int(den, c.denominator)
    ints = [int(c * den) for c in comp0]
    lead = ints[-1] if ints[-1] != 0 else den
    cands = {Q(0)} if ints[0] == 0 else set()
    if ints[0] != 0:
        for p in _divisors(ints[0]):
            for q in _divisors(lead):
                cands.update((Q(p, q), Q(-p, q)))
    for r in sorted(cands, key=lambda x: (abs(x), x)):
        fr = field.elem(r)
        while len(poly) > 1 and poly_eval(field, poly, fr).is_zero():
            roots.append(r)
            poly = poly_div_linear(field, poly, fr)
    return roots


def integer_eigen_blocks(field, C):
    """Integer eigen-structure of a constant matrix.

    Returns (blocks, rest) where blocks is a list of
    (lambda, generalized eigenspace basis, plain eigenspace basis) for each
    integer eigenvalue lambda, and rest is a basis of the invariant
    complement.  Exact; never needs non-integer eigenvalues.
    """
    n = len(C)
    lams = sorted(set(integer_roots(field, fmat_charpoly(field, C))))
    blocks = []
    proj = fmat_id(field, n)
    for lam in lams:
        Cl = [[C[i][j] - (field.elem(lam) if i == j else field.zero) for j in range(n)]
              for i in range(n)]
        P = fmat_id(field, n)
        for _ in range(n):
            P = fmat_mul(field, P, Cl)
        gen = fmat_kernel(field, P, n)
        eig = fmat_kernel(field, Cl, n)
        blocks.append((lam, gen, eig))
        proj = fmat_mul(field, proj, P)
    # invariant complement: column space of the product of (C - lam)^n
    cols = [[proj[i][j] for i in range(n)] for j in range(n)]
    red, pivots = fmat_rref(field, cols, n)
    rest = [red[r] for r in range(len(pivots))]
    return blocks, rest


# ---------------------------------------------------------------------------
# series matrices (lists of lists of RamifiedSeries over one field and cover)
# ---------------------------------------------------------------------------

def smat_id(field, n, e=1):
    one = RamifiedSeries.one(field, e)
    zero = RamifiedSeries.zero(field, e)
    return [[one if i == j else zero for j in range(n)] for i in range(n)]


def smat_zero(field, n, m=None, e=1):
    m = n if m is None else m
    zero = RamifiedSeries.zero(field, e)
    return [[zero for _ in range(m)] for _ in range(n)]


def smat_from_const(field, C, e=1):
    return [[RamifiedSeries(field, e, {0: x}) for x in row] for row in C]


def smat_add(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def smat_neg(A):
    return [[-a for a in row] for row in A]


def smat_scale(A, s):
    return [[a * s for a in row] for row in A]


def smat_mul(A, B):
    n, m = len(A), len(B)
    p = len(B[0])
    field = A[0][0].field
    e = A[0][0].e
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            acc = RamifiedSeries.zero(field, e)
            for k in range(m):
                acc = acc + A[i][k] * B[k][j]
            row.append(acc)
        out.append(row)
    return out


def smat_vec(A, v):
    field = v[0].field
    e = v[0].e
    out = []
    for i in range(len(A)):
        acc = RamifiedSeries.zero(field, e)
        for k in range(len(v)):
            acc = acc + A[i][k] * v[k]
        out.append(acc)
    return out


def smat_transpose(A):
    return [list(col) for col in zip(*A)]


def smat_truncate(A, hi):
    return [[a.truncate(hi) for a in row] for row in A]


def smat_derive_u(A):
    return [[a.derive_u() for a in row] for row in A]


def smat_map(A, f):
    return [[f(a) for a in row] for row in A]


def smat_min_lo(A):
    return min(a.lo for row in A for a in row)


def smat_min_hi(A):
    return min(a._hi() for row in A for a in row)


def smat_agrees(A, B, hi=None):
    return all(a.agrees_with(b, hi=hi) for ra, rb in zip(A, B) for a, b in zip(ra, rb))


def kron(A, B):
    """Kronecker product of series matrices."""
    n, m = len(A), len(A[0])
    p, q = len(B), len(B[0])
    out = []
    for i in range(n):
        for k in range(p):
            row = []
            for j in range(m):
                for l in range(q):
                    row.append(A[i][j] * B[k][l])
            out.append(row)
    return out


def _pivot_entry(A, rows, cols):
    """Position of the entry with minimal certified valuation, or None."""
    best = None
    best_val = None
    undecided = False
    for i in rows:
        for j in cols:
            a = A[i][j]
            v = a.valuation()
            if v is None:
                if not a.exact:
                    undecided = True
                continue
            if best_val is None or v < best_val:
                best_val = v
                best = (i, j)
    return best, best_val, undecided


def _inv_series(s, order):
    if s.exact and len(s.c) > 1:
        if order is None:
            raise ValueError("need an explicit working order to invert an exact series")
        return s.inverse(hi=order)
    return s.inverse()


def smat_inverse(A, order=None):
    """Inverse of a square series matrix by valuation-pivoted Gauss-Jordan.

    Works on whatever windows the entries carry; the result's windows state
    exactly which digits are certified.  order bounds the expansion of exact
    non-monomial pivots.
    """
    n = len(A)
    M = [list(row) for row in A]
    field = M[0][0].field
    e = M[0][0].e
    B = smat_id(field, n, e)
    for col in range(n):
        best, best_val, undecided = _pivot_entry(M, range(col, n), [col])
        if best is None:
            if undecided:
                raise PrecisionExhausted("cannot certify a pivot while inverting")
            raise ValueError("series matrix is singular")
        i = best[0]
        M[col], M[i] = M[i], M[col]
        B[col], B[i] = B[i], B[col]
        inv = _inv_series(M[col][col], order)
        M[col] = [x * inv for x in M[col]]
        B[col] = [x * inv for x in B[col]]
        for r in range(n):
            if r != col and M[r][col].c:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
                B[r] = [x - f * y for x, y in zip(B[r], B[col])]
    return B


def smat_det(A, order=None):
    """Determinant by valuation-pivoted elimination."""
    n = len(A)
    M = [list(row) for row in A]
    field = M[0][0].field
    e = M[0][0].e
    det = RamifiedSeries.one(field, e)
    sign = 1
    for col in range(n):
        best, _, undecided = _pivot_entry(M, range(col, n), [col])
        if best is None:
            if undecided:
                raise PrecisionExhausted("cannot certify a pivot in determinant")
            return RamifiedSeries.zero(field, e)
        i = best[0]
        if i != col:
            M[col], M[i] = M[i], M[col]
            sign = -sign
        piv = M[col][col]
        det = det * piv
        inv = _inv_series(piv, order)
        for r in range(col + 1, n):
            if M[r][col].c:
                f = M[r][col] * inv
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return det if sign == 1 else -det


def snf_truncated(A, order):
    """Smith normal form over k[[u]] at working order.

    Returns (P, Pinv, dvals) with P * A * (column ops) = diag(u^d) up to
    the working order, i.e. A = Pinv * diag(u^d) * R for unit matrices
    Pinv, R.  Only the row transform is returned; it is what lattice
    quotient bookkeeping needs.  dvals may contain inf for a provably zero
    diagonal entry of an exact input.
    """
    n = len(A)
    field = A[0][0].field
    e = A[0][0].e
    M = [[a.truncate(order) if not a.exact else a for a in row] for row in A]
    P = smat_id(field, n, e)
    Pinv = smat_id(field, n, e)
    dvals = [None] * n
    for p in range(n):
        best, best_val, undecided = _pivot_entry(M, range(p, n), range(p, n))
        if best is None:
            if undecided:
                raise PrecisionExhausted("SNF pivot not certifiable at this order")
            for q in range(p, n):
                dvals[q] = inf
            break
        i, j = best
        if i != p:
            M[p], M[i] = M[i], M[p]
            P[p], P[i] = P[i], P[p]
            # mirror on Pinv columns
            for r in range(n):
                Pinv[r][p], Pinv[r][i] = Pinv[r][i], Pinv[r][p]
        if j != p:
            for r in range(n):
                M[r][p], M[r][j] = M[r][j], M[r][p]
        d = best_val
        unit = M[p][p].shift(-d)
        scale = unit.inverse(hi=order)
        M[p] = [x * scale for x in M[p]]          # row p now has u^d at (p,p)
        P[p] = [x * scale for x in P[p]]
        for r in range(n):
            Pinv[r][p] = Pinv[r][p] * unit
        for r in range(p + 1, n):
            if M[r][p].c:
                f = M[r][p].shift(-d)             # nonnegative valuation
                M[r] = [x - f * y for x, y in zip(M[r], M[p])]
                P[r] = [x - f * y for x, y in zip(P[r], P[p])]
                for q in range(n):
                    Pinv[q][p] = Pinv[q][p] + Pinv[q][r] * f
        for cidx in range(p + 1, n):
            if M[p][cidx].c:
                g = M[p][cidx].shift(-d)
                for r in range(n):
                    M[r][cidx] = M[r][cidx] - M[r][p] * g
        dvals[p] = d
    return P, Pinv, dvals


def lattice_index(A, order):
    """Sum of SNF diagonal valuations: dim of coker(A) on k[[u]]-columns."""
    _, _, dvals = snf_truncated(A, order)
    if any(d == inf for d in dvals):
        raise ValueError("matrix not of full rank over k((u))")
    return sum(dvals)


# ---------------------------------------------------------------------------
# banded solver for truncated connection systems
# ---------------------------------------------------------------------------

class TruncatedSolutions:
    """Affine space of truncated solutions of v' + A v = rhs on [lo, hi).

    Coordinates are affine functions of free parameters; a digit is
    certified when it does not depend on any free parameter (for solves) or
    spans the stated kernel (for homogeneous systems).
    """

    def __init__(self, field, e, n, lo, hi, exprs, frees, feasible):
        self.field = field
        self.e = e
        self.n = n
        self.lo = lo
        self.hi = hi
        self.exprs = exprs          # per unknown idx: dict {param or None: coeff}
        self.frees = frees          # ordered free unknown indices
        self.feasible = feasible

    def _idx(self, j, comp):
        return (j - self.lo) * self.n + comp

    @property
    def dim(self):
        return len(self.frees)

    def vector(self, assignment, hi=None):
        """Concrete solution vector for a parameter assignment."""
        hi = self.hi if hi is None else min(hi, self.hi)
        out = []
        for comp in range(self.n):
            coeffs = {}
            for j in range(self.lo, hi):
                expr = self.exprs[self._idx(j, comp)]
                val = expr.get(None, self.field.zero)
                for p, c in expr.items():
                    if p is not None:
                        val = val + c * assignment.get(p, self.field.zero)
                if not val.is_zero():
                    coeffs[j] = val
            out.append(RamifiedSeries(self.field, self.e, coeffs, lo=self.lo, hi=hi))
        return out

    def kernel_vectors(self, hi=None):
        vecs = []
        for p in self.frees:
            vecs.append(self.vector({p: self.field.one}, hi=hi))
        return vecs

    def particular(self, hi=None):
        if not self.feasible:
            return None
        return self.vector({}, hi=hi)

    def certified_hi(self):
        """Largest h such that no digit below h depends on a free parameter."""
        h = self.hi
        for comp in range(self.n):
            for j in range(self.lo, self.hi):
                expr = self.exprs[self._idx(j, comp)]
                if any(p is not None for p in expr):
                    h = min(h, j)
                    break
        return h

    def param_to_window_matrix(self, lo, hi):
        """Rows: window digits; columns: free parameters (homogeneous part)."""
        rows = []
        for comp in range(self.n):
            for j in range(lo, hi):
                if j < self.lo or j >= self.hi:
                    continue
                expr = self.exprs[self._idx(j, comp)]
                rows.append([expr.get(p, self.field.zero) for p in self.frees])
        return rows

    def projected_dim(self, lo, hi):
        if not self.frees:
            return 0
        rows = self.param_to_window_matrix(lo, hi)
        return fmat_rank(self.field, rows, len(self.frees))

    def projected_basis_params(self, lo, hi):
        """Free parameters whose images span the projection onto the window."""
        if not self.frees:
            return []
        rows = self.param_to_window_matrix(lo, hi)
        _, pivots = fmat_rref(self.field, rows, len(self.frees))
        return [self.frees[c] for c in pivots]


def solve_connection_system(A, rhs, lo, hi):
    """All truncated v on [lo, hi) with v' + A v = rhs on the provable window.

    A is an n x n series matrix in du-units; rhs is a vector of series or
    None for the homogeneous problem.  Only constraints whose every
    ingredient is certified are imposed.
    """
    n = len(A)
    field = A[0][0].field
    e = A[0][0].e
    a_lo = smat_min_lo(A)
    a_hi = smat_min_hi(A)
    r_lo = min(lo - 1, lo + a_lo)
    r_hi = min(hi - 1, (lo + a_hi) if a_hi != inf else inf, hi + a_lo)
    if rhs is not None:
        r_hi = min(r_hi, min(x._hi() for x in rhs))
        r_lo = min(r_lo, min(x.lo for x in rhs))
    if r_hi == inf:
        raise ValueError("system window must be finite")
    r_hi = int(r_hi)

    nunknown = (hi - lo) * n
    exprs = [None] * nunknown
    pivots = {}
    frees = []
    feasible = True

    def reduce_row(row, const):
        while row:
            top = max(row)
            if top not in pivots:
                return row, const
            prow, pconst = pivots[top]
            f = row[top]
            del row[top]
            for k, v in prow.items():
                if k in row:
                    nv = row[k] - f * v
                    if nv.is_zero():
                        del row[k]
                    else:
                        row[k] = nv
                elif not v.is_zero():
                    row[k] = -f * v
            const = const - f * pconst
        return row, const

    for r in range(r_lo, r_hi):
        for i in range(n):
            row = {}
            j = r + 1
            if lo <= j < hi and r + 1 != 0:
                row[(j - lo) * n + i] = field.elem(r + 1)
            elif lo <= j < hi:
                pass  # coefficient (r+1) = 0 contributes nothing
            for k in range(n):
                ser = A[i][k]
                if not ser.c:
                    continue
                for s, coeff in ser.c.items():
                    j = r - s
                    if lo <= j < hi:
                        idx = (j - lo) * n + k
                        row[idx] = row.get(idx, field.zero) + coeff
            row = {k: v for k, v in row.items() if not v.is_zero()}
            const = field.zero if rhs is None else rhs[i].known_coefficient(r) or field.zero
            row, const = reduce_row(row, const)
            if not row:
                if not const.is_zero():
                    feasible = False
                continue
            top = max(row)
            inv = row[top].inverse()
            del row[top]
            prow = {k: v * inv for k, v in row.items()}
            pivots[top] = (prow, const * inv)

    # back-substitute: ascending pivot order so lower pivots are resolved first
    for idx in range(nunknown):
        if idx in pivots:
            prow, pconst = pivots[idx]
            expr = {None: pconst}
            for k, c in prow.items():
                sub = exprs[k]
                for p, v in sub.items():
                    nv = expr.get(p, field.zero) - c * v
                    if nv.is_zero():
                        expr.pop(p, None)
                    else:
                        expr[p] = nv
            if None in expr and expr[None].is_zero() and len(expr) > 1:
                del expr[None]
            if not expr:
                expr = {None: field.zero}
            exprs[idx] = expr
        else:
            frees.append(idx)
            exprs[idx] = {idx: field.one}
    return TruncatedSolutions(field, e, n, lo, hi, exprs, frees, feasible)


def stabilized_kernel(A, lo, hi, report_hi, step=None, rounds=4):
    """Kernel of v' + A v certified by agreement on a reporting window.

    The projected dimension on [lo, report_hi) is monotone non-increasing in
    the working order; two consecutive agreements certify it.  Returns
    (dim, basis vectors truncated to report_hi).
    """
    n = len(A)
    step = step if step is not None else max(4, n)
    prev = None
    sols = None
    cur_hi = hi
    for _ in range(rounds):
        sols = solve_connection_system(A, None, lo, cur_hi)
        d = sols.projected_dim(lo, report_hi)
        if prev is not None and d == prev:
            params = sols.projected_basis_params(lo, report_hi)
            basis = [sols.vector({p: sols.field.one}, hi=report_hi) for p in params]
            return d, basis
        prev = d
        cur_hi += step
    raise NotStabilized("kernel dimension did not stabilize under escalation")


def solve_unique(A, rhs, lo, hi, need_hi, context=""):
    """Particular solution of v' + A v = rhs with digits certified to need_hi.

    The caller guarantees injectivity (no flat sections); any free parameter
    touching a digit below need_hi therefore signals insufficient precision.
    """
    sols = solve_connection_system(A, rhs, lo, hi)
    if not sols.feasible:
        raise PrecisionExhausted(f"no truncated solution{': ' + context if context else ''}")
    ch = sols.certified_hi()
    if ch < need_hi:
        raise PrecisionExhausted(
            f"solution certified only to order {ch} < {need_hi}"
            f"{': ' + context if context else ''}")
    return sols.particular(hi=need_hi)
