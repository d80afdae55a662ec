"""Newton polygons, slopes, irregularity, cyclic vectors and slope
decomposition of formal connections.

The polygon of an operator sum a_i d^i collects the points
(i, ord_u(a_i) - i); module slopes are the positive slopes of the lower
convex hull (converted to t-units by dividing by the cover degree), and
whatever rank remains is regular singular, slope zero.
"""

from __future__ import annotations

from fractions import Fraction

from .coeff import Precision, RamifiedSeries
from .diffmod import ElementarySummand, FormalConnection, direct_sum, gauge, to_raw
from .errors import (
    CyclicSearchFailed,
    DecompositionNeedsExtension,
    NotGoodPair,
    PrecisionExhausted,
)
from .linalg import (
    fmat_id,
    fmat_inverse,
    fmat_kernel,
    fmat_mul,
    fmat_rref,
    smat_det,
    smat_from_const,
    smat_inverse,
    smat_min_lo,
    smat_mul,
    smat_vec,
)
from .weyl import LocalOperator, WeylOperator, localize

Q = Fraction


class NewtonPolygon:
    """Lower hull data of a local operator, with slopes in t-units."""

    def __init__(self, vertices, slopes, rank):
        self.vertices = vertices              # hull lattice points (i, w)
        self.slopes = dict(slopes)            # Fraction -> multiplicity
        self.rank = rank

    @property
    def irregularity(self):
        total = sum(s * m for s, m in self.slopes.items())
        if total.denominator != 1:
            raise ValueError("irregularity came out non-integral; polygon is inconsistent")
        return int(total)

    def single_slope(self):
        if len(self.slopes) != 1:
            return None
        return next(iter(self.slopes))

    def __repr__(self):
        body = ", ".join(f"{s}:{m}" for s, m in sorted(self.slopes.items()))
        return f"NewtonPolygon({{{body}}}, rank={self.rank})"


def _lower_hull(points):
    """Lower convex hull of integer points sorted by abscissa."""
    pts = sorted(points)
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point when it lies on or above the new chord
            if (y2 - y1) * (p[0] - x1) >= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def newton_polygon(op, point=None):
    """Polygon of a Weyl operator (localized at a finite point, default 0)
    or of a LocalOperator with series coefficients.

    Slopes are reported in t-units: hull slopes divide by the cover degree,
    multiplicities multiply by it.
    """
    if isinstance(op, WeylOperator):
        from .diffmod import Point
        op = localize(op, point or Point.finite(op.field.zero))
    e = op.e
    n = op.order
    points = []
    for i, a in enumerate(op.coeffs):
        if a.is_exact_zero():
            continue
        v = a.valuation()
        if v is None:
            # certified zero digits up to the window only; sound if the
            # implied point cannot dip below the hull of certified points
            points.append((i, a._hi() - i, True))
            continue
        points.append((i, v - i, False))
    certified = [(i, w) for (i, w, unsure) in points if not unsure]
    if not certified:
        raise PrecisionExhausted("no certified polygon points")
    hull = _lower_hull(certified)
    for (i, w, unsure) in points:
        if unsure and _below_hull(hull, i, w):
            raise PrecisionExhausted(f"coefficient of D^{i} not certified deep enough")
    slopes = {}
    total_pos = 0
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        s = Q(y2 - y1, x2 - x1)
        if s > 0:
            slopes[Q(s, e)] = slopes.get(Q(s, e), 0) + (x2 - x1) * e
            total_pos += (x2 - x1) * e
    rank = n * e
    if total_pos < rank:
        slopes[Q(0)] = slopes.get(Q(0), 0) + rank - total_pos
    return NewtonPolygon(hull, slopes, rank)


def _below_hull(hull, x, y):
    """Whether (x, y) lies strictly below the lower hull polyline."""
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        if x1 <= x <= x2 and x2 > x1:
            hy = y1 + Q(y2 - y1, x2 - x1) * (x - x1)
            if y < hy:
                return True
    if hull:
        if x < hull[0][0] and y < hull[0][1]:
            return True
        if x > hull[-1][0] and y < hull[-1][1]:
            return True
    return not hull


# ---------------------------------------------------------------------------
# cyclic vectors
# ---------------------------------------------------------------------------

CYCLIC_RANK_BOUND = 9


def _apply_nabla(A, v):
    return [x.derive_u() + y for x, y in zip(v, smat_vec(A, v))]


def _candidate_schedule(field, n, e):
    """Deterministic cyclic-vector candidates: sums c_j u^(d_j) e_j."""
    one = field.one

    def vec(entries):
        out = [RamifiedSeries.zero(field, e) for _ in range(n)]
        for j, (c, d) in entries.items():
            out[j] = RamifiedSeries(field, e, {d: c})
        return out

    for j in range(n):
        yield vec({j: (one, 0)})
    yield vec({j: (one, 0) for j in range(n)})
    for k in range(2, n):
        yield vec({j: (one, 0) for j in range(k)})
    for stride in (1, 2):
        yield vec({j: (one, j * stride) for j in range(n)})
    for r in (2, 3, 5):
        yield vec({j: (field.elem(r) ** j, 0) for j in range(n)})
        yield vec({j: (field.elem(r) ** j, j) for j in range(n)})


def cyclic_vector(M, prec=None):
    """A cyclic vector and the monic operator it satisfies.

    Certified by a nonvanishing Wronskian-type determinant of the iterated
    derivatives at working precision.  Returns (vector, LocalOperator).
    """
    prec = prec or Precision()
    M = M if M.is_raw else to_raw(M)
    n = M.rank
    if n > CYCLIC_RANK_BOUND:
        raise CyclicSearchFailed(f"rank {n} exceeds the configured bound {CYCLIC_RANK_BOUND}")
    A = M.matrix
    field = M.field
    if n == 1:
        v = [RamifiedSeries.one(field, M.e)]
        a0 = -A[0][0]
        return v, LocalOperator([a0, RamifiedSeries.one(field, M.e)])
    order = prec.t_prec
    for v in _candidate_schedule(field, n, M.e):
        iters = [v]
        for _ in range(n):
            iters.append(_apply_nabla(A, iters[-1]))
        W = [[iters[k][i] for k in range(n)] for i in range(n)]
        try:
            det = smat_det(W, order=order)
        except PrecisionExhausted:
            continue
        if det.is_provably_zero():
            if det.is_exact_zero():
                continue
            continue
        Winv = smat_inverse(W, order=order)
        c = smat_vec(Winv, iters[n])
        coeffs = [-ci for ci in c] + [RamifiedSeries.one(field, M.e)]
        return v, LocalOperator(coeffs)
    raise CyclicSearchFailed("deterministic candidate schedule exhausted")


# ---------------------------------------------------------------------------
# slopes and irregularity
# ---------------------------------------------------------------------------

def slopes(M, prec=None):
    """Slope multiset of the connection, in t-units.

    Structured forms read slopes off the summands; raw forms go through a
    cyclic vector and the operator polygon.  The two routes agree on every
    catalog module, which the test suite asserts.
    """
    if M.form == "structured":
        out = {}
        for s in M.summands:
            out[s.slope] = out.get(s.slope, 0) + s.rank
        return out
    _, L = cyclic_vector(M, prec)
    return newton_polygon(L).slopes


def irregularity(M, prec=None):
    if M.form == "structured":
        return sum(s.irregularity for s in M.summands)
    total = sum(s * m for s, m in slopes(M, prec).items())
    if total.denominator != 1:
        raise ValueError("non-integral irregularity from the polygon route")
    return int(total)


def max_slope(M, prec=None):
    return max(slopes(M, prec))


def has_single_slope(M, prec=None):
    return len(slopes(M, prec)) == 1


# ---------------------------------------------------------------------------
# slope decomposition
# ---------------------------------------------------------------------------

class SlopeDecomposition:
    """Parts of a connection grouped by slope relative to a cut."""

    def __init__(self, cut, parts):
        self.cut = cut
        self.parts = parts  # list of (label, FormalConnection)

    def part(self, label):
        for lab, M in self.parts:
            if lab == label:
                return M
        return None

    def __repr__(self):
        return f"SlopeDecomposition(cut={self.cut}, labels={[l for l, _ in self.parts]})"


def slope_decompose(M, cut, prec=None):
    """Split M into its slope <= cut and slope > cut parts.

    Structured inputs split exactly by summand.  Raw inputs are block
    diagonalized by successive approximation along the generalized kernel
    versus image of the leading matrix coefficient; this separates distinct
    polygon slope groups whenever the leading coefficient is not nilpotent.
    """
    prec = prec or Precision()
    cut = Q(cut)
    if M.form == "structured":
        le = [s for s in M.summands if s.slope <= cut]
        gt = [s for s in M.summands if s.slope > cut]
        parts = []
        if le:
            parts.append(("<=cut", FormalConnection.structured(M.point, M.field, le)))
        if gt:
            parts.append((">cut", FormalConnection.structured(M.point, M.field, gt)))
        return SlopeDecomposition(cut, parts)
    pieces = _split_raw(M, prec)
    le_parts, gt_parts = [], []
    for piece in pieces:
        piece_slopes = slopes(piece, prec)
        mx = max(piece_slopes)
        if mx <= cut:
            le_parts.append(piece)
        elif min(piece_slopes) > cut:
            gt_parts.append(piece)
        else:
            raise DecompositionNeedsExtension(
                "a slope group straddles the cut and cannot be separated over the field")
    parts = []
    if le_parts:
        acc = le_parts[0]
        for p in le_parts[1:]:
            acc = direct_sum(acc, p)
        parts.append(("<=cut", acc))
    if gt_parts:
        acc = gt_parts[0]
        for p in gt_parts[1:]:
            acc = direct_sum(acc, p)
        parts.append((">cut", acc))
    return SlopeDecomposition(cut, parts)


def _leading_coefficient(A, P):
    field = A[0][0].field
    n = len(A)
    return [[A[i][j].known_coefficient(-P) or field.zero for j in range(n)] for i in range(n)]


def _split_raw(M, prec, depth=0):
    """Recursive two-block splitting along ker vs image of the leading term."""
    A = M.matrix
    n = M.rank
    field = M.field
    P = M.pole_bound
    if n <= 1 or P <= 1:
        return [M]
    A0 = _leading_coefficient(A, P)
    Pn = fmat_id(field, n)
    for _ in range(n):
        Pn = fmat_mul(field, Pn, A0)
    ker = fmat_kernel(field, Pn, n)
    if not ker or len(ker) == n:
        sl = slopes(M, prec)
        if len(sl) == 1:
            return [M]
        raise DecompositionNeedsExtension(
            "nilpotent leading term with several slope groups; needs ramification")
    img_cols = [[Pn[i][j] for i in range(n)] for j in range(n)]
    red, piv = fmat_rref(field, img_cols, n)
    img = [red[r] for r in range(len(piv))]
    basis = [list(v) for v in img] + [list(v) for v in ker]
    G = [[basis[j][i] for j in range(n)] for i in range(n)]   # columns = basis
    Ginv = fmat_inverse(field, G)
    Mg = gauge(M, smat_from_const(field, G, e=M.e), Hinv=smat_from_const(field, Ginv, e=M.e))
    k = len(img)
    order = prec.t_prec
    H_total = None
    cur = Mg
    for step in range(1, order + P):
        B = cur.matrix
        off_order = -P + step
        R12 = [[B[i][j].known_coefficient(off_order) or field.zero
                for j in range(k, n)] for i in range(k)]
        R21 = [[B[i][j].known_coefficient(off_order) or field.zero
                for j in range(k)] for i in range(k, n)]
        if all(x.is_zero() for row in R12 for x in row) and \
           all(x.is_zero() for row in R21 for x in row):
            continue
        C = [[cur.matrix[i][j].known_coefficient(-P) or field.zero
              for j in range(k)] for i in range(k)]
        N = [[cur.matrix[i][j].known_coefficient(-P) or field.zero
              for j in range(k, n)] for i in range(k + 0, n)]
        X = _sylvester_invertible_nilpotent(field, C, N, R12, transpose=False)
        Y = _sylvester_invertible_nilpotent(field, C, N, R21, transpose=True)
        Hk = [[field.zero for _ in range(n)] for _ in range(n)]
        for i in range(k):
            for j in range(n - k):
                Hk[i][k + j] = X[i][j]
        for i in range(n - k):
            for j in range(k):
                Hk[k + i][j] = Y[i][j]
        Hmat = smat_from_const(field, fmat_id(field, n), e=M.e)
        for i in range(n):
            for j in range(n):
                if not Hk[i][j].is_zero():
                    Hmat[i][j] = Hmat[i][j] + RamifiedSeries(field, M.e, {step: Hk[i][j]})
        cur = gauge(cur, Hmat, order=order)
    B = cur.matrix
    top = [[B[i][j].truncate(order) if not B[i][j].exact else B[i][j]
            for j in range(k)] for i in range(k)]
    bot = [[B[k + i][k + j].truncate(order) if not B[k + i][k + j].exact else B[k + i][k + j]
            for j in range(n - k)] for i in range(n - k)]
    M1 = FormalConnection.raw(M.point, field, top, e=M.e)
    M2 = FormalConnection.raw(M.point, field, bot, e=M.e)
    return _split_raw(M1, prec, depth + 1) + _split_raw(M2, prec, depth + 1)


def _sylvester_invertible_nilpotent(field, C, N, R, transpose):
    """Solve C X - X N = R (or X C - N X = R when transpose) exactly.

    C is invertible on its generalized image block, N nilpotent; the
    solution is the finite geometric series in N.
    """
    k, m = len(C), len(N)
    if not transpose:
        # X = sum_s C^{-s-1} R N^s
        Cinv = fmat_inverse(field, C)
        out = [[field.zero] * m for _ in range(k)]
        term = fmat_mul(field, Cinv, R)
        for _ in range(m + 1):
            out = [[out[i][j] + term[i][j] for j in range(m)] for i in range(k)]
            term = fmat_mul(field, Cinv, fmat_mul(field, term, N))
            if all(x.is_zero() for row in term for x in row):
                break
        return out
    # X C - N X = R: X = sum_s N^s R C^{-s-1}
    Cinv = fmat_inverse(field, C)
    out = [[field.zero] * k for _ in range(m)]
    term = fmat_mul(field, R, Cinv)
    for _ in range(m + 1):
        out = [[out[i][j] + term[i][j] for j in range(k)] for i in range(m)]
        term = fmat_mul(field, N, fmat_mul(field, term, Cinv))
        if all(x.is_zero() for row in term for x in row):
            break
    return out


# ---------------------------------------------------------------------------
# Deligne lattice-slope criterion
# ---------------------------------------------------------------------------

def lattice_slope_criterion(M, pair, prec=None):
    """Containment verdict for a good pair: '<=1', '>=1', '=1' or 'neither'.

    Checks V subset W subset (1/t)V and (1/t)V subset W by certified
    valuations of the change-of-basis matrices; one t-pole is e u-orders.
    """
    from .lattice import verify_good_pair
    prec = prec or Precision()
    cert = verify_good_pair(M, pair, prec)
    if not cert.ok:
        raise NotGoodPair(f"pair fails verification: {cert.failure}")
    Mr = to_raw(M)
    e = Mr.e
    order = prec.t_prec
    Winv = smat_inverse(pair.w_basis, order=order)
    Vinv = smat_inverse(pair.v_basis, order=order)
    WinvV = smat_mul(Winv, pair.v_basis)
    VinvW = smat_mul(Vinv, pair.w_basis)
    w_in_tinv_v = all(min(x.c, default=0) >= -e for row in VinvW for x in row)
    tinv_v_in_w = all(min(x.c, default=e) >= e for row in WinvV for x in row)
    if w_in_tinv_v and tinv_v_in_w:
        return "=1"
    if w_in_tinv_v:
        return "<=1"
    if tinv_v_in_w:
        return ">=1"
    return "neither"
