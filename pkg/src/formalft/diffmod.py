"""Formal differential modules over k((u)) and their functors.

A connection is stored either as a raw matrix A of series, meaning
nabla = d + A du on a free module, or as a structured sum of elementary
pieces: pushforwards along u^e = t of a rank-one exponential twist
(recorded by its phi, a Laurent polynomial) tensored with a regular
singular part d + C du/u for a constant matrix C.

Sign convention, fixed once for the whole engine: nabla = d + A du and
the derivation acts on coordinates as  d_u(v) = v' + A v.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .coeff import FieldElement, Precision, RamifiedSeries
from .errors import ChartMismatch, IncompatibleRamification, PrecisionExhausted
from . import linalg
from .linalg import (
    fmat_id,
    integer_eigen_blocks,
    smat_add,
    smat_id,
    smat_min_lo,
    smat_mul,
    smat_neg,
    smat_transpose,
    smat_zero,
    solve_connection_system,
    stabilized_kernel,
)

Q = Fraction


@dataclass(frozen=True)
class Point:
    """A chart label on P^1: a finite point x, or infinity with z = 1/t."""

    at_infinity: bool
    x: FieldElement | None = None

    @staticmethod
    def finite(x):
        return Point(False, x)

    @staticmethod
    def infinity():
        return Point(True, None)

    def coordinate(self):
        if self.at_infinity:
            return "z"
        if self.x is not None and not self.x.is_zero():
            return "u"
        return "t"

    def __repr__(self):
        return "inf" if self.at_infinity else str(self.x)


class ElementarySummand:
    """One structured piece: pushforward along u^e = t of E(phi) (x) (d + C du/u).

    phi is an exact Laurent polynomial in u with purely negative support
    (recording the exponential part through d(phi)); phi = 0 encodes a
    purely regular singular summand.
    """

    def __init__(self, e, phi, reg):
        if not phi.exact:
            raise ValueError("phi must be an exact Laurent polynomial")
        if any(k >= 0 for k in phi.c):
            raise ValueError("phi must have purely negative support")
        if phi.e != e:
            raise ValueError("phi must live on the summand's cover")
        self.e = e
        self.phi = phi
        self.reg = [[phi.field.elem(x) for x in row] for row in reg]

    @property
    def reg_rank(self):
        return len(self.reg)

    @property
    def rank(self):
        """Rank of the pushed-forward piece over k((t))."""
        return self.e * len(self.reg)

    @property
    def slope(self):
        if self.phi.is_exact_zero():
            return Q(0)
        return Q(-self.phi.valuation(), self.e)

    @property
    def irregularity(self):
        if self.phi.is_exact_zero():
            return 0
        return -self.phi.valuation() * len(self.reg)

    def matrix_u(self, field):
        """du-units matrix of E(phi) (x) regular part over k((u)): phi' I + C/u."""
        r = len(self.reg)
        zero = RamifiedSeries.zero(field, self.e)
        dphi = self.phi.derive_u()
        out = []
        for i in range(r):
            row = []
            for j in range(r):
                entry = RamifiedSeries(field, self.e, {-1: self.reg[i][j]})
                if i == j:
                    entry = entry + dphi
                row.append(entry)
            out.append(row)
        return out


class HorizontalSpace:
    """The space of formal flat sections, with a truncated certified basis."""

    def __init__(self, dim, basis):
        self.dim = dim
        self.basis = basis

    def __repr__(self):
        return f"HorizontalSpace(dim={self.dim})"


class FormalConnection:
    """A formal meromorphic connection at one point of P^1."""

    def __init__(self, point, field, e, form, payload, rank):
        self.point = point
        self.field = field
        self.e = e
        self.form = form              # "raw" | "structured"
        self.payload = payload        # matrix | list of summands
        self.rank = rank
        self.good_pair = None         # optionally attached by the lattice layer

    # -- constructors --------------------------------------------------------

    @staticmethod
    def raw(point, field, matrix, e=1):
        return FormalConnection(point, field, e, "raw", matrix, len(matrix))

    @staticmethod
    def structured(point, field, summands):
        rank = sum(s.rank for s in summands)
        return FormalConnection(point, field, 1, "structured", summands, rank)

    # -- accessors -------------------------------------------------------------

    @property
    def is_raw(self):
        return self.form == "raw"

    @property
    def summands(self):
        if self.form != "structured":
            raise ValueError("not a structured connection")
        return self.payload

    @property
    def matrix(self):
        if self.form != "raw":
            raise ValueError("raw matrix requested from a structured connection; call to_raw")
        return self.payload

    @property
    def pole_bound(self):
        A = to_raw(self).matrix
        return max(0, -smat_min_lo(A))

    def var(self):
        return self.point.coordinate()

    def __repr__(self):
        kind = "raw" if self.is_raw else "structured"
        return f"FormalConnection(rank={self.rank}, point={self.point}, {kind}, e={self.e})"


def _check_compatible(M, N):
    if M.point != N.point:
        raise ChartMismatch(f"points {M.point} and {N.point} differ")
    if M.field != N.field:
        raise ChartMismatch("coefficient fields differ")


# ---------------------------------------------------------------------------
# structured -> raw: pushforward of each summand along u^e = t
# ---------------------------------------------------------------------------

def _decompose_by_residue(s, e):
    """Split a series in u into its classes u^i * f_i(t), 0 <= i < e."""
    field = s.field
    parts = {}
    for m, v in s.c.items():
        i = m % e
        qexp = (m - i) // e
        parts.setdefault(i, {})[qexp] = v
    out = {}
    for i in range(e):
        coeffs = parts.get(i, {})
        if s.exact:
            lo, hi = None, None
        else:
            lo = -((i - s.lo) // e)          # ceil((s.lo - i)/e)
            hi = -((i - s.hi) // e)
            lo = min(lo, hi)
        out[i] = RamifiedSeries(field, 1, coeffs, lo=lo, hi=hi)
    return out


def pushforward(M):
    """Direct image along u^e = t: rank multiplies by e, output lives over t.

    Basis ordering: u^i m_j at flat index i * r + j.
    """
    if M.form == "structured":
        raise ValueError("pushforward acts on raw presentations; use to_raw")
    e = M.e
    if e == 1:
        return M
    field = M.field
    A = M.matrix
    r = len(A)
    n = e * r
    einv = Q(1, e)
    out = [[RamifiedSeries.zero(field, 1) for _ in range(n)] for _ in range(n)]
    for i in range(e):
        for j in range(r):
            col = i * r + j
            # d_t(u^i m_j) = (1/(e u^(e-1))) (i u^(i-1) m_j + u^i * column j of A)
            for k in range(r):
                g = A[k][j].shift(i + 1 - e) * einv
                if k == j and i != 0:
                    g = g + RamifiedSeries(field, e, {i - e: field.elem(Q(i, e))})
                for ii, f in _decompose_by_residue(g, e).items():
                    row = ii * r + k
                    out[row][col] = out[row][col] + f
    result = FormalConnection.raw(M.point, field, out, e=1)
    return result


def to_raw(M):
    """Total, lossless conversion to a raw presentation over t."""
    if M.is_raw:
        return M
    field = M.field
    blocks = []
    for s in M.summands:
        piece = FormalConnection.raw(M.point, field, s.matrix_u(field), e=s.e)
        blocks.append(pushforward(piece))
    if not blocks:
        raise ValueError("empty structured connection")
    out = blocks[0]
    for b in blocks[1:]:
        out = direct_sum(out, b)
    return out


# ---------------------------------------------------------------------------
# functors
# ---------------------------------------------------------------------------

def dual(M):
    if M.form == "structured":
        summands = []
        for s in M.summands:
            phi = -s.phi
            reg = [[-s.reg[j][i] for j in range(len(s.reg))] for i in range(len(s.reg))]
            summands.append(ElementarySummand(s.e, phi, reg))
        return FormalConnection.structured(M.point, M.field, summands)
    A = M.matrix
    return FormalConnection.raw(M.point, M.field, smat_neg(smat_transpose(A)), e=M.e)


def direct_sum(M, N):
    _check_compatible(M, N)
    if M.form == "structured" and N.form == "structured":
        return FormalConnection.structured(M.point, M.field, list(M.summands) + list(N.summands))
    M, N = to_raw(M), to_raw(N)
    if M.e != N.e:
        raise IncompatibleRamification("direct sum of raw forms over different covers")
    field = M.field
    n, m = M.rank, N.rank
    A = smat_zero(field, n + m, e=M.e)
    for i in range(n):
        for j in range(n):
            A[i][j] = M.matrix[i][j]
    for i in range(m):
        for j in range(m):
            A[n + i][n + j] = N.matrix[i][j]
    return FormalConnection.raw(M.point, field, A, e=M.e)


def _structured_tensor_ok(M, N):
    return (M.form == "structured" and N.form == "structured"
            and all(s.e == 1 for s in N.summands))


def tensor(M, N):
    _check_compatible(M, N)
    if _structured_tensor_ok(M, N) or _structured_tensor_ok(N, M):
        if not _structured_tensor_ok(M, N):
            M, N = N, M
        summands = []
        for s in M.summands:
            for s2 in N.summands:
                phi = s.phi
                if not s2.phi.is_exact_zero():
                    phi = phi + s2.phi.lift_ram(s.e)
                r1, r2 = len(s.reg), len(s2.reg)
                field = M.field
                reg = [[field.zero for _ in range(r1 * r2)] for _ in range(r1 * r2)]
                for i in range(r1):
                    for j in range(r1):
                        for k in range(r2):
                            for l in range(r2):
                                v = field.zero
                                if k == l:
                                    v = v + s.reg[i][j]
                                if i == j:
                                    v = v + s2.reg[k][l]
                                if not v.is_zero():
                                    reg[i * r2 + k][j * r2 + l] = v
                summands.append(ElementarySummand(s.e, phi, reg))
        return FormalConnection.structured(M.point, M.field, summands)
    M, N = to_raw(M), to_raw(N)
    if M.e != N.e:
        raise IncompatibleRamification("tensor of raw forms over different covers")
    field = M.field
    A, B = M.matrix, N.matrix
    n, m = len(A), len(B)
    out = smat_zero(field, n * m, e=M.e)
    for i in range(n):
        for j in range(n):
            a = A[i][j]
            for k in range(m):
                if not a.is_exact_zero():
                    out[i * m + k][j * m + k] = out[i * m + k][j * m + k] + a
    for k in range(m):
        for l in range(m):
            b = B[k][l]
            if not b.is_exact_zero():
                for i in range(n):
                    out[i * m + k][i * m + l] = out[i * m + k][i * m + l] + b
    return FormalConnection.raw(M.point, field, out, e=M.e)


def hom(M, N):
    """Internal Hom(M, N) = dual(M) (x) N; End(M) = hom(M, M)."""
    return tensor(dual(M), N)


def end(M):
    return hom(M, M)


def twist(M, phi):
    """Tensor with the rank-one connection d + d(phi): A gains phi' I."""
    if M.form == "structured":
        summands = []
        for s in M.summands:
            p2 = phi.lift_ram(s.e) if phi.e == 1 and s.e != 1 else phi
            if p2.e != s.e:
                raise IncompatibleRamification("twist phi on an incompatible cover")
            combined = s.phi + p2
            summands.append(ElementarySummand(s.e, combined, s.reg))
        return FormalConnection.structured(M.point, M.field, summands)
    if phi.e != M.e:
        raise IncompatibleRamification("twist phi on an incompatible cover")
    dphi = phi.derive_u()
    A = [list(row) for row in M.matrix]
    for i in range(len(A)):
        A[i][i] = A[i][i] + dphi
    return FormalConnection.raw(M.point, M.field, A, e=M.e)


def gauge(M, H, Hinv=None, order=None):
    """Base change by an invertible series matrix: A -> H^-1 (H' + A H)."""
    M = to_raw(M)
    if Hinv is None:
        Hinv = linalg.smat_inverse(H, order=order)
    A = smat_mul(Hinv, smat_add(linalg.smat_derive_u(H), smat_mul(M.matrix, H)))
    return FormalConnection.raw(M.point, M.field, A, e=M.e)


# ---------------------------------------------------------------------------
# flat sections
# ---------------------------------------------------------------------------

def _structured_flat_basis(M):
    """Exact flat sections of a structured module, in the to_raw frame."""
    field = M.field
    vectors = []
    offset = 0
    total = M.rank
    for s in M.summands:
        r = len(s.reg)
        if s.phi.is_exact_zero():
            blocks, _ = integer_eigen_blocks(field, s.reg)
            for lam, _gen, eig in blocks:
                for c in eig:
                    # solution u^(-lam) c expressed on the pushforward frame
                    vec = [RamifiedSeries.zero(field, 1) for _ in range(total)]
                    m = -lam
                    i = m % s.e
                    qexp = (m - i) // s.e
                    for j in range(r):
                        if not c[j].is_zero():
                            vec[offset + i * r + j] = RamifiedSeries(field, 1, {qexp: c[j]})
                    vectors.append(vec)
        offset += s.rank
    return vectors


def horizontal_sections(M, prec=None):
    """Formal flat sections of M; dimension exact once stabilized.

    Structured inputs are solved exactly block by block (only slope-zero
    summands with integer eigenvalues contribute).  Raw inputs go through
    the banded kernel solver with certification by agreement on a
    reporting window across escalating working orders.
    """
    prec = prec or Precision()
    if M.form == "structured":
        basis = _structured_flat_basis(M)
        return HorizontalSpace(len(basis), basis)
    A = M.matrix
    n = M.rank
    P = M.pole_bound
    lo = -(P + n + 4)
    hi = max(prec.t_prec, lo + 2 * (P + n) + 8)
    report_hi = hi - (P + n + 2)
    rounds = max(3, prec.max_escalations)
    for _ in range(3):
        d, basis = stabilized_kernel(A, lo, hi, report_hi, rounds=rounds)
        # guard: a basis digit at the very bottom suggests deeper solutions
        touched = any(v.c.get(lo) or v.c.get(lo + 1) for vec in basis for v in vec)
        if not touched:
            return HorizontalSpace(d, basis)
        lo -= n + 4
    raise PrecisionExhausted("flat sections keep touching the valuation floor")


def flat_hom_space(M, N, prec=None):
    """Horizontal Hom(M, N): dimension and truncated basis matrices."""
    H = hom(M, N)
    hs = horizontal_sections(to_raw(H), prec)
    n, m = to_raw(M).rank, to_raw(N).rank
    mats = []
    for vec in hs.basis:
        # Hom coordinates: index (i of dual M) * m + (k of N) -> matrix[k][i]
        mat = [[vec[i * m + k] for i in range(n)] for k in range(m)]
        mats.append(mat)
    return hs.dim, mats
