"""Dense structure-preserving eigensolver.

Pipeline: reduce the Hamiltonian to Pi^- Hermitian-tridiagonal canonical
form by mirrored hyperbolic Householder/Givens congruences, then drive it
to quasi-diagonal form with an implicit multishift GammaQR iteration whose
filter polynomial is (x - s)(x + s) for real or purely imaginary shifts
and the conjugate-closed degree-4 polynomial for complex shifts.
Eigenvalues are read from 1- and 2-index coupled blocks; eigenvectors come
from inverse iteration (first on the tridiagonal form, then on H itself),
not from accumulated transforms, which lose orthogonality in the
indefinite metric.

Work is counted by the shared :class:`FlopCounter`.  The reduction uses
plain two-sided trailing-block updates (~43 n^3 real-flop equivalents);
one implicit sweep uses rank-two congruence updates confined to the bulge
window (O(n) per sweep).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (BsepHamiltonian, PiTridiagonal, Signature,
                   apply_hamiltonian, check_structure, expand_dense)
from .counters import FlopCounter
from .errors import (DimensionMismatch, FactorizationFailure,
                     HyperbolicBreakdown, IsotropicVector,
                     MaxIterationsExceeded, NoConvergence, NoValidPivot,
                     StructureViolation, ZeroVector)
from .hyperbolic import make_householder_like, make_hyperbolic_givens
from .validation import residual_norm

DEFLATE_TOL = 1e-14
MAX_SWEEPS_PER_EIG = 30
EXCEPTIONAL_AT = (10, 20)


# ---------------------------------------------------------------------------
# working representation: independent blocks of a Pi(+/-)-Hermitian matrix
# ---------------------------------------------------------------------------

class _PiHermWork:
    """Blocks m1 = G1, m2 = G2 of [[G1, G2], [s conj(G2), s conj(G1)]].

    ``sig`` is the upper-half signature J; the metric is diag(J, -J).
    Congruence routines take explicit column/row windows: entries outside
    are structurally zero and must not be touched (that is what keeps one
    implicit sweep at O(n)).
    """

    def __init__(self, m1, m2, sig, pi_sign, counter):
        self.m1 = m1
        self.m2 = m2
        self.sig = sig
        self.pi_sign = pi_sign
        self.counter = counter
        self.n = m1.shape[0]

    def copy(self):
        return _PiHermWork(self.m1.copy(), self.m2.copy(), self.sig.copy(),
                           self.pi_sign, self.counter)

    def lower_column(self, j, lo, hi):
        """Rows n+lo .. n+hi-1 of column j of the full matrix."""
        return self.pi_sign * np.conj(self.m2[lo:hi, j])

    def _swap(self, p, q):
        for M in (self.m1, self.m2):
            M[[p, q], :] = M[[q, p], :]
            M[:, [p, q]] = M[:, [q, p]]
        self.sig[[p, q]] = self.sig[[q, p]]

    def make_house(self, a, lo, hi, policy="maxStability"):
        return make_householder_like(a, self.sig[lo:hi], policy)

    def congr_house(self, house, lo, hi, w1, w2=None, rank2=False):
        """Congruence with the mirrored pair diag(F, conj(F)), F = Hinv.

        ``w1``/``w2`` are (start, stop) windows for m1 and m2.
        """
        if w2 is None:
            w2 = w1
        if house.r:
            self._swap(lo, lo + house.r)
        v = house.v
        tau = house.scale
        jj = self.sig[lo:hi].astype(np.float64)
        s = slice(lo, hi)
        k = hi - lo
        c = self.counter
        if not rank2:
            for M, conj_right in ((self.m1, False), (self.m2, True)):
                wlo, whi = w1 if M is self.m1 else w2
                W = slice(wlo, whi)
                w = whi - wlo
                t = (jj * v).conj() @ M[s, W]
                M[s, W] -= np.multiply.outer(tau * v, t)
                if conj_right:
                    u = M[W, s] @ v.conj()
                    M[W, s] -= np.multiply.outer(u, tau * (jj * v))
                else:
                    u = M[W, s] @ v
                    M[W, s] -= np.multiply.outer(u, tau * (jj * v).conj())
                c.add(mul=4 * k * w, add=4 * k * w)
        else:
            # Hermitian / symmetric rank-2 congruence forms
            wlo, whi = w1
            W = slice(wlo, whi)
            w = whi - wlo
            u = self.m1[W, s] @ v
            us = u[lo - wlo:lo - wlo + k]
            mu = np.real(np.vdot(v, jj * us))
            wv = tau * u - (0.5 * tau * tau * mu) * _embed(v, lo, wlo, w)
            jw = self.sig[W].astype(np.float64) * wv
            self.m1[s, W] -= np.multiply.outer(v, jw.conj())
            self.m1[W, s] -= np.multiply.outer(wv, (jj * v).conj())
            c.add(mul=3 * k * w + 2 * k, add=3 * k * w + 2 * k)

            wlo, whi = w2
            W = slice(wlo, whi)
            w = whi - wlo
            u2 = self.m2[W, s] @ v.conj()
            us2 = u2[lo - wlo:lo - wlo + k]
            mu2 = np.vdot(v, jj * us2)
            wv2 = tau * u2 - (0.5 * tau * tau * mu2) * _embed(v, lo, wlo, w)
            jw2 = self.sig[W].astype(np.float64) * wv2
            self.m2[s, W] -= np.multiply.outer(v, jw2)
            self.m2[W, s] -= np.multiply.outer(wv2, jj * v)
            c.add(mul=3 * k * w + 2 * k, add=3 * k * w + 2 * k)

    def congr_givens(self, giv, w1, w2=None):
        """Congruence with the hyperbolic rotation on the pair (l, n+l).

        The row/column mix couples m1 with conj(m2), so both matrices share
        the union window."""
        if w2 is None:
            w2 = w1
        l, cc, ss, sgn = giv.l, giv.c, giv.s, giv.sign_flip
        ps = self.pi_sign
        c = self.counter
        wlo = min(w1[0], w2[0])
        whi = max(w1[1], w2[1])
        W = slice(wlo, whi)
        a = self.m1[l, W].copy()
        b = self.m2[l, W].copy()
        self.m1[l, W] = cc * a + (ps * ss) * b.conj()
        self.m2[l, W] = cc * b + (ps * ss) * a.conj()
        # columns l (right multiplication mixes column l with its mirror)
        a = self.m1[W, l].copy()
        b = self.m2[W, l].copy()
        self.m1[W, l] = sgn * (cc * a - np.conj(ss) * b)
        self.m2[W, l] = sgn * (cc * b - ss * a)
        w = whi - wlo
        c.add(mul=8 * w, add=4 * w)
        self.sig[l] *= sgn

    def scan_window(self, M, s_lo, s_hi, cand_lo, cand_hi):
        """Smallest column window containing the slice and every column with
        a nonzero in rows [s_lo, s_hi) -- by the Hermitian mirror the same
        range bounds the nonzero rows of the slice columns."""
        sub = M[s_lo:s_hi, cand_lo:cand_hi]
        nz = np.any(sub != 0, axis=0)
        if not np.any(nz):
            return (s_lo, s_hi)
        i0 = cand_lo + int(np.argmax(nz))
        i1 = cand_hi - int(np.argmax(nz[::-1]))
        return (min(i0, s_lo), max(i1, s_hi))

    def dense(self):
        n = self.n
        out = np.zeros((2 * n, 2 * n), dtype=np.complex128)
        out[:n, :n] = self.m1
        out[:n, n:] = self.m2
        out[n:, :n] = self.pi_sign * np.conj(self.m2)
        out[n:, n:] = self.pi_sign * np.conj(self.m1)
        return out


def _embed(v, lo, wlo, w):
    out = np.zeros(w, dtype=np.complex128)
    out[lo - wlo:lo - wlo + v.shape[0]] = v
    return out


# ---------------------------------------------------------------------------
# tridiagonalization
# ---------------------------------------------------------------------------

@dataclass
class TridiagReduction:
    """Result of the Hermitian-tridiagonal reduction in the Gamma metric."""

    T: PiTridiagonal
    S: Signature
    accumulator: object
    growth: float
    flops: int
    deviation: float
    hnorm: float = 0.0   # 1-norm of the input operator (boost-free scale)
    transforms: list = field(repr=False, default_factory=list)

    def map_vector(self, u):
        """Apply the accumulated transform Q to a 2n-vector (or columns)."""
        x = np.array(u, dtype=np.complex128, copy=True)
        for t in reversed(self.transforms):
            t.apply(x)
        return x


class _Pair:
    """Mirrored Householder acting on work columns/rows; records itself for
    accumulator replay on full 2n vectors."""

    def __init__(self, n, lo, hi, house, half):
        from .hyperbolic import PairedHouseholder
        self._h = PairedHouseholder(n, lo, hi, house, half)

    def apply(self, X):
        return self._h.apply(X)


class _GivensPair:
    def __init__(self, n, giv):
        from .hyperbolic import PairedGivens
        self._g = PairedGivens(n, giv)

    def apply(self, X):
        return self._g.apply(X)


def _work_from_hamiltonian(H, counter):
    A = H.A.toarray() if sp.issparse(H.A) else H.A
    B = H.B.toarray() if sp.issparse(H.B) else H.B
    return _PiHermWork(np.array(A, dtype=np.complex128),
                       np.array(B, dtype=np.complex128),
                       np.ones(H.n, dtype=np.int64), -1, counter)


def _work_from_dense(W, kind, counter):
    claim = "piMinusHermitian" if kind == "piMinus" else "piPlusHermitian"
    rep = check_structure(W, claim, tol=1e-8)
    if not rep["holds"]:
        raise StructureViolation("input lacks %s structure (deviation %.3e)"
                                 % (claim, rep["deviation"]))
    n = W.shape[0] // 2
    return _PiHermWork(np.array(W[:n, :n], dtype=np.complex128),
                       np.array(W[:n, n:], dtype=np.complex128),
                       np.ones(n, dtype=np.int64),
                       -1 if kind == "piMinus" else +1, counter)


def _extract_tridiagonal(work, kind):
    """Read (alpha, beta, gamma, delta) off the reduced work matrix and
    report the worst deviation from the canonical mirrored structure."""
    n = work.n
    m1, m2 = work.m1, work.m2
    scale = max(1.0, np.max(np.abs(m1)) if n else 1.0)
    alpha = np.real(np.diag(m1)).copy()
    dev = float(np.max(np.abs(np.imag(np.diag(m1))))) if n else 0.0
    beta = np.diag(m1, -1).copy() if n > 1 else np.zeros(0, dtype=np.complex128)
    delta = work.sig.copy()
    if n > 1:
        sup = np.diag(m1, 1)
        mirror = (delta[1:] / delta[:-1]) * np.conj(beta)
        dev = max(dev, float(np.max(np.abs(sup - mirror))))
        # anything outside the canonical band is dropped: account for it
        band = np.tril(np.triu(m1, -1), 1)
        dev = max(dev, float(np.max(np.abs(m1 - band))))
        offdiag = m2 - np.diag(np.diag(m2))
        dev = max(dev, float(np.max(np.abs(offdiag))))
    if kind == "piMinus":
        gamma = -np.conj(np.diag(m2)).copy()
    else:
        gamma = np.zeros(n, dtype=np.complex128)
        dev = max(dev, float(np.max(np.abs(np.diag(m2)))) if n else 0.0)
    T = PiTridiagonal(kind=kind, alpha=alpha, beta=beta, gamma=gamma, delta=delta)
    return T, dev / scale


def tridiagonalize(H, kind="piMinus", keep_accumulator=False, counter=None):
    """Reduce to Pi(-/+)-Hermitian-tridiagonal form by Gamma-unitary congruence.

    ``H`` is a :class:`BsepHamiltonian` (kind ``"piMinus"``) or a dense
    2n x 2n matrix carrying the claimed structure with respect to Gamma0.
    Per column the mirror block of the column is compressed by a lower
    Householder pair, the surviving partner at row n+j+1 is annihilated by
    a hyperbolic Givens, and an upper Householder pair clears rows j+2..n;
    in that order every mirrored side effect lands on zeros.
    """
    counter = counter or FlopCounter()
    if isinstance(H, BsepHamiltonian):
        if kind != "piMinus":
            raise StructureViolation("a BsepHamiltonian is piMinus-Hermitian")
        work = _work_from_hamiltonian(H, counter)
        hnorm = H.norm1()
    else:
        Hd = np.asarray(H, dtype=np.complex128)
        work = _work_from_dense(Hd, kind, counter)
        hnorm = float(np.linalg.norm(Hd, 1))
    n = work.n
    transforms = []
    growth = 1.0
    start = counter.snapshot()

    for j in range(n - 1):
        lo, hi = j + 1, n
        window = (j, n)
        low = work.lower_column(j, lo, hi)
        if hi - lo >= 2 and np.any(low[1:] != 0):
            house = work.make_house(np.conj(low), lo, hi)
            work.congr_house(house, lo, hi, window)
            transforms.append(_Pair(n, lo, hi, house, "lower"))
            low = work.lower_column(j, lo, hi)
        if low[0] != 0:
            giv = make_hyperbolic_givens(work.m1[lo, j], low[0], l=lo)
            work.congr_givens(giv, window)
            transforms.append(_GivensPair(n, giv))
            growth *= giv.c + abs(giv.s)
        if hi - lo >= 2 and np.any(work.m1[lo + 1:hi, j] != 0):
            house = work.make_house(work.m1[lo:hi, j].copy(), lo, hi)
            work.congr_house(house, lo, hi, window)
            transforms.append(_Pair(n, lo, hi, house, "upper"))
        work.m1[j + 2:, j] = 0.0
        work.m1[j, j + 2:] = 0.0
        work.m2[j + 1:, j] = 0.0
        work.m2[j, j + 1:] = 0.0

    T, dev = _extract_tridiagonal(work, kind)
    acc = None
    if keep_accumulator:
        acc = np.eye(2 * n, dtype=np.complex128)
        for t in reversed(transforms):
            t.apply(acc)
    return TridiagReduction(T=T, S=Signature(work.sig.copy()), accumulator=acc,
                            growth=float(growth), flops=counter.snapshot() - start,
                            deviation=dev, hnorm=hnorm, transforms=transforms)


# ---------------------------------------------------------------------------
# implicit multishift sweep
# ---------------------------------------------------------------------------

def _shift_degree(shift):
    a = abs(shift)
    if a == 0 or abs(shift.imag) <= 1e-12 * a or abs(shift.real) <= 1e-12 * a:
        return 2
    return 4


def _filter_vector(work, lo, hi, shift):
    """v = p(T) e1 of the segment [lo, hi), from the leading band only."""
    degree = _shift_degree(shift)
    p = min(hi - lo, degree + 2)
    sub = _segment_dense(work, lo, lo + p)
    e1 = np.zeros(2 * p, dtype=np.complex128)
    e1[0] = 1.0
    s2 = shift * shift
    t = sub @ (sub @ e1) - s2 * e1
    if degree == 4:
        t = sub @ (sub @ t) - np.conj(s2) * t
    return t, degree


def _segment_dense(work, lo, hi):
    p = hi - lo
    out = np.zeros((2 * p, 2 * p), dtype=np.complex128)
    out[:p, :p] = work.m1[lo:hi, lo:hi]
    out[:p, p:] = work.m2[lo:hi, lo:hi]
    out[p:, :p] = work.pi_sign * np.conj(work.m2[lo:hi, lo:hi])
    out[p:, p:] = work.pi_sign * np.conj(work.m1[lo:hi, lo:hi])
    return out


@dataclass
class SweepReport:
    shift: complex
    degree: int
    flops: int
    growth: float
    snap_deviation: float = 0.0   # worst mirror-entry mismatch absorbed on extraction


def _col_extent(M, j, lo, cap):
    """Last row index i in (lo, cap) with M[i, j] != 0, or lo if none."""
    e = lo
    for i in range(min(cap, M.shape[0]) - 1, lo, -1):
        if M[i, j] != 0:
            e = i
            break
    return e


def _sweep_segment(work, seg_lo, seg_hi, shift, growth_box, guard=None):
    """One implicit filtered sweep on the unreduced segment [seg_lo, seg_hi).

    ``guard`` caps the conditioning of any single transform (Givens c + |s|
    or Householder ||v||^2/beta); a sweep that would exceed it raises
    :class:`HyperbolicBreakdown` so the caller can retry with another
    shift instead of committing a destructive similarity.
    """
    n = work.n
    v, degree = _filter_vector(work, seg_lo, seg_hi, shift)
    p = v.shape[0] // 2
    vfull = np.zeros(2 * n, dtype=np.complex128)
    vfull[seg_lo:seg_lo + p] = v[:p]
    vfull[n + seg_lo:n + seg_lo + p] = v[p:]

    def cand(j):
        # candidate range for the support scans around column j
        return (max(seg_lo, j - 1), min(seg_hi, j + degree + 3))

    # rotate v to a multiple of e1 (of the segment), mirrored effects on zeros
    up_hi = seg_lo + min(degree + 1, seg_hi - seg_lo)
    low_hi = seg_lo + min(degree, seg_hi - seg_lo)
    _eliminate_column(work, vfull, seg_lo, up_hi, low_hi,
                      cand(seg_lo), growth_box, guard)

    # chase the bulge down the band (the last column still needs its
    # mirror partner annihilated, hence seg_hi - 1)
    for j in range(seg_lo, seg_hi - 1):
        cap_u = min(seg_hi, j + degree + 2)
        cap_l = min(seg_hi, j + degree + 1)
        e_u = _col_extent(work.m1, j, j + 1, cap_u)
        low = work.lower_column(j, j + 1, cap_l)
        e_l = j + 1 + int(np.max(np.nonzero(low != 0)[0])) if np.any(low != 0) else j
        if e_u <= j + 1 and e_l <= j:
            continue
        up_hi = max(e_u + 1, j + 2)
        low_hi = max(e_l + 1, j + 1)
        col = np.zeros(2 * n, dtype=np.complex128)
        col[:n] = work.m1[:, j]
        col[n:] = work.pi_sign * np.conj(work.m2[:, j])
        _eliminate_column(work, col, j + 1, up_hi, low_hi,
                          cand(j), growth_box, guard)
        work.m1[j + 2:, j] = 0.0
        work.m1[j, j + 2:] = 0.0
        work.m2[j + 1:, j] = 0.0
        work.m2[j, j + 1:] = 0.0
    return degree


def _checked(house, guard):
    kappa = float(np.sum(np.abs(house.v) ** 2)) * abs(house.scale)
    if guard is not None and kappa > guard:
        raise HyperbolicBreakdown(
            "householder conditioning %.2e exceeds sweep guard %.1e" % (kappa, guard))
    return house


def _eliminate_column(work, u, lo, up_hi, low_hi, cand, growth_box, guard=None):
    """Clear u's lower slice [n+lo+1, n+low_hi) and upper slice [lo+1, up_hi).

    ``u`` is the current full 2n column (or filter vector); transforms are
    applied to the work matrix by congruence with windows scanned from the
    actual supports.  Order: compress lower, Givens against the upper
    partner, compress upper.
    """
    n = work.n
    c0, c1 = cand
    if low_hi - lo >= 2 and np.any(u[n + lo + 1:n + low_hi] != 0):
        a = np.conj(u[n + lo:n + low_hi])
        house = _checked(work.make_house(a, lo, low_hi), guard)
        w1 = work.scan_window(work.m1, lo, low_hi, c0, c1)
        w2 = work.scan_window(work.m2, lo, low_hi, c0, c1)
        work.congr_house(house, lo, low_hi, w1, w2, rank2=True)
        # track the transformed column values we still need
        _apply_pair_to_vec(house, u, n, lo, low_hi)
    if u[n + lo] != 0:
        giv = make_hyperbolic_givens(u[lo], u[n + lo], l=lo)
        if guard is not None and giv.c + abs(giv.s) > guard:
            raise HyperbolicBreakdown(
                "givens conditioning %.2e exceeds sweep guard %.1e"
                % (giv.c + abs(giv.s), guard))
        w1 = work.scan_window(work.m1, lo, lo + 1, c0, c1)
        w2 = work.scan_window(work.m2, lo, lo + 1, c0, c1)
        work.congr_givens(giv, w1, w2)
        growth_box[0] *= giv.c + abs(giv.s)
        xu, xd = u[lo], u[n + lo]
        u[lo] = giv.c * xu + giv.s * xd
        u[n + lo] = np.conj(giv.s) * xu + giv.c * xd
    if up_hi - lo >= 2 and np.any(u[lo + 1:up_hi] != 0):
        house = _checked(work.make_house(u[lo:up_hi].copy(), lo, up_hi), guard)
        w1 = work.scan_window(work.m1, lo, up_hi, c0, c1)
        w2 = work.scan_window(work.m2, lo, up_hi, c0, c1)
        work.congr_house(house, lo, up_hi, w1, w2, rank2=True)


def _apply_pair_to_vec(house, u, n, lo, hi):
    u[lo:hi] = house.apply_hinv(u[lo:hi].copy())
    u[n + lo:n + hi] = house.apply_hinv_conj(u[n + lo:n + hi].copy())


def filter_first_column(T, shift):
    """The Gamma-unitary transform rotating p(T) e1 onto e1 (as a handle).

    Returns a callable applying the transform's inverse to a 2m vector,
    along with the filter degree; p(T) e1 is found from the leading band
    only (at most degree+2 tridiagonal rows enter).
    """
    if T.kind != "piMinus":
        raise StructureViolation("filter is defined on the piMinus form")
    counter = FlopCounter()
    work = _work_from_tridiagonal(T, counter)
    v, degree = _filter_vector(work, 0, T.m, complex(shift))
    p = v.shape[0] // 2
    m = T.m
    vfull = np.zeros(2 * m, dtype=np.complex128)
    vfull[:p] = v[:p]
    vfull[m:m + p] = v[p:]

    sig = Signature(T.delta.copy())
    handles = []
    u = vfull.copy()
    low_hi = min(degree, m)
    up_hi = min(degree + 1, m)
    if low_hi >= 2 and np.any(u[m + 1:m + low_hi] != 0):
        from .hyperbolic import embed_hyperbolic_householder
        hh, sig = embed_hyperbolic_householder(u, sig, 0, low_hi, "lower")
        hh.apply_inverse(u)
        handles.append(hh)
    if u[m] != 0:
        from .hyperbolic import PairedGivens
        giv = make_hyperbolic_givens(u[0], u[m], l=0)
        pg = PairedGivens(m, giv)
        pg.apply_inverse(u)
        sig = pg.transform_signature(sig)
        handles.append(pg)
    if up_hi >= 2 and np.any(u[1:up_hi] != 0):
        from .hyperbolic import embed_hyperbolic_householder
        hh, sig = embed_hyperbolic_householder(u, sig, 0, up_hi, "upper")
        hh.apply_inverse(u)
        handles.append(hh)

    def apply_inverse(x):
        for h in handles:
            h.apply_inverse(x)
        return x

    return apply_inverse, degree, sig


def _work_from_tridiagonal(T, counter):
    m1 = T.t11()
    if T.kind == "piMinus":
        m2 = np.diag(-np.conj(T.gamma)).astype(np.complex128)
        ps = -1
    else:
        m2 = np.zeros((T.m, T.m), dtype=np.complex128)
        ps = +1
    return _PiHermWork(m1, m2, T.delta.copy(), ps, counter)


def implicit_sweep(T, S, shift, counter=None):
    """One implicit multishift sweep; returns (T', S', report).

    The sweep is a Gamma-unitary similarity, so the spectrum is preserved;
    breakdowns (IsotropicVector / HyperbolicBreakdown) propagate without
    mutating the input, and the caller may retry with a perturbed shift.
    """
    if T.kind != "piMinus":
        raise StructureViolation("implicit sweeps act on the piMinus form")
    if S is not None and not np.array_equal(S.j, T.delta):
        raise StructureViolation("signature argument disagrees with T.delta")
    counter = counter or FlopCounter()
    work = _work_from_tridiagonal(T, counter)
    start = counter.snapshot()
    growth_box = [1.0]
    degree = _sweep_segment(work, 0, T.m, complex(shift), growth_box)
    Tout, dev = _extract_tridiagonal(work, "piMinus")
    rep = SweepReport(shift=complex(shift), degree=degree,
                      flops=counter.snapshot() - start, growth=growth_box[0],
                      snap_deviation=dev)
    return Tout, Signature(work.sig.copy()), rep


# ---------------------------------------------------------------------------
# eigenvalue iteration
# ---------------------------------------------------------------------------

@dataclass
class QuasiBlock:
    kind: str          # "real_pair" | "imaginary_pair" | "coupled"
    start: int         # first index of the block in the final ordering
    size: int          # 1 or 2 (index count; the spectral block is 2x or 4x)
    eigenvalues: tuple


@dataclass
class QuasiDiagonal:
    blocks: list
    S: Signature


@dataclass
class IterationStats:
    sweeps: int = 0
    deflations: int = 0
    exceptional_shifts: int = 0
    breakdown_retries: int = 0
    forced_extractions: int = 0
    flops: int = 0
    growth: float = 1.0
    stagnated: bool = False


def _block1_eigs(alpha, gamma):
    """Eigenvalues of [[a, -conj(g)], [g, -a]]: lambda^2 = a^2 - |g|^2."""
    lam2 = alpha * alpha - abs(gamma) ** 2
    if lam2 >= 0.0:
        lam = np.sqrt(lam2)
        return ("real_pair", (lam, -lam))
    lam = np.sqrt(-lam2)
    return ("imaginary_pair", (1j * lam, -1j * lam))


def _project_pairs(vals, tol=1e-8):
    """Snap a small eigenvalue set onto exact (lambda, -lambda) pairs and
    conjugate-closed quadruples."""
    vals = list(map(complex, vals))
    pairs = []
    while vals:
        a = vals.pop(0)
        j = int(np.argmin([abs(a + b) for b in vals]))
        b = vals.pop(j)
        lam = 0.5 * (a - b)
        pairs.append(lam)
    out = []
    used = [False] * len(pairs)
    for i, lam in enumerate(pairs):
        if used[i]:
            continue
        used[i] = True
        scale = max(abs(lam), 1.0)
        if abs(lam.imag) <= tol * scale:
            lam = lam.real
            out.append(("real_pair", (lam, -lam)))
        elif abs(lam.real) <= tol * scale:
            lam = 1j * abs(lam.imag)
            out.append(("imaginary_pair", (lam, -lam)))
        else:
            mate = None
            for k in range(i + 1, len(pairs)):
                if used[k]:
                    continue
                cand = pairs[k]
                if min(abs(cand - np.conj(lam)), abs(cand + np.conj(lam))) <= 1e-6 * abs(lam):
                    mate = k
                    break
            if mate is not None:
                used[mate] = True
                c = pairs[mate]
                if abs(c + np.conj(lam)) < abs(c - np.conj(lam)):
                    c = -c
                lam = 0.5 * (lam + np.conj(c))
            out.append(("coupled", (lam, -lam, np.conj(lam), -np.conj(lam))))
    return out


def _band_scale(work, lo, hi):
    d = np.abs(np.real(np.diag(work.m1[lo:hi, lo:hi])))
    g = np.abs(np.diag(work.m2[lo:hi, lo:hi]))
    b = np.abs(np.diag(work.m1[lo:hi, lo:hi], -1)) if hi - lo > 1 else np.zeros(1)
    return float(max(d.max(initial=0.0), g.max(initial=0.0), b.max(initial=0.0), 1e-300))


def _trace2_window(work, lo, hi):
    """tr(T^2) restricted to the decoupled window: the sum of lambda^2 over
    the window, a spectral invariant every similarity must conserve.
    Also returns the entry-square mass, the canary's own roundoff scale."""
    a = np.real(np.diag(work.m1[lo:hi, lo:hi]))
    g = np.abs(np.diag(work.m2[lo:hi, lo:hi]))
    if hi - lo > 1:
        b2 = np.abs(np.diag(work.m1[lo:hi, lo:hi], -1)) ** 2
        sig = work.sig[lo:hi]
        cross = float(np.sum((sig[1:] / sig[:-1]) * b2))
    else:
        cross = 0.0
        b2 = np.zeros(0)
    tr2 = 2.0 * (float(np.sum(a * a)) + 2.0 * cross - float(np.sum(g * g)))
    mass = float(np.sum(a * a) + 2.0 * np.sum(b2) + np.sum(g * g))
    work.counter.add(mul=4 * (hi - lo), add=4 * (hi - lo))
    return tr2, mass


def _corner_eig(work, j):
    a = float(np.real(work.m1[j, j]))
    g = abs(work.m2[j, j])
    lam2 = (abs(a) - g) * (abs(a) + g)   # a^2 - g^2 without cancellation blowup
    return np.sqrt(lam2) if lam2 >= 0 else 1j * np.sqrt(-lam2)


def _select_shift(work, lo, hi):
    """Wilkinson-style shift: eigenvalue of the trailing 2-index coupled
    block closest to the corner 1-index block eigenvalue."""
    corner = _corner_eig(work, hi - 1)
    if hi - lo < 2:
        return complex(corner)
    sub = _segment_dense(work, hi - 2, hi)
    cands = np.linalg.eigvals(sub)
    return complex(cands[np.argmin(np.abs(cands - corner))])


def default_shift(T):
    """Shift gqr_eigenvalues would use on the (unreduced) tridiagonal T."""
    work = _work_from_tridiagonal(T, FlopCounter())
    return _select_shift(work, 0, T.m)


def _deflate_small_betas(work, lo, hi, tol, cap=None):
    m1, m2 = work.m1, work.m2
    for j in range(lo, hi - 1):
        b = m1[j + 1, j]
        if b == 0:
            continue
        thresh = tol * (abs(np.real(m1[j, j])) + abs(np.real(m1[j + 1, j + 1]))
                        + abs(m2[j, j]) + abs(m2[j + 1, j + 1]))
        if cap is not None:
            thresh = min(thresh, cap)
        if abs(b) <= thresh:
            m1[j + 1, j] = 0.0
            m1[j, j + 1] = 0.0


def gqr_eigenvalues(H, tol_deflate=DEFLATE_TOL, max_sweeps=MAX_SWEEPS_PER_EIG,
                    counter=None, sweep_callback=None, sweep_guard=3e4,
                    polish=True):
    """All eigenvalues of H by the implicit multishift GammaQR iteration.

    ``H`` may be a :class:`BsepHamiltonian`, a :class:`TridiagReduction`,
    or a piMinus :class:`PiTridiagonal`.  Returns (QuasiDiagonal,
    eigenvalues, IterationStats); eigenvalues are listed with their
    (lambda, -conj(lambda)) partners adjacent and quadruples contiguous.

    Sweeps whose transforms exceed ``sweep_guard`` in conditioning are
    discarded and retried with a perturbed shift (hyperbolic rotations are
    not norm bounded, and one near-breakdown sweep can wreck the spectrum).
    When the iteration stagnates, the deflation tolerance is relaxed in
    steps down to the hyperbolic roundoff floor (~1e-9 relative), which
    perturbs an eigenvalue by no more than the dropped coupling itself.

    With ``polish`` (default), every extracted value is refined by a few
    shifted inverse-iteration steps on the *initial* tridiagonal form, the
    same cheap device the two-stage refinement pipeline uses; this removes
    the roundoff the non-orthogonal sweeps accumulate while keeping each
    orbit exactly paired.
    """
    counter = counter or FlopCounter()
    stats = IterationStats()
    hnorm = None
    if isinstance(H, BsepHamiltonian):
        red = tridiagonalize(H, counter=counter)
        T = red.T
        hnorm = red.hnorm
    elif isinstance(H, TridiagReduction):
        T = H.T
        hnorm = H.hnorm or None
    elif isinstance(H, PiTridiagonal):
        T = H
    else:
        raise DimensionMismatch("unsupported input type %r" % type(H))
    if T.kind != "piMinus":
        raise StructureViolation("eigenvalue iteration expects the piMinus form")

    work = _work_from_tridiagonal(T, counter)
    start = counter.snapshot()
    m = T.m
    # spectral scale for the absolute deflation caps: the operator 1-norm
    # bounds max |lambda| and, unlike the working entries, carries no
    # hyperbolic boost; without it fall back to the 1-index block estimates
    if hnorm is None:
        hnorm = max(max((abs(_corner_eig(work, j)) for j in range(m)), default=1.0),
                    float(np.max(np.abs(T.beta))) if m > 1 else 0.0)
    sscale = max(float(hnorm), 1e-300)
    blocks = []
    rng = np.random.default_rng(20240229)
    hi = m
    since_deflation = 0
    breakdown_retries = 0

    relax_schedule = ((20, 1e-6), (14, 1e-7), (10, 4e-9),
                      (7, 1e-9), (5, 1e-10), (3, 1e-12))
    while hi > 0:
        tol_eff = tol_deflate
        for when, t in relax_schedule:
            if since_deflation >= when:
                tol_eff = max(tol_deflate, t)
                break
        _deflate_small_betas(work, 0, hi, tol_deflate)
        if tol_eff > tol_deflate:
            # stagnation: relax the gate.  Entries may sit on hyperbolically
            # boosted scales, so cap what a drop may cost in absolute terms
            # (looser at the corner, which is the coupling actually being
            # converged; the final polish repairs what the drop perturbs).
            _deflate_small_betas(work, 0, hi, tol_eff, cap=1e-8 * sscale)
            _deflate_small_betas(work, max(0, hi - 3), hi, tol_eff, cap=1e-3 * sscale)
        if hi == 1 or work.m1[hi - 1, hi - 2] == 0:
            a = float(np.real(work.m1[hi - 1, hi - 1]))
            g = -np.conj(work.m2[hi - 1, hi - 1])
            kind, eigs = _block1_eigs(a, g)
            blocks.append(QuasiBlock(kind=kind, start=hi - 1, size=1, eigenvalues=eigs))
            hi -= 1
            stats.deflations += 1
            since_deflation = 0
            breakdown_retries = 0
            continue
        if hi == 2 or work.m1[hi - 2, hi - 3] == 0:
            sub = _segment_dense(work, hi - 2, hi)
            for kind, eigs in _project_pairs(np.linalg.eigvals(sub)):
                blocks.append(QuasiBlock(kind=kind, start=hi - 2, size=2, eigenvalues=eigs))
            hi -= 2
            stats.deflations += 1
            since_deflation = 0
            breakdown_retries = 0
            continue

        lo = hi - 2
        while lo > 0 and work.m1[lo, lo - 1] != 0:
            lo -= 1
        # hyperbolically boosted windows carry their eigenvalues on huge,
        # cancellation-prone entries; a dense solve of the window is still
        # backward stable on that scale, so extract before boost can hurt
        if hi - lo <= 16:
            wb = max(np.max(np.abs(np.real(np.diag(work.m1[lo:hi, lo:hi])))),
                     np.max(np.abs(np.diag(work.m2[lo:hi, lo:hi]))))
            if wb > 1e4 * sscale:
                sub = _segment_dense(work, lo, hi)
                for kind, eigs in _project_pairs(np.linalg.eigvals(sub)):
                    blocks.append(QuasiBlock(kind=kind, start=lo,
                                             size=hi - lo, eigenvalues=eigs))
                hi = lo
                stats.forced_extractions += 1
                since_deflation = 0
                breakdown_retries = 0
                continue
        shift = _select_shift(work, lo, hi)
        desperate = since_deflation >= EXCEPTIONAL_AT[1] + 2
        if since_deflation in EXCEPTIONAL_AT or breakdown_retries > 0 or desperate:
            scale = max(abs(shift), 1e-300)
            mag = min(1e-2 * (3.0 ** breakdown_retries)
                      * (1.5 ** max(0, since_deflation - EXCEPTIONAL_AT[1] - 2)), 0.5)
            shift += scale * mag * (
                rng.standard_normal() + 1j * rng.standard_normal())
            stats.exceptional_shifts += 1
        if since_deflation >= max_sweeps:
            stats.stagnated = True
            if hi - lo <= 24:
                # stubborn small window: extract it densely (the same device
                # the 2-index blocks use) instead of giving up outright
                sub = _segment_dense(work, lo, hi)
                for kind, eigs in _project_pairs(np.linalg.eigvals(sub)):
                    blocks.append(QuasiBlock(kind=kind, start=lo,
                                             size=hi - lo, eigenvalues=eigs))
                hi = lo
                stats.forced_extractions += 1
                since_deflation = 0
                breakdown_retries = 0
                continue
            raise MaxIterationsExceeded(
                "no deflation in %d sweeps on window [%d, %d)" % (max_sweeps, lo, hi))
        trial = work.copy()
        growth_box = [stats.growth]
        # accept increasingly ill-conditioned sweeps rather than giving up;
        # the final polish repairs what they cost in accuracy
        guard = sweep_guard * (100.0 ** min(breakdown_retries // 3, 3))
        tr2_before, mass = _trace2_window(work, lo, hi)
        try:
            _sweep_segment(trial, lo, hi, shift, growth_box, guard=guard)
        except (IsotropicVector, HyperbolicBreakdown, NoValidPivot) as exc:
            breakdown_retries += 1
            stats.breakdown_retries += 1
            if breakdown_retries > 12:
                raise
            since_deflation += 1
            continue
        # canary: sum of lambda^2 over the window is a similarity invariant;
        # a sweep that moves it has injected roundoff.  Reject and retry, but
        # admit progressively more damage rather than giving up: the final
        # polish recovers the values as long as they stay in their basins.
        tr2_after, _ = _trace2_window(trial, lo, hi)
        canary_tol = max(1e-9 * (hi - lo) * sscale * sscale, 1e-13 * mass)
        canary_tol *= 30.0 ** min(breakdown_retries // 2, 5)
        if abs(tr2_after - tr2_before) > canary_tol:
            breakdown_retries += 1
            stats.breakdown_retries += 1
            if breakdown_retries > 12:
                raise HyperbolicBreakdown(
                    "sweeps keep violating the spectral invariant on window "
                    "[%d, %d)" % (lo, hi))
            since_deflation += 1
            continue
        work.m1, work.m2, work.sig = trial.m1, trial.m2, trial.sig
        stats.growth = growth_box[0]
        stats.sweeps += 1
        since_deflation += 1
        breakdown_retries = 0
        if sweep_callback is not None:
            Tcur, _ = _extract_tridiagonal(work, "piMinus")
            sweep_callback(Tcur, Signature(work.sig.copy()))

    if polish:
        blocks = [_polish_block(T, b) for b in blocks]
    eigenvalues = []
    for b in blocks:
        eigenvalues.extend(b.eigenvalues)
    stats.flops = counter.snapshot() - start
    qd = QuasiDiagonal(blocks=blocks, S=Signature(work.sig.copy()))
    return qd, np.array(eigenvalues, dtype=np.complex128), stats


def _polish_block(T0, block):
    """Refine a block's representative eigenvalue on the initial tridiagonal
    form and rebuild the exactly paired orbit around it."""
    seed = complex(block.eigenvalues[0])
    try:
        mu, _ = inverse_iteration_tridiag(T0, None, seed, max_it=4)
    except (NoConvergence, StructureViolation):
        return block
    if abs(mu - seed) > 0.25 * max(abs(seed), abs(mu), 1e-300):
        return block   # drifted to a different eigenvalue; keep the seed
    if block.kind == "real_pair":
        lam = abs(mu.real) if seed.real >= 0 else -abs(mu.real)
        eigs = (lam, -lam)
    elif block.kind == "imaginary_pair":
        lam = 1j * abs(mu.imag)
        eigs = (lam, -lam)
    else:
        lam = mu if (mu.real >= 0) == (seed.real >= 0) else -mu
        eigs = (lam, -lam, np.conj(lam), -np.conj(lam))
    return QuasiBlock(kind=block.kind, start=block.start, size=block.size,
                      eigenvalues=eigs)


# ---------------------------------------------------------------------------
# eigenvectors: inverse iteration on the tridiagonal form and on H
# ---------------------------------------------------------------------------

def _banded_form(T, mu):
    """Interleaved pentadiagonal form of (T - mu I) for solve_banded."""
    m = T.m
    N = 2 * m
    ab = np.zeros((5, N), dtype=np.complex128)
    sgn = -1.0 if T.kind == "piMinus" else 1.0

    def put(i, j, val):
        ab[2 + i - j, j] = val

    sig = (T.delta[1:] / T.delta[:-1]) if m > 1 else np.zeros(0)
    for j in range(m):
        put(2 * j, 2 * j, T.alpha[j] - mu)
        put(2 * j + 1, 2 * j + 1, sgn * T.alpha[j] - mu)
        if T.kind == "piMinus":
            put(2 * j, 2 * j + 1, -np.conj(T.gamma[j]))
            put(2 * j + 1, 2 * j, T.gamma[j])
        if j + 1 < m:
            put(2 * j + 2, 2 * j, T.beta[j])
            put(2 * j, 2 * j + 2, sig[j] * np.conj(T.beta[j]))
            put(2 * j + 3, 2 * j + 1, sgn * np.conj(T.beta[j]))
            put(2 * j + 1, 2 * j + 3, sgn * sig[j] * T.beta[j])
    return ab


def _interleave_perm(m):
    perm = np.empty(2 * m, dtype=np.int64)
    perm[0::2] = np.arange(m)
    perm[1::2] = m + np.arange(m)
    inv = np.argsort(perm)
    return perm, inv


def inverse_iteration_tridiag(T, S, mu0, max_it=5, tol=1e-13):
    """Refine (mu0, u) on the tridiagonal form by shifted banded solves.

    Each solve costs O(m) on the interleaved pentadiagonal expansion; the
    shift is updated with the Rayleigh quotient.  An exactly singular
    shift is handled by a relative perturbation, in which case the solve
    returns the factorization's null direction.
    """
    if S is not None and not np.array_equal(S.j, T.delta):
        raise StructureViolation("signature argument disagrees with T.delta")
    m = T.m
    perm, inv = _interleave_perm(m)
    norm1 = T.norm1()
    mu = complex(mu0)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(2 * m) + 1j * rng.standard_normal(2 * m)
    u /= np.linalg.norm(u)
    best = (np.inf, mu, u)
    for _ in range(max_it):
        ab = _banded_form(T, mu)
        b = u[perm]
        pert = 0.0
        for _try in range(4):
            try:
                if pert:
                    abp = ab.copy()
                    abp[2, :] += pert
                    y = sla.solve_banded((2, 2), abp, b)
                else:
                    y = sla.solve_banded((2, 2), ab, b)
                if not np.all(np.isfinite(y.view(np.float64))):
                    raise np.linalg.LinAlgError("non-finite solve")
                break
            except np.linalg.LinAlgError:
                pert = (pert * 10) if pert else 1e-14 * (norm1 + abs(mu) + 1.0)
        else:
            raise NoConvergence("banded solves kept failing near mu=%s" % mu)
        u = y[inv]
        u /= np.linalg.norm(u)
        Tu = T.apply(u)
        mu = complex(np.vdot(u, Tu))
        res = float(np.linalg.norm(Tu - mu * u))
        if res < best[0]:
            best = (res, mu, u.copy())
        if res <= tol * max(norm1, 1e-300):
            return mu, u
    if best[0] <= np.sqrt(tol) * max(norm1, 1e-300):
        return best[1], best[2]
    raise NoConvergence("residual %.3e after %d iterations (target %.1e)"
                        % (best[0], max_it, tol * norm1))


def _shifted_solver(H, mu):
    if H.is_sparse:
        A = sp.csc_matrix(H.A)
        B = sp.csc_matrix(H.B)
        M = sp.bmat([[A, B], [-B.conj(), -A.conj()]], format="csc")
        M = M - mu * sp.identity(2 * H.n, dtype=np.complex128, format="csc")
        lu = spla.splu(M)
        return lu.solve
    M = expand_dense(H)
    M = M - mu * np.eye(2 * H.n)
    lu = sla.lu_factor(M)
    return lambda b: sla.lu_solve(lu, b)


def refine_eigenpair(H, mu, z, max_it=5, tol=1e-13):
    """Inverse iteration on H itself: the second-stage refinement.

    Returns (mu, z, r) with r the normalized residual
    ||H z - mu z||_1 / ((||H||_1 + |mu|) ||z||_1); steps are accepted only
    while r decreases, so the reported residual is nonincreasing.
    """
    z = np.asarray(z, dtype=np.complex128)
    if z.shape[0] != 2 * H.n:
        raise DimensionMismatch("z must have length %d" % (2 * H.n))
    nz = np.linalg.norm(z)
    if nz == 0:
        raise ZeroVector("z must be nonzero")
    z = z / nz
    mu = complex(mu)
    r = residual_norm(H, mu, z)
    r_in = r
    for _ in range(max_it):
        if r <= tol:
            break
        try:
            solve = _shifted_solver(H, mu)
            y = solve(z)
        except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
            try:
                solve = _shifted_solver(H, mu * (1.0 + 1e-13) + 1e-300)
                y = solve(z)
            except (RuntimeError, np.linalg.LinAlgError, ValueError):
                raise FactorizationFailure(
                    "cannot factor H - mu I at mu=%s: %s" % (mu, exc)) from exc
        if not np.all(np.isfinite(y.view(np.float64))):
            break
        y = y / np.linalg.norm(y)
        mu_new = complex(np.vdot(y, apply_hamiltonian(H, y)))
        r_new = residual_norm(H, mu_new, y)
        if r_new >= r:
            break
        mu, z, r = mu_new, y, r_new
    if r > tol and r > 0.5 * r_in and r > 1e-8:
        raise NoConvergence("residual %.3e did not improve (input %.3e)" % (r, r_in))
    return mu, z, r


def eigenpairs_dense(H, refine=True, counter=None):
    """Full dense pipeline: eigenvalues by gqr_eigenvalues, eigenvectors by
    inverse iteration on the tridiagonal form mapped back through the
    reduction transforms, then (optionally) refined on H itself.

    Returns (eigenvalues, vectors, residuals, stats).
    """
    counter = counter or FlopCounter()
    red = tridiagonalize(H, counter=counter)
    _, eigs, stats = gqr_eigenvalues(red, counter=counter)
    vecs = np.zeros((2 * H.n, eigs.shape[0]), dtype=np.complex128)
    resid = np.zeros(eigs.shape[0])
    for i, lam in enumerate(eigs):
        try:
            _, u = inverse_iteration_tridiag(red.T, red.S, lam, max_it=6)
        except NoConvergence:
            _, u = inverse_iteration_tridiag(red.T, red.S,
                                             lam * (1 + 1e-10) + 1e-12, max_it=8)
        z = red.map_vector(u)
        if refine:
            mu, z, r = refine_eigenpair(H, lam, z, max_it=6)
            eigs[i] = mu
        else:
            z = z / np.linalg.norm(z)
            r = residual_norm(H, lam, z)
        vecs[:, i] = z
        resid[i] = r
    return eigs, vecs, resid, stats
