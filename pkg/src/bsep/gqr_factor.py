"""GammaQR factorization of full-column-rank Pi(+/-) matrices.

G = Q R with Q Gamma-orthonormal and R Pi(+/-) upper triangular (R1 upper
triangular, R2 strictly upper triangular).  The factorization exists iff
no Pi^- leading principal minor of G^H Gamma G vanishes; elimination
breakdowns surface that condition as :class:`PrincipalMinorBreakdown`.

Column i is cleared in three moves whose mirrored side effects land on
already-zeroed data: a lower-half Householder pair compresses the mirror
block of the column, a hyperbolic Givens annihilates the compressed
entry against the diagonal partner, and an upper-half Householder pair
clears below the diagonal.
"""

from dataclasses import dataclass

import numpy as np

from .core import PiMatrix, Signature, check_structure
from .errors import (DimensionMismatch, HyperbolicBreakdown, IsotropicVector,
                     NoValidPivot, PrincipalMinorBreakdown, RankDeficient,
                     StructureViolation)
from .hyperbolic import (PairedGivens, embed_hyperbolic_householder,
                         make_hyperbolic_givens)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class GqrFactors:
    """Result of a GammaQR factorization.

    ``Q`` is Pi^+ and Gamma-orthonormal (Q^H Gamma_in Q = Gamma_out),
    ``R`` carries the sign of the input.  ``growth`` is the product of
    c + |s| over all Givens steps, a cheap growth monitor since
    Gamma-unitary transforms are not norm bounded.
    """

    Q: PiMatrix
    R: PiMatrix
    Sin: Signature
    Sout: Signature
    growth: float


def _materialize_q(n, m, transforms, thetas, mode):
    if mode == "full":
        E = np.eye(2 * n, dtype=np.complex128)
        cols = np.arange(m)
        mirror = n + cols
    else:
        E = np.zeros((2 * n, 2 * m), dtype=np.complex128)
        E[np.arange(m), np.arange(m)] = 1.0
        E[n + np.arange(m), m + np.arange(m)] = 1.0
        cols = np.arange(m)
        mirror = m + cols
    E[:, cols] *= thetas
    E[:, mirror] *= np.conj(thetas)
    for t in reversed(transforms):
        t.apply(E)
    return E


def gqr_factorize(G, S=None, mode="skinny"):
    """GammaQR-factorize a :class:`PiMatrix` with respect to signature ``S``.

    ``mode="skinny"`` returns Q of shape 2n x 2m and R of shape 2m x 2m;
    ``mode="full"`` returns the square Q and tall R.  The diagonal of
    R's top-left quarter is normalized to be real positive, which makes
    the factors unique (and comparable across runs).
    """
    if mode not in ("skinny", "full"):
        raise ValueError("mode must be 'skinny' or 'full'")
    n, m = G.n, G.m
    if m > n:
        raise DimensionMismatch("need m <= n")
    if S is None:
        S = Signature.identity(n)
    if S.m != n:
        raise DimensionMismatch("signature order does not match G")

    dense = G.dense()
    # the trailing m columns are determined by Pi structure; carry only the lead block
    C = np.array(dense[:, :m], order="F")
    scale = max(np.max(np.abs(dense)), 1e-300)
    sig = S
    transforms = []
    growth = 1.0

    for i in range(m):
        col = C[:, i]
        try:
            if i < n - 1 and np.any(col[n + i + 1:] != 0):
                hh, sig = embed_hyperbolic_householder(col, sig, i, n, "lower")
                hh.apply_inverse(C)
                transforms.append(hh)
            if col[n + i] != 0:
                giv = make_hyperbolic_givens(col[i], col[n + i], l=i)
                pg = PairedGivens(n, giv)
                pg.apply_inverse(C)
                sig = pg.transform_signature(sig)
                transforms.append(pg)
                growth *= giv.c + abs(giv.s)
            if i < n - 1 and np.any(col[i + 1:n] != 0):
                hh, sig = embed_hyperbolic_householder(col, sig, i, n, "upper")
                hh.apply_inverse(C)
                transforms.append(hh)
        except (IsotropicVector, HyperbolicBreakdown, NoValidPivot) as exc:
            raise PrincipalMinorBreakdown(
                "elimination broke down at column %d: %s" % (i, exc),
                column=i, cause=exc) from exc
        C[i + 1:n, i] = 0.0
        C[n + i:, i] = 0.0

    # rank is judged on the computed diagonal (after breakdown checks, so a
    # singular column that breaks the elimination reports the minor condition)
    diag = np.diag(C[:m, :m]).copy()
    mags = np.abs(diag)
    if np.min(mags) <= RANK_TOL * scale:
        raise RankDeficient("R diagonal entry %.3e below %.1e of the input scale"
                            % (np.min(mags), RANK_TOL))

    # make the diagonal of R's top-left quarter real positive: R <- Theta^H R,
    # which scales rows i by conj(theta_i) and mirror rows n+i by theta_i
    thetas = np.where(mags > 0, diag / np.where(mags > 0, mags, 1.0), 1.0)
    C[:m, :] *= np.conj(thetas)[:, None]
    C[n:n + m, :] *= thetas[:, None]

    R1 = np.triu(C[:m, :m])
    R2 = G.sign * np.conj(C[n:n + m, :m])
    R2 = np.triu(R2, 1)
    R = PiMatrix(sign=G.sign, G1=R1, G2=R2)

    Qmat = _materialize_q(n, m, transforms, thetas, mode)
    Q = PiMatrix.from_dense(Qmat, sign=+1, tol=1e-8)
    if mode == "full":
        Sout = Signature(sig.j.copy())
        Rfull = np.zeros((2 * n, 2 * m), dtype=np.complex128, order="F")
        Rfull[:m, :m] = R1
        Rfull[:m, m:] = R2
        Rfull[n:n + m, :m] = G.sign * np.conj(R2)
        Rfull[n:n + m, m:] = G.sign * np.conj(R1)
        R = PiMatrix(sign=G.sign, G1=Rfull[:n, :m], G2=Rfull[:n, m:])
    else:
        Sout = Signature(sig.j[:m].copy())
    return GqrFactors(Q=Q, R=R, Sin=S, Sout=Sout, growth=float(growth))


def pi_leading_minors(M, tol=1e-10):
    """Determinants of the i-th Pi^- leading principal submatrices, i = 1..m.

    Test oracle for the existence condition of the GammaQR factorization.
    """
    M = np.asarray(M, dtype=np.complex128)
    rep = check_structure(M, "piMinus", tol=tol)
    if not rep["holds"]:
        raise StructureViolation(
            "input is not Pi^- within %.1e (deviation %.3e)" % (tol, rep["deviation"]))
    m = M.shape[0] // 2
    G1, G2 = M[:m, :m], M[:m, m:]
    out = np.empty(m, dtype=np.complex128)
    for i in range(1, m + 1):
        sub = np.block([[G1[:i, :i], G2[:i, :i]],
                        [-np.conj(G2[:i, :i]), -np.conj(G1[:i, :i])]])
        out[i - 1] = np.linalg.det(sub)
    return out
