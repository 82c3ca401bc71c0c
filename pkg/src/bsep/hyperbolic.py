"""Elementary Gamma-unitary transforms.

Two building blocks are provided:

* the Householder-like transform of Bunse-Gerstner type, which maps a
  vector a with a^H J a != 0 to alpha e1 and satisfies H^H J H = Jhat
  (J permuted), together with its embedding as a mirrored pair acting on
  2n-vectors, and
* the hyperbolic Givens rotation eliminating one lower-half entry
  against its upper-half partner.

Conventions.  The Givens parameters follow the modulus convention:
c is real nonnegative, s carries the phase required to annihilate the
target, and c^2 - |s|^2 = +-1 gives the signature update.  This
reproduces the textbook real formulas exactly and extends them to
complex data; with a possibly complex c the signature update would not
stay +-1 entrywise.  Transforms assert their own annihilation identity
at construction time.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (BsepNumericalWarning, DimensionMismatch,
                     HyperbolicBreakdown, IsotropicVector, NoValidPivot)
from .core import Signature

EPS_ISOTROPIC = 1e-14
EPS_GIVENS = 1e-12
CANCELLATION_GUARD = 1e-6


def _sign(z):
    """z/|z| with sign(0) = 1."""
    a = abs(z)
    return z / a if a > 0 else 1.0 + 0j


@dataclass(frozen=True)
class HouseholderLike:
    """The (J, Jhat)-unitary Householder-like transform H(a).

    With P the permutation swapping positions 0 and r, ahat = P a,
    Jhat = P J P and v = ahat - alpha e1,

        Hinv = (I - scale * v v^H Jhat) P,     Hinv a = alpha e1.

    ``scale`` = jhat1/beta is real because beta = rho (rho + |ahat1|) > 0.
    """

    k: int
    r: int
    v: np.ndarray
    scale: float
    alpha: complex
    j_in: np.ndarray
    j_out: np.ndarray

    def _swap(self, X):
        if self.r:
            X[[0, self.r]] = X[[self.r, 0]]
        return X

    def _rank1(self, X, conjugate):
        # Hhat X  (or conj(Hhat) X): Hhat = I - scale v v^H Jhat
        jv = self.j_out * self.v
        if conjugate:
            t = (self.j_out * self.v) @ X          # v^T Jhat X
            u = self.scale * np.conj(self.v)
        else:
            t = np.conj(jv) @ X                    # v^H Jhat X
            u = self.scale * self.v
        if X.ndim == 1:
            X -= u * t
        else:
            X -= np.multiply.outer(u, t)
        return X

    def apply_hinv(self, X):
        """X <- Hinv X (in place; X has k rows)."""
        return self._rank1(self._swap(X), conjugate=False)

    def apply_h(self, X):
        """X <- H X."""
        return self._swap(self._rank1(X, conjugate=False))

    def apply_hinv_conj(self, X):
        """X <- conj(Hinv) X."""
        return self._rank1(self._swap(X), conjugate=True)

    def apply_h_conj(self, X):
        """X <- conj(H) X."""
        return self._swap(self._rank1(X, conjugate=True))

    def dense_hinv(self):
        M = np.eye(self.k, dtype=np.complex128)
        return self.apply_hinv(M)


def make_householder_like(a, J, pivot_policy="firstValid"):
    """Construct the Householder-like transform eliminating a[1:].

    Requires |a^H J a| > EPS_ISOTROPIC * ||a||^2 and an index r with
    j_r * (a^H J a) > 0.  ``firstValid`` scans r = 1..k-1 then r = 0
    (the classical construction restricts to r >= 1; r = 0 with the
    identity permutation is admitted because some signatures admit no
    other choice); ``maxStability`` picks the valid r maximizing |a_r|,
    ties to the smallest index.
    """
    a = np.asarray(a, dtype=np.complex128)
    J = np.asarray(J, dtype=np.int64)
    if a.ndim != 1 or a.shape != J.shape:
        raise DimensionMismatch("a and J must be 1-D of equal length")
    k = a.shape[0]
    q = float(np.sum(J * (np.abs(a) ** 2)))
    nrm2 = float(np.sum(np.abs(a) ** 2))
    if abs(q) <= EPS_ISOTROPIC * nrm2 or nrm2 == 0.0:
        raise IsotropicVector(
            "a^H J a = %.3e is negligible against ||a||^2 = %.3e" % (q, nrm2))
    want = 1 if q > 0 else -1
    valid = np.flatnonzero(J == want)
    if valid.size == 0:
        raise NoValidPivot("no index with j_r * (a^H J a) > 0")
    if pivot_policy == "firstValid":
        later = valid[valid >= 1]
        r = int(later[0]) if later.size else 0
    elif pivot_policy == "maxStability":
        mags = np.abs(a[valid])
        r = int(valid[np.argmax(mags)])  # argmax ties -> first, i.e. smallest r
    else:
        raise ValueError("unknown pivot policy %r" % pivot_policy)

    ahat = a.copy()
    jhat = J.copy()
    if r:
        ahat[[0, r]] = ahat[[r, 0]]
        jhat[[0, r]] = jhat[[r, 0]]
    j1 = int(jhat[0])
    rho = np.sqrt(j1 * q)
    alpha = -_sign(ahat[0]) * rho
    v = ahat.copy()
    v[0] -= alpha
    beta = rho * (rho + abs(ahat[0]))           # = conj(alpha)(alpha - ahat[0]), real > 0
    house = HouseholderLike(k=k, r=r, v=v, scale=j1 / beta, alpha=complex(alpha),
                            j_in=J.copy(), j_out=jhat)
    resid = house.apply_hinv(a.copy())
    resid[0] -= alpha
    # roundoff in the rank-1 update is amplified by kappa = ||v||^2 / beta
    kappa = max(1.0, float(np.sum(np.abs(v) ** 2)) / beta)
    if np.linalg.norm(resid) > 1e-12 * kappa * max(np.sqrt(nrm2), abs(alpha)):
        raise IsotropicVector(
            "householder annihilation residual %.3e too large (ill-conditioned slice)"
            % np.linalg.norm(resid))
    return house


@dataclass(frozen=True)
class HyperbolicGivens:
    """Hyperbolic rotation on the pair (l, n+l) with c real, s complex.

    The inverse action is [[c, s], [s conj, c]] on the index pair; it
    annihilates the lower entry and updates the signature entry l by
    sign_flip = c^2 - |s|^2.
    """

    l: int
    c: float
    s: complex
    sign_flip: int


def make_hyperbolic_givens(alpha, beta, l=0):
    """Rotation eliminating ``beta`` (lower half, index l) against ``alpha``.

    Raises :class:`HyperbolicBreakdown` when |alpha| = |beta| within
    EPS_GIVENS; warns when the moduli are within a factor 1e-6 (serious
    cancellation territory).
    """
    alpha = complex(alpha)
    beta = complex(beta)
    aa, bb = abs(alpha), abs(beta)
    big = max(aa, bb)
    if big == 0.0 or abs(aa - bb) <= EPS_GIVENS * big:
        raise HyperbolicBreakdown(
            "|alpha| = %.6e, |beta| = %.6e: hyperbolic rotation does not exist"
            % (aa, bb))
    if abs(aa - bb) <= CANCELLATION_GUARD * big:
        warnings.warn("hyperbolic rotation with |alpha| ~ |beta| "
                      "(ratio gap %.2e): expect cancellation" % (abs(aa - bb) / big),
                      BsepNumericalWarning, stacklevel=2)
    if aa > bb:
        r = bb / aa
        c = 1.0 / np.sqrt(1.0 - r * r)
        s = -c * np.conj(beta / alpha)
        flip = 1
    elif aa == 0.0:
        c = 0.0
        s = np.conj(beta) / bb
        flip = -1
    else:
        r = aa / bb
        c = r / np.sqrt(1.0 - r * r)
        s = -c * np.conj(beta / alpha)
        flip = -1
    # both identities hold to roundoff relative to c^2 (cancellation when
    # |alpha| and |beta| are close makes the absolute error scale with c^2)
    assert abs(c * c - abs(s) ** 2 - flip) <= 1e-12 * max(1.0, c * c)
    assert abs(np.conj(s) * alpha + c * beta) <= 1e-12 * (1.0 + c) * big
    return HyperbolicGivens(l=int(l), c=float(c), s=complex(s), sign_flip=flip)


class PairedHouseholder:
    """Mirrored embedding of a Householder-like transform on 2n-vectors.

    Acts as Qinv = diag(I, F, I, I, conj(F), I) with F = Hinv placed on
    the upper index range [lo, hi) and conj(F) on the mirrored lower
    range.  For ``half="lower"`` the transform is built from the
    conjugated lower slice so that the mirrored block performs the
    elimination there.
    """

    def __init__(self, n, lo, hi, house, half):
        self.n = n
        self.lo = lo
        self.hi = hi
        self.house = house
        self.half = half

    def _pair(self, X, method_u, method_l):
        n = self.n
        up = np.array(X[self.lo:self.hi], copy=True)
        dn = np.array(X[n + self.lo:n + self.hi], copy=True)
        X[self.lo:self.hi] = method_u(up)
        X[n + self.lo:n + self.hi] = method_l(dn)
        return X

    def apply_inverse(self, X):
        """X <- Qinv X, in place."""
        return self._pair(X, self.house.apply_hinv, self.house.apply_hinv_conj)

    def apply(self, X):
        """X <- Q X, in place."""
        return self._pair(X, self.house.apply_h, self.house.apply_h_conj)

    def apply_adjoint(self, X):
        """X <- Q^H X, in place (Q^H = Jhat-weighted inverse, computed directly)."""
        h = self.house

        def adj_u(Y):     # (F^{-1})^H = (P Hhat)^H = Hhat^H P
            if h.r:
                Y[[0, h.r]] = Y[[h.r, 0]]
            t = np.conj(h.v) @ Y
            u = h.scale * (h.j_out * h.v)
            Y -= u * t if Y.ndim == 1 else np.multiply.outer(u, t)
            return Y

        def adj_l(Y):     # transpose of F^{-1}
            if h.r:
                Y[[0, h.r]] = Y[[h.r, 0]]
            t = h.v @ Y
            u = h.scale * (h.j_out * np.conj(h.v))
            Y -= u * t if Y.ndim == 1 else np.multiply.outer(u, t)
            return Y

        return self._pair(X, adj_u, adj_l)

    def transform_signature(self, S):
        j = S.j.copy()
        if self.house.r:
            p, q = self.lo, self.lo + self.house.r
            j[[p, q]] = j[[q, p]]
        return Signature(j)


class PairedGivens:
    """Embedding of a hyperbolic Givens rotation on the index pair (l, n+l)."""

    def __init__(self, n, giv):
        self.n = n
        self.giv = giv

    def apply_inverse(self, X):
        g = self.giv
        l, nl = g.l, self.n + g.l
        xu = np.array(X[l], copy=True)
        xd = np.array(X[nl], copy=True)
        X[l] = g.c * xu + g.s * xd
        X[nl] = np.conj(g.s) * xu + g.c * xd
        return X

    def apply(self, X):
        g = self.giv
        sgn = g.sign_flip
        l, nl = g.l, self.n + g.l
        xu = np.array(X[l], copy=True)
        xd = np.array(X[nl], copy=True)
        X[l] = sgn * (g.c * xu - g.s * xd)
        X[nl] = sgn * (-np.conj(g.s) * xu + g.c * xd)
        return X

    # the essential 2x2 of Q is Hermitian, so Q^H coincides with Q
    apply_adjoint = apply

    def transform_signature(self, S):
        j = S.j.copy()
        j[self.giv.l] *= self.giv.sign_flip
        return Signature(j)


def embed_hyperbolic_householder(u, S, lo, hi, half="upper",
                                 pivot_policy="firstValid"):
    """Build the mirrored Householder pair for one elimination slice of ``u``.

    ``u`` is a 2n-vector, the working slice is [lo, hi) in the upper half
    (``half="upper"``) or its mirror in the lower half.  Returns the
    transform handle and the updated signature.
    """
    u = np.asarray(u, dtype=np.complex128)
    n = S.m
    if u.shape[0] != 2 * n:
        raise DimensionMismatch("u must have length %d" % (2 * n))
    if not (0 <= lo < hi <= n):
        raise DimensionMismatch("invalid slice [%d, %d)" % (lo, hi))
    J = S.j[lo:hi]
    if half == "upper":
        a = u[lo:hi]
    elif half == "lower":
        a = np.conj(u[n + lo:n + hi])
    else:
        raise ValueError("half must be 'upper' or 'lower'")
    house = make_householder_like(a, J, pivot_policy)
    handle = PairedHouseholder(n=n, lo=lo, hi=hi, house=house, half=half)
    return handle, handle.transform_signature(S)
