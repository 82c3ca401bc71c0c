"""Independent oracle and diagnostics.

The reference spectrum comes from the general-purpose dense eigensolver
(LAPACK via numpy) refined by one shift-and-invert pass, so agreement with
the structured solvers is evidence rather than tautology: no solver code
is shared beyond the matrix containers.  Also: the paper-style error
metrics, the spectrum pairing check, subspace distances, and a textbook
Hessenberg reduction used as the flop-count comparator.
"""

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .counters import FlopCounter
from .errors import (ConvergenceFailure, DimensionMismatch, RankDeficient,
                     UnpairedEigenvalue, ZeroReference, ZeroVector)


def reference_spectrum(M, refine=True, tol=1e-12):
    """Full eigendecomposition by an unstructured dense solver.

    Each pair gets one shift-and-invert refinement sweep; pairs must reach
    a 2-norm residual below ``tol * ||M||_1`` or :class:`ConvergenceFailure`
    is raised.  Returns (values, vectors) with unit columns.
    """
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("need a square matrix")
    norm1 = float(np.linalg.norm(M, 1)) if M.size else 0.0
    vals, vecs = np.linalg.eig(M)
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    if not refine:
        return vals, vecs
    N = M.shape[0]
    eye = np.eye(N)
    floor = max(norm1, 1.0)
    for i in range(N):
        lam, v = vals[i], vecs[:, i]
        res = np.linalg.norm(M @ v - lam * v)
        try:
            lu = sla.lu_factor(M - (lam + 1e-15 * floor) * eye)
            y = sla.lu_solve(lu, v)
            y /= np.linalg.norm(y)
            lam_new = complex(np.vdot(y, M @ y))
            res_new = np.linalg.norm(M @ y - lam_new * y)
            if res_new < res:
                vals[i], vecs[:, i] = lam_new, y
                res = res_new
        except np.linalg.LinAlgError:
            pass
        if res > tol * max(norm1, 1e-300):
            raise ConvergenceFailure(
                "pair %d residual %.3e above %.1e * ||M||_1" % (i, res, tol))
    return vals, vecs


def relative_error(mu, lam):
    """e(mu) = |mu - lam| / |lam|."""
    lam = complex(lam)
    if lam == 0:
        raise ZeroReference("reference eigenvalue is zero")
    return abs(complex(mu) - lam) / abs(lam)


def residual_norm(H, mu, z):
    """Normalized residual ||H z - mu z||_1 / ((||H||_1 + |mu|) ||z||_1)."""
    from .core import apply_hamiltonian
    z = np.asarray(z, dtype=np.complex128)
    n1 = float(np.linalg.norm(z, 1))
    if n1 == 0:
        raise ZeroVector("z must be nonzero")
    r = apply_hamiltonian(H, z) - complex(mu) * z
    return float(np.linalg.norm(r, 1) / ((H.norm1() + abs(mu)) * n1))


def pair_spectrum(eigs, tol=None):
    """Group a spectrum into (lambda, -lambda) pairs and conjugate quadruples.

    Greedy matching, largest modulus first, partner chosen to minimize
    |lambda + mu|; genuinely complex pairs are then matched with their
    conjugate pair.  Returns (groups, max_defect) where groups are
    ("pair", (lam, mu)) or ("quadruple", (l1, m1, l2, m2)) tuples; raises
    :class:`UnpairedEigenvalue` when ``tol`` is given and exceeded.
    """
    vals = sorted(map(complex, np.asarray(eigs).ravel()), key=abs, reverse=True)
    pairs = []
    defect = 0.0
    while vals:
        lam = vals.pop(0)
        if not vals:
            pairs.append((lam, lam))
            defect = max(defect, abs(2 * lam))
            break
        j = int(np.argmin([abs(lam + m) for m in vals]))
        mu = vals.pop(j)
        pairs.append((lam, mu))
        defect = max(defect, abs(lam + mu))

    groups = []
    used = [False] * len(pairs)
    for i, (lam, mu) in enumerate(pairs):
        if used[i]:
            continue
        used[i] = True
        scale = max(abs(lam), 1e-300)
        if abs(lam.imag) <= 1e-8 * scale or abs(lam.real) <= 1e-8 * scale:
            groups.append(("pair", (lam, mu)))
            continue
        mate = None
        best = np.inf
        for k in range(i + 1, len(pairs)):
            if used[k]:
                continue
            cand = pairs[k][0]
            d = min(abs(cand - np.conj(lam)), abs(cand + np.conj(lam)))
            if d < best:
                best, mate = d, k
        if mate is not None and best <= 1e-2 * scale:
            used[mate] = True
            defect = max(defect, best)
            groups.append(("quadruple", (lam, mu) + pairs[mate]))
        else:
            # a genuinely complex pair must belong to a quadruple; charge
            # the distance to the nearest conjugate candidate as defect
            defect = max(defect, best if np.isfinite(best) else abs(lam.imag))
            groups.append(("pair", (lam, mu)))
    if tol is not None and defect > tol:
        raise UnpairedEigenvalue("pairing defect %.3e exceeds %.3e" % (defect, tol))
    return groups, float(defect)


def subspace_distance(U, V):
    """dist(span U, span V) = largest principal-angle sine, dim U <= dim V."""
    U = np.atleast_2d(np.asarray(U, dtype=np.complex128))
    V = np.atleast_2d(np.asarray(V, dtype=np.complex128))
    if U.ndim != 2 or V.ndim != 2:
        raise DimensionMismatch("U, V must be matrices of column vectors")
    if U.shape[1] > V.shape[1]:
        raise DimensionMismatch("need dim(U) <= dim(V)")
    for name, X in (("U", U), ("V", V)):
        sv = np.linalg.svd(X, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise RankDeficient("%s is numerically rank deficient" % name)
    angles = sla.subspace_angles(U, V)
    return float(np.sin(np.max(angles))) if angles.size else 0.0


def match_spectra(computed, oracle):
    """Injective matching of computed to oracle eigenvalues (Hungarian on
    |mu - lambda|); returns (perm, errors) with errors the relative e(mu)."""
    computed = np.asarray(computed, dtype=np.complex128)
    oracle = np.asarray(oracle, dtype=np.complex128)
    if computed.shape[0] != oracle.shape[0]:
        raise DimensionMismatch("spectra have different sizes")
    cost = np.abs(computed[:, None] - oracle[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty_like(cols)
    perm[rows] = cols
    errs = np.array([abs(computed[i] - oracle[perm[i]]) /
                     max(abs(oracle[perm[i]]), 1e-300) for i in range(len(computed))])
    return perm, errs


def hessenberg_reduction(M, counter=None):
    """Textbook Householder reduction to upper Hessenberg form.

    Left updates touch only the trailing columns (the leading ones are
    already reduced), right updates all rows: the classical 10/3 N^3 flop
    profile.  Used as the cost comparator for the structured reduction.
    """
    A = np.array(M, dtype=np.complex128)
    N = A.shape[0]
    counter = counter or FlopCounter()
    for j in range(N - 2):
        x = A[j + 1:, j]
        nx = np.linalg.norm(x)
        if nx == 0:
            continue
        v = x.copy()
        s = x[0] / abs(x[0]) if abs(x[0]) > 0 else 1.0
        v[0] += s * nx
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        v /= nv
        k = N - j - 1
        t = v.conj() @ A[j + 1:, j:]
        A[j + 1:, j:] -= np.multiply.outer(2.0 * v, t)
        counter.add(mul=2 * k * (N - j), add=2 * k * (N - j))
        u = A[:, j + 1:] @ v
        A[:, j + 1:] -= np.multiply.outer(2.0 * u, v.conj())
        counter.add(mul=2 * N * k, add=2 * N * k)
        A[j + 2:, j] = 0.0
    return A, counter
