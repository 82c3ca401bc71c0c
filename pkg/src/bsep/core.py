"""Structured matrix types for Bethe-Salpeter eigenvalue problems.

The 2n x 2n operator of interest is

    H = [[ A,        B      ],
         [-conj(B), -conj(A)]],      A Hermitian, B complex symmetric,

held implicitly through its blocks.  The indefinite metric is a signature
matrix diag(J, -J) with J = diag(+-1), and the relevant structured classes
are the Pi(+/-) matrices [[G1, G2], [+-conj(G2), +-conj(G1)]].

Dense matrices are plain numpy ``complex128`` arrays; constructors validate
finiteness and fix a column-major layout so fixtures are bit-reproducible.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (DimensionMismatch, OddLength, SizeLimitExceeded,
                     StructureViolation)

DENSE_CAP = 4096


def as_complex_matrix(a, name="matrix"):
    """Validate and normalize a dense matrix to complex128, column-major."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionMismatch("%s must be 2-D, got shape %s" % (name, m.shape))
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise StructureViolation("%s contains non-finite entries" % name)
    return np.asfortranarray(m)


def _is_sparse(a):
    return sp.issparse(a)


def _max_abs(a):
    if _is_sparse(a):
        return abs(a).max() if a.nnz else 0.0
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class Signature:
    """Signature matrix diag(j, -j) with j a +-1 vector of length m."""

    j: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.j, dtype=np.int64)
        if j.ndim != 1 or not np.all(np.abs(j) == 1):
            raise StructureViolation("signature entries must be exactly +-1")
        object.__setattr__(self, "j", j)

    @property
    def m(self):
        return self.j.shape[0]

    def diagonal(self):
        """Full 2m diagonal (j, -j) as a float vector."""
        return np.concatenate([self.j, -self.j]).astype(np.float64)

    def dense(self):
        return np.asfortranarray(np.diag(self.diagonal()).astype(np.complex128))

    @staticmethod
    def identity(m):
        """Gamma0 = diag(I_m, -I_m)."""
        return Signature(np.ones(m, dtype=np.int64))


@dataclass(frozen=True)
class BsepHamiltonian:
    """The operator H = [[A, B], [-conj(B), -conj(A)]], stored by blocks.

    Blocks may be dense arrays or scipy sparse matrices.  ``asym_a`` and
    ``asym_b`` record the max-norm deviation removed when the inputs were
    projected onto the Hermitian/symmetric subspaces.
    """

    A: object
    B: object
    n: int
    asym_a: float = 0.0
    asym_b: float = 0.0

    @property
    def is_sparse(self):
        return _is_sparse(self.A) or _is_sparse(self.B)

    def norm1(self):
        """Exact 1-norm of H: column j of H stacks A[:,j] over -conj(B)[:,j]."""
        if self.is_sparse:
            ca = np.ravel(abs(sp.csc_matrix(self.A)).sum(axis=0))
            cb = np.ravel(abs(sp.csc_matrix(self.B)).sum(axis=0))
        else:
            ca = np.abs(self.A).sum(axis=0)
            cb = np.abs(self.B).sum(axis=0)
        return float(np.max(ca + cb)) if self.n else 0.0


def assemble_hamiltonian(A, B, tol=1e-12):
    """Build a :class:`BsepHamiltonian` from raw blocks.

    A is projected onto the Hermitian and B onto the complex-symmetric
    subspace; deviations beyond ``tol`` (relative to max(1, max-norm))
    raise :class:`StructureViolation`.
    """
    sparse_in = _is_sparse(A) or _is_sparse(B)
    if sparse_in:
        A = sp.csr_matrix(A, dtype=np.complex128)
        B = sp.csr_matrix(B, dtype=np.complex128)
    else:
        A = as_complex_matrix(A, "A")
        B = as_complex_matrix(B, "B")
    if A.shape[0] != A.shape[1] or B.shape[0] != B.shape[1]:
        raise DimensionMismatch("A and B must be square")
    if A.shape != B.shape:
        raise DimensionMismatch("A and B must have the same order")
    n = A.shape[0]

    dev_a = _max_abs(A - A.conj().T)
    dev_b = _max_abs(B - B.T)
    if dev_a > tol * max(1.0, _max_abs(A)):
        raise StructureViolation(
            "A deviates from Hermitian by %.3e (tol %.3e)" % (dev_a, tol))
    if dev_b > tol * max(1.0, _max_abs(B)):
        raise StructureViolation(
            "B deviates from symmetric by %.3e (tol %.3e)" % (dev_b, tol))

    A = 0.5 * (A + A.conj().T)
    B = 0.5 * (B + B.T)
    if sparse_in:
        A = sp.csr_matrix(A)
        B = sp.csr_matrix(B)
    return BsepHamiltonian(A=A, B=B, n=n, asym_a=dev_a, asym_b=dev_b)


def apply_hamiltonian(H, x):
    """y = H x without forming the 2n x 2n matrix.

    ``x`` may be a vector of length 2n or a matrix with 2n rows.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[0] != 2 * H.n:
        raise DimensionMismatch(
            "expected leading dimension %d, got %d" % (2 * H.n, x.shape[0]))
    x1, x2 = x[:H.n], x[H.n:]
    top = H.A @ x1 + H.B @ x2
    bot = -(np.conj(H.B @ np.conj(x1))) - np.conj(H.A @ np.conj(x2))
    return np.concatenate([top, bot], axis=0)


def expand_dense(H, cap=DENSE_CAP):
    """Materialize H as a dense 2n x 2n array (small problems and oracles only)."""
    if H.n > cap:
        raise SizeLimitExceeded("n=%d exceeds dense cap %d" % (H.n, cap))
    A = H.A.toarray() if _is_sparse(H.A) else H.A
    B = H.B.toarray() if _is_sparse(H.B) else H.B
    out = np.zeros((2 * H.n, 2 * H.n), dtype=np.complex128, order="F")
    out[:H.n, :H.n] = A
    out[:H.n, H.n:] = B
    out[H.n:, :H.n] = -np.conj(B)
    out[H.n:, H.n:] = -np.conj(A)
    return out


def pi_conjugate(x):
    """The map x -> Pi conj(x): swap the two halves and conjugate.

    Works on vectors (even length) and on matrices column-wise.  Applying
    it twice is the identity.
    """
    x = np.asarray(x)
    if x.shape[0] % 2:
        raise OddLength("pi_conjugate needs even leading dimension")
    n = x.shape[0] // 2
    return np.concatenate([np.conj(x[n:]), np.conj(x[:n])], axis=0)


def gamma_inner(S, x, y):
    """Indefinite inner product x^H diag(j, -j) y."""
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if x.shape[0] != 2 * S.m or y.shape[0] != 2 * S.m:
        raise DimensionMismatch("vectors must have length %d" % (2 * S.m))
    return complex(np.vdot(x, S.diagonal() * y))


@dataclass(frozen=True)
class PiMatrix:
    """A 2n x 2m Pi(+/-) matrix stored by its independent blocks G1, G2.

    ``sign`` is +1 for Pi^+ (G Pi = +Pi conj(G)) and -1 for Pi^-.
    """

    sign: int
    G1: np.ndarray
    G2: np.ndarray

    def __post_init__(self):
        if self.sign not in (+1, -1):
            raise StructureViolation("sign must be +1 or -1")
        G1 = as_complex_matrix(self.G1, "G1")
        G2 = as_complex_matrix(self.G2, "G2")
        if G1.shape != G2.shape:
            raise DimensionMismatch("G1 and G2 must have equal shapes")
        object.__setattr__(self, "G1", G1)
        object.__setattr__(self, "G2", G2)

    @property
    def n(self):
        return self.G1.shape[0]

    @property
    def m(self):
        return self.G1.shape[1]

    def dense(self):
        n, m = self.n, self.m
        out = np.zeros((2 * n, 2 * m), dtype=np.complex128, order="F")
        out[:n, :m] = self.G1
        out[:n, m:] = self.G2
        out[n:, :m] = self.sign * np.conj(self.G2)
        out[n:, m:] = self.sign * np.conj(self.G1)
        return out

    @staticmethod
    def from_dense(M, sign, tol=1e-10):
        """Split a dense 2n x 2m matrix into blocks, verifying Pi structure."""
        M = as_complex_matrix(M, "M")
        if M.shape[0] % 2 or M.shape[1] % 2:
            raise OddLength("Pi matrices have even dimensions")
        n, m = M.shape[0] // 2, M.shape[1] // 2
        G1, G2 = M[:n, :m], M[:n, m:]
        dev = max(_max_abs(M[n:, :m] - sign * np.conj(G2)),
                  _max_abs(M[n:, m:] - sign * np.conj(G1)))
        if dev > tol * max(1.0, _max_abs(M)):
            raise StructureViolation(
                "matrix is not Pi%+d within %.1e (deviation %.3e)" % (sign, tol, dev))
        return PiMatrix(sign=sign, G1=G1, G2=G2)


@dataclass(frozen=True)
class PiTridiagonal:
    """Pi(-/+)-Hermitian-tridiagonal canonical form of order m.

    The independent data are

    * ``alpha`` -- real diagonal of T11,
    * ``beta``  -- complex subdiagonal of T11 (the superdiagonal is the
      mirrored (delta_{j+1}/delta_j) conj(beta_j)),
    * ``gamma`` -- complex coupling diagonal T21 (identically zero for
      kind ``"piPlus"``),
    * ``delta`` -- the +-1 signature attached to the basis columns.

    The dense expansion is [[T11, -conj(T21)], [T21, -conj(T11)]] for
    kind ``"piMinus"`` and [[T11, 0], [0, conj(T11)]] for ``"piPlus"``.
    """

    kind: str
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        if self.kind not in ("piMinus", "piPlus"):
            raise StructureViolation("kind must be piMinus or piPlus")
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.complex128)
        gamma = np.asarray(self.gamma, dtype=np.complex128)
        delta = np.asarray(self.delta, dtype=np.int64)
        m = alpha.shape[0]
        if beta.shape[0] != max(m - 1, 0) or gamma.shape[0] != m or delta.shape[0] != m:
            raise DimensionMismatch("inconsistent tridiagonal component lengths")
        if not np.all(np.abs(delta) == 1):
            raise StructureViolation("delta entries must be +-1")
        if self.kind == "piPlus" and m and _max_abs(gamma) != 0.0:
            raise StructureViolation("piPlus form requires gamma == 0")
        for name, arr in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
            if arr.size and not np.all(np.isfinite(arr.view(np.float64))):
                raise StructureViolation("%s contains non-finite entries" % name)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "delta", delta)

    @property
    def m(self):
        return self.alpha.shape[0]

    def t11(self):
        m = self.m
        T = np.zeros((m, m), dtype=np.complex128, order="F")
        T[np.arange(m), np.arange(m)] = self.alpha
        if m > 1:
            j = np.arange(m - 1)
            T[j + 1, j] = self.beta
            T[j, j + 1] = (self.delta[j + 1] / self.delta[j]) * np.conj(self.beta)
        return T

    def signature(self):
        return Signature(self.delta.copy())

    def dense(self):
        m = self.m
        T11 = self.t11()
        out = np.zeros((2 * m, 2 * m), dtype=np.complex128, order="F")
        out[:m, :m] = T11
        if self.kind == "piMinus":
            out[:m, m:] = -np.conj(np.diag(self.gamma))
            out[m:, :m] = np.diag(self.gamma)
            out[m:, m:] = -np.conj(T11)
        else:
            out[m:, m:] = np.conj(T11)
        return out

    def _t11_matvec(self, u):
        m = self.m
        out = self.alpha * u
        if m > 1:
            sig = self.delta[1:] / self.delta[:-1]
            out[1:] += self.beta * u[:-1]
            out[:-1] += sig * np.conj(self.beta) * u[1:]
        return out

    def apply(self, x):
        """Dense-free matvec with the 2m x 2m expansion."""
        x = np.asarray(x, dtype=np.complex128)
        if x.shape[0] != 2 * self.m:
            raise DimensionMismatch("expected length %d" % (2 * self.m))
        m = self.m
        u, v = x[:m], x[m:]
        conj_t11_v = np.conj(self._t11_matvec(np.conj(v)))
        if self.kind == "piMinus":
            top = self._t11_matvec(u) - np.conj(self.gamma) * v
            bot = self.gamma * u - conj_t11_v
        else:
            top = self._t11_matvec(u)
            bot = conj_t11_v
        return np.concatenate([top, bot])

    def norm1(self):
        return float(np.max(np.sum(np.abs(self.dense()), axis=0))) if self.m else 0.0


def check_structure(M, claim, S=None, tol=1e-12):
    """Verify a structural claim about a dense even-order matrix.

    ``claim`` is one of ``piPlus``, ``piMinus``, ``piPlusHermitian``,
    ``piMinusHermitian``, ``gammaUnitary``.  The Hermitian and unitary
    claims are relative to the signature ``S`` (default Gamma0).  Returns
    a dict with ``holds`` and the max-norm ``deviation`` of the claimed
    identity; never raises on a failed claim.
    """
    M = as_complex_matrix(M, "M")
    if M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise DimensionMismatch("claim checks need square even-order matrices")
    n = M.shape[0] // 2
    if S is None:
        S = Signature.identity(n)
    if S.m != n:
        raise DimensionMismatch("signature order does not match matrix")
    scale = max(1.0, _max_abs(M))
    G1, G2 = M[:n, :n], M[:n, n:]
    Lo1, Lo2 = M[n:, n:], M[n:, :n]

    def pi_dev(sign):
        return max(_max_abs(Lo2 - sign * np.conj(G2)),
                   _max_abs(Lo1 - sign * np.conj(G1)))

    j = S.j.astype(np.float64)
    if claim == "piPlus":
        dev = pi_dev(+1)
    elif claim == "piMinus":
        dev = pi_dev(-1)
    elif claim == "piMinusHermitian":
        JG1 = j[:, None] * G1
        JG2 = j[:, None] * G2
        dev = max(pi_dev(-1), _max_abs(JG1 - JG1.conj().T), _max_abs(JG2 - JG2.T))
    elif claim == "piPlusHermitian":
        JG1 = j[:, None] * G1
        JG2 = j[:, None] * G2
        dev = max(pi_dev(+1), _max_abs(JG1 - JG1.conj().T), _max_abs(JG2 + JG2.T))
    elif claim == "gammaUnitary":
        D = M.conj().T @ (S.diagonal()[:, None] * M)
        d = np.real(np.diag(D))[:n]
        jnew = np.where(d >= 0, 1.0, -1.0)
        target = np.diag(np.concatenate([jnew, -jnew]))
        dev = _max_abs(D - target)
    else:
        raise ValueError("unknown claim %r" % claim)
    return {"holds": bool(dev <= tol * scale), "deviation": float(dev)}
