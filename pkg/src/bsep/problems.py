"""Synthetic problem factory.

Three instance families:

* ``random`` -- dense (or sparse) blocks with A shifted to keep
  Gamma0 H positive definite, the regime physical Bethe-Salpeter data
  lives in.  Hyperbolic eliminations stay well conditioned there; truly
  indefinite instances are better built explicitly (knownSpectrum with
  mixed couplings, or the quadruple embeddings below).
* ``knownSpectrum`` -- diagonal A with B = 0: the spectrum is exactly
  {+-a_i}.
* ``gapControlled`` -- a genuinely complex eigenvalue quadruple of
  modulus lam1 planted in front of a real tail led by lam5: the instance
  behind the Krylov convergence-rate diagnostic.
"""

import numpy as np
import scipy.sparse as sp

from .errors import InvalidSpec

# a 2-index coupled block with a genuinely complex quadruple; any generic
# Pi^- -Hermitian block whose spectrum leaves the real/imaginary axes works
_QUAD_T11 = np.array([
    [-0.042673827710852374 + 0.0j, -0.8368950200968434 + 0.3015466095655266j],
    [-0.8368950200968434 - 0.3015466095655266j, 1.4400167254152394 + 0.0j]])
_QUAD_T21 = np.diag([0.36233859316943917 + 0.25811026702099754j,
                     -1.6394479624476481 + 0.360155232237386j])


def quadruple_block(modulus):
    """(A2, B2) blocks of a 2x2 coupled pair whose four eigenvalues form a
    conjugate-closed quadruple of the given modulus."""
    blk = np.block([[_QUAD_T11, -_QUAD_T21.conj()],
                    [_QUAD_T21, -_QUAD_T11.conj()]])
    mod = float(np.abs(np.linalg.eigvals(blk)[0]))
    s = modulus / mod
    return s * _QUAD_T11, s * (-_QUAD_T21.conj())


def _random_blocks(n, rng, density, bscale, margin):
    if density >= 1.0:
        A0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        A0 = (A0 + A0.conj().T) / 2
        B = bscale * (B + B.T) / 2
        lmin = float(np.min(np.linalg.eigvalsh(A0)))
        bnorm = float(np.linalg.norm(B, 2))
        shift = abs(lmin) + bnorm + margin * (float(np.linalg.norm(A0, 2)) + bnorm)
        return A0 + shift * np.eye(n), B

    def srandom():
        M = sp.random(n, n, density=density, random_state=rng,
                      data_rvs=lambda k: rng.standard_normal(k) + 1j * rng.standard_normal(k))
        return M.tocsr()

    A0 = srandom()
    A0 = (A0 + A0.conj().T) * 0.5
    B = srandom()
    B = bscale * 0.5 * (B + B.T)
    # Gershgorin bound keeps the shifted A dominant without a dense solve
    arow = np.ravel(abs(A0).sum(axis=1))
    brow = np.ravel(abs(B).sum(axis=1))
    shift = float(arow.max(initial=0.0) + brow.max(initial=0.0)) * (1.0 + margin) + 1.0
    return (A0 + shift * sp.identity(n, dtype=np.complex128)).tocsr(), B.tocsr()


def generate_problem(mode="random", n=None, seed=0, density=1.0, values=None,
                     lam1=2.0, lam5=1.0, bscale=1.0, margin=0.3):
    """Deterministic (A, B) factory; see the module docstring for modes."""
    rng = np.random.default_rng(seed)
    if mode == "random":
        if not n or n < 1:
            raise InvalidSpec("random mode needs n >= 1")
        return _random_blocks(n, rng, density, bscale, margin)
    if mode == "knownSpectrum":
        if values is None or len(values) == 0:
            raise InvalidSpec("knownSpectrum needs a value list")
        vals = np.asarray(values, dtype=np.float64)
        return np.diag(vals).astype(np.complex128), np.zeros((len(vals), len(vals)),
                                                             dtype=np.complex128)
    if mode == "gapControlled":
        if not n or n < 3:
            raise InvalidSpec("gapControlled needs n >= 3")
        if not (lam1 > lam5 > 0):
            raise InvalidSpec("need lam1 > lam5 > 0")
        A2, B2 = quadruple_block(lam1)
        tail = lam5 * (0.8 ** np.arange(n - 2))
        A = np.zeros((n, n), dtype=np.complex128)
        B = np.zeros((n, n), dtype=np.complex128)
        A[:2, :2] = A2
        B[:2, :2] = B2
        A[2:, 2:] = np.diag(tail)
        return A, B
    raise InvalidSpec("unknown mode %r" % mode)
