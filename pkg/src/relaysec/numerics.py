"""Small dense complex linear algebra used by the rest of the package.

Everything operates on plain complex128 numpy arrays of tiny size
(streams x antennas, at most ~16 per side), so clarity and numerical
stability win over speed.  The Monte Carlo hot path has its own batched
implementation in :mod:`relaysec.kernels`; these functions are the
reference it is tested against.
"""

from __future__ import annotations

import numpy as np

# Gram matrices from continuous fading draws are almost surely well
# conditioned; the cap only catches pathological states.
COND_CAP = 1e12


class SingularChannel(Exception):
    """Gram matrix numerically singular; the channel draw must be resampled."""


class DimensionMismatch(Exception):
    """Operands have incompatible lengths."""


def as_cvector(x) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D complex128 vector."""
    v = np.ascontiguousarray(x, dtype=np.complex128)
    if v.ndim != 1:
        raise ValueError("expected a 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def as_cmatrix(x) -> np.ndarray:
    """Coerce ``x`` to a finite 2-D complex128 matrix."""
    a = np.ascontiguousarray(x, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def conj_transpose(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.asarray(a)).T


def one_norm(a: np.ndarray) -> float:
    """Matrix 1-norm (max column absolute sum)."""
    return float(np.max(np.sum(np.abs(a), axis=0)))


def right_pseudo_inverse(h, cond_cap: float = COND_CAP) -> np.ndarray:
    """Right pseudo-inverse ``h^H (h h^H)^{-1}`` of a wide matrix.

    The columns of the result are the unnormalised zero-forcing
    beamformers for the rows of ``h``.  Raises :class:`SingularChannel`
    when the Gram matrix ``h h^H`` is numerically singular (1-norm
    condition estimate above ``cond_cap``).
    """
    h = as_cmatrix(h)
    rows, cols = h.shape
    if rows > cols:
        raise ValueError("right inverse needs rows <= cols")
    gram = h @ conj_transpose(h)
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise SingularChannel("gram matrix is singular") from None
    cond = one_norm(gram) * one_norm(gram_inv)
    if not np.isfinite(cond) or cond > cond_cap:
        raise SingularChannel(f"gram condition estimate {cond:.3e} above cap {cond_cap:.1e}")
    return conj_transpose(h) @ gram_inv


def hermitian_det2(c11: float, c22: float, c12: complex) -> float:
    """Determinant ``c11*c22 - |c12|^2`` of a 2x2 Hermitian matrix."""
    return float(c11) * float(c22) - abs(c12) ** 2


def inner_product(a, b) -> complex:
    """``sum_i a_i * conj(b_i)`` (conjugation on the second argument)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"lengths {a.shape} vs {b.shape}")
    return complex(np.vdot(b, a))


def norm_sq(a) -> float:
    """Squared 2-norm ``sum_i |a_i|^2``."""
    a = np.asarray(a, dtype=np.complex128)
    return float(np.sum(np.abs(a) ** 2))


def norm(a) -> float:
    """2-norm."""
    return float(np.sqrt(norm_sq(a)))
