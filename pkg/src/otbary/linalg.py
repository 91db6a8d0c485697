"""Symmetric-matrix primitives used by the Gaussian reference formulas.

All routines go through a real symmetric eigendecomposition, which is
exact enough for the covariance sizes this package works at (D <= a few
hundred) and keeps the error behaviour easy to reason about: tiny
negative eigenvalues produced by round-off are clamped to zero, anything
more negative is rejected as "not positive semi-definite".
"""

import numpy as np

from .errors import ConditioningError, ValidationError
from .rng import as_generator

__all__ = [
    "check_square",
    "check_symmetric",
    "symmetrize",
    "spd_sqrt",
    "spd_inv_sqrt",
    "random_rotation",
]

# Relative tolerances, both against the largest eigenvalue magnitude.
_SYM_RTOL = 1e-10        # allowed asymmetry ||A - A.T|| / ||A||
_EIG_CLAMP_RTOL = 1e-12  # eigenvalues above -rtol*lam_max clamp to zero


def check_square(a, name="matrix"):
    """Validate that ``a`` is a finite square 2-D float array; return it as float64."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    return a


def check_symmetric(a, name="matrix"):
    """Validate symmetry up to round-off and return the symmetrized matrix."""
    a = check_square(a, name)
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > _SYM_RTOL * scale:
        raise ValidationError(f"{name} is not symmetric")
    return symmetrize(a)


def symmetrize(a):
    """Return (a + a.T) / 2."""
    return (a + a.T) / 2.0


def _clamped_eigh(a, name):
    """Eigendecompose a symmetric matrix, clamping round-off negatives to zero."""
    a = check_symmetric(a, name)
    eigvals, eigvecs = np.linalg.eigh(a)
    lam_max = max(eigvals[-1], 0.0)
    floor = -_EIG_CLAMP_RTOL * lam_max
    if eigvals[0] < floor:
        raise ValidationError(
            f"{name} is not positive semi-definite: smallest eigenvalue "
            f"{eigvals[0]:.3e} (largest {lam_max:.3e})"
        )
    return np.maximum(eigvals, 0.0), eigvecs


def spd_sqrt(a, name="matrix"):
    """Symmetric positive semi-definite square root.

    Parameters
    ----------
    a : ndarray of shape (d, d)
        Symmetric PSD matrix.  Eigenvalues in ``[-1e-12 * lam_max, 0)``
        are treated as round-off and clamped to zero; more negative ones
        raise ``ValidationError``.

    Returns
    -------
    ndarray of shape (d, d)
        The unique symmetric PSD matrix ``R`` with ``R @ R = a``.
    """
    eigvals, eigvecs = _clamped_eigh(a, name)
    return symmetrize((eigvecs * np.sqrt(eigvals)) @ eigvecs.T)


def spd_inv_sqrt(a, name="matrix", rtol=1e-12):
    """Inverse symmetric square root of a strictly positive definite matrix.

    Raises
    ------
    ConditioningError
        If the smallest eigenvalue is at or below ``rtol`` times the
        largest (the matrix is numerically singular).
    """
    eigvals, eigvecs = _clamped_eigh(a, name)
    lam_min, lam_max = eigvals[0], eigvals[-1]
    if lam_min <= rtol * lam_max or lam_min == 0.0:
        raise ConditioningError(
            f"{name} is numerically singular: smallest eigenvalue "
            f"{lam_min:.3e} vs largest {lam_max:.3e}"
        )
    return symmetrize((eigvecs / np.sqrt(eigvals)) @ eigvecs.T)


def random_rotation(dim, rng):
    """Draw a rotation matrix (orthogonal, determinant +1) uniformly at random.

    Uses the QR decomposition of a standard Gaussian matrix with the sign
    convention that makes the distribution Haar; the last column is
    flipped if needed to land in the special orthogonal group.

    Parameters
    ----------
    dim : int
        Dimension, at least 1.
    rng : numpy.random.Generator or int
        Source of randomness (an int is taken as a root seed).
    """
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    rng = as_generator(rng)
    gauss = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q
