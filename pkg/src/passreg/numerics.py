"""Dense complex linear-algebra kernel.

Thin, checked wrappers around LAPACK (via numpy/scipy).  Every higher layer
goes through these four entry points so that singularity and convergence
failures surface as the same exception types everywhere.
"""

import warnings

import numpy as np
import scipy.linalg

# relative pivot threshold that declares a matrix singular
PIVOT_RTOL = 1e-14


class NumericsError(Exception):
    """Base class for failures of the linear-algebra kernel."""


class SingularMatrix(NumericsError):
    """Raised when a pivot of the LU factorization is numerically zero."""


class NoConvergence(NumericsError):
    """Raised when an eigenvalue or singular value iteration fails."""


class RankZero(NumericsError):
    """Raised when no singular value exceeds the requested cutoff."""


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D complex-or-real ndarray.

    Real input stays real; everything else is promoted to complex128.
    """
    arr = np.asarray(a)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        arr = arr.astype(complex)
    else:
        arr = arr.astype(float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def lu_factor_checked(A):
    """LU factorization with a relative pivot test.

    Returns the scipy ``(lu, piv)`` pair.  Raises :class:`SingularMatrix`
    if some pivot is below ``PIVOT_RTOL * max|A|``.
    """
    A = np.asarray(A)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # an exactly zero pivot is reported through SingularMatrix below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) <= PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot {np.min(pivots):.3e} below threshold {PIVOT_RTOL * scale:.3e}"
        )
    return lu, piv


def solve_linear(A, rhs):
    """Solve ``A X = rhs`` by partial-pivot LU.

    Parameters
    ----------
    A : (n, n) array_like
    rhs : (n,) or (n, m) array_like

    Returns
    -------
    X : ndarray with the shape of ``rhs``

    Raises
    ------
    SingularMatrix
        If a pivot falls below ``1e-14 * max|A|``; the resolvent routines use
        this to detect that a point lies in the spectrum.
    """
    A = np.asarray(A)
    rhs = np.asarray(rhs)
    if rhs.shape[0] != A.shape[0]:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {A.shape[0]}")
    lu, piv = lu_factor_checked(A)
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def spectrum(A):
    """All eigenvalues of a square matrix, with multiplicity.

    LAPACK's Hessenberg-QR is used; a convergence failure is re-raised as
    :class:`NoConvergence`.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(A).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def singular_values(A):
    A = np.asarray(A)
    if A.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def min_singular_value(A):
    """Smallest singular value of ``A`` (0 for rank-deficient input)."""
    s = singular_values(A)
    if s.size == 0:
        return 0.0
    return float(s[-1])


def pseudoinverse_norm(A, cutoff=0.0):
    """Spectral norm of the Moore-Penrose pseudoinverse.

    Singular values at or below ``cutoff`` are treated as zero, so the result
    is ``1/s`` for the smallest singular value ``s > cutoff``.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    s = singular_values(A)
    kept = s[s > cutoff]
    if kept.size == 0:
        raise RankZero(f"no singular value exceeds cutoff {cutoff}")
    return float(1.0 / kept[-1])


def null_space(A, rtol=1e-10):
    """Orthonormal basis of the numerical kernel of ``A``."""
    A = np.asarray(A)
    if A.size == 0:
        return np.eye(A.shape[1], dtype=A.dtype)
    return scipy.linalg.null_space(A, rcond=rtol)


def numerical_rank(A, rtol=1e-10):
    """Rank of ``A`` with singular values below ``rtol * s_max`` discarded."""
    s = singular_values(A)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def hermitian_part(A):
    A = np.asarray(A)
    return 0.5 * (A + A.conj().T)


def max_hermitian_eig(A):
    """Largest eigenvalue of the Hermitian part ``(A + A*)/2``."""
    return float(np.linalg.eigvalsh(hermitian_part(A))[-1])


def min_hermitian_eig(A):
    """Smallest eigenvalue of the Hermitian part ``(A + A*)/2``."""
    return float(np.linalg.eigvalsh(hermitian_part(A))[0])
