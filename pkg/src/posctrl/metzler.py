"""Matrix tests for positive linear comparison systems.

A Metzler matrix (all off-diagonal entries nonnegative) generates a positive
linear flow.  Its dominant eigenvalue is real with a nonnegative eigenvector,
which makes a shifted power iteration sufficient for stability tests: no
general nonsymmetric eigensolver is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError

__all__ = ["Eigenpair", "is_metzler", "dominant_eigenpair", "is_hurwitz",
           "luenberger_test"]


@dataclass(frozen=True)
class Eigenpair:
    """Dominant eigenvalue and nonnegative eigenvector, unit infinity norm."""

    lam: float
    v: np.ndarray


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def is_metzler(A, tol: float = 0.0) -> bool:
    """True iff every off-diagonal entry of ``A`` is at least ``-tol``."""
    A = _as_square(A)
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return bool(np.min(off) >= -tol)


def dominant_eigenpair(A, tol: float = 1e-12, max_iter: int = 100000) -> Eigenpair:
    """Dominant (largest real part) eigenpair of a Metzler matrix.

    Power iteration on ``B = A + sigma*I`` with ``sigma = 1 + max_i |a_ii|``,
    which is entrywise nonnegative with positive diagonal, so its spectral
    radius is the shifted dominant eigenvalue and the iteration stays in the
    nonnegative cone.  Convergence is declared when successive normalized
    iterates differ by at most ``tol`` in infinity norm; the eigenvalue is the
    Rayleigh quotient minus the shift.

    Raises :class:`ConvergenceError` after ``max_iter`` iterations twice (one
    restart from a perturbed vector), which signals a near-degenerate
    dominant pair (e.g. a reducible matrix with tied blocks).
    """
    A = _as_square(A)
    if not is_metzler(A, 1e-12):
        raise ValueError("dominant_eigenpair requires a Metzler matrix")
    n = A.shape[0]
    sigma = 1.0 + float(np.max(np.abs(np.diag(A)))) if n else 1.0
    B = A + sigma * np.eye(n)

    for attempt in range(2):
        v = np.ones(n)
        if attempt == 1:
            v += 1e-3 * (1.0 + np.arange(n))
        v /= np.max(np.abs(v))
        converged = False
        for _ in range(max_iter):
            w = B @ v
            w_norm = float(np.max(np.abs(w)))
            # B has strictly positive diagonal, so w_norm > 0 for v >= 0, v != 0
            w /= w_norm
            if float(np.max(np.abs(w - v))) <= tol:
                v = w
                converged = True
                break
            v = w
        if converged:
            lam = float(v @ (B @ v) / (v @ v)) - sigma
            return Eigenpair(lam=lam, v=v)
    raise ConvergenceError(
        "power iteration did not converge (near-degenerate dominant eigenvalues)"
    )


def is_hurwitz(A) -> bool:
    """True iff the Metzler matrix ``A`` has all eigenvalues in the open left
    half plane (equivalently, its real dominant eigenvalue is negative)."""
    return dominant_eigenpair(A).lam < 0.0


def luenberger_test(A, b, tol: float = 1e-10) -> Optional[np.ndarray]:
    """Positive-solution stability test for a Metzler matrix.

    Solves ``A x = -b`` for a strongly positive ``b`` and returns ``x``
    (clamped to the nonnegative orthant) when ``x >= -tol`` componentwise,
    else ``None``.  For Metzler ``A`` the return is non-``None`` exactly when
    ``A`` is Hurwitz; a singular ``A`` is not Hurwitz and yields ``None``.
    """
    A = _as_square(A)
    if not is_metzler(A, 1e-12):
        raise ValueError("luenberger_test requires a Metzler matrix")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise ValueError("b must be a vector matching A")
    if not np.all(b > 0):
        raise ValueError("b must be strongly positive")
    try:
        x = np.linalg.solve(A, -b)
    except np.linalg.LinAlgError:
        return None
    if np.min(x) < -tol:
        return None
    return np.maximum(x, 0.0)
