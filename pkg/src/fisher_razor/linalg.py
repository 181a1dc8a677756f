"""Dense symmetric linear algebra.

Everything downstream (Fisher matrices, log-determinants of shifted
metrics, remainder terms) goes through these few functions.  Matrices are
plain ``numpy`` arrays; :func:`sym_matrix` is the single entry point that
validates and symmetrizes them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError, SingularShiftError

#: Negative eigenvalues down to ``-PSD_TOL * max(1, |A|_max)`` are treated as 0.
PSD_TOL = 1e-8


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues sorted descending.

    ``eigenvectors[:, i]`` belongs to ``eigenvalues[i]``.
    """

    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]

    def reconstruct(self) -> NDArray[np.float64]:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def sym_matrix(a: ArrayLike) -> NDArray[np.float64]:
    """Return ``a`` as a symmetric float64 array, ``(a + a.T) / 2``.

    Raises :class:`InputError` for non-square, empty or non-finite input.
    A 0-d or 1-element input is promoted to a 1x1 matrix.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InputError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("matrix has non-finite entries")
    return 0.5 * (arr + arr.T)


def jacobi_eigh(
    a: ArrayLike, tol: float = 1e-12, max_sweeps: int = 100
) -> EigenDecomposition:
    """Cyclic Jacobi eigensolver.

    Sweeps over all (p, q) pairs in row order, annihilating ``a[p, q]``
    with a plane rotation.  Stops when the off-diagonal Frobenius norm
    drops below ``tol * |A|_F`` or after ``max_sweeps`` sweeps.
    """
    work = sym_matrix(a).copy()
    n = work.shape[0]
    vecs = np.eye(n)
    scale = np.linalg.norm(work)
    if n > 1 and scale > 0.0:
        for _ in range(max_sweeps):
            off = np.sqrt(max(np.sum(work**2) - np.sum(np.diag(work) ** 2), 0.0))
            if off < tol * scale:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = work[p, q]
                    diff = work[q, q] - work[p, p]
                    if apq == 0.0 or abs(apq) < 1e-300 * max(abs(diff), 1.0):
                        continue
                    if abs(apq) < 1e-150 * abs(diff):
                        # theta^2 would overflow; t ~ 1/(2 theta)
                        t = apq / diff
                    else:
                        theta = diff / (2.0 * apq)
                        t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c
                    col_p = work[:, p].copy()
                    col_q = work[:, q].copy()
                    work[:, p] = c * col_p - s * col_q
                    work[:, q] = s * col_p + c * col_q
                    row_p = work[p, :].copy()
                    row_q = work[q, :].copy()
                    work[p, :] = c * row_p - s * row_q
                    work[q, :] = s * row_p + c * row_q
                    work[p, q] = work[q, p] = 0.0
                    v_p = vecs[:, p].copy()
                    v_q = vecs[:, q].copy()
                    vecs[:, p] = c * v_p - s * v_q
                    vecs[:, q] = s * v_p + c * v_q
    vals = np.diag(work).copy()
    order = np.argsort(vals)[::-1]
    return EigenDecomposition(vals[order], vecs[:, order])


def eig_sym(a: ArrayLike, method: str = "lapack") -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Symmetrized on entry.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls ``numpy.linalg.eigh``; ``"jacobi"`` uses the
        pure cyclic-Jacobi solver :func:`jacobi_eigh`.
    """
    if method == "jacobi":
        return jacobi_eigh(a)
    if method != "lapack":
        raise InputError(f"unknown eigensolver {method!r}")
    vals, vecs = np.linalg.eigh(sym_matrix(a))
    return EigenDecomposition(vals[::-1].copy(), vecs[:, ::-1].copy())


def psd_eigenvalues(a: ArrayLike) -> NDArray[np.float64]:
    """Descending eigenvalues of a psd matrix with round-off negatives clamped to 0.

    Raises :class:`InputError` if an eigenvalue is below
    ``-PSD_TOL * max(1, |A|_max)``.
    """
    a = sym_matrix(a)
    vals = eig_sym(a).eigenvalues
    tol = PSD_TOL * max(1.0, float(np.max(np.abs(a))))
    if vals[-1] < -tol:
        raise InputError(f"matrix is not positive semidefinite (eigenvalue {vals[-1]:.3e})")
    return np.maximum(vals, 0.0)


def log_det_shifted(a: ArrayLike, shift: float = 0.0) -> float:
    """``log |A + shift * I|`` summed in log-space from the eigenvalues of ``A``.

    ``A`` must be psd up to the clamping tolerance.  Raises
    :class:`SingularShiftError` when some ``lambda_i + shift <= 0``.
    """
    if shift < 0:
        raise InputError("shift must be nonnegative")
    shifted = psd_eigenvalues(a) + shift
    if np.any(shifted <= 0.0):
        raise SingularShiftError(
            f"{int(np.sum(shifted <= 0.0))} shifted eigenvalue(s) are not positive"
        )
    return float(np.sum(np.log(shifted)))


def quadratic_form(a: ArrayLike, v: ArrayLike) -> float:
    """Return ``v^T A v``."""
    a = sym_matrix(a)
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] != a.shape[0]:
        raise InputError(f"vector has length {v.shape[0]}, matrix is {a.shape[0]}x{a.shape[0]}")
    return float(v @ a @ v)


def log_det_shifted_many(stack: ArrayLike, shift: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """:func:`log_det_shifted` over a ``(K, d, d)`` stack.

    Returns ``(logdets, eigenvalues)`` with eigenvalues clamped at 0 and
    sorted descending along the last axis.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise InputError(f"expected a (K, d, d) stack, got shape {stack.shape}")
    if not np.all(np.isfinite(stack)):
        raise InputError("matrix stack has non-finite entries")
    vals = np.linalg.eigvalsh(0.5 * (stack + np.swapaxes(stack, 1, 2)))[:, ::-1]
    tol = PSD_TOL * np.maximum(1.0, np.max(np.abs(stack), axis=(1, 2)))
    if np.any(vals[:, -1] < -tol):
        raise InputError("a matrix in the stack is not positive semidefinite")
    vals = np.maximum(vals, 0.0)
    shifted = vals + shift
    if np.any(shifted <= 0.0):
        raise SingularShiftError("shifted eigenvalue is not positive")
    return np.sum(np.log(shifted), axis=1), vals
