"""Small linear-algebra helpers shared by the schedule and the engine."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate a vector's global phase so its largest entry is real positive."""
    k = int(np.argmax(np.abs(v)))
    a = v[k]
    if np.abs(a) == 0:
        return v
    return v * (np.conj(a) / np.abs(a))


def complete_unitary(c: np.ndarray) -> np.ndarray:
    """Unitary whose LAST column is the unit vector c (deterministic)."""
    c = np.asarray(c, dtype=complex)
    r = c.size
    nrm = np.linalg.norm(c)
    if abs(nrm - 1.0) > 1e-8:
        raise NumericalError(f"completion target not unit norm ({nrm})")
    c = c / nrm
    q, _ = np.linalg.qr(np.hstack([c[:, None], np.eye(r, dtype=complex)]))
    # QR fixes the first column only up to phase; re-orthogonalize the
    # remaining columns against the exact target instead.
    rest = q[:, 1:r]
    rest = rest - np.outer(c, c.conj() @ rest)
    if rest.shape[1]:
        rest, _ = np.linalg.qr(rest)
    return np.hstack([rest, c[:, None]])


def orthonormalize_against(v: np.ndarray, basis: np.ndarray | None) -> np.ndarray:
    """Twice-iterated Gram-Schmidt of v against the columns of basis."""
    if basis is not None and basis.shape[1]:
        for _ in range(2):
            v = v - basis @ (basis.conj().T @ v)
    nrm = np.linalg.norm(v)
    if nrm < 1e-10:
        raise NumericalError("vector vanishes after orthogonalization")
    return v / nrm


def expmv(A: sp.spmatrix, B: np.ndarray, tol: float = 1e-13,
          max_terms: int = 60) -> np.ndarray:
    """exp(A) @ B by scaled Taylor series for (anti-Hermitian) sparse A.

    Cheap alternative to scipy's expm_multiply: no norm estimation
    machinery, supports multi-column B, and the call overhead matters
    because it sits in the innermost propagation loop.
    """
    norm = float(np.max(np.abs(A).sum(axis=0))) if A.nnz else 0.0
    s = max(1, int(np.ceil(norm / 4.0)))
    As = A * (1.0 / s)
    out = B
    for _ in range(s):
        term = out
        acc = out.copy()
        scale = max(1.0, float(np.max(np.abs(acc))))
        for k in range(1, max_terms + 1):
            term = As @ term * (1.0 / k)
            acc += term
            if np.max(np.abs(term)) < tol * scale:
                break
        else:
            raise NumericalError("Taylor series for expmv did not converge")
        out = acc
    return out
