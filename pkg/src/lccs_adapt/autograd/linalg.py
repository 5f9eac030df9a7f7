"""Small dense linear algebra: a deterministic thin SVD."""

import logging
from typing import NamedTuple, Optional

import numpy as np

from ..config.settings import get_settings
from ..utils.errors import ContractError, NumericDomainError


logger = logging.getLogger(__name__)


class SVDResult(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def _rotate_to_orthogonal(work: np.ndarray, tolerance: float, max_sweeps: int) -> np.ndarray:
    """One-sided Jacobi: rotate column pairs of work in place until orthogonal.

    Returns the accumulated rotation V with work_final = work_initial @ V.
    """
    n = work.shape[1]
    v = np.eye(n)
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = float(work[:, p] @ work[:, p])
                beta = float(work[:, q] @ work[:, q])
                gamma = float(work[:, p] @ work[:, q])
                if gamma == 0.0 or abs(gamma) <= tolerance * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                col_p = work[:, p].copy()
                work[:, p] = c * col_p - s * work[:, q]
                work[:, q] = s * col_p + c * work[:, q]
                vec_p = v[:, p].copy()
                v[:, p] = c * vec_p - s * v[:, q]
                v[:, q] = s * vec_p + c * v[:, q]
        if not rotated:
            logger.debug(f"Jacobi SVD converged after {sweep + 1} sweeps")
            return v
    logger.warning(f"Jacobi SVD hit the {max_sweeps}-sweep cap before converging")
    return v


def _complete_orthonormal(columns: np.ndarray, missing: int) -> np.ndarray:
    """Extend orthonormal columns with `missing` more, drawn from the standard basis."""
    rows = columns.shape[0]
    basis = [columns[:, j] for j in range(columns.shape[1])]
    added = []
    for i in range(rows):
        if len(added) == missing:
            break
        candidate = np.zeros(rows)
        candidate[i] = 1.0
        for _ in range(2):
            for vector in basis + added:
                candidate = candidate - (vector @ candidate) * vector
        norm = np.linalg.norm(candidate)
        if norm > 1e-8:
            added.append(candidate / norm)
    return np.column_stack(added) if added else np.zeros((rows, 0))


def svd_thin(a, tolerance: Optional[float] = None, max_sweeps: Optional[int] = None) -> SVDResult:
    """Thin SVD a = U diag(S) V^T for a (C x m) matrix, r = min(C, m).

    S is nonincreasing and nonnegative. Each column of U has its
    largest-magnitude entry nonnegative, so the output is unique for
    distinct singular values.
    """
    settings = get_settings()
    tolerance = settings.svd_tolerance if tolerance is None else tolerance
    max_sweeps = settings.svd_max_sweeps if max_sweeps is None else max_sweeps

    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or 0 in a.shape:
        raise ContractError(f"svd_thin expects a nonempty rank-2 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericDomainError("svd_thin input has non-finite entries")

    transposed = a.shape[0] < a.shape[1]
    work = a.T.copy() if transposed else a.copy()
    rows, rank = work.shape

    rotation = _rotate_to_orthogonal(work, tolerance, max_sweeps)
    norms = np.sqrt((work * work).sum(axis=0))
    order = np.argsort(-norms, kind="stable")
    norms, work, rotation = norms[order], work[:, order], rotation[:, order]

    cutoff = max(rows, rank) * np.finfo(np.float64).eps * (norms[0] if rank else 0.0)
    nonzero = norms > cutoff
    singular = np.where(nonzero, norms, 0.0)
    left = np.zeros((rows, rank))
    left[:, nonzero] = work[:, nonzero] / norms[nonzero]
    missing = int((~nonzero).sum())
    if missing:
        left[:, ~nonzero] = _complete_orthonormal(left[:, nonzero], missing)

    u, v = (rotation, left) if transposed else (left, rotation)
    for j in range(u.shape[1]):
        pivot = int(np.argmax(np.abs(u[:, j])))
        if u[pivot, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return SVDResult(u=u, s=singular, v=v)
