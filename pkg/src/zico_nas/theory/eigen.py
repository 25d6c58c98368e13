"""Symmetric eigendecomposition by cyclic Jacobi rotations."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericError, ValidationError

MAX_ORDER = 1024


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt((off * off).sum()))


def sym_eigen(h, tol: float = 1e-12, max_sweeps: int = 100) -> tuple:
    """Eigenvalues ascending and the matching eigenvector columns of symmetric ``h``.

    Sweeps over every (p, q) pair until the off-diagonal Frobenius norm is
    below ``tol``.
    """
    a = np.array(h, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"need a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > MAX_ORDER:
        raise ValidationError(f"order {n} exceeds {MAX_ORDER}")
    asym = float(np.abs(a - a.T).max()) if n else 0.0
    if asym > 1e-10:
        raise ValidationError(f"matrix is not symmetric (max |H - H^T| = {asym:.3e})")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    for _ in range(max_sweeps):
        if _off_norm(a) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e300 * abs(apq):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        if _off_norm(a) >= tol:
            raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigvals(h) -> np.ndarray:
    return sym_eigen(h)[0]
