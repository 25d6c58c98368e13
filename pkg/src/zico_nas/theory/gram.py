"""Activation-gated Gram matrix of a two-layer ReLU network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .eigen import sym_eigen


@dataclass(frozen=True)
class GramMatrix:
    H: np.ndarray
    eigenvalues: np.ndarray

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])


def gram_matrix(X, W, unit_tol: float = 1e-9) -> GramMatrix:
    """H_ij = (1/m) x_i.x_j * #{r : x_i.w_r >= 0 and x_j.w_r >= 0}."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim != 2 or W.ndim != 2 or X.shape[0] == 0 or W.shape[0] == 0:
        raise ValidationError(f"need non-empty X (M, d) and W (m, d), got {X.shape} and {W.shape}")
    if X.shape[1] != W.shape[1]:
        raise ValidationError(f"X has d={X.shape[1]} but W has d={W.shape[1]}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > unit_tol):
        raise ValidationError("rows of X must have unit L2 norm")
    active = (X @ W.T >= 0).astype(np.float64)
    H = (X @ X.T) * (active @ active.T) / W.shape[0]
    H = 0.5 * (H + H.T)
    return GramMatrix(H, sym_eigen(H)[0])
