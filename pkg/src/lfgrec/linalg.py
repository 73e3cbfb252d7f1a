"""Dense primitives and randomized truncated SVD of the filled rating matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lfgrec.dataset import RatingMatrix

OVERSAMPLE = 10
POWER_ITERATIONS = 2


@dataclass(frozen=True)
class TruncatedSvd:
    """Rank-k factors: U (m x k), S (k,) descending non-negative, Vt (k x n)."""

    U: np.ndarray
    S: np.ndarray
    Vt: np.ndarray
    k: int

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.Vt


def matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"matmul shape mismatch: {A.shape} x {B.shape}")
    return A @ B


def transpose(A: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(A.T)


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise ValueError(f"axpy shape mismatch: {x.shape} vs {y.shape}")
    return alpha * x + y


def fill_and_center(matrix: RatingMatrix, mu: float) -> np.ndarray:
    """Dense matrix with observed entries shifted by -mu and 0 elsewhere."""
    A = np.zeros((matrix.m, matrix.n))
    A[matrix.users, matrix.items] = matrix.ratings - mu
    return A


def truncated_svd(A: np.ndarray, k: int, seed: int) -> TruncatedSvd:
    """Randomized rank-k SVD with oversampling and power iterations.

    Projects A onto a (k + OVERSAMPLE)-dimensional random range, sharpens the
    range with POWER_ITERATIONS QR-stabilized passes, then takes the exact SVD
    of the small projected matrix.
    """
    m, n = A.shape
    if not 0 <= k <= min(m, n):
        raise ValueError(f"rank {k} out of range for {m}x{n} matrix")
    if k == 0:
        return TruncatedSvd(np.zeros((m, 0)), np.zeros(0), np.zeros((0, n)), 0)
    rng = np.random.default_rng(seed)
    r = min(k + OVERSAMPLE, min(m, n))
    Y = A @ rng.standard_normal((n, r))
    Q, _ = np.linalg.qr(Y)
    for _ in range(POWER_ITERATIONS):
        Q, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Q)
    B = Q.T @ A
    Ub, S, Vt = np.linalg.svd(B, full_matrices=False)
    return TruncatedSvd(U=Q @ Ub[:, :k], S=S[:k], Vt=Vt[:k], k=k)


def factor_split(svd: TruncatedSvd) -> tuple[np.ndarray, np.ndarray]:
    """Split into user factors P = U*sqrt(S) and item factors Q = sqrt(S)*Vt."""
    if np.any(svd.S < 0):
        raise ValueError("negative singular values")
    root = np.sqrt(svd.S)
    return svd.U * root, root[:, None] * svd.Vt
