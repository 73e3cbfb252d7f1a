"""Truncated SVD of the centered rating matrix and the factor split.

The rating matrix is filled with zeros at unobserved positions after
subtracting the observed mean, then decomposed at rank k. The item-factor
half of the split (sqrt(S) * Vt) is what seeds the generator model.
"""

import numpy as np

from _toydata import make_toy
from lfgrec import factor_split, fill_and_center, truncated_svd

matrix, _ = make_toy()
mu = matrix.mean()
print(f"{matrix.m} users x {matrix.n} items, {matrix.nnz} ratings, mean {mu:.3f}")

A = fill_and_center(matrix, mu)
k = 8
svd = truncated_svd(A, k, seed=0)
print(f"top-{k} singular values: {np.round(svd.S, 3)}")

resid = np.linalg.norm(A - svd.reconstruct())
full_s = np.linalg.svd(A, compute_uv=False)
optimal = np.sqrt((full_s[k:] ** 2).sum())
# the randomized method is near-optimal; it is exact when the spectrum decays
# fast or the sketch covers the full rank
print(f"rank-{k} residual {resid:.6f} vs optimal {optimal:.6f} "
      f"({100 * (resid / optimal - 1):.3f}% above)")

P, Q = factor_split(svd)
print(f"user factors {P.shape}, item factors {Q.shape}")
print(f"max |P@Q - USVt| = {np.max(np.abs(P @ Q - svd.reconstruct())):.2e}")
