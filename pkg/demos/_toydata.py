"""Shared synthetic MovieLens-like data for the demo scripts."""

import numpy as np

from lfgrec import RatingTriple, build_matrix, encode_features
from lfgrec.dataset import RawUser

OCCUPATIONS = ("student", "engineer", "artist", "other")


def make_toy(m=80, n=40, seed=0):
    """Ratings from a low-rank + bias model, plus random demographics."""
    rng = np.random.default_rng(seed)
    P = rng.normal(0, 0.6, (m, 2))
    Q = rng.normal(0, 0.6, (2, n))
    bu = rng.normal(0, 0.3, m)
    bi = rng.normal(0, 0.3, n)
    R = np.clip(np.rint(3.5 + P @ Q + bu[:, None] + bi[None, :]), 1, 5)
    triples = []
    for u in range(m):
        for i in rng.choice(n, size=int(rng.integers(10, 25)), replace=False):
            triples.append(RatingTriple(u + 1, int(i) + 1, float(R[u, i]), 0))
    users = [RawUser(u + 1, int(rng.integers(18, 60)),
                     "M" if rng.random() < 0.5 else "F",
                     OCCUPATIONS[int(rng.integers(len(OCCUPATIONS)))])
             for u in range(m)]
    return build_matrix(triples), encode_features(users, OCCUPATIONS)
