import os
from pathlib import Path

import numpy as np
import pytest

from lfgrec.dataset import RatingTriple, RawUser, build_matrix, encode_features

OCCUPATIONS = ("student", "engineer", "artist", "other")


def synthetic_ratings(m=60, n=30, rank=2, seed=0, min_per_user=8, max_per_user=20):
    """Ratings from a rank-`rank` + bias generative model, rounded to 1..5."""
    rng = np.random.default_rng(seed)
    P = rng.normal(0, 0.6, (m, rank))
    Q = rng.normal(0, 0.6, (rank, n))
    bu = rng.normal(0, 0.3, m)
    bi = rng.normal(0, 0.3, n)
    R = np.clip(np.rint(3.5 + P @ Q + bu[:, None] + bi[None, :]), 1, 5)
    triples = []
    hi = min(max_per_user, n)
    lo = min(min_per_user, hi - 1)
    for u in range(m):
        items = rng.choice(n, size=int(rng.integers(lo, hi)), replace=False)
        for i in sorted(items.tolist()):
            triples.append(RatingTriple(u + 1, i + 1, float(R[u, i]), 100_000 + u))
    return triples


def synthetic_users(m=60, seed=0):
    rng = np.random.default_rng(seed + 1)
    return [RawUser(u + 1, int(rng.integers(18, 60)),
                    "M" if rng.random() < 0.5 else "F",
                    OCCUPATIONS[int(rng.integers(len(OCCUPATIONS)))])
            for u in range(m)]


@pytest.fixture(scope="session")
def toy_data():
    triples = synthetic_ratings()
    users = synthetic_users()
    return build_matrix(triples), encode_features(users, OCCUPATIONS)


def write_ml100k_layout(path: Path, triples, users, occupations=OCCUPATIONS) -> Path:
    """Write a directory in the ml-100k file layout."""
    path.mkdir(parents=True, exist_ok=True)
    (path / "u.data").write_text(
        "".join(f"{t.user_id}\t{t.item_id}\t{int(t.rating)}\t{t.timestamp}\n"
                for t in triples))
    (path / "u.user").write_text(
        "".join(f"{u.user_id}|{u.age}|{u.gender}|{u.occupation}|00000\n"
                for u in users))
    (path / "u.occupation").write_text("".join(f"{o}\n" for o in occupations))
    return path


@pytest.fixture(scope="session")
def toy_ml100k_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyml") / "ml-100k"
    return write_ml100k_layout(root, synthetic_ratings(), synthetic_users())


def real_data_dir(kind: str) -> Path | None:
    """Locate a real MovieLens directory, if one was supplied."""
    env = {"ml100k": "LFGREC_ML100K", "ml1m": "LFGREC_ML1M"}[kind]
    sub = {"ml100k": "ml-100k", "ml1m": "ml-1m"}[kind]
    probe = {"ml100k": "u.data", "ml1m": "ratings.dat"}[kind]
    candidates = []
    if os.environ.get(env):
        candidates.append(Path(os.environ[env]))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / sub)
    for c in candidates:
        if (c / probe).is_file():
            return c
    return None
