"""MovieLens parsing, demographic feature encoding, rating matrices and fold plans.

Supports the two classic layouts:

* ml-100k: ``u.data`` (tab-separated), ``u.user`` (pipe-separated),
  ``u.occupation`` (one label per line).
* ml-1m:  ``ratings.dat`` / ``users.dat`` (``::``-separated); age and
  occupation are integer codes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)

RATING_MIN = 1.0
RATING_MAX = 5.0
FOLD_COUNT = 5
NEW_USER_FRACTION = 0.2


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


class RatingTriple(NamedTuple):
    user_id: int
    item_id: int
    rating: float
    timestamp: int


class RawUser(NamedTuple):
    user_id: int
    age: int            # years (100k) or bucket code (1m)
    gender: str         # "M" or "F"
    occupation: str     # label (100k) or stringified code (1m)


@dataclass(frozen=True)
class RatingMatrix:
    """Sparse user-item rating matrix with dense 0-based indices.

    ``users``, ``items``, ``ratings`` are parallel arrays listing the observed
    set T. ``user_ids`` / ``item_ids`` map dense indices back to native ids.
    """

    m: int
    n: int
    users: np.ndarray      # int64, |T|
    items: np.ndarray      # int64, |T|
    ratings: np.ndarray    # float64, |T|
    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.ratings)

    def mean(self) -> float:
        if self.nnz == 0:
            raise DatasetError("rating matrix has no observed entries")
        return float(self.ratings.mean())

    def to_dense(self) -> np.ndarray:
        """Dense m x n array, 0 at unobserved positions."""
        H = np.zeros((self.m, self.n))
        H[self.users, self.items] = self.ratings
        return H

    def observed_mask(self) -> np.ndarray:
        mask = np.zeros((self.m, self.n), dtype=bool)
        mask[self.users, self.items] = True
        return mask

    def subset(self, keep: np.ndarray) -> "RatingMatrix":
        """Matrix over the same index space restricted to positions ``keep``."""
        return RatingMatrix(self.m, self.n, self.users[keep], self.items[keep],
                            self.ratings[keep], self.user_ids, self.item_ids)


@dataclass(frozen=True)
class FeatureCodec:
    """Encoding metadata for demographic vectors, frozen at ingest time.

    Age is min-max normalized over the ingested population (1m bucket codes
    are treated as ordinal integers); gender is a 2-slot one-hot; occupation
    a one-hot over the vocabulary found in the dataset's own files.
    """

    age_min: float
    age_max: float
    occupations: tuple[str, ...]
    genders: tuple[str, ...] = ("M", "F")
    occ_slot: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "occ_slot",
                           {o: i for i, o in enumerate(self.occupations)})

    @property
    def dim(self) -> int:
        return 1 + len(self.genders) + len(self.occupations)

    def encode(self, age: float, gender: str, occupation: str) -> np.ndarray:
        if gender not in self.genders:
            raise DatasetError(f"unknown gender {gender!r}")
        if occupation not in self.occ_slot:
            raise DatasetError(f"unknown occupation {occupation!r}")
        vec = np.zeros(self.dim)
        span = self.age_max - self.age_min
        vec[0] = 0.0 if span == 0 else (age - self.age_min) / span
        vec[1 + self.genders.index(gender)] = 1.0
        vec[1 + len(self.genders) + self.occ_slot[occupation]] = 1.0
        return vec


@dataclass(frozen=True)
class UserFeatures:
    """Dense per-user demographic rows, aligned to RatingMatrix user indices."""

    rows: np.ndarray      # m x d_E
    codec: FeatureCodec

    @property
    def d_E(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class FoldPlan:
    """5-fold assignment of rating positions, optionally with held-out new users.

    mode "per-user-ratings": every observed position gets a fold in 0..4,
    dealt round-robin within each user after a seeded shuffle.
    mode "user-level": additionally ~20% of users are marked new; their
    positions get fold -1 and never enter training.
    """

    mode: str
    fold_count: int
    seed: int
    position_folds: np.ndarray            # int64, |T|; -1 = new-user position
    new_users: np.ndarray                 # sorted dense user indices, empty in mode 1

    def train_positions(self, fold: int) -> np.ndarray:
        return np.flatnonzero((self.position_folds != fold) & (self.position_folds >= 0))

    def eval_positions(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.position_folds == fold)

    def new_user_positions(self) -> np.ndarray:
        return np.flatnonzero(self.position_folds == -1)


# ---------------------------------------------------------------------------
# parsing


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DatasetError(f"missing dataset file: {path}")
    return path.read_text(encoding="latin-1").splitlines()


def _parse_rating_line(line: str, sep: str, path: Path, lineno: int) -> RatingTriple:
    parts = line.split(sep)
    if len(parts) != 4:
        raise DatasetError(f"{path}:{lineno}: malformed rating line {line!r}")
    try:
        uid, iid, rating, ts = int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise DatasetError(f"{path}:{lineno}: malformed rating line {line!r}") from exc
    if not (RATING_MIN <= rating <= RATING_MAX):
        raise DatasetError(f"{path}:{lineno}: rating {rating} outside [1,5]")
    if uid <= 0 or iid <= 0:
        raise DatasetError(f"{path}:{lineno}: non-positive id")
    return RatingTriple(uid, iid, rating, ts)


def parse_100k(data_dir: str | Path) -> tuple[list[RatingTriple], list[RawUser]]:
    """Read ml-100k ``u.data`` and ``u.user`` from ``data_dir``."""
    data_dir = Path(data_dir)
    triples = [
        _parse_rating_line(line, "\t", data_dir / "u.data", i + 1)
        for i, line in enumerate(_read_lines(data_dir / "u.data"))
        if line.strip()
    ]
    users = []
    for i, line in enumerate(_read_lines(data_dir / "u.user")):
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != 5:
            raise DatasetError(f"{data_dir / 'u.user'}:{i + 1}: malformed user line {line!r}")
        users.append(RawUser(int(parts[0]), int(parts[1]), parts[2], parts[3]))
    return triples, users


def parse_1m(data_dir: str | Path) -> tuple[list[RatingTriple], list[RawUser]]:
    """Read ml-1m ``ratings.dat`` and ``users.dat`` from ``data_dir``."""
    data_dir = Path(data_dir)
    triples = [
        _parse_rating_line(line, "::", data_dir / "ratings.dat", i + 1)
        for i, line in enumerate(_read_lines(data_dir / "ratings.dat"))
        if line.strip()
    ]
    users = []
    for i, line in enumerate(_read_lines(data_dir / "users.dat")):
        if not line.strip():
            continue
        parts = line.split("::")
        if len(parts) != 5:
            raise DatasetError(f"{data_dir / 'users.dat'}:{i + 1}: malformed user line {line!r}")
        # UserID::Gender::Age::Occupation::Zip; age and occupation are codes
        users.append(RawUser(int(parts[0]), int(parts[2]), parts[1], parts[3]))
    return triples, users


def occupation_vocab_100k(data_dir: str | Path) -> tuple[str, ...]:
    labels = [l.strip() for l in _read_lines(Path(data_dir) / "u.occupation") if l.strip()]
    return tuple(labels)


OCCUPATION_CODES_1M = tuple(str(c) for c in range(21))


def encode_features(users: list[RawUser], vocab: tuple[str, ...]) -> UserFeatures:
    """Encode demographics with min-max age over this population.

    Rows are ordered by ascending native user id, matching build_matrix's
    dense remapping.
    """
    if not users:
        raise DatasetError("no user records")
    ordered = sorted(users, key=lambda u: u.user_id)
    ages = np.array([u.age for u in ordered], dtype=float)
    codec = FeatureCodec(age_min=float(ages.min()), age_max=float(ages.max()),
                         occupations=vocab)
    rows = np.stack([codec.encode(u.age, u.gender, u.occupation) for u in ordered])
    return UserFeatures(rows=rows, codec=codec)


# ---------------------------------------------------------------------------
# matrix and folds


def build_matrix(triples: list[RatingTriple]) -> RatingMatrix:
    """Remap native ids to dense 0-based indices; duplicate pairs are an error."""
    if not triples:
        raise DatasetError("no rating triples")
    uid = np.array([t.user_id for t in triples], dtype=np.int64)
    iid = np.array([t.item_id for t in triples], dtype=np.int64)
    ratings = np.array([t.rating for t in triples])
    user_ids, users = np.unique(uid, return_inverse=True)
    item_ids, items = np.unique(iid, return_inverse=True)
    m, n = len(user_ids), len(item_ids)
    keys = users * n + items
    if len(np.unique(keys)) != len(keys):
        dup = np.flatnonzero(np.bincount(keys, minlength=m * n) > 1)[0]
        raise DatasetError(
            f"duplicate rating for user id {user_ids[dup // n]}, item id {item_ids[dup % n]}")
    return RatingMatrix(m, n, users, items, ratings, user_ids, item_ids)


def _deal_user_positions(positions: np.ndarray, rng: np.random.Generator,
                         folds_out: np.ndarray, fold_count: int) -> None:
    shuffled = rng.permutation(positions)
    folds_out[shuffled] = np.arange(len(shuffled)) % fold_count


def make_fold_plan(matrix: RatingMatrix, mode: str, seed: int) -> FoldPlan:
    """Build a 5-fold plan.

    mode "per-user-ratings": each user's positions are shuffled (seeded) and
    dealt round-robin, so every fold gets floor(c/5) or ceil(c/5) of a user's
    c ratings.
    mode "user-level": users are shuffled and the last ceil(0.2*m) become new
    users (positions marked -1); remaining users' ratings are dealt as above.
    """
    if mode not in ("per-user-ratings", "user-level"):
        raise ValueError(f"unknown fold mode {mode!r}")
    rng = np.random.default_rng(seed)
    folds = np.full(matrix.nnz, -1, dtype=np.int64)
    new_users = np.array([], dtype=np.int64)

    if mode == "user-level":
        order = rng.permutation(matrix.m)
        n_new = int(np.ceil(NEW_USER_FRACTION * matrix.m))
        new_users = np.sort(order[matrix.m - n_new:])
    new_set = set(new_users.tolist())

    by_user: dict[int, list[int]] = {}
    for pos, u in enumerate(matrix.users):
        by_user.setdefault(int(u), []).append(pos)
    for u in sorted(by_user):
        if u in new_set:
            continue
        positions = np.array(by_user[u], dtype=np.int64)
        if mode == "per-user-ratings" and len(positions) < FOLD_COUNT:
            log.warning("user index %d has only %d ratings; some folds get none",
                        u, len(positions))
        _deal_user_positions(positions, rng, folds, FOLD_COUNT)
    return FoldPlan(mode=mode, fold_count=FOLD_COUNT, seed=seed,
                    position_folds=folds, new_users=new_users)


def load_dataset(kind: str, data_dir: str | Path) -> tuple[RatingMatrix, UserFeatures]:
    """Parse + encode + build in one step. ``kind`` is 'ml100k' or 'ml1m'."""
    if kind == "ml100k":
        triples, users = parse_100k(data_dir)
        vocab = occupation_vocab_100k(data_dir)
    elif kind == "ml1m":
        triples, users = parse_1m(data_dir)
        vocab = OCCUPATION_CODES_1M
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    matrix = build_matrix(triples)
    features = encode_features(users, vocab)
    # feature rows are ordered by native user id; align them to the matrix's
    # dense user indices (user files may list users with no ratings)
    ordered_ids = np.array(sorted({u.user_id for u in users}), dtype=np.int64)
    idx = np.searchsorted(ordered_ids, matrix.user_ids)
    if idx.max(initial=-1) >= len(ordered_ids) or not np.array_equal(
            ordered_ids[idx], matrix.user_ids):
        raise DatasetError("user records do not cover all rating users")
    return matrix, UserFeatures(rows=features.rows[idx], codec=features.codec)
