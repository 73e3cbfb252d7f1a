import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from conftest import OCCUPATIONS, synthetic_ratings, synthetic_users, write_ml100k_layout
from lfgrec.dataset import (DatasetError, RatingTriple, RawUser, build_matrix,
                            encode_features, make_fold_plan, parse_100k, parse_1m,
                            load_dataset)


class TestParse100k:
    def test_single_line(self, tmp_path):
        d = write_ml100k_layout(tmp_path / "d", [RatingTriple(1, 5, 4.0, 886397596)],
                                [RawUser(1, 24, "M", "student")])
        triples, users = parse_100k(d)
        assert triples == [RatingTriple(1, 5, 4.0, 886397596)]
        assert users[0].age == 24 and users[0].occupation == "student"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="missing"):
            parse_100k(tmp_path)

    def test_malformed_line_reports_lineno(self, tmp_path):
        d = write_ml100k_layout(tmp_path / "d", [RatingTriple(1, 1, 3.0, 0)],
                                [RawUser(1, 24, "M", "student")])
        (d / "u.data").write_text("1\t1\t3\t0\nbogus line\n")
        with pytest.raises(DatasetError, match=":2"):
            parse_100k(d)

    def test_rating_out_of_range(self, tmp_path):
        d = write_ml100k_layout(tmp_path / "d", [], [RawUser(1, 24, "M", "student")])
        (d / "u.data").write_text("1\t1\t9\t0\n")
        with pytest.raises(DatasetError, match="outside"):
            parse_100k(d)

    def test_empty_file_gives_zero_triples(self, tmp_path):
        d = write_ml100k_layout(tmp_path / "d", [], [RawUser(1, 24, "M", "student")])
        triples, _ = parse_100k(d)
        assert triples == []
        with pytest.raises(DatasetError):
            build_matrix(triples)

    def test_roundtrip_preserves_numeric_content(self, tmp_path):
        original = synthetic_ratings(m=20, n=10)
        d = write_ml100k_layout(tmp_path / "d", original, synthetic_users(20))
        triples, _ = parse_100k(d)
        assert triples == original


class TestParse1m:
    def _write(self, d, rating_lines, user_lines):
        d.mkdir(parents=True, exist_ok=True)
        (d / "ratings.dat").write_text(rating_lines)
        (d / "users.dat").write_text(user_lines)

    def test_single_line(self, tmp_path):
        self._write(tmp_path / "m", "1::1193::5::978300760\n", "1::F::1::10::48067\n")
        triples, users = parse_1m(tmp_path / "m")
        assert triples == [RatingTriple(1, 1193, 5.0, 978300760)]
        assert users == [RawUser(1, 1, "F", "10")]

    def test_wrong_separator(self, tmp_path):
        self._write(tmp_path / "m", "1,1193,5,978300760\n", "1::F::1::10::48067\n")
        with pytest.raises(DatasetError, match="malformed"):
            parse_1m(tmp_path / "m")


class TestEncodeFeatures:
    def test_min_max_age(self, tmp_path):
        # independent oracle: scan the written user file for the age span
        users = [RawUser(1, 24, "M", "technician"), RawUser(2, 7, "F", "artist"),
                 RawUser(3, 73, "M", "artist")]
        d = write_ml100k_layout(tmp_path / "d", [RatingTriple(1, 1, 3.0, 0)], users,
                                occupations=("technician", "artist"))
        ages = [int(l.split("|")[1]) for l in (d / "u.user").read_text().splitlines()]
        lo, hi = min(ages), max(ages)
        feats = encode_features(users, ("technician", "artist"))
        assert feats.rows[0][0] == pytest.approx((24 - lo) / (hi - lo))
        assert feats.rows[0][0] == pytest.approx(0.2576, abs=1e-4)
        # gender one-hot M, occupation one-hot technician
        assert list(feats.rows[0][1:]) == [1.0, 0.0, 1.0, 0.0]

    def test_age_at_population_max(self):
        users = [RawUser(1, 10, "M", "other"), RawUser(2, 50, "F", "other")]
        feats = encode_features(users, ("other",))
        assert feats.rows[1][0] == 1.0

    def test_identical_users_identical_rows(self):
        users = [RawUser(1, 30, "F", "artist"), RawUser(2, 30, "F", "artist")]
        feats = encode_features(users, ("artist",))
        assert np.array_equal(feats.rows[0], feats.rows[1])

    def test_unknown_occupation_fails_loudly(self):
        with pytest.raises(DatasetError, match="occupation"):
            encode_features([RawUser(1, 30, "F", "astronaut")], ("artist",))

    def test_one_hot_invariants(self, toy_data):
        _, feats = toy_data
        g = feats.rows[:, 1:3].sum(axis=1)
        o = feats.rows[:, 3:].sum(axis=1)
        assert np.all(g == 1.0) and np.all(o == 1.0)
        assert np.all((feats.rows[:, 0] >= 0) & (feats.rows[:, 0] <= 1))


class TestBuildMatrix:
    def test_counts(self):
        triples = [RatingTriple(1, 1, 3, 0), RatingTriple(1, 2, 4, 0),
                   RatingTriple(2, 1, 5, 0)]
        mat = build_matrix(triples)
        assert (mat.m, mat.n, mat.nnz) == (2, 2, 3)

    def test_duplicate_pair_rejected(self):
        triples = [RatingTriple(1, 1, 3, 0), RatingTriple(1, 1, 4, 1)]
        with pytest.raises(DatasetError, match="duplicate"):
            build_matrix(triples)

    def test_dense_roundtrip(self, toy_data):
        mat, _ = toy_data
        H = mat.to_dense()
        assert np.array_equal(H[mat.users, mat.items], mat.ratings)
        assert mat.observed_mask().sum() == mat.nnz


class TestFoldPlan:
    def test_proportional_dealing(self):
        triples = [RatingTriple(1, i + 1, 3, 0) for i in range(10)]
        mat = build_matrix(triples)
        plan = make_fold_plan(mat, "per-user-ratings", 7)
        counts = np.bincount(plan.position_folds, minlength=5)
        assert list(counts) == [2, 2, 2, 2, 2]

    def test_mode2_new_user_count(self, toy_data):
        mat, _ = toy_data
        plan = make_fold_plan(mat, "user-level", 3)
        assert len(plan.new_users) == int(np.ceil(0.2 * mat.m))

    def test_determinism(self, toy_data):
        mat, _ = toy_data
        a = make_fold_plan(mat, "user-level", 11)
        b = make_fold_plan(mat, "user-level", 11)
        assert np.array_equal(a.position_folds, b.position_folds)
        assert np.array_equal(a.new_users, b.new_users)

    def test_partition_and_per_user_bounds(self, toy_data):
        mat, _ = toy_data
        plan = make_fold_plan(mat, "per-user-ratings", 5)
        assert np.all(plan.position_folds >= 0)
        for u in range(mat.m):
            pos = plan.position_folds[mat.users == u]
            c = len(pos)
            counts = np.bincount(pos, minlength=5)
            assert counts.min() >= c // 5 and counts.max() <= -(-c // 5)

    def test_mode2_no_new_user_in_training(self, toy_data):
        mat, _ = toy_data
        plan = make_fold_plan(mat, "user-level", 5)
        new = set(plan.new_users.tolist())
        for f in range(5):
            train_users = set(mat.users[plan.train_positions(f)].tolist())
            assert not (train_users & new)

    @hyp_settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_union_of_folds_is_T(self, seed):
        mat = build_matrix(synthetic_ratings(m=15, n=12, seed=seed % 7))
        plan = make_fold_plan(mat, "per-user-ratings", seed)
        covered = np.concatenate([plan.eval_positions(f) for f in range(5)])
        assert sorted(covered.tolist()) == list(range(mat.nnz))

    def test_small_user_warned_not_fatal(self, caplog):
        triples = [RatingTriple(1, 1, 3, 0), RatingTriple(1, 2, 4, 0),
                   RatingTriple(2, 1, 2, 0)]
        mat = build_matrix(triples)
        with caplog.at_level("WARNING"):
            make_fold_plan(mat, "per-user-ratings", 0)
        assert any("ratings" in r.message for r in caplog.records)


def test_load_dataset(toy_ml100k_dir):
    matrix, features = load_dataset("ml100k", toy_ml100k_dir)
    assert matrix.m == features.rows.shape[0]
    assert features.codec.dim == 1 + 2 + len(OCCUPATIONS)
