import json

import pytest

from lfgrec.cli import main

FAST_FLAGS = ["--k", "4", "--epochs", "10", "--batch-size", "16"]


def run_cli(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCrossval:
    def test_experiment1_report(self, toy_ml100k_dir, tmp_path, capsys):
        csv = tmp_path / "r.csv"
        md = tmp_path / "r.md"
        code, out, _ = run_cli(
            ["crossval", "--experiment", "1", "--dataset", "ml100k",
             "--data-dir", str(toy_ml100k_dir), "--seed", "42",
             "--out-csv", str(csv), "--out-md", str(md), *FAST_FLAGS], capsys)
        assert code == 0
        lines = csv.read_text().strip().splitlines()
        assert len(lines) == 1 + 15 + 3
        assert "average RMSE" in out
        assert md.read_text().startswith("| Fold |")

    def test_invalid_experiment_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["crossval", "--experiment", "3"])
        assert exc.value.code == 2

    def test_missing_data_dir(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["crossval", "--experiment", "1", "--data-dir", str(tmp_path / "nope")],
            capsys)
        assert code == 1 and "error" in err

    def test_determinism(self, toy_ml100k_dir, tmp_path, capsys):
        outputs = []
        for run in ("a", "b"):
            csv = tmp_path / f"{run}.csv"
            code, _, _ = run_cli(
                ["crossval", "--experiment", "2", "--dataset", "ml100k",
                 "--data-dir", str(toy_ml100k_dir), "--seed", "7",
                 "--out-csv", str(csv), "--out-md", str(tmp_path / f"{run}.md"),
                 *FAST_FLAGS], capsys)
            assert code == 0
            outputs.append(csv.read_bytes())
        assert outputs[0] == outputs[1]


@pytest.fixture(scope="module")
def lfg_file(toy_ml100k_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "toy.lfg"
    code = main(["train", "--model", "lfg", "--dataset", "ml100k",
                 "--data-dir", str(toy_ml100k_dir), "--seed", "3",
                 "--out", str(out), *FAST_FLAGS])
    assert code == 0
    return out


class TestTrainPredict:
    def test_train_baseline_flavor_tag(self, toy_ml100k_dir, tmp_path, capsys):
        out = tmp_path / "bias.lfg"
        code, _, _ = run_cli(["train", "--model", "biassvd", "--dataset", "ml100k",
                              "--data-dir", str(toy_ml100k_dir), "--out", str(out),
                              *FAST_FLAGS], capsys)
        assert code == 0
        from lfgrec.lfg import load_model
        assert load_model(out).flavor == "biased"

    def test_predict_json(self, lfg_file, capsys):
        code, out, _ = run_cli(
            ["predict", "--model-file", str(lfg_file), "--rating", "0=5",
             "--rating", "2=3", "--age", "28", "--gender", "F",
             "--occupation", "student", "--top-n", "5", "--json"], capsys)
        assert code == 0
        payload = json.loads(out)
        items = [e["item"] for e in payload["items"]]
        assert len(items) == 5
        assert 0 not in items and 2 not in items  # already rated

    def test_predict_top_n_zero(self, lfg_file, capsys):
        code, out, _ = run_cli(
            ["predict", "--model-file", str(lfg_file), "--top-n", "0",
             "--occupation", "student"], capsys)
        assert code == 0 and out.strip() == ""

    def test_predict_deterministic(self, lfg_file, capsys):
        args = ["predict", "--model-file", str(lfg_file), "--rating", "1=4",
                "--occupation", "student", "--top-n", "3"]
        a = run_cli(args, capsys)
        b = run_cli(args, capsys)
        assert a == b

    def test_malformed_rating_pair(self, lfg_file, capsys):
        code, _, err = run_cli(
            ["predict", "--model-file", str(lfg_file), "--rating", "abc",
             "--occupation", "student"], capsys)
        assert code == 1 and "malformed" in err

    def test_unknown_occupation(self, lfg_file, capsys):
        code, _, err = run_cli(
            ["predict", "--model-file", str(lfg_file), "--occupation", "astronaut"],
            capsys)
        assert code == 1 and "occupation" in err
