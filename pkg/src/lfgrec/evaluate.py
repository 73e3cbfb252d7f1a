"""RMSE metric, the two cross-validated experiment drivers, and report files.

Experiment 1 splits each user's ratings 80/20 over five folds and scores
rating prediction for known users. Experiment 2 holds out 20% of users as
new: models train only on the remaining users, and new users are scored on
20% of their ratings given the other 80% as inference-time history (baselines
fall back to their cold predictions).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lfgrec import baselines
from lfgrec.baselines import clamp
from lfgrec.dataset import FoldPlan, RatingMatrix, UserFeatures, make_fold_plan
from lfgrec.lfg import TrainConfig, infer_rows, init_lfg, train_lfg
from lfgrec.linalg import fill_and_center, truncated_svd

log = logging.getLogger(__name__)

MODEL_NAMES = ("SVD", "BiasSVD", "LFG")
NEW_USER_HISTORY_FRACTION = 0.8


@dataclass
class RunSettings:
    """Hyperparameters shared by both experiments; defaults follow the
    reference setup (k=50, mask p=0.1, 5 folds)."""

    k: int = 50
    seed: int = 42
    folds: int = 5
    mask_p: float = 0.1
    lfg_epochs: int = 150
    lfg_batch: int = 64
    lfg_lr: float = 1e-3
    lfg_hidden: tuple[int, ...] = (512, 256)
    sgd_epochs: int = 30
    sgd_lr: float = 0.005
    sgd_reg: float = 0.02

    def as_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "folds": self.folds,
                "mask_p": self.mask_p, "lfg_epochs": self.lfg_epochs,
                "lfg_batch": self.lfg_batch, "lfg_lr": self.lfg_lr,
                "lfg_hidden": list(self.lfg_hidden), "sgd_epochs": self.sgd_epochs,
                "sgd_lr": self.sgd_lr, "sgd_reg": self.sgd_reg}


@dataclass
class EvalReport:
    experiment: int
    dataset: str
    rows: list[tuple[int, str, float]] = field(default_factory=list)   # (fold, model, rmse)
    config: dict = field(default_factory=dict)

    def averages(self) -> dict[str, float]:
        out = {}
        for name in MODEL_NAMES:
            vals = [r for f, m, r in self.rows if m == name]
            if vals:
                out[name] = float(np.mean(vals))
        return out


def rmse(truth: np.ndarray, pred: np.ndarray) -> float:
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.size == 0:
        raise ValueError("rmse of an empty sample")
    if truth.shape != pred.shape:
        raise ValueError("truth/prediction length mismatch")
    return float(np.sqrt(np.mean((truth - pred) ** 2)))


def _assert_no_leakage(train: RatingMatrix, eval_users: np.ndarray,
                       eval_items: np.ndarray) -> None:
    train_keys = set(zip(train.users.tolist(), train.items.tolist()))
    eval_keys = set(zip(eval_users.tolist(), eval_items.tolist()))
    overlap = train_keys & eval_keys
    if overlap:
        raise AssertionError(f"train/eval overlap at {len(overlap)} positions")


def _train_all(train: RatingMatrix, features: UserFeatures, feat_rows: np.ndarray,
               settings: RunSettings, fold_seed: int):
    config = TrainConfig(epochs=settings.lfg_epochs, batch_size=settings.lfg_batch,
                         lr=settings.lfg_lr)
    funk = baselines.train_funksvd(train, settings.k, settings.sgd_lr,
                                   settings.sgd_reg, settings.sgd_epochs, fold_seed)
    bias = baselines.train_biassvd(train, settings.k, settings.sgd_lr,
                                   settings.sgd_reg, settings.sgd_epochs, fold_seed)
    mu = train.mean()
    svd = truncated_svd(fill_and_center(train, mu), settings.k, fold_seed)
    lfg = init_lfg(svd, features.codec, train.n, mu,
                   k=settings.k, p=settings.mask_p, hidden=settings.lfg_hidden,
                   seed=fold_seed)
    train_lfg(lfg, train, feat_rows, config, seed=fold_seed)
    return funk, bias, lfg


def run_experiment1(matrix: RatingMatrix, features: UserFeatures,
                    settings: RunSettings, dataset_name: str = "ml100k",
                    plan: FoldPlan | None = None) -> EvalReport:
    """Per-user 80/20 rating split, 5 folds, three models scored per fold."""
    plan = plan or make_fold_plan(matrix, "per-user-ratings", settings.seed)
    report = EvalReport(1, dataset_name, config={"settings": settings.as_dict()})
    for f in range(plan.fold_count):
        train = matrix.subset(plan.train_positions(f))
        ev = plan.eval_positions(f)
        eu, ei, er = matrix.users[ev], matrix.items[ev], matrix.ratings[ev]
        _assert_no_leakage(train, eu, ei)
        fold_seed = settings.seed + f
        funk, bias, lfg = _train_all(train, features, features.rows, settings, fold_seed)

        report.rows.append((f + 1, "SVD", rmse(er, baselines.predict_batch(funk, eu, ei))))
        report.rows.append((f + 1, "BiasSVD", rmse(er, baselines.predict_batch(bias, eu, ei))))
        # LFG scores known users from their training-rating rows (no mask)
        H_pred = infer_rows(lfg, train.to_dense(), features.rows)
        report.rows.append((f + 1, "LFG", rmse(er, H_pred[eu, ei])))
        log.info("experiment 1 fold %d done", f + 1)
    return report


def _split_new_user_history(matrix: RatingMatrix, plan: FoldPlan, seed: int
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Fixed (fold-independent) 80/20 split of each new user's positions into
    inference history and scored ratings."""
    rng = np.random.default_rng(seed ^ 0x5F3759DF)
    new_pos = plan.new_user_positions()
    history = np.zeros(len(new_pos), dtype=bool)
    users = matrix.users[new_pos]
    for u in np.unique(users):
        idx = np.flatnonzero(users == u)
        idx = rng.permutation(idx)
        cut = int(round(NEW_USER_HISTORY_FRACTION * len(idx)))
        history[idx[:cut]] = True
    return new_pos[history], new_pos[~history]


def run_experiment2(matrix: RatingMatrix, features: UserFeatures,
                    settings: RunSettings, dataset_name: str = "ml100k",
                    plan: FoldPlan | None = None) -> EvalReport:
    """Hold out ~20% of users as new; per fold, train on the remaining users'
    non-f folds and score the new users' held-out ratings."""
    plan = plan or make_fold_plan(matrix, "user-level", settings.seed)
    new_set = set(plan.new_users.tolist())
    hist_pos, score_pos = _split_new_user_history(matrix, plan, settings.seed)

    # existing users keep their global item space; rows are remapped densely
    existing = np.array(sorted(set(range(matrix.m)) - new_set), dtype=np.int64)
    row_of = {int(u): r for r, u in enumerate(existing)}

    score_users = matrix.users[score_pos]
    score_items = matrix.items[score_pos]
    score_truth = matrix.ratings[score_pos]
    histories: dict[int, dict[int, float]] = {int(u): {} for u in plan.new_users}
    for p in hist_pos:
        histories[int(matrix.users[p])][int(matrix.items[p])] = float(matrix.ratings[p])

    report = EvalReport(2, dataset_name, config={"settings": settings.as_dict()})
    for f in range(plan.fold_count):
        keep = plan.train_positions(f)
        if any(int(u) in new_set for u in matrix.users[keep]):
            raise AssertionError("new-user rating leaked into a training fold")
        train = RatingMatrix(
            m=len(existing), n=matrix.n,
            users=np.array([row_of[int(u)] for u in matrix.users[keep]], dtype=np.int64),
            items=matrix.items[keep], ratings=matrix.ratings[keep],
            user_ids=matrix.user_ids[existing], item_ids=matrix.item_ids)
        fold_seed = settings.seed + f
        funk, bias, lfg = _train_all(train, features, features.rows[existing],
                                     settings, fold_seed)

        cold_funk = np.array([baselines.predict_cold(funk, int(i)) for i in score_items])
        cold_bias = np.array([baselines.predict_cold(bias, int(i)) for i in score_items])
        lfg_pred = np.empty(len(score_pos))
        rows_by_user = {}
        for u in np.unique(score_users):
            h = np.zeros(matrix.n)
            for item, r in histories[int(u)].items():
                h[item] = r
            rows_by_user[int(u)] = h
        users_sorted = sorted(rows_by_user)
        H_new = np.stack([rows_by_user[u] for u in users_sorted])
        pred_rows = infer_rows(lfg, H_new, features.rows[users_sorted])
        row_idx = {u: i for i, u in enumerate(users_sorted)}
        for j, (u, i) in enumerate(zip(score_users, score_items)):
            lfg_pred[j] = pred_rows[row_idx[int(u)], int(i)]

        report.rows.append((f + 1, "SVD", rmse(score_truth, cold_funk)))
        report.rows.append((f + 1, "BiasSVD", rmse(score_truth, cold_bias)))
        report.rows.append((f + 1, "LFG", rmse(score_truth, lfg_pred)))
        log.info("experiment 2 fold %d done", f + 1)
    return report


# ---------------------------------------------------------------------------
# report emission


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def emit_report(report: EvalReport, fmt: str, path) -> None:
    """Write the report as CSV (one row per fold/model plus averages) or as a
    markdown table mirroring the cross-validation layout."""
    path = Path(path)
    if fmt == "csv":
        lines = ["experiment,dataset,fold,model,rmse"]
        for fold, model, val in report.rows:
            lines.append(f"{report.experiment},{report.dataset},{fold},{model},{_fmt(val)}")
        for model, val in report.averages().items():
            lines.append(f"{report.experiment},{report.dataset},average,{model},{_fmt(val)}")
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "markdown":
        col = "Eval" if report.experiment == 1 else "Test"
        header = (f"| Fold | Training Set | Evaluation Set | SVD {col} RMSE "
                  f"| BiasSVD {col} RMSE | LFG {col} RMSE |")
        lines = [header, "|---|---|---|---|---|---|"]
        folds = sorted({f for f, _, _ in report.rows})
        by = {(f, m): v for f, m, v in report.rows}
        for f in folds:
            train_set = ",".join(str(x) for x in folds if x != f)
            vals = " | ".join(f"{by[(f, m)]:.4f}" for m in MODEL_NAMES)
            lines.append(f"| {f} | {train_set} | {f} | {vals} |")
        avg = report.averages()
        vals = " | ".join(f"{avg[m]:.4f}" for m in MODEL_NAMES)
        lines.append(f"| Average | | RMSE | {vals} |")
        lines.append("")
        lines.append(f"Config: `{json.dumps(report.config, sort_keys=True)}`")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
