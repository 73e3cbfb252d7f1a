"""Latent-factor-generator recommender with SVD/SGD baselines on MovieLens."""

from lfgrec.dataset import (
    RatingTriple,
    RatingMatrix,
    UserFeatures,
    FeatureCodec,
    FoldPlan,
    parse_100k,
    parse_1m,
    encode_features,
    build_matrix,
    make_fold_plan,
)
from lfgrec.linalg import TruncatedSvd, fill_and_center, truncated_svd, factor_split
from lfgrec.baselines import BaselineModel, train_funksvd, train_biassvd, predict, predict_cold
from lfgrec.lfg import LfgModel, init_lfg, train_lfg, infer_user, save_model, load_model
from lfgrec.evaluate import rmse, run_experiment1, run_experiment2, emit_report

__all__ = [
    "RatingTriple", "RatingMatrix", "UserFeatures", "FeatureCodec", "FoldPlan",
    "parse_100k", "parse_1m", "encode_features", "build_matrix", "make_fold_plan",
    "TruncatedSvd", "fill_and_center", "truncated_svd", "factor_split",
    "BaselineModel", "train_funksvd", "train_biassvd", "predict", "predict_cold",
    "LfgModel", "init_lfg", "train_lfg", "infer_user", "save_model", "load_model",
    "rmse", "run_experiment1", "run_experiment2", "emit_report",
]
