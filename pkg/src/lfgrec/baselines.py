"""FunkSVD and BiasSVD trained by SGD over observed ratings only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from lfgrec.dataset import RATING_MAX, RATING_MIN, RatingMatrix

DEFAULT_K = 50
DEFAULT_LR = 0.005
DEFAULT_REG = 0.02
DEFAULT_EPOCHS = 30
INIT_SCALE = 0.1


class DivergenceError(RuntimeError):
    """Training produced non-finite parameters."""


@dataclass
class BaselineModel:
    flavor: str            # "plain" | "biased"
    P: np.ndarray          # m x k user factors
    Q: np.ndarray          # k x n item factors
    bu: np.ndarray | None  # m, biased only
    bi: np.ndarray | None  # n, biased only
    mu: float
    k: int


def clamp(x):
    return np.clip(x, RATING_MIN, RATING_MAX)


@njit(cache=True)
def _sgd_plain(users, items, resid, order, P, Qt, lr, reg):
    for idx in order:
        u, i = users[idx], items[idx]
        e = resid[idx] - np.dot(P[u], Qt[i])
        pu = P[u].copy()
        P[u] += lr * (e * Qt[i] - reg * P[u])
        Qt[i] += lr * (e * pu - reg * Qt[i])


@njit(cache=True)
def _sgd_biased(users, items, resid, order, P, Qt, bu, bi, lr, reg):
    for idx in order:
        u, i = users[idx], items[idx]
        e = resid[idx] - bu[u] - bi[i] - np.dot(P[u], Qt[i])
        pu = P[u].copy()
        bu[u] += lr * (e - reg * bu[u])
        bi[i] += lr * (e - reg * bi[i])
        P[u] += lr * (e * Qt[i] - reg * P[u])
        Qt[i] += lr * (e * pu - reg * Qt[i])


def _train(train: RatingMatrix, k: int, lr: float, reg: float, epochs: int,
           seed: int, biased: bool) -> BaselineModel:
    if lr <= 0 or reg <= 0:
        raise ValueError("lr and reg must be positive")
    rng = np.random.default_rng(seed)
    mu = train.mean()
    P = rng.normal(0.0, INIT_SCALE, (train.m, k))
    Qt = rng.normal(0.0, INIT_SCALE, (train.n, k))
    bu = np.zeros(train.m) if biased else None
    bi = np.zeros(train.n) if biased else None
    resid = train.ratings - mu
    for _ in range(epochs):
        order = rng.permutation(train.nnz)
        if biased:
            _sgd_biased(train.users, train.items, resid, order, P, Qt, bu, bi, lr, reg)
        else:
            _sgd_plain(train.users, train.items, resid, order, P, Qt, lr, reg)
        if not (np.isfinite(P).all() and np.isfinite(Qt).all()):
            raise DivergenceError(f"SGD diverged (lr={lr}, reg={reg})")
    flavor = "biased" if biased else "plain"
    return BaselineModel(flavor, P, np.ascontiguousarray(Qt.T), bu, bi, float(mu), k)


def train_funksvd(train: RatingMatrix, k: int = DEFAULT_K, lr: float = DEFAULT_LR,
                  reg: float = DEFAULT_REG, epochs: int = DEFAULT_EPOCHS,
                  seed: int = 0) -> BaselineModel:
    """Unbiased MF: fits P,Q to mean-centered ratings over observed positions."""
    return _train(train, k, lr, reg, epochs, seed, biased=False)


def train_biassvd(train: RatingMatrix, k: int = DEFAULT_K, lr: float = DEFAULT_LR,
                  reg: float = DEFAULT_REG, epochs: int = DEFAULT_EPOCHS,
                  seed: int = 0) -> BaselineModel:
    """MF with global mean plus per-user and per-item bias terms."""
    return _train(train, k, lr, reg, epochs, seed, biased=True)


def raw_score(model: BaselineModel, u: int, i: int) -> float:
    s = model.mu + float(model.P[u] @ model.Q[:, i])
    if model.flavor == "biased":
        s += float(model.bu[u] + model.bi[i])
    return s


def predict(model: BaselineModel, u: int, i: int) -> float:
    """Clamped rating prediction for a known user/item pair."""
    if not (0 <= u < model.P.shape[0] and 0 <= i < model.Q.shape[1]):
        raise IndexError(f"index ({u}, {i}) out of range")
    return float(clamp(raw_score(model, u, i)))


def predict_cold(model: BaselineModel, i: int) -> float:
    """Prediction for a user unseen in training: mu, plus item bias if biased."""
    s = model.mu
    if model.flavor == "biased":
        s += float(model.bi[i])
    return float(clamp(s))


def predict_batch(model: BaselineModel, users: np.ndarray, items: np.ndarray) -> np.ndarray:
    s = model.mu + np.einsum("ij,ij->i", model.P[users], model.Q[:, items].T)
    if model.flavor == "biased":
        s = s + model.bu[users] + model.bi[items]
    return clamp(s)
