"""Latent factor generator: a feed-forward net maps a user's masked rating row
plus demographic features to k latent factors and a user bias, which
reconstruct the rating row against a trainable item-factor matrix.

The item factors start from the truncated-SVD item split and are tuned during
training together with per-item biases; the SVD user factors are discarded.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from lfgrec.baselines import BaselineModel, DivergenceError, clamp
from lfgrec.dataset import FeatureCodec, RatingMatrix
from lfgrec.linalg import TruncatedSvd, factor_split
from lfgrec.nn import Adam, BatchNorm, Layer, LeakyReLU, Linear, Network, Tanh

log = logging.getLogger(__name__)

DEFAULT_K = 50
DEFAULT_MASK_P = 0.1
DEFAULT_HIDDEN = (512, 256)
DEFAULT_EPOCHS = 150
DEFAULT_BATCH = 64
DEFAULT_LR = 1e-3


@dataclass
class LfgModel:
    net: Network
    M: np.ndarray                  # k x n item factors, trainable
    bi: np.ndarray                 # n item biases, trainable, start at 0
    mu: float                      # mean of observed training ratings, frozen
    k: int
    p: float                       # input mask probability
    d_E: int
    n: int
    codec: FeatureCodec
    hidden: tuple[int, ...] = DEFAULT_HIDDEN

    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        return self.net.parameters() + [("M", self.M, self._dM), ("bi", self.bi, self._dbi)]

    def __post_init__(self):
        self._dM = np.zeros_like(self.M)
        self._dbi = np.zeros_like(self.bi)


@dataclass
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH
    lr: float = DEFAULT_LR


def mask_rows(H_rows: np.ndarray, p: float, rng: np.random.Generator
              ) -> tuple[np.ndarray, np.ndarray]:
    """Zero each entry independently with probability p.

    Unobserved entries are already 0; they stay 0 and are not flagged. With
    p=0 the rng is not consumed at all.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mask probability {p} outside [0,1]")
    if p == 0.0:
        return H_rows.copy(), np.zeros(H_rows.shape, dtype=bool)
    draw = rng.random(H_rows.shape) < p
    masked = np.where(draw, 0.0, H_rows)
    return masked, draw & (H_rows != 0)


def build_input(E_rows: np.ndarray, masked_rows: np.ndarray) -> np.ndarray:
    """Concatenate columns, features first. The layout is fixed."""
    if E_rows.shape[0] != masked_rows.shape[0]:
        raise ValueError(f"row counts differ: {E_rows.shape[0]} vs {masked_rows.shape[0]}")
    return np.hstack([E_rows, masked_rows])


def _make_net(d_in: int, k: int, hidden: tuple[int, ...],
              rng: np.random.Generator) -> Network:
    layers: list[Layer] = []
    prev = d_in
    for idx, width in enumerate(hidden):
        layers.append(Linear(prev, width, rng))
        layers.append(LeakyReLU())
        if idx == 0:
            layers.append(BatchNorm(width))
        prev = width
    layers.append(Linear(prev, k + 1, rng))
    layers.append(Tanh())
    return Network(layers)


def init_lfg(svd: TruncatedSvd, codec: FeatureCodec, n: int, mu: float,
             k: int = DEFAULT_K, p: float = DEFAULT_MASK_P,
             hidden: tuple[int, ...] = DEFAULT_HIDDEN, seed: int = 0) -> LfgModel:
    """Build the generator with item factors taken from the SVD item split."""
    if svd.k != k:
        raise ValueError(f"svd rank {svd.k} does not match requested k={k}")
    if svd.Vt.shape[1] != n:
        raise ValueError(f"svd item dimension {svd.Vt.shape[1]} != n={n}")
    _, Q = factor_split(svd)
    rng = np.random.default_rng(seed)
    net = _make_net(codec.dim + n, k, hidden, rng)
    return LfgModel(net=net, M=Q.copy(), bi=np.zeros(n), mu=float(mu), k=k, p=p,
                    d_E=codec.dim, n=n, codec=codec, hidden=tuple(hidden))


def reconstruct(U_G: np.ndarray, bu_G: np.ndarray, M: np.ndarray,
                bi: np.ndarray, mu: float) -> np.ndarray:
    """Predicted rating rows: U_G @ M + bu_G + bi + mu, biases broadcast."""
    if U_G.shape[1] != M.shape[0] or M.shape[1] != bi.shape[0]:
        raise ValueError(f"shape mismatch: U_G {U_G.shape}, M {M.shape}, bi {bi.shape}")
    return U_G @ M + bu_G[:, None] + bi[None, :] + mu


def masked_loss(H_pred: np.ndarray, H_rows: np.ndarray, observed: np.ndarray
                ) -> tuple[float, np.ndarray]:
    """MSE over observed positions only; gradient is 0 elsewhere."""
    t = int(observed.sum())
    if t == 0:
        raise ValueError("batch has no observed ratings")
    diff = np.where(observed, H_pred - H_rows, 0.0)
    loss = float((diff ** 2).sum() / t)
    return loss, 2.0 * diff / t


def _forward_batch(model: LfgModel, I: np.ndarray, train: bool
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    out = model.net.forward(I, train)
    U_G, bu_G = out[:, :model.k], out[:, model.k]
    return U_G, bu_G, reconstruct(U_G, bu_G, model.M, model.bi, model.mu)


def train_lfg(model: LfgModel, train: RatingMatrix, feat_rows: np.ndarray,
              config: TrainConfig | None = None, seed: int = 0,
              mask_seed: int | None = None) -> list[float]:
    """Train in place; returns the per-epoch loss trace.

    Each epoch shuffles users into batches and re-samples input masks; the
    loss always targets the original (pre-mask) observed ratings.
    """
    config = config or TrainConfig()
    if feat_rows.shape != (train.m, model.d_E):
        raise ValueError(f"feature rows {feat_rows.shape} != ({train.m}, {model.d_E})")
    H = train.to_dense()
    observed = train.observed_mask()
    shuffle_rng = np.random.default_rng(seed)
    mask_rng = np.random.default_rng(seed + 0x9E3779B9 if mask_seed is None else mask_seed)
    opt = Adam(lr=config.lr)
    trace = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(train.m)
        batches = [order[s:s + config.batch_size]
                   for s in range(0, train.m, config.batch_size)]
        if len(batches) > 1 and len(batches[-1]) == 1:
            batches[-2] = np.concatenate([batches[-2], batches.pop()])
        sq_sum, obs_sum = 0.0, 0
        for rows in batches:
            obs = observed[rows]
            if not obs.any():
                log.warning("skipping batch with no observed ratings")
                continue
            H_rows = H[rows]
            masked, _ = mask_rows(H_rows, model.p, mask_rng)
            I = build_input(feat_rows[rows], masked)
            U_G, bu_G, H_pred = _forward_batch(model, I, train=True)
            loss, dH = masked_loss(H_pred, H_rows, obs)
            model._dM[...] = U_G.T @ dH
            model._dbi[...] = dH.sum(axis=0)
            dout = np.hstack([dH @ model.M.T, (dH.sum(axis=1))[:, None]])
            model.net.backward(dout)
            opt.step(model.parameters())
            sq_sum += loss * obs.sum()
            obs_sum += int(obs.sum())
        if obs_sum == 0:
            raise ValueError("training matrix has no observed ratings")
        epoch_loss = sq_sum / obs_sum
        if not np.isfinite(epoch_loss):
            raise DivergenceError(f"LFG training diverged at epoch {epoch}")
        trace.append(epoch_loss)
    return trace


def infer_rows(model: LfgModel, H_rows: np.ndarray, E_rows: np.ndarray) -> np.ndarray:
    """Unmasked forward pass in infer mode; clamped predicted rating rows."""
    I = build_input(E_rows, H_rows)
    _, _, H_pred = _forward_batch(model, I, train=False)
    return clamp(H_pred)


def infer_user(model: LfgModel, history: dict[int, float],
               features: np.ndarray) -> np.ndarray:
    """Single-pass cold-start prediction: one forward, no masking, no training.

    ``history`` maps item index -> rating; ``features`` is the encoded
    demographic vector.
    """
    h = np.zeros(model.n)
    for item, rating in history.items():
        if not 0 <= item < model.n:
            raise IndexError(f"item index {item} out of range")
        h[item] = rating
    return infer_rows(model, h[None, :], np.asarray(features, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# persistence: binary container shared by LFG and baseline models.
# Layout: magic "LFG1", u32 format version, u64 payload length, payload of
# length-prefixed named sections, trailing 8-byte checksum of the payload.

MAGIC = b"LFG1"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Corrupt, truncated or incompatible model file."""


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def _pack_section(name: str, data: bytes) -> bytes:
    nb = name.encode()
    return struct.pack("<HQ", len(nb), len(data)) + nb + data


def _pack_array(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape) + a.tobytes()


def _unpack_array(data: bytes) -> np.ndarray:
    ndim = data[0]
    shape = struct.unpack_from(f"<{ndim}Q", data, 1)
    arr = np.frombuffer(data, dtype=np.float64, offset=1 + 8 * ndim).copy()
    return arr.reshape(shape)


def _iter_sections(payload: bytes):
    off = 0
    while off < len(payload):
        if off + 10 > len(payload):
            raise ModelFormatError("truncated section header")
        nlen, dlen = struct.unpack_from("<HQ", payload, off)
        off += 10
        if off + nlen + dlen > len(payload):
            raise ModelFormatError("truncated section body")
        name = payload[off:off + nlen].decode()
        off += nlen
        yield name, payload[off:off + dlen]
        off += dlen


def _layer_descriptor(layer: Layer) -> dict:
    if isinstance(layer, Linear):
        return {"kind": "linear", "in": layer.W.shape[1], "out": layer.W.shape[0]}
    if isinstance(layer, LeakyReLU):
        return {"kind": "leaky_relu", "slope": layer.slope}
    if isinstance(layer, BatchNorm):
        return {"kind": "batchnorm", "features": len(layer.gamma),
                "eps": layer.eps, "momentum": layer.momentum}
    if isinstance(layer, Tanh):
        return {"kind": "tanh"}
    raise TypeError(f"unknown layer {type(layer).__name__}")


def _layer_arrays(layer: Layer) -> dict[str, np.ndarray]:
    if isinstance(layer, Linear):
        return {"W": layer.W, "b": layer.b}
    if isinstance(layer, BatchNorm):
        return {"gamma": layer.gamma, "beta": layer.beta,
                "running_mean": layer.running_mean, "running_var": layer.running_var}
    return {}


def _codec_json(codec: FeatureCodec) -> dict:
    return {"age_min": codec.age_min, "age_max": codec.age_max,
            "occupations": list(codec.occupations), "genders": list(codec.genders)}


def save_model(model: LfgModel | BaselineModel, path) -> None:
    sections: list[bytes] = []

    def add(name, data):
        sections.append(_pack_section(name, data))

    if isinstance(model, LfgModel):
        meta = {"kind": "lfg", "k": model.k, "p": model.p, "mu": model.mu,
                "n": model.n, "d_E": model.d_E, "hidden": list(model.hidden),
                "layers": [_layer_descriptor(l) for l in model.net.layers]}
        add("meta", json.dumps(meta, sort_keys=True).encode())
        add("codec", json.dumps(_codec_json(model.codec), sort_keys=True).encode())
        for idx, layer in enumerate(model.net.layers):
            for name, arr in _layer_arrays(layer).items():
                add(f"net{idx}.{name}", _pack_array(arr))
        add("M", _pack_array(model.M))
        add("bi", _pack_array(model.bi))
    else:
        meta = {"kind": model.flavor, "k": model.k, "mu": model.mu}
        add("meta", json.dumps(meta, sort_keys=True).encode())
        add("P", _pack_array(model.P))
        add("Q", _pack_array(model.Q))
        if model.flavor == "biased":
            add("bu", _pack_array(model.bu))
            add("bi", _pack_array(model.bi))

    payload = b"".join(sections)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(payload)))
        fh.write(payload)
        fh.write(_checksum(payload))


def _rebuild_net(meta: dict, arrays: dict[str, np.ndarray]) -> Network:
    rng = np.random.default_rng(0)
    layers: list[Layer] = []
    for idx, desc in enumerate(meta["layers"]):
        kind = desc["kind"]
        if kind == "linear":
            layer = Linear(desc["in"], desc["out"], rng)
            layer.W = arrays[f"net{idx}.W"]
            layer.b = arrays[f"net{idx}.b"]
            layer.dW = np.zeros_like(layer.W)
            layer.db = np.zeros_like(layer.b)
        elif kind == "leaky_relu":
            layer = LeakyReLU(desc["slope"])
        elif kind == "batchnorm":
            layer = BatchNorm(desc["features"], desc["eps"], desc["momentum"])
            layer.gamma = arrays[f"net{idx}.gamma"]
            layer.beta = arrays[f"net{idx}.beta"]
            layer.running_mean = arrays[f"net{idx}.running_mean"]
            layer.running_var = arrays[f"net{idx}.running_var"]
            layer.dgamma = np.zeros_like(layer.gamma)
            layer.dbeta = np.zeros_like(layer.beta)
        elif kind == "tanh":
            layer = Tanh()
        else:
            raise ModelFormatError(f"unknown layer kind {kind!r}")
        layers.append(layer)
    return Network(layers)


def load_model(path) -> LfgModel | BaselineModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise ModelFormatError("bad magic: not a model file")
    version, plen = struct.unpack_from("<IQ", blob, 4)
    if version > FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    if len(blob) != 16 + plen + 8:
        raise ModelFormatError("truncated or oversized model file")
    payload = blob[16:16 + plen]
    if _checksum(payload) != blob[16 + plen:]:
        raise ModelFormatError("checksum mismatch: file corrupted")

    raw = dict(_iter_sections(payload))
    meta = json.loads(raw["meta"])
    if meta["kind"] == "lfg":
        codec_d = json.loads(raw["codec"])
        codec = FeatureCodec(age_min=codec_d["age_min"], age_max=codec_d["age_max"],
                             occupations=tuple(codec_d["occupations"]),
                             genders=tuple(codec_d["genders"]))
        arrays = {k: _unpack_array(v) for k, v in raw.items()
                  if k not in ("meta", "codec")}
        net = _rebuild_net(meta, arrays)
        return LfgModel(net=net, M=arrays["M"], bi=arrays["bi"], mu=meta["mu"],
                        k=meta["k"], p=meta["p"], d_E=meta["d_E"], n=meta["n"],
                        codec=codec, hidden=tuple(meta["hidden"]))
    if meta["kind"] in ("plain", "biased"):
        P = _unpack_array(raw["P"])
        Q = _unpack_array(raw["Q"])
        bu = _unpack_array(raw["bu"]) if meta["kind"] == "biased" else None
        bi = _unpack_array(raw["bi"]) if meta["kind"] == "biased" else None
        return BaselineModel(meta["kind"], P, Q, bu, bi, meta["mu"], meta["k"])
    raise ModelFormatError(f"unknown model kind {meta['kind']!r}")
