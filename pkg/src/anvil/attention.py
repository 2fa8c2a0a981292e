"""Multi-head attention localization model with hand-written backpropagation.

The offline fingerprints serve as keys and, augmented, as training queries;
their one-hot RP labels are the values.  Per head ``i``::

    h_i = softmax((q Wq_i)(K Wk_i)^T / sqrt(hs)) (V Wv_i)

The heads are concatenated, projected by ``Wo`` and classified by a dense
ReLU stack ending in a softmax over RPs.  Attention projections carry no
bias; dense layers do.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fast as _fast
from ._seeding import derive_rng
from .errors import ConfigError, DataError, ShapeError
from .fast import FastConfig
from .fingerprint import ApRegistry, FingerprintDatabase
from .nn import (LINEAR_GAIN, OptimizerConfig, argmax_lowest, check_finite, cross_entropy,
                 dense_backward, dense_forward, draw_dropout_masks, fit, init_dense, softmax,
                 uniform_init)

log = logging.getLogger(__name__)

def scaled_dot_attention(Q, K, V):
    """``softmax(Q K^T / sqrt(d_k)) V``; returns ``(output, weights)``."""
    Q, K, V = (np.asarray(a, dtype=float) for a in (Q, K, V))
    if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
        raise ShapeError("Q, K and V must be 2-D")
    if Q.shape[1] != K.shape[1] or K.shape[0] != V.shape[0] or Q.shape[1] < 1:
        raise ShapeError(f"incompatible shapes Q{Q.shape} K{K.shape} V{V.shape}")
    weights = softmax(Q @ K.T / np.sqrt(Q.shape[1]))
    return weights @ V, weights


@dataclass(frozen=True)
class MultiHeadParams:
    """Stacked per-head projections.

    ``wq``/``wk``: ``(nh, d_ap, hs)``; ``wv``: ``(nh, n_rp, hs)``;
    ``wo``: ``(nh * hs, d_out)``.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    def __post_init__(self):
        nh, d_ap, hs = np.shape(self.wq)
        if np.shape(self.wk) != (nh, d_ap, hs) or np.shape(self.wv)[0::2] != (nh, hs) \
                or np.shape(self.wo)[0] != nh * hs:
            raise ShapeError("inconsistent multi-head projection shapes")

    @property
    def n_heads(self):
        return self.wq.shape[0]

    @property
    def head_size(self):
        return self.wq.shape[2]

    @classmethod
    def from_params(cls, params):
        return cls(params["mh.Wq"], params["mh.Wk"], params["mh.Wv"], params["mh.Wo"])


def _project(X, W):
    """``X @ W_i`` for every head as one GEMM; ``W`` is ``(nh, d, hs)``, result ``(nh, n, hs)``."""
    nh, d, hs = W.shape
    return (X @ W.transpose(1, 0, 2).reshape(d, nh * hs)).reshape(X.shape[0], nh, hs).transpose(1, 0, 2)


def _project_grad(X, dY):
    """Gradient of :func:`_project` w.r.t. ``W`` given ``dY`` of shape ``(nh, n, hs)``."""
    nh, n, hs = dY.shape
    g = X.T @ dY.transpose(1, 0, 2).reshape(n, nh * hs)
    return g.reshape(X.shape[1], nh, hs).transpose(1, 0, 2)


def _mh_forward(params, q, K, V):
    Wq, Wk, Wv, Wo = params["mh.Wq"], params["mh.Wk"], params["mh.Wv"], params["mh.Wo"]
    nh, _, hs = Wq.shape
    Qh = _project(q, Wq)             # (nh, B, hs)
    Kh = _project(K, Wk)             # (nh, N, hs)
    Vh = _project(V, Wv)             # (nh, N, hs)
    A = softmax(np.matmul(Qh, Kh.transpose(0, 2, 1)) / np.sqrt(hs))
    H = np.matmul(A, Vh)             # (nh, B, hs)
    concat = H.transpose(1, 0, 2).reshape(q.shape[0], nh * hs)
    return concat @ Wo, (q, K, V, Qh, Kh, Vh, A, concat)


def _mh_backward(params, dF, cache):
    Wq, Wk, Wv, Wo = params["mh.Wq"], params["mh.Wk"], params["mh.Wv"], params["mh.Wo"]
    q, K, V, Qh, Kh, Vh, A, concat = cache
    nh, _, hs = Wq.shape
    grads = {"mh.Wo": concat.T @ dF}
    dH = (dF @ Wo.T).reshape(q.shape[0], nh, hs).transpose(1, 0, 2)
    dA = np.matmul(dH, Vh.transpose(0, 2, 1))
    dVh = np.matmul(A.transpose(0, 2, 1), dH)
    dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) / np.sqrt(hs)
    dQh = np.matmul(dS, Kh)
    dKh = np.matmul(dS.transpose(0, 2, 1), Qh)
    grads["mh.Wq"] = _project_grad(q, dQh)
    grads["mh.Wk"] = _project_grad(K, dKh)
    grads["mh.Wv"] = _project_grad(V, dVh)
    return grads


def multi_head_forward(p: MultiHeadParams, q, K, V):
    """``Concat(h_1, ..., h_nh) Wo`` for a query row or a batch of rows."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    K = np.asarray(K, dtype=float)
    V = np.asarray(V, dtype=float)
    if q2.shape[1] != p.wq.shape[1] or K.shape[1] != p.wk.shape[1] or V.shape[1] != p.wv.shape[1] \
            or K.shape[0] != V.shape[0]:
        raise ShapeError(f"shapes q{q2.shape} K{K.shape} V{V.shape} do not match the projections")
    out, _ = _mh_forward({"mh.Wq": p.wq, "mh.Wk": p.wk, "mh.Wv": p.wv, "mh.Wo": p.wo}, q2, K, V)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnvilConfig:
    nh: int = 5
    hs: int = 50
    d_out: int | None = None
    dense: tuple = (256, 128)
    dropout: float = 0.10
    fast: FastConfig = field(default_factory=FastConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    dtype: str = "float64"   # "float32" trains a little faster
    # Query/key projections start wide: U(+-sqrt(qk_gain / d_ap)).  With the
    # standard linear gain the attention scores are nearly identical across
    # keys, every query attends uniformly and training sits at ln(n_rp) for
    # many epochs.
    qk_gain: float = 300.0

    def __post_init__(self):
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("dtype must be 'float64' or 'float32'")
        if not self.qk_gain > 0:
            raise ConfigError("qk_gain must be positive")
        if self.nh < 1 or self.hs < 1:
            raise ConfigError("nh and hs must be >= 1")
        if any(int(w) < 1 for w in self.dense):
            raise ConfigError("dense widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        object.__setattr__(self, "dense", tuple(int(w) for w in self.dense))

    @property
    def out_width(self):
        return self.nh * self.hs if self.d_out is None else int(self.d_out)

    def to_dict(self):
        return {"nh": self.nh, "hs": self.hs, "d_out": self.d_out, "dense": list(self.dense),
                "dropout": self.dropout, "fast": self.fast.to_dict(),
                "optimizer": self.optimizer.to_dict(), "seed": self.seed, "dtype": self.dtype,
                "qk_gain": self.qk_gain}

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        try:
            if "fast" in doc:
                doc["fast"] = FastConfig.from_dict(doc["fast"])
            if "optimizer" in doc:
                doc["optimizer"] = OptimizerConfig.from_dict(doc["optimizer"])
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad training config: {exc}") from None


@dataclass
class TrainReport:
    losses: list
    accuracies: list
    n_params: int

    @property
    def epochs(self):
        return len(self.losses)


@dataclass(frozen=True, eq=False)
class AttentionModel:
    config: AnvilConfig
    params: dict
    keys: np.ndarray
    values: np.ndarray
    registry: ApRegistry
    rp_coords: np.ndarray

    def __post_init__(self):
        if self.keys.shape[0] != self.values.shape[0]:
            raise ShapeError("keys and values need the same number of rows")
        dt = np.dtype(self.config.dtype)
        for name, kind in (("keys", dt), ("values", dt), ("rp_coords", float)):
            arr = np.array(getattr(self, name), dtype=kind)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "params", {k: np.asarray(v, dtype=dt) for k, v in self.params.items()})

    @property
    def mh(self) -> MultiHeadParams:
        return MultiHeadParams.from_params(self.params)

    @property
    def n_rp(self):
        return self.values.shape[1]

    @property
    def d_ap(self):
        return self.keys.shape[1]

    def predict_many(self, X):
        return predict_many(self, X)


def init_params(cfg: AnvilConfig, d_ap, n_rp, rng):
    nh, hs = cfg.nh, cfg.hs
    params = {
        "mh.Wq": uniform_init(rng, d_ap, (nh, d_ap, hs), cfg.qk_gain),
        "mh.Wk": uniform_init(rng, d_ap, (nh, d_ap, hs), cfg.qk_gain),
        "mh.Wv": uniform_init(rng, n_rp, (nh, n_rp, hs), LINEAR_GAIN),
        "mh.Wo": uniform_init(rng, nh * hs, (nh * hs, cfg.out_width), LINEAR_GAIN),
    }
    params.update(init_dense(rng, cfg.out_width, cfg.dense, n_rp))
    return params


def build_model(db: FingerprintDatabase, cfg: AnvilConfig, rng=None) -> AttentionModel:
    """Untrained model whose keys/values are frozen from ``db``."""
    if len(db) == 0:
        raise DataError("cannot build a model from an empty database")
    rng = derive_rng(cfg.seed, "anvil-init") if rng is None else rng
    params = init_params(cfg, db.d_ap, db.n_rp, rng)
    return AttentionModel(cfg, params, db.X, db.labels, db.registry, db.rp_coords)


def augment_queries(q, cfg: AnvilConfig, rng):
    """Training-time query transform: FASt, then whole-vector Gaussian noise."""
    out = _fast.gaussian_noise(_fast.fast_apply(q, cfg.fast, rng), cfg.fast.noise_sigma, rng)
    return out.astype(cfg.dtype, copy=False)


def _draw_masks(rng, batch, params, cfg):
    masks = draw_dropout_masks(rng, batch, params, cfg.dropout)
    return [None if mk is None else mk.astype(cfg.dtype, copy=False) for mk in masks]


def _forward(params, cfg, q, keys, values, masks):
    feats, mh_cache = _mh_forward(params, q, keys, values)
    logits, dense_cache = dense_forward(params, feats, masks)
    return logits, (mh_cache, dense_cache)


def model_forward(m: AttentionModel, q, training: bool = False, rng=None, params=None):
    """Class probabilities for one query (1-D) or a batch (2-D).

    With ``training`` the query is augmented and dense dropout is active; both
    consume ``rng``.  Inference never touches ``rng``.
    """
    params = m.params if params is None else params
    q = np.asarray(q, dtype=m.config.dtype)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    if q2.shape[1] != m.d_ap:
        raise ShapeError(f"query has {q2.shape[1]} entries, model expects {m.d_ap}")
    check_finite("query", q2)
    masks = None
    if training:
        q2 = augment_queries(q2, m.config, rng)
        masks = _draw_masks(rng, q2.shape[0], params, m.config)
    logits, _ = _forward(params, m.config, q2, m.keys, m.values, masks)
    check_finite("logits", logits)
    probs = softmax(logits)
    return probs[0] if single else probs


def loss_and_gradients(m: AttentionModel, X, rp_ids, rng, params=None, augment=True):
    """Mean cross-entropy over the batch and the gradient of every trainable tensor.

    The augmentation and dropout realizations are drawn from ``rng`` first, so
    re-running with an identically seeded ``rng`` differentiates the same
    function (this is what finite-difference checks rely on).
    """
    params = m.params if params is None else params
    X = np.atleast_2d(np.asarray(X, dtype=m.config.dtype))
    rp_ids = np.asarray(rp_ids, dtype=int).reshape(-1)
    if X.shape[0] == 0:
        raise DataError("empty batch")
    if augment:
        X = augment_queries(X, m.config, rng)
        masks = _draw_masks(rng, X.shape[0], params, m.config)
    else:
        masks = None
    logits, (mh_cache, dense_cache) = _forward(params, m.config, X, m.keys, m.values, masks)
    check_finite("logits", logits)
    loss, dlogits = cross_entropy(logits, rp_ids)
    check_finite("loss", np.asarray(loss))
    grads, dfeats = dense_backward(params, dlogits, dense_cache, masks)
    grads.update(_mh_backward(params, dfeats, mh_cache))
    return loss, grads


def predict_many(m: AttentionModel, X):
    """``(rp_ids, coords)`` for each query row; ties go to the lowest RP id."""
    probs = np.atleast_2d(model_forward(m, X, training=False))
    rp = argmax_lowest(probs)
    return rp, m.rp_coords[rp]


def predict(m: AttentionModel, q):
    rp, xy = predict_many(m, np.asarray(q, dtype=float).reshape(1, -1))
    return int(rp[0]), (float(xy[0, 0]), float(xy[0, 1]))


def train(db: FingerprintDatabase, cfg: AnvilConfig | None = None, seed=None):
    """Fit the model on ``db``; the same fingerprints act as keys and queries."""
    cfg = AnvilConfig() if cfg is None else cfg
    seed = cfg.seed if seed is None else seed
    m = build_model(db, cfg, derive_rng(seed, "anvil-init"))
    params = {k: v.copy() for k, v in m.params.items()}
    X, y = db.X, db.rp_ids

    def step(p, rows, rng):
        return loss_and_gradients(m, X[rows], y[rows], rng, params=p)

    def accuracy(p):
        probs = model_forward(m, X, training=False, params=p)
        return np.mean(argmax_lowest(probs) == y)

    losses, accs = fit(params, step, len(db), cfg.optimizer, derive_rng(seed, "anvil-train"), accuracy)
    trained = AttentionModel(cfg, params, m.keys, m.values, m.registry, m.rp_coords)
    report = TrainReport(losses, accs, count_params(trained))
    log.info("anvil trained: %d epochs, loss %.4f, acc %.3f, %d params",
             report.epochs, losses[-1], accs[-1], report.n_params)
    return trained, report


def count_params_formula(nh, hs, d_ap, n_rp, d_out, dense_widths):
    total = nh * hs * (2 * d_ap + n_rp) + nh * hs * d_out
    sizes = [d_out, *dense_widths, n_rp]
    total += sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    return total


def count_params(m: AttentionModel) -> int:
    return int(sum(v.size for v in m.params.values()))
