"""Prior-work baselines: Euclidean KNN, Pearson KNN, and a noise-trained FF-DNN.

* ``knn-euclid`` matches fingerprints by Euclidean distance.
* ``knn-pearson`` ranks by ``1 - r`` (sample Pearson correlation), so any
  positive affine change of the whole query leaves the ranking untouched.
* ``adtrain`` is a dense softmax classifier trained on noisy inputs and
  occasionally displaced labels; with both noises off it is a plain FF-DNN.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fast as _fast
from ._seeding import derive_rng
from .errors import ConfigError, DataError, DegenerateInputError, ShapeError
from .fast import FastConfig
from .fingerprint import ApRegistry, FingerprintDatabase
from .nn import (OptimizerConfig, argmax_lowest, check_finite, cross_entropy, dense_backward,
                 dense_forward, draw_dropout_masks, fit, init_dense, softmax)

log = logging.getLogger(__name__)

EUCLIDEAN = "euclidean"
PEARSON = "pearson"
DEGENERATE_DISTANCE = 2.0


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ShapeError("pearson needs two 1-D vectors of equal length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(da @ da)
    nb = np.sqrt(db @ db)
    if na == 0 or nb == 0:
        raise DegenerateInputError("zero variance vector")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def pearson_matrix(Q, K):
    """Correlation of each query row with each key row; NaN where undefined."""
    Qc = Q - Q.mean(axis=1, keepdims=True)
    Kc = K - K.mean(axis=1, keepdims=True)
    qn = np.sqrt(np.einsum("ij,ij->i", Qc, Qc))
    kn = np.sqrt(np.einsum("ij,ij->i", Kc, Kc))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Qc @ Kc.T) / np.outer(qn, kn)
    r[(qn == 0)[:, None] | (kn == 0)[None, :]] = np.nan
    return np.clip(r, -1.0, 1.0)


def distances(Q, K, metric):
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    K = np.asarray(K, dtype=float)
    if Q.shape[1] != K.shape[1]:
        raise ShapeError(f"query width {Q.shape[1]} != key width {K.shape[1]}")
    if metric == EUCLIDEAN:
        sq = np.einsum("ij,ij->i", Q, Q)[:, None] - 2 * Q @ K.T + np.einsum("ij,ij->i", K, K)[None, :]
        return np.sqrt(np.maximum(sq, 0.0))
    if metric == PEARSON:
        r = pearson_matrix(Q, K)
        return np.where(np.isnan(r), DEGENERATE_DISTANCE, 1.0 - r)
    raise ConfigError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class KnnConfig:
    k: int = 3
    metric: str = EUCLIDEAN

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.metric not in (EUCLIDEAN, PEARSON):
            raise ConfigError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True, eq=False)
class KnnModel:
    db: FingerprintDatabase
    config: KnnConfig

    @property
    def registry(self) -> ApRegistry:
        return self.db.registry

    def neighbors(self, Q):
        """Indices of the ``k`` nearest rows for each query (stable on ties)."""
        d = distances(Q, self.db.X, self.config.metric)
        k = min(self.config.k, d.shape[1])
        return np.argsort(d, axis=1, kind="stable")[:, :k], d

    def predict_many(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        idx, _ = self.neighbors(Q)
        xy = self.db.coords[idx].mean(axis=1)
        rp = nearest_rp(self.db.rp_coords, xy)
        return rp, xy


def nearest_rp(rp_coords, xy):
    """RP closest to each point; ``argmin`` picks the lowest id on ties."""
    d = np.linalg.norm(xy[:, None, :] - rp_coords[None, :, :], axis=2)
    return np.argmin(d, axis=1)


def knn_fit(db: FingerprintDatabase, cfg: KnnConfig | None = None) -> KnnModel:
    if len(db) == 0:
        raise DataError("empty database")
    return KnnModel(db, KnnConfig() if cfg is None else cfg)


def knn_predict(db: FingerprintDatabase, q, cfg: KnnConfig | None = None):
    rp, xy = knn_fit(db, cfg).predict_many(np.asarray(q, dtype=float).reshape(1, -1))
    return int(rp[0]), (float(xy[0, 0]), float(xy[0, 1]))


# ---------------------------------------------------------------------------
# FF-DNN / AdTrain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdTrainConfig:
    dense: tuple = (256, 128)
    dropout: float = 0.0
    input_noise_sigma: float = 0.12
    label_noise_p: float = 0.10
    rp_spacing_m: float | None = None
    fast: FastConfig | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.label_noise_p <= 1.0:
            raise ConfigError("label_noise_p must lie in [0, 1]")
        if not self.input_noise_sigma >= 0:
            raise ConfigError("input_noise_sigma must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        object.__setattr__(self, "dense", tuple(int(w) for w in self.dense))

    @classmethod
    def plain(cls, **kw) -> "AdTrainConfig":
        """The noiseless FF-DNN."""
        return cls(input_noise_sigma=0.0, label_noise_p=0.0, **kw)

    def to_dict(self):
        return {"dense": list(self.dense), "dropout": self.dropout,
                "input_noise_sigma": self.input_noise_sigma, "label_noise_p": self.label_noise_p,
                "rp_spacing_m": self.rp_spacing_m,
                "fast": None if self.fast is None else self.fast.to_dict(),
                "optimizer": self.optimizer.to_dict(), "seed": self.seed}

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        try:
            if doc.get("fast") is not None:
                doc["fast"] = FastConfig.from_dict(doc["fast"])
            if "optimizer" in doc:
                doc["optimizer"] = OptimizerConfig.from_dict(doc["optimizer"])
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad adtrain config: {exc}") from None


@dataclass(frozen=True, eq=False)
class FfdnnModel:
    config: AdTrainConfig
    params: dict
    registry: ApRegistry
    rp_coords: np.ndarray

    @property
    def n_rp(self):
        return self.rp_coords.shape[0]

    def probabilities(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[1] != len(self.registry):
            raise ShapeError(f"query has {Q.shape[1]} entries, model expects {len(self.registry)}")
        logits, _ = dense_forward(self.params, Q)
        check_finite("logits", logits)
        return softmax(logits)

    def predict_many(self, Q):
        rp = argmax_lowest(self.probabilities(Q))
        return rp, self.rp_coords[rp]


def adjacent_rps(rp_coords, spacing=None):
    """For each RP, the other RPs within one spacing (spacing inferred if absent)."""
    d = np.linalg.norm(rp_coords[:, None, :] - rp_coords[None, :, :], axis=2)
    if spacing is None:
        off = d[~np.eye(len(d), dtype=bool)]
        spacing = float(off.min()) if off.size else 0.0
    tol = 1e-9 * max(1.0, spacing)
    return [np.flatnonzero((row <= spacing + tol) & (np.arange(len(d)) != i)) for i, row in enumerate(d)]


def adtrain_train(db: FingerprintDatabase, cfg: AdTrainConfig | None = None, seed=None):
    """Train the dense classifier; returns ``(FfdnnModel, (losses, accuracies))``."""
    cfg = AdTrainConfig() if cfg is None else cfg
    seed = cfg.seed if seed is None else seed
    if len(db) == 0:
        raise DataError("empty database")
    params = init_dense(derive_rng(seed, "ffdnn-init"), db.d_ap, cfg.dense, db.n_rp)
    neighbours = adjacent_rps(db.rp_coords, cfg.rp_spacing_m)
    X, y = db.X, db.rp_ids

    def step(p, rows, rng):
        xb = X[rows]
        yb = y[rows].copy()
        if cfg.fast is not None:
            xb = _fast.fast_apply(xb, cfg.fast, rng)
        if cfg.input_noise_sigma > 0:
            xb = _fast.gaussian_noise(xb, cfg.input_noise_sigma, rng)
        if cfg.label_noise_p > 0:
            flip = rng.random(rows.size) < cfg.label_noise_p
            pick = rng.random(rows.size)
            for i in np.flatnonzero(flip):
                cand = neighbours[yb[i]]
                if cand.size:
                    yb[i] = cand[int(pick[i] * cand.size)]
        masks = draw_dropout_masks(rng, rows.size, p, cfg.dropout)
        logits, cache = dense_forward(p, xb, masks)
        check_finite("logits", logits)
        loss, dlogits = cross_entropy(logits, yb)
        grads, _ = dense_backward(p, dlogits, cache, masks)
        return loss, grads

    def accuracy(p):
        logits, _ = dense_forward(p, X)
        return np.mean(argmax_lowest(logits) == y)

    losses, accs = fit(params, step, len(db), cfg.optimizer, derive_rng(seed, "ffdnn-train"), accuracy)
    log.info("ffdnn trained: %d epochs, loss %.4f, acc %.3f", len(losses), losses[-1], accs[-1])
    return FfdnnModel(cfg, params, db.registry, np.array(db.rp_coords)), (losses, accs)


def ffdnn_predict(model: FfdnnModel, q):
    rp, xy = model.predict_many(np.asarray(q, dtype=float).reshape(1, -1))
    return int(rp[0]), (float(xy[0, 0]), float(xy[0, 1]))
