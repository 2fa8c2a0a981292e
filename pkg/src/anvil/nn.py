"""Small numpy neural-net toolkit: dense ReLU stack, softmax cross-entropy, Adam.

Parameters and gradients are plain ``dict[str, ndarray]`` with matching keys.

Initialization constants (bias vectors start at zero):

* layers followed by ReLU: ``U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))``
* linear layers (projections, softmax output): ``U(-sqrt(3 / fan_in), +sqrt(3 / fan_in))``

Adam, with ``t`` counting updates from 1::

    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g**2
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    p -= lr * m_hat / (sqrt(v_hat) + eps)
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, NumericError, TrainingError

log = logging.getLogger(__name__)

RELU_GAIN = 6.0
LINEAR_GAIN = 3.0


def uniform_init(rng, fan_in, shape, gain):
    limit = np.sqrt(gain / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def cross_entropy(logits, targets):
    """Mean categorical cross-entropy and its gradient w.r.t. the logits."""
    logp = log_softmax(logits)
    n = logits.shape[0]
    loss = -float(np.mean(logp[np.arange(n), targets]))
    dlogits = np.exp(logp)
    dlogits[np.arange(n), targets] -= 1.0
    return loss, dlogits / n


def check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


# ---------------------------------------------------------------------------
# dense stack
# ---------------------------------------------------------------------------

def init_dense(rng, d_in, widths, n_out, prefix="dense"):
    """Hidden ReLU layers of ``widths`` followed by a softmax layer of ``n_out``."""
    params = {}
    sizes = [d_in, *widths, n_out]
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = RELU_GAIN if i < len(widths) else LINEAR_GAIN
        params[f"{prefix}.W{i}"] = uniform_init(rng, a, (a, b), gain)
        params[f"{prefix}.b{i}"] = np.zeros(b)
    return params


def n_dense_layers(params, prefix="dense"):
    return sum(1 for k in params if k.startswith(prefix + ".W"))


def draw_dropout_masks(rng, batch, params, dropout, prefix="dense"):
    """Inverted-dropout masks for every hidden layer (``None`` when off)."""
    n_layers = n_dense_layers(params, prefix)
    masks = []
    for i in range(n_layers - 1):
        width = params[f"{prefix}.W{i}"].shape[1]
        if dropout > 0:
            masks.append((rng.random((batch, width)) >= dropout) / (1.0 - dropout))
        else:
            masks.append(None)
    return masks


def dense_forward(params, h, masks=None, prefix="dense"):
    """Return logits and the cache needed by :func:`dense_backward`."""
    n_layers = n_dense_layers(params, prefix)
    inputs, pre = [], []
    for i in range(n_layers):
        z = h @ params[f"{prefix}.W{i}"] + params[f"{prefix}.b{i}"]
        inputs.append(h)
        if i == n_layers - 1:
            return z, (inputs, pre)
        pre.append(z)
        h = np.maximum(z, 0.0)
        if masks is not None and masks[i] is not None:
            h = h * masks[i]


def dense_backward(params, dlogits, cache, masks=None, prefix="dense"):
    """Gradients for every dense tensor, plus the gradient w.r.t. the stack input."""
    inputs, pre = cache
    grads = {}
    g = dlogits
    for i in reversed(range(len(inputs))):
        grads[f"{prefix}.W{i}"] = inputs[i].T @ g
        grads[f"{prefix}.b{i}"] = g.sum(axis=0)
        g = g @ params[f"{prefix}.W{i}"].T
        if i > 0:
            if masks is not None and masks[i - 1] is not None:
                g = g * masks[i - 1]
            g = g * (pre[i - 1] > 0)
    return grads, g


# ---------------------------------------------------------------------------
# optimizer + loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 300
    patience: int = 30
    min_delta: float = 1e-4

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, epochs and patience must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad optimizer config: {exc}") from None


class Adam:
    def __init__(self, params, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        corr1 = 1.0 - c.beta1 ** self.t
        corr2 = 1.0 - c.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            # in-place: update = lr * m_hat / (sqrt(v_hat) + eps)
            denom = np.sqrt(v / corr2)
            denom += c.eps
            np.divide(m, denom, out=denom)
            denom *= c.lr / corr1
            params[k] -= denom


def fit(params, loss_and_grads, n_samples, cfg: OptimizerConfig, rng, accuracy=None):
    """Mini-batch Adam with early stopping on the epoch-mean training loss.

    ``loss_and_grads(params, rows, rng)`` returns ``(loss, grads)`` for the
    sample indices ``rows``; ``accuracy(params)`` (optional) is evaluated after
    every epoch.  Returns ``(losses, accuracies)``.
    """
    opt = Adam(params, cfg)
    losses, accs = [], []
    best = np.inf
    stale = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            try:
                # overflow surfaces as a NumericError from the finiteness checks
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = loss_and_grads(params, rows, rng)
            except NumericError as exc:
                raise TrainingError(f"training diverged at epoch {epoch}: {exc}", epoch) from None
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch}: loss {loss}", epoch)
            opt.step(params, grads)
            total += loss * rows.size
        epoch_loss = total / n_samples
        losses.append(epoch_loss)
        if accuracy is not None:
            accs.append(float(accuracy(params)))
        log.debug("epoch %d loss %.6f", epoch, epoch_loss)
        if epoch_loss < best - cfg.min_delta:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (loss %.6f)", epoch, epoch_loss)
                break
    return losses, accs


def argmax_lowest(probs):
    """Row-wise argmax; ``np.argmax`` already returns the first maximum."""
    return np.argmax(probs, axis=-1)
