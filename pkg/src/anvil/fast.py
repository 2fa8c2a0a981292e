"""Fingerprint augmentation for training queries.

:func:`fast_apply` only touches visible APs (normalized value > 0): it drops
some of them, shifts the rest up or down, and stretches them about zero.
:func:`gaussian_noise` jitters every entry, visible or not.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class FastConfig:
    p_dropout: float = 0.10
    p_brightness: float = 0.10
    brightness_delta_max: float = 0.10
    p_contrast: float = 0.10
    contrast_range: tuple = (0.9, 1.1)
    noise_sigma: float = 0.12

    def __post_init__(self):
        for name in ("p_dropout", "p_brightness", "p_contrast"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        lo, hi = map(float, self.contrast_range)
        if not 0 < lo <= hi:
            raise ConfigError("contrast_range must satisfy 0 < lo <= hi")
        object.__setattr__(self, "contrast_range", (lo, hi))
        if not self.brightness_delta_max >= 0:
            raise ConfigError("brightness_delta_max must be non-negative")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be non-negative")

    def without_fast(self) -> "FastConfig":
        """Same config with the three visible-AP augmentations switched off."""
        return FastConfig(0.0, 0.0, self.brightness_delta_max, 0.0, self.contrast_range,
                          self.noise_sigma)

    def to_dict(self):
        d = asdict(self)
        d["contrast_range"] = list(self.contrast_range)
        return d

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad fast config: {exc}") from None


def _check_normalized(q):
    if not np.all((q >= 0.0) & (q <= 1.0)):
        raise DomainError("FASt expects normalized fingerprints in [0, 1]")


def fast_apply(q, cfg: FastConfig, rng) -> np.ndarray:
    """Augment one fingerprint, or each row of a batch independently.

    Order: per-entry dropout of visible APs, then a per-fingerprint coin flip
    for a uniform brightness shift, then one for a uniform contrast factor.
    Entries that start at 0 stay at exactly 0.
    """
    q = np.asarray(q, dtype=float)
    _check_normalized(q)
    batch = np.atleast_2d(q)
    n = batch.shape[0]
    visible = batch > 0.0
    # draws are made unconditionally so the stream layout does not depend on cfg
    keep = rng.random(batch.shape) >= cfg.p_dropout
    bright_on = rng.random(n) < cfg.p_brightness
    shift = rng.uniform(-cfg.brightness_delta_max, cfg.brightness_delta_max, size=n)
    contrast_on = rng.random(n) < cfg.p_contrast
    factor = rng.uniform(*cfg.contrast_range, size=n)

    mask = visible & keep
    out = np.where(mask, batch, 0.0)
    out = out + np.where(bright_on, shift, 0.0)[:, None] * mask
    out = np.where(mask & contrast_on[:, None], out * factor[:, None], out)
    out = np.clip(out, 0.0, 1.0)
    return out.reshape(q.shape)


def gaussian_noise(v, sigma: float, rng, return_raw: bool = False):
    """Add ``N(0, sigma^2)`` to every entry and clamp to [0, 1].

    With ``return_raw`` the unclamped noisy vector is returned as well.
    """
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    v = np.asarray(v, dtype=float)
    raw = v + rng.normal(0.0, sigma, size=v.shape) if sigma > 0 else v.copy()
    out = np.clip(raw, 0.0, 1.0)
    return (out, raw) if return_raw else out
