import numpy as np
import pytest

from anvil.errors import DomainError
from anvil.fast import FastConfig, fast_apply, gaussian_noise

OFF = FastConfig(p_dropout=0.0, p_brightness=0.0, p_contrast=0.0)


def sparse_batch(rng, n=2000, d=40, zero_frac=0.35):
    q = rng.uniform(0.01, 1.0, size=(n, d))
    q[rng.random((n, d)) < zero_frac] = 0.0
    return q


def test_zero_probabilities_are_identity(rng):
    q = sparse_batch(rng, 50)
    assert np.array_equal(fast_apply(q, OFF, rng), q)


def test_all_zero_input_stays_zero(rng):
    cfg = FastConfig(p_dropout=0.5, p_brightness=1.0, p_contrast=1.0)
    assert np.all(fast_apply(np.zeros((20, 30)), cfg, rng) == 0.0)


def test_zero_entries_never_become_nonzero(rng):
    cfg = FastConfig(p_dropout=0.3, p_brightness=1.0, brightness_delta_max=0.3, p_contrast=1.0,
                     contrast_range=(0.5, 1.5))
    q = sparse_batch(rng)
    out = fast_apply(q, cfg, rng)
    assert np.all(out[q == 0] == 0)
    assert out.min() >= 0 and out.max() <= 1


def test_dropout_rate(rng):
    q = sparse_batch(rng, n=5000)
    cfg = FastConfig(p_brightness=0.0, p_contrast=0.0)
    out = fast_apply(q, cfg, rng)
    visible = q > 0
    rate = np.mean(out[visible] == 0)
    assert 0.09 <= rate <= 0.11


def test_brightness_is_uniform_shift_per_fingerprint(rng):
    q = rng.uniform(0.3, 0.7, size=(200, 10))
    cfg = FastConfig(p_dropout=0.0, p_brightness=1.0, p_contrast=0.0)
    delta = fast_apply(q, cfg, rng) - q
    assert np.allclose(delta, delta[:, :1])
    assert np.all(np.abs(delta) <= 0.1 + 1e-12)


def test_contrast_scales_each_fingerprint(rng):
    q = rng.uniform(0.2, 0.8, size=(200, 10))
    cfg = FastConfig(p_dropout=0.0, p_brightness=0.0, p_contrast=1.0)
    ratio = fast_apply(q, cfg, rng) / q
    assert np.allclose(ratio, ratio[:, :1])
    assert ratio.min() >= 0.9 - 1e-12 and ratio.max() <= 1.1 + 1e-12


def test_gate_probability(rng):
    q = np.full((20_000, 4), 0.5)
    cfg = FastConfig(p_dropout=0.0, p_brightness=0.0, p_contrast=1.0 / 3)
    out = fast_apply(q, cfg, rng)
    touched = np.mean(np.any(out != q, axis=1))
    assert abs(touched - 1.0 / 3) < 0.015


def test_single_vector_and_determinism():
    q = np.array([0.0, 0.2, 0.9, 0.0, 0.5])
    a = fast_apply(q, FastConfig(), np.random.default_rng(3))
    b = fast_apply(q, FastConfig(), np.random.default_rng(3))
    assert a.shape == q.shape and np.array_equal(a, b)


def test_rejects_unnormalized(rng):
    with pytest.raises(DomainError):
        fast_apply(np.array([-60.0, -100.0]), FastConfig(), rng)


def test_noise_sigma_zero_is_identity(rng):
    v = rng.random(100)
    assert np.array_equal(gaussian_noise(v, 0.0, rng), v)


def test_noise_moments(rng):
    v = np.full(1_000_000, 0.5)
    out, raw = gaussian_noise(v, 0.12, rng, return_raw=True)
    d = raw - v
    assert abs(d.mean()) <= 0.001
    assert 0.119 <= d.std() <= 0.121
    assert out.min() >= 0 and out.max() <= 1


def test_noise_touches_invisible_entries(rng):
    out = gaussian_noise(np.zeros(1000), 0.12, rng)
    assert np.any(out > 0)


def test_without_fast_keeps_noise():
    cfg = FastConfig().without_fast()
    assert (cfg.p_dropout, cfg.p_brightness, cfg.p_contrast) == (0.0, 0.0, 0.0)
    assert cfg.noise_sigma == 0.12
