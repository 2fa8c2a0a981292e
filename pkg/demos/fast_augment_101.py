"""
What FASt does to a fingerprint
===============================

Apply the visible-AP augmentations and the Gaussian noise step to a single
fingerprint and check that invisible APs stay at zero.
"""

import numpy as np

from anvil.fast import FastConfig, fast_apply, gaussian_noise

rng = np.random.default_rng(0)
q = np.array([0.0, 0.62, 0.0, 0.35, 0.8, 0.0, 0.47, 0.15])
print("input        ", q)

# every visible AP drops with p=0.1; brightness and contrast fire per fingerprint
cfg = FastConfig()
for _ in range(3):
    print("fast_apply   ", np.round(fast_apply(q, cfg, rng), 2))

# the noise step acts on the whole vector, so zeros can become small positives
print("noise σ=0.12 ", np.round(gaussian_noise(fast_apply(q, cfg, rng), cfg.noise_sigma, rng), 2))

# FASt alone never lights up an invisible AP
batch = fast_apply(np.tile(q, (10_000, 1)), cfg, rng)
print("zeros leaked:", int(np.count_nonzero(batch[:, q == 0])))
