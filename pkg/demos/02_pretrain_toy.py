#!/usr/bin/env python3
"""Pretrain a desk-scale masked autoencoder on synthetic spectrograms.

An 8x8 "spectrogram" with 2x2 patches gives 16 patches and the window
schedule [2, 4, 8, 16, 16]. Two hundred steps are enough to watch the
masked-reconstruction loss fall well below its starting point.
"""

import numpy as np

from mwmae import MaeConfig, TrainConfig, train
from mwmae.audio import standardize

rng = np.random.default_rng(0)

# Structured inputs: a few fixed prototypes plus noise, standardized per instance.
t_idx, f_idx = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
prototypes = [
    np.sin(2 * np.pi * t_idx / 8) * np.cos(2 * np.pi * f_idx / 8),
    np.where(f_idx < 4, 1.0, -1.0) * np.sin(2 * np.pi * t_idx / 8),
    np.cos(2 * np.pi * (t_idx + f_idx) / 16),
    np.where((t_idx + f_idx) % 4 < 2, 1.0, -1.0),
]
specs = [
    standardize(rng.uniform(0.5, 1.5) * prototypes[i % 4] + 0.15 * rng.normal(size=(8, 8)))
    for i in range(64)
]

cfg = MaeConfig(
    input_t=8, input_f=8, patch_t=2, patch_f=2,
    enc_depth=2, enc_width=16, enc_heads=2,
    dec_depth=2, dec_width=10, seed=0,
)
print(f"patches: {cfg.n_p}, decoder windows: {list(cfg.dec_schedule.windows)}")

train_cfg = TrainConfig(base_lr=0.8, batch_size=8, warmup_epochs=5,
                        total_epochs=25, seed=1)
result = train(specs, cfg, train_cfg, max_steps=200, loss_csv="toy_loss.csv")

smoothed = np.convolve(result.losses, np.ones(20) / 20, mode="valid")
print(f"smoothed loss: {smoothed[0]:.3f} -> {smoothed[-1]:.3f} "
      f"({100 * (1 - smoothed[-1] / smoothed[0]):.0f}% reduction)")
print("per-step losses written to toy_loss.csv")

marks = [0, 40, 80, 120, 160, 199]
print("\n  step   lr         loss")
for m in marks:
    print(f"  {m:4d}   {result.lrs[m]:.2e}   {result.losses[m]:.4f}")
