#!/usr/bin/env python3
"""Tour of multi-window attention.

Shows how per-head window sizes are derived from the patch count, that
windowed attention is exactly blockwise self-attention, and that an
all-global schedule recovers standard multi-head attention.
"""

import numpy as np

from mwmae import (
    AttentionParams,
    Tensor,
    attention,
    mha,
    mw_mha,
    win_attention,
    window_schedule,
)
from mwmae.attention import global_schedule

rng = np.random.default_rng(0)

print("== Window schedules from patch counts ==")
for n_p in (125, 250, 500, 640):
    s = window_schedule(n_p)
    print(f"  n_p={n_p:4d}: h={s.n_heads:2d} windows={list(s.windows)}")

print()
print("== Windowed attention is blockwise attention ==")
n, d_k, win = 12, 4, 3
q, k, v = (Tensor(rng.normal(size=(n, d_k))) for _ in range(3))
windowed = win_attention(q, k, v, win).data
blockwise = np.concatenate([
    attention(
        Tensor(q.data[i:i + win]), Tensor(k.data[i:i + win]), Tensor(v.data[i:i + win])
    ).data
    for i in range(0, n, win)
])
print(f"  n={n}, win={win}: max |windowed - blockwise| = "
      f"{np.abs(windowed - blockwise).max():.2e}")

print()
print("== Tokens outside the window cannot influence a query ==")
k2 = Tensor(k.data.copy())
k2.data[win] += 100.0  # second window
perturbed = win_attention(q, k2, v, win).data
print(f"  first-window rows changed by {np.abs(perturbed[:win] - windowed[:win]).max():.1f}"
      f", second-window rows by {np.abs(perturbed[win:2*win] - windowed[win:2*win]).max():.3f}")

print()
print("== All-global schedule collapses to standard MHA ==")
d_m, h = 16, 4
params = AttentionParams.init(d_m, h, rng)
x = Tensor(rng.normal(size=(10, d_m)))
diff = np.abs(mw_mha(x, params, global_schedule(10, h)).data - mha(x, params).data).max()
print(f"  max |mw_mha(all-global) - mha| = {diff:.1e} (identical computation)")

print()
print("== A mixed schedule blends local and global context ==")
sched = window_schedule(10)  # (2, 5, 10, 10)
params10 = AttentionParams.init(16, sched.n_heads, rng)
out = mw_mha(x, params10, sched)
print(f"  schedule {list(sched.windows)} -> output shape {out.shape}")
