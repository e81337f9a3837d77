#!/usr/bin/env python3
"""The tensor engine in five minutes.

Float64 arrays with recorded backward closures: build a scalar loss, call
backward(), and read gradients off the leaves. Central-difference checking
keeps every op honest, and the named-tensor container round-trips weights
through a compact binary file.
"""

import tempfile
from pathlib import Path

import numpy as np

from mwmae import Tensor, grad_check, load_tensors, save_tensors
from mwmae import tensor as T

rng = np.random.default_rng(0)

print("== Forward, backward, gradients ==")
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
b = Tensor(np.zeros(2), requires_grad=True)
x = Tensor(rng.normal(size=(5, 3)))

logits = T.matmul(x, w) + b
loss = (T.gelu(logits) * T.gelu(logits)).mean()
loss.backward()
print(f"loss = {loss.item():.6f}")
print(f"dL/dw:\n{w.grad.round(4)}")
print(f"dL/db: {b.grad.round(4)}")

print()
print("== Gradient checking against central differences ==")
for name, f in {
    "softmax-weighted sum": lambda t: (T.softmax_lastdim(t) * x).sum(),
    "layer-norm mean": lambda t: T.layer_norm(
        t, Tensor(np.ones(3)), Tensor(np.zeros(3))).mean(),
    "windowed product": lambda t: (t * t * t).sum(),
}.items():
    err = grad_check(f, Tensor(rng.normal(size=(5, 3))), eps=1e-5)
    print(f"  {name:22s} max rel error {err:.2e}")

print()
print("== Named-tensor container round trip ==")
weights = {"w": w.data, "b": b.data}
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "weights.bin"
    save_tensors(path, weights)
    back = load_tensors(path)
    size = path.stat().st_size
print(f"wrote {len(weights)} tensors in {size} bytes (f32 payload)")
for k in weights:
    print(f"  {k}: max |roundtrip - original| = "
          f"{np.abs(back[k] - weights[k]).max():.2e}")
