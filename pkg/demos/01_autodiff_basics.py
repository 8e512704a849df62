"""A tour of the autodiff engine: build a tiny network by hand, take
gradients, and confirm them against finite differences.

Run: python demos/01_autodiff_basics.py
"""

import numpy as np

from deepkt import autodiff as ad
from deepkt.autodiff import Tensor

rng = np.random.default_rng(0)

# A two-layer network on a 3-sample batch: y = sigmoid(tanh(x W1 + b1) W2 + b2)
x = ad.constant(rng.normal(size=(3, 4)))
W1 = Tensor(rng.normal(0, 0.5, size=(4, 5)), requires_grad=True)
b1 = Tensor(np.zeros((1, 5)), requires_grad=True)
W2 = Tensor(rng.normal(0, 0.5, size=(5, 1)), requires_grad=True)
b2 = Tensor(np.zeros((1, 1)), requires_grad=True)
targets = np.array([[1.0], [0.0], [1.0]])


def forward():
    h = ad.tanh(x @ W1 + b1)
    p = ad.sigmoid(h @ W2 + b2)
    return ad.binary_cross_entropy(p, targets, np.ones_like(targets))


loss = forward()
print(f"loss = {loss.item():.6f}")

# One call fills .grad on every parameter.
ad.backward(loss)
print(f"dloss/dW2 (first rows):\n{W2.grad[:2]}")

# Spot-check one entry against a central difference.
i, j = 2, 1
h = 1e-6
orig = W1.data[i, j]
W1.data[i, j] = orig + h
up = forward().item()
W1.data[i, j] = orig - h
down = forward().item()
W1.data[i, j] = orig
numeric = (up - down) / (2 * h)
print(f"analytic dW1[{i},{j}] = {W1.grad[i, j]:.10f}")
print(f"numeric  dW1[{i},{j}] = {numeric:.10f}")

# A few steps of Adam on the same objective.
params = [W1, b1, W2, b2]
state = ad.AdamState()
for p in params:
    p.zero_grad()
for step in range(1, 51):
    loss = forward()
    ad.backward(loss)
    ad.clip_global_norm([p.grad for p in params], 10.0)
    ad.adam_step(params, state, lr=0.05)
    if step % 10 == 0:
        print(f"step {step:3d}  loss {loss.item():.6f}")
