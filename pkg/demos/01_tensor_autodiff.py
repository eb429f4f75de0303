#!/usr/bin/env python3
"""Build a small expression on the autodiff tape, backpropagate, and
cross-check the gradients with central finite differences."""

import numpy as np

from seqforge import tensor as T

rng = np.random.default_rng(0)
a_val = rng.standard_normal((3, 4))
b_val = rng.standard_normal((4, 2))

# loss = sum(gelu(a @ b))
g = T.Graph(dtype=np.float64)
a = g.leaf(a_val, requires_grad=True)
b = g.leaf(b_val, requires_grad=True)
loss = T.sum_all(T.gelu(T.matmul(a, b)))
g.backward(loss)

print(f"loss = {float(loss.data):.6f}")
print(f"tape holds {len(g.nodes)} records (insertion order == topological order)")

# finite-difference check on a few entries of `a`
h = 1e-6


def loss_at(av):
    g2 = T.Graph(dtype=np.float64)
    return float(T.sum_all(T.gelu(T.matmul(g2.leaf(av), g2.leaf(b_val)))).data)


print("\nentry   analytic      finite-diff")
for i, j in [(0, 0), (1, 2), (2, 3)]:
    bumped = a_val.copy()
    bumped[i, j] += h
    dipped = a_val.copy()
    dipped[i, j] -= h
    numeric = (loss_at(bumped) - loss_at(dipped)) / (2 * h)
    print(f"a[{i},{j}]  {a.grad[i, j]:+.8f}  {numeric:+.8f}")

# the stability guard: a fully masked softmax row comes back uniform
g3 = T.Graph()
probs = T.softmax(g3.leaf([[-np.inf, -np.inf, -np.inf], [0.0, 1.0, -np.inf]]))
print("\nsoftmax with a fully masked row:")
print(probs.data)
