"""Check analytic gradients against central differences.

Run: python demos/gradient_check.py
"""

import numpy as np

from gaf_attn.model import AttnCnnConfig, build_model
from gaf_attn.nn import AdaptiveMaxPool2d, Conv2d, Dense, MaxPool2d, ReLU, Sequential, grad_check

rng = np.random.default_rng(0)

fragments = {
    "conv 3x3": (Sequential([Conv2d(3, 4, rng=rng)]), rng.normal(size=(3, 6, 6))),
    "relu": (Sequential([ReLU()]), rng.normal(size=(2, 4, 4))),
    "maxpool 2x2": (Sequential([MaxPool2d()]), rng.normal(size=(2, 6, 6))),
    "adaptive pool": (Sequential([AdaptiveMaxPool2d(4)]), rng.normal(size=(2, 7, 9))),
    "dense": (Sequential([Dense(8, 3, rng=rng)]), rng.normal(size=8)),
}
for name, (net, x) in fragments.items():
    print(f"{name:14s} max relative error {grad_check(net, x, check_input=True):.1e}")

# The full regressor, on a small 14-channel input, sampling 25 coordinates per tensor.
model = build_model(AttnCnnConfig(precision="float64", seed=1))
x = rng.uniform(-1, 1, size=(14, 8, 8))
print(f"{'full model':14s} max relative error {grad_check(model.net, x, max_per_param=25):.1e}")

# Break one weight gradient and watch the checker notice.
layer = Dense(5, 3, rng=rng)
backward = layer.backward


def broken(grad):
    dx = backward(grad)
    layer.weight.grad[0, 0] *= -1
    return dx


layer.backward = broken
print(f"{'corrupted':14s} max relative error {grad_check(Sequential([layer]), rng.normal(size=5)):.1e}")
