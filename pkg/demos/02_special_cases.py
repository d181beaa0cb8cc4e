# %% [markdown]
# # Classic blocks as fixed branch weights
#
# Pinning the branch weights instead of generating them recovers familiar
# architectures. Branch order is (3x3, 1x3, 3x1, 1x1, shortcut).

# %%
import numpy as np

from drpn import SPECIAL_CASES, forward_inference, forward_train, make_special_case
from drpn.tensor import conv2d

for name, weights in SPECIAL_CASES.items():
    print(f"{name:<12}", np.round(weights, 3))

# %%
rng = np.random.default_rng(1)
x = rng.normal(size=(1, 4, 8, 8))
k3 = rng.normal(size=(4, 4, 3, 3))
k1 = rng.normal(size=(4, 4, 1, 1))
plain = conv2d(x, k3, 1, 1)
point = conv2d(x, k1)

expected = {
    "vgg": plain,
    "resnet": 0.5 * plain + 0.5 * x,
    "repvgg": (plain + point + x) / 3,
    "lightweight": x,
}
for name, target in expected.items():
    layer = make_special_case(name, k3, k1x1=k1)
    dev_train = np.abs(forward_train(layer, x) - target).max()
    dev_infer = np.abs(forward_inference(layer, x) - target).max()
    print(f"{name:<12} train dev {dev_train:.1e}   folded dev {dev_infer:.1e}")

# %% [markdown]
# The lightweight case passes the input straight through, bit for bit.

# %%
print(np.array_equal(forward_train(make_special_case("lightweight", k3), x), x))
