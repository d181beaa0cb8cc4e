# %% [markdown]
# # How the branch weights depend on the input
#
# Two pointwise convolutions turn the input into a query map Q (one channel
# per branch) and a key map K (one channel per output channel). Their
# pixel-averaged product, softmaxed over branches, is the weight matrix.

# %%
import numpy as np

from drpn import generate_weights, init_layer
from drpn.tensor import conv2d, flatten_spatial, softmax_over_branches

rng = np.random.default_rng(2)
layer = init_layer(3, 3, rng, attention_std=0.5)
x = rng.normal(size=(1, 3, 10, 10))

q = flatten_spatial(conv2d(x, layer.f1))
k = flatten_spatial(conv2d(x, layer.f2))
by_hand = softmax_over_branches(q.T @ k / q.shape[0])
print("Q", q.shape, "K", k.shape)
print("matches generate_weights:", np.allclose(by_hand, generate_weights(layer, x), atol=1e-15))

# %% [markdown]
# Different inputs yield different mixtures.

# %%
for scale in (0.1, 1.0, 3.0):
    w = generate_weights(layer, scale * x)
    print(f"input x{scale:<4} mean weight per branch:", np.round(w.mean(axis=1), 4))

# %% [markdown]
# With zero attention projections every weight is exactly 1/B.

# %%
flat = init_layer(3, 3, zero_attention=True)
print(generate_weights(flat, x))
