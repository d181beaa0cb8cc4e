# %% [markdown]
# # Folding a dynamic multi-branch layer into one 3x3 convolution
#
# During training the layer runs four kernels (3x3, 1x3, 3x1, 1x1) plus an
# identity shortcut, and mixes them with per-channel weights computed from
# the input. At inference the same weights are pushed into the kernels and a
# single 3x3 convolution remains. This script checks that both routes agree.

# %%
import numpy as np

from drpn import fold_kernels, forward_inference, forward_train, generate_weights, init_layer

rng = np.random.default_rng(0)
layer = init_layer(4, 4, rng, attention_std=0.5)
x = rng.normal(size=(1, 4, 12, 12))
print("branches:", layer.n_branches, "(shortcut present)" if layer.has_shortcut else "")

# %% [markdown]
# The weight matrix has one row per branch and one column per output
# channel. Each column is a softmax, so it sums to one.

# %%
w = generate_weights(layer, x)
print("weights shape:", w.shape)
print("column sums:", np.round(w.sum(axis=0), 15))

# %% [markdown]
# Folding produces one kernel of shape (c_out, c_in, 3, 3).

# %%
k = fold_kernels(layer, w)
print("folded kernel:", k.shape)

y_train = forward_train(layer, x)
y_infer = forward_inference(layer, x)
print("max |train - inference|:", np.abs(y_train - y_infer).max())

# %% [markdown]
# The same holds for a layer without a shortcut (c_in != c_out), where only
# four branches exist.

# %%
layer = init_layer(3, 5, rng, attention_std=0.5)
x = rng.normal(size=(2, 3, 9, 7))
print("branches:", layer.n_branches)
print("max |train - inference|:", np.abs(forward_train(layer, x) - forward_inference(layer, x)).max())
