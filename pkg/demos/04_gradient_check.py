# %% [markdown]
# # Gradients through attention and branches
#
# A small reverse-mode tape differentiates the full layer. Here the tape
# gradients are compared with central finite differences.

# %%
import numpy as np

from drpn import autodiff as ad
from drpn import init_layer

rng = np.random.default_rng(3)
layer = init_layer(2, 2, rng, attention_std=0.5)
params = {name: ad.Parameter(name, value.copy()) for name, value in layer.parameters().items()}
x = rng.normal(size=(1, 2, 6, 6))
target = rng.normal(size=(1, 2, 6, 6))


def loss(mode):
    tape = ad.Tape()
    nodes = {name: tape.param(p) for name, p in params.items()}
    out, _ = ad.drpn_forward(nodes, tape.constant(x), mode)
    return tape, ad.mse_loss(out, target)


# %%
for mode in ("train", "inference"):
    tape, node = loss(mode)
    grads = tape.backward(node)
    names = list(params)
    err = ad.finite_diff_check(
        lambda: float(loss(mode)[1].value),
        [params[n].value for n in names],
        [grads[n] for n in names],
        h=1e-6,
    )
    print(f"{mode:<10} loss {float(node.value):.4f}   max relative error {err:.2e}")

# %% [markdown]
# Both forward routes give the same gradients because they compute the same
# function.

# %%
def gradients(mode):
    tape, node = loss(mode)
    return tape.backward(node)


ga, gb = gradients("train"), gradients("inference")
print("largest gradient gap:", max(np.abs(ga[k] - gb[k]).max() for k in ga))
