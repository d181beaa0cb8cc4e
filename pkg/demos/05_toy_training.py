# %% [markdown]
# # Learning size-dependent branch weights
#
# A two-layer network classifies bright squares into three size buckets.
# After training, a sweep from small to large squares shows the 3x3 branch
# gaining weight while the shortcut loses it. Training takes a few minutes.

# %%
import numpy as np

from drpn import toy
from drpn.cli import SWEEP_RANGE, TOY_EDGES, TOY_HW, TOY_NOISE, TOY_SIZE_RANGE

data = toy.generate_dataset(2000, TOY_HW, TOY_HW, TOY_SIZE_RANGE, TOY_EDGES, seed=42, noise_sigma=TOY_NOISE)
print("class counts:", np.bincount([s.size_class for s in data]))

# %%
net = toy.init_toynet(3, seed=42)
net, result = toy.train(net, data, toy.TrainConfig(seed=42), log=print)
print(f"training accuracy {result.accuracy:.3f}")

# %% [markdown]
# Sweep square sizes and read the mean weight of each branch at the second
# layer.

# %%
rows = toy.probe_branch_weights(net, toy.size_sweep(26, SWEEP_RANGE, TOY_HW, TOY_HW, TOY_NOISE, seed=42))
print(" s   " + "  ".join(f"{h:>10}" for h in toy.PROBE_HEADER[1:]))
for s, *ws in rows[::5]:
    print(f"{s:>2}   " + "  ".join(f"{v:10.6f}" for v in ws))
for key, value in toy.scale_trend(rows).items():
    print(f"{key:<13}{value:+.2f}")
