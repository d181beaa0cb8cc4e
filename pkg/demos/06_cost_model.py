# %% [markdown]
# # What folding saves
#
# Three ways to evaluate the same layer: fold first, run all branches, or
# run all branches before computing the weights. The multiply-accumulate
# counts come from a closed form and are checked against an instrumented run.

# %%
import numpy as np

from drpn import bench, init_layer

layer = init_layer(32, 32, 0)
shape = (1, 32, 64, 64)
for mode in bench.MODES:
    print(f"{mode:<20} convs/sample {bench.count_convolutions(layer, mode)}   MACs {bench.count_macs(layer, shape, mode):,}")

# %%
x = np.random.default_rng(0).normal(size=(1, 8, 16, 16))
small = init_layer(8, 8, 0)
for mode in bench.MODES:
    counted = bench.instrumented_counts(small, x, mode)
    print(f"{mode:<20} analytic {bench.count_macs(small, x.shape, mode):>9,}   counted {counted.macs:>9,}")

# %% [markdown]
# Single-threaded wall time, median of five runs.

# %%
print(bench.format_reports(bench.time_modes(layer, shape, reps=5)))
