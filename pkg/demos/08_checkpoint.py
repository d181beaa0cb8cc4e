# %% [markdown]
# # Saving and loading tensors
#
# Checkpoints are a small little-endian binary format of named f64 arrays.

# %%
import numpy as np

from drpn import init_layer
from drpn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint

tensors = init_layer(3, 3, 0).parameters()
blob = save_checkpoint(tensors)
print(f"{len(tensors)} tensors, {len(blob)} bytes, header {blob[:10].hex(' ')}")

back = load_checkpoint(blob)
print("bit-identical:", all(back[k].tobytes() == v.tobytes() for k, v in tensors.items()))

# %%
for label, bad in [("wrong magic", b"XXXX" + blob[4:]), ("cut short", blob[:-3])]:
    try:
        load_checkpoint(bad)
    except CheckpointError as exc:
        print(f"{label}: {exc}")
