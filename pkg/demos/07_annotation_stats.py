# %% [markdown]
# # How small can targets get?
#
# Box annotations are reduced to width and height ratios against the image.
# Two extremes: a 9x5 box and a 296x292 box, both in 300x300 frames.

# %%
import json
import tempfile
from pathlib import Path

from drpn.annotations import annotation_stats, write_ratio_csv

doc = [
    {"image_width": 300, "image_height": 300, "boxes": [[140, 120, 9, 5]]},
    {"image_width": 300, "image_height": 300, "boxes": [[2, 4, 296, 292], [0, 0, 320, 10]]},
]
tmp = Path(tempfile.mkdtemp())
(tmp / "boxes.json").write_text(json.dumps(doc))

report = annotation_stats(tmp / "boxes.json")
print("\n".join(report.lines()))

# %% [markdown]
# The 320-pixel box is wider than its image, so it is skipped and counted.

# %%
write_ratio_csv(report, tmp / "ratios.csv")
print((tmp / "ratios.csv").read_text())
