"""Synthetic scale-variation task and a two-layer network to train on it.

Each scene is a dark image holding one bright square; the label is the size
bucket of the square. After training, :func:`probe_branch_weights` sweeps a
square from small to large and reports how the branch weights of a layer
shift with target size.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from drpn import autodiff as ad
from drpn.layer import KERNEL_NAMES, DrpnLayer, forward_inference, generate_weights, init_layer

PROBE_HEADER = ("s", "w_3x3", "w_1x3", "w_3x1", "w_1x1", "w_shortcut")


@dataclass
class SyntheticScene:
    image: np.ndarray  # (1, 1, h, w)
    target_size: int
    target_center: tuple[float, float]
    size_class: int
    noise_sigma: float


def size_bucket(s, edges) -> int:
    """Index ``i`` with ``edges[i] <= s < edges[i + 1]``."""
    i = bisect.bisect_right(edges, s) - 1
    if i < 0 or i >= len(edges) - 1:
        raise ValueError(f"size {s} lies outside bucket edges {list(edges)}")
    return i


def render_scene(h, w, s, top, left, noise_sigma, rng, edges=None) -> SyntheticScene:
    image = np.zeros((1, 1, h, w))
    image[0, 0, top:top + s, left:left + s] = 1.0
    if noise_sigma > 0:
        image = np.clip(image + rng.normal(0.0, noise_sigma, size=image.shape), 0.0, 1.0)
    center = (top + (s - 1) / 2, left + (s - 1) / 2)
    size_class = size_bucket(s, edges) if edges is not None else -1
    return SyntheticScene(image, s, center, size_class, noise_sigma)


def generate_dataset(n, h, w, size_range, buckets, seed=0, noise_sigma=0.05):
    """``n`` scenes with integer square sizes drawn log-uniformly.

    A size is ``floor(exp(u))`` with ``u`` uniform on
    ``[ln s_min, ln(s_max + 1))``, so ``P(a <= s < b) = ln(b/a) / ln((s_max+1)/s_min)``
    for integer ``a, b``. The square position is uniform over placements
    that keep it inside the image.
    """
    s_min, s_max = size_range
    if s_min < 1 or s_max < s_min or s_max > min(h, w):
        raise ValueError(f"infeasible size range {size_range} for a {h}x{w} image")
    edges = list(buckets)
    size_bucket(s_min, edges)
    size_bucket(s_max, edges)
    rng = np.random.default_rng(seed)
    scenes = []
    for _ in range(n):
        u = rng.uniform(math.log(s_min), math.log(s_max + 1))
        s = min(int(math.floor(math.exp(u))), s_max)
        top = int(rng.integers(0, h - s + 1))
        left = int(rng.integers(0, w - s + 1))
        scenes.append(render_scene(h, w, s, top, left, noise_sigma, rng, edges))
    return scenes


def size_sweep(frames=26, s_range=(3, 28), h=32, w=32, noise_sigma=0.05, seed=0):
    """Centred squares growing from ``s_range[0]`` to ``s_range[1]``."""
    if frames < 1:
        raise ValueError("need at least one frame")
    rng = np.random.default_rng(seed)
    sizes = np.rint(np.linspace(s_range[0], s_range[1], frames)).astype(int)
    return [
        render_scene(h, w, int(s), (h - s) // 2, (w - s) // 2, noise_sigma, rng)
        for s in sizes
    ]


def stack_images(scenes) -> np.ndarray:
    return np.concatenate([sc.image for sc in scenes], axis=0)


# -- network --------------------------------------------------------------------


@dataclass
class ToyNet:
    """DRPN(1->w) . ReLU . avgpool2 . DRPN(w->w) . ReLU . global pool . linear."""

    params: dict[str, ad.Parameter]
    rng_seed: int = 0

    LAYERS = ("drpn1", "drpn2")

    @property
    def n_classes(self) -> int:
        return self.params["head.weight"].value.shape[1]

    def layer(self, name: str) -> DrpnLayer:
        return DrpnLayer(
            **{k: self.params[f"{name}.{k}"].value for k in ("f1", "f2") + KERNEL_NAMES}
        )

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.params.items()}

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], rng_seed: int = 0) -> "ToyNet":
        return cls({k: ad.Parameter(k, v.copy()) for k, v in tensors.items()}, rng_seed)


def init_toynet(n_classes=3, width=8, seed=0, zero_attention=False) -> ToyNet:
    rng = np.random.default_rng(seed)
    params = {}
    for name, (ci, co) in zip(ToyNet.LAYERS, [(1, width), (width, width)]):
        layer = init_layer(ci, co, rng, zero_attention=zero_attention)
        for k, v in layer.parameters().items():
            params[f"{name}.{k}"] = ad.Parameter(f"{name}.{k}", v)
    params["head.weight"] = ad.Parameter(
        "head.weight", rng.normal(0.0, math.sqrt(1.0 / width), size=(width, n_classes))
    )
    params["head.bias"] = ad.Parameter("head.bias", np.zeros(n_classes))
    return ToyNet(params, seed)


def _layer_nodes(tape, net, name):
    return {k: tape.param(net.params[f"{name}.{k}"]) for k in ("f1", "f2") + KERNEL_NAMES}


def forward_tape(net: ToyNet, tape: ad.Tape, images) -> ad.Node:
    """Class logits ``(n, n_classes)`` recorded on ``tape``."""
    x = tape.constant(images)
    h, _ = ad.drpn_forward(_layer_nodes(tape, net, "drpn1"), x)
    h = ad.avg_pool2d(ad.relu(h), 2)
    h, _ = ad.drpn_forward(_layer_nodes(tape, net, "drpn2"), h)
    h = ad.global_avg_pool(ad.relu(h))
    logits = ad.matmul(h, tape.param(net.params["head.weight"]))
    return ad.add(logits, tape.param(net.params["head.bias"]))


def layer_inputs(net: ToyNet, images) -> dict[str, np.ndarray]:
    """Input tensor seen by each DRPN layer, using folded inference."""
    x1 = np.asarray(images, dtype=np.float64)
    y1 = forward_inference(net.layer("drpn1"), x1)
    n, c, h, w = y1.shape
    x2 = np.maximum(y1, 0.0).reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return {"drpn1": x1, "drpn2": x2}


def predict(net: ToyNet, images) -> np.ndarray:
    """Logits via the folded inference path."""
    x2 = layer_inputs(net, images)["drpn2"]
    y2 = forward_inference(net.layer("drpn2"), x2)
    feats = np.maximum(y2, 0.0).mean(axis=(2, 3))
    return feats @ net.params["head.weight"].value + net.params["head.bias"].value


def accuracy(net: ToyNet, scenes) -> float:
    labels = np.array([sc.size_class for sc in scenes])
    return float((predict(net, stack_images(scenes)).argmax(axis=1) == labels).mean())


# -- training -------------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 8
    lr: float = 0.01
    epochs: int = 24
    decay_at: tuple[float, ...] = (2 / 3, 11 / 12)
    decay: float = 0.1
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0:
            raise ValueError("batch size, epochs and learning rate must be positive")
        if any(not 0 < f < 1 for f in self.decay_at):
            raise ValueError("decay points must fall strictly inside the run")

    def lr_at(self, epoch: int) -> float:
        milestones = [round(f * self.epochs) for f in self.decay_at]
        return self.lr * self.decay ** sum(epoch >= m for m in milestones)


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    accuracy: float = float("nan")


def train_step(net: ToyNet, images, labels, lr: float) -> float:
    for p in net.params.values():
        p.zero_grad()
    tape = ad.Tape()
    loss = ad.cross_entropy(forward_tape(net, tape, images), labels)
    value = float(loss.value)
    if not math.isfinite(value):
        raise FloatingPointError(f"training diverged: loss is {value}")
    tape.backward(loss)
    for p in net.params.values():
        p.value -= lr * p.grad
    return value


def train(net: ToyNet, scenes, cfg: TrainConfig, log=None) -> tuple[ToyNet, TrainResult]:
    """Plain minibatch SGD on size-bucket cross-entropy; updates ``net`` in place."""
    if not scenes:
        raise ValueError("empty dataset")
    images = stack_images(scenes)
    labels = np.array([sc.size_class for sc in scenes])
    if labels.min() < 0 or labels.max() >= net.n_classes:
        raise ValueError("labels do not fit the network head")
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult()
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(scenes))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                batch_losses.append(train_step(net, images[idx], labels[idx], lr))
            except FloatingPointError as exc:
                raise FloatingPointError(f"epoch {epoch}, batch at {start}: {exc}") from exc
        result.losses.append(float(np.mean(batch_losses)))
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs}  lr {lr:g}  loss {result.losses[-1]:.4f}")
    result.accuracy = accuracy(net, scenes)
    return net, result


# -- probing --------------------------------------------------------------------


def probe_branch_weights(net: ToyNet, scenes, layer: str = "drpn2") -> list[tuple]:
    """Channel-averaged branch weights of ``layer`` for each frame.

    Rows are ``(s, w_3x3, w_1x3, w_3x1, w_1x1, w_shortcut)``; a layer without
    a shortcut reports 0 for the last column.
    """
    if not scenes:
        raise ValueError("empty sequence")
    drpn = net.layer(layer)
    inputs = layer_inputs(net, stack_images(scenes))[layer]
    rows = []
    for sc, x in zip(scenes, inputs):
        means = generate_weights(drpn, x[None]).mean(axis=1)
        if means.shape[0] == 4:
            means = np.append(means, 0.0)
        rows.append((sc.target_size, *map(float, means)))
    return rows


def write_probe_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROBE_HEADER)
        for s, *ws in rows:
            writer.writerow([s] + [f"{v:.9g}" for v in ws])


def scale_trend(rows) -> dict[str, float]:
    """Spearman correlations of target size against the 3x3 and 1x1/shortcut means."""
    from scipy.stats import spearmanr

    table = np.asarray(rows, dtype=np.float64)
    s = table[:, 0]

    def rho(col):
        # constant columns (e.g. untrained uniform weights) have no rank order
        if np.ptp(col) == 0 or np.ptp(s) == 0:
            return float("nan")
        return float(spearmanr(s, col).statistic)

    return {
        "rho_3x3": rho(table[:, 1]),
        "rho_1x1": rho(table[:, 4]),
        "rho_shortcut": rho(table[:, 5]),
        "rho_small": rho(table[:, 4] + table[:, 5]),
    }
