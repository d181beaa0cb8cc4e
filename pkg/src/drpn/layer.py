"""The dynamic re-parameterization convolution layer.

A layer owns four branch kernels (3x3, 1x3, 3x1, 1x1), an identity shortcut
when input and output channel counts agree, and two pointwise convolutions
that turn the input into per-channel branch weights. During training the
branches are evaluated separately and mixed; at inference the kernels are
mixed first and a single 3x3 convolution is run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drpn.tensor import (
    channel_scale,
    conv2d,
    flatten_spatial,
    identity_kernel,
    identity_kernel_1x1,
    kernel_channel_scale,
    matmul,
    pad_kernel_to_3x3,
    softmax_over_branches,
)

BRANCHES = ("3x3", "1x3", "3x1", "1x1", "shortcut")
KERNEL_NAMES = ("k3x3", "k1x3", "k3x1", "k1x1")
BRANCH_SHAPES = {"k3x3": (3, 3), "k1x3": (1, 3), "k3x1": (3, 1), "k1x1": (1, 1)}
BRANCH_PADDING = {"k3x3": (1, 1), "k1x3": (0, 1), "k3x1": (1, 0), "k1x1": (0, 0)}

# Branch weights of classic layers, in BRANCHES order.
SPECIAL_CASES = {
    "vgg": (1.0, 0.0, 0.0, 0.0, 0.0),
    "resnet": (0.5, 0.0, 0.0, 0.0, 0.5),
    "repvgg": (1 / 3, 0.0, 0.0, 1 / 3, 1 / 3),
    "lightweight": (0.0, 0.0, 0.0, 0.0, 1.0),
}


@dataclass(frozen=True)
class DrpnLayer:
    """Parameters of one layer.

    ``f1`` has shape ``(B, c_in, 1, 1)`` and ``f2`` has shape
    ``(c_out, c_in, 1, 1)``. ``fixed_weights``, when set, is a ``(B, c_out)``
    matrix that replaces the input-dependent weights.
    """

    f1: np.ndarray
    f2: np.ndarray
    k3x3: np.ndarray
    k1x3: np.ndarray
    k3x1: np.ndarray
    k1x1: np.ndarray
    fixed_weights: np.ndarray | None = None

    def __post_init__(self):
        co, ci = self.k3x3.shape[:2]
        for name in KERNEL_NAMES:
            k = getattr(self, name)
            if k.shape != (co, ci) + BRANCH_SHAPES[name]:
                raise ValueError(f"{name} has shape {k.shape}")
        if self.f1.shape != (self.n_branches, ci, 1, 1):
            raise ValueError(f"f1 has shape {self.f1.shape}")
        if self.f2.shape != (co, ci, 1, 1):
            raise ValueError(f"f2 has shape {self.f2.shape}")
        if self.fixed_weights is not None and self.fixed_weights.shape != (
            self.n_branches,
            co,
        ):
            raise ValueError(f"fixed weights have shape {self.fixed_weights.shape}")

    @property
    def c_in(self) -> int:
        return self.k3x3.shape[1]

    @property
    def c_out(self) -> int:
        return self.k3x3.shape[0]

    @property
    def has_shortcut(self) -> bool:
        return self.c_in == self.c_out

    @property
    def n_branches(self) -> int:
        return 5 if self.has_shortcut else 4

    def kernels(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in KERNEL_NAMES]

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"f1": self.f1, "f2": self.f2}
        params.update({name: getattr(self, name) for name in KERNEL_NAMES})
        return params


def init_layer(c_in, c_out, rng=None, attention_std=0.01, zero_attention=False):
    """Random layer: He-scaled branch kernels, small gaussian ``f1``/``f2``."""
    rng = np.random.default_rng(rng)
    b = 5 if c_in == c_out else 4
    kernels = {}
    for name in KERNEL_NAMES:
        kh, kw = BRANCH_SHAPES[name]
        std = np.sqrt(2.0 / (c_in * kh * kw))
        kernels[name] = rng.normal(0.0, std, size=(c_out, c_in, kh, kw))
    if zero_attention:
        f1 = np.zeros((b, c_in, 1, 1))
        f2 = np.zeros((c_out, c_in, 1, 1))
    else:
        f1 = rng.normal(0.0, attention_std, size=(b, c_in, 1, 1))
        f2 = rng.normal(0.0, attention_std, size=(c_out, c_in, 1, 1))
    return DrpnLayer(f1=f1, f2=f2, **kernels)


def _check_input(layer, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"input must be rank 4, got shape {x.shape}")
    if x.shape[1] != layer.c_in:
        raise ValueError(
            f"channel mismatch: layer expects {layer.c_in}, input has {x.shape[1]}"
        )
    return x


def generate_weights(layer: DrpnLayer, x) -> np.ndarray:
    """Branch weights for one sample, shape ``(B, c_out)``.

    Queries and keys are pointwise projections of the input; their pixel-wise
    inner products, averaged over the ``h*w`` positions, are softmaxed over
    the branch axis so each output channel gets a convex mix of branches.
    """
    x = _check_input(layer, x)
    if x.shape[0] != 1:
        raise ValueError("generate_weights takes a single sample")
    if layer.fixed_weights is not None:
        return layer.fixed_weights.copy()
    q = flatten_spatial(conv2d(x, layer.f1))
    k = flatten_spatial(conv2d(x, layer.f2))
    logits = matmul(q.T, k) / q.shape[0]
    return softmax_over_branches(logits)


def _batch_weights(layer, x):
    return np.stack([generate_weights(layer, x[i:i + 1]) for i in range(x.shape[0])])


def forward_train(layer: DrpnLayer, x) -> np.ndarray:
    """Multi-branch forward: convolve with every branch, then mix outputs."""
    x = _check_input(layer, x)
    w = _batch_weights(layer, x)
    out = np.zeros((x.shape[0], layer.c_out) + x.shape[2:])
    for b, name in enumerate(KERNEL_NAMES):
        y = conv2d(x, getattr(layer, name), *BRANCH_PADDING[name])
        out += channel_scale(y, w[:, b, :])
    if layer.has_shortcut:
        # Shortcut as an identity 1x1 convolution; reproduces x exactly.
        y = conv2d(x, identity_kernel_1x1(layer.c_in))
        out += channel_scale(y, w[:, 4, :])
    return out


def fold_kernels(layer: DrpnLayer, w) -> np.ndarray:
    """Collapse all branches into one ``(c_out, c_in, 3, 3)`` kernel."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (layer.n_branches, layer.c_out):
        raise ValueError(
            f"expected weights of shape {(layer.n_branches, layer.c_out)}, got {w.shape}"
        )
    kernels = [pad_kernel_to_3x3(k) for k in layer.kernels()]
    if layer.has_shortcut:
        kernels.append(identity_kernel(layer.c_in))
    k_final = np.zeros((layer.c_out, layer.c_in, 3, 3))
    for wb, kb in zip(w, kernels):
        k_final += kernel_channel_scale(kb, wb)
    return k_final


def forward_inference(layer: DrpnLayer, x) -> np.ndarray:
    """Folded forward: one 3x3 convolution per sample after mixing kernels."""
    x = _check_input(layer, x)
    outs = []
    for i in range(x.shape[0]):
        xi = x[i:i + 1]
        k_final = fold_kernels(layer, generate_weights(layer, xi))
        outs.append(conv2d(xi, k_final, 1, 1))
    return np.concatenate(outs, axis=0)


def make_special_case(case: str, k3x3, k1x3=None, k3x1=None, k1x1=None) -> DrpnLayer:
    """Layer with fixed branch weights reproducing a classic convolution.

    ``case`` is one of ``vgg``, ``resnet``, ``repvgg`` or ``lightweight``.
    Branch kernels left as ``None`` are zero.
    """
    if case not in SPECIAL_CASES:
        raise ValueError(f"unknown case {case!r}; choose from {sorted(SPECIAL_CASES)}")
    k3x3 = np.asarray(k3x3, dtype=np.float64)
    co, ci = k3x3.shape[:2]
    given = {"k3x3": k3x3, "k1x3": k1x3, "k3x1": k3x1, "k1x1": k1x1}
    kernels = {
        name: np.zeros((co, ci) + BRANCH_SHAPES[name]) if k is None
        else np.asarray(k, dtype=np.float64)
        for name, k in given.items()
    }
    weights = SPECIAL_CASES[case]
    if ci != co:
        if weights[4] != 0.0:
            raise ValueError(f"{case} needs a shortcut, but c_in={ci} != c_out={co}")
        weights = weights[:4]
    b = len(weights)
    fixed = np.repeat(np.asarray(weights)[:, None], co, axis=1)
    return DrpnLayer(
        f1=np.zeros((b, ci, 1, 1)),
        f2=np.zeros((co, ci, 1, 1)),
        fixed_weights=fixed,
        **kernels,
    )
