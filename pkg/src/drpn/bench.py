"""Convolution counts, multiply-accumulate counts and timings per forward mode.

Three orders of computation are compared:

``folded_inference``
    generate weights, fold the kernels, run one 3x3 convolution.
``train_multibranch``
    generate weights, run every branch, mix the outputs.
``unfused_baseline``
    run every branch first, then generate weights and mix. This is the
    convolve-first order of selective-kernel networks; it reuses the layer's
    own weight generator so only the order differs.

Closed-form costs here are checked against :func:`drpn.tensor.count_ops`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from drpn import tensor
from drpn.layer import (
    BRANCH_PADDING,
    BRANCH_SHAPES,
    KERNEL_NAMES,
    DrpnLayer,
    forward_inference,
    forward_train,
    generate_weights,
)

MODES = ("train_multibranch", "folded_inference", "unfused_baseline")


@dataclass
class CostReport:
    mode: str
    conv_calls: int
    macs: int
    wall_ns: int | None
    input_shape: tuple[int, int, int, int]

    def as_row(self):
        return [self.mode, self.conv_calls, self.macs, self.wall_ns, "x".join(map(str, self.input_shape))]


def forward_unfused(layer: DrpnLayer, x) -> np.ndarray:
    """Convolve every branch (shortcut included), then weight the outputs."""
    x = np.asarray(x, dtype=np.float64)
    branch_outs = [
        tensor.conv2d(x, getattr(layer, name), *BRANCH_PADDING[name]) for name in KERNEL_NAMES
    ]
    if layer.has_shortcut:
        branch_outs.append(tensor.conv2d(x, tensor.identity_kernel_1x1(layer.c_in)))
    w = np.stack([generate_weights(layer, x[i:i + 1]) for i in range(x.shape[0])])
    out = np.zeros_like(branch_outs[0])
    for b, y in enumerate(branch_outs):
        out += tensor.channel_scale(y, w[:, b, :])
    return out


FORWARDS = {
    "train_multibranch": forward_train,
    "folded_inference": forward_inference,
    "unfused_baseline": forward_unfused,
}


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")


def count_convolutions(layer: DrpnLayer, mode: str) -> int:
    """Convolutions per sample: two for attention plus the main path."""
    _check_mode(mode)
    attention = 0 if layer.fixed_weights is not None else 2
    if mode == "folded_inference":
        return attention + 1
    return attention + layer.n_branches


def count_macs(layer: DrpnLayer, input_shape, mode: str) -> int:
    """Exact multiply-accumulates for one forward pass over ``input_shape``.

    A convolution producing ``h*w`` positions with kernel ``(co, ci, kh, kw)``
    costs ``h*w*co*ci*kh*kw``. Attention adds two pointwise convolutions and
    an ``N x B x c_out`` product; folding costs ``B*co*ci*9``; mixing branch
    outputs costs ``B*N*c_out`` per sample.
    """
    _check_mode(mode)
    n, c, h, w = input_shape
    if n < 1:
        raise ValueError("batch must be non-empty")
    if c != layer.c_in:
        raise ValueError("channel mismatch")
    npix = h * w
    ci, co, nb = layer.c_in, layer.c_out, layer.n_branches
    attention = 0
    if layer.fixed_weights is None:
        attention = npix * nb * ci + npix * co * ci + npix * nb * co
    if mode == "folded_inference":
        main = nb * co * ci * 9 + npix * co * ci * 9
    else:
        main = sum(npix * co * ci * kh * kw for kh, kw in BRANCH_SHAPES.values())
        if layer.has_shortcut:
            main += npix * ci * ci
        main += nb * npix * co
    return n * (attention + main)


def instrumented_counts(layer: DrpnLayer, x, mode: str) -> tensor.OpCounter:
    _check_mode(mode)
    with tensor.count_ops() as counter:
        FORWARDS[mode](layer, x)
    return counter


def time_modes(layer: DrpnLayer, input_shape, reps: int = 5, seed: int = 0, modes=MODES):
    """Median wall time of each mode after two warm-up runs, single-threaded."""
    if reps < 5:
        raise ValueError("need at least 5 repetitions")
    if input_shape[0] < 1:
        raise ValueError("batch must be non-empty")
    from threadpoolctl import threadpool_limits

    x = np.random.default_rng(seed).normal(size=input_shape)
    reports = []
    with threadpool_limits(limits=1):
        for mode in modes:
            fwd = FORWARDS[mode]
            for _ in range(2):
                fwd(layer, x)
            times = []
            for _ in range(reps):
                t0 = time.perf_counter_ns()
                fwd(layer, x)
                times.append(time.perf_counter_ns() - t0)
            reports.append(
                CostReport(
                    mode,
                    count_convolutions(layer, mode) * input_shape[0],
                    count_macs(layer, input_shape, mode),
                    int(np.median(times)),
                    tuple(input_shape),
                )
            )
    return reports


def format_reports(reports) -> str:
    lines = [f"{'mode':<20}{'convs':>8}{'MACs':>16}{'median ms':>12}"]
    for r in reports:
        ms = "-" if r.wall_ns is None else f"{r.wall_ns / 1e6:.3f}"
        lines.append(f"{r.mode:<20}{r.conv_calls:>8}{r.macs:>16,}{ms:>12}")
    return "\n".join(lines)
