"""Reverse-mode differentiation over the tensor primitives.

A :class:`Tape` records every operation applied to its :class:`Node` values.
Calling :meth:`Tape.backward` on a scalar node walks the record in reverse
and accumulates gradients into every node and every :class:`Parameter`.

    tape = Tape()
    k = tape.param(kernel_param)
    x = tape.constant(images)
    loss = mse_loss(conv2d(x, k, 1, 1), targets)
    grads = tape.backward(loss)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from drpn import tensor
from drpn.layer import BRANCH_PADDING, KERNEL_NAMES


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


class Node:
    __slots__ = ("tape", "index", "op", "inputs", "value", "grad", "backward_fn", "param")

    def __init__(self, tape, index, op, inputs, value, backward_fn=None, param=None):
        self.tape = tape
        self.index = index
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad = None
        self.backward_fn = backward_fn
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def constant(self, value) -> Node:
        return self.record("constant", (), np.asarray(value, dtype=np.float64))

    def param(self, p: Parameter) -> Node:
        node = self.record("param", (), p.value)
        node.param = p
        return node

    def record(self, op: str, inputs: Sequence[Node], output, backward_fn=None) -> Node:
        """Append an operation whose inputs are already on this tape."""
        for node in inputs:
            if (
                not isinstance(node, Node)
                or node.tape is not self
                or node.index >= len(self.nodes)
                or self.nodes[node.index] is not node
            ):
                raise ValueError(f"input {node!r} of {op} is not recorded on this tape")
        node = Node(self, len(self.nodes), op, tuple(inputs), output, backward_fn)
        self.nodes.append(node)
        return node

    def backward(self, loss: Node | None = None) -> dict[str, np.ndarray]:
        """Back-propagate from a scalar ``loss``.

        Returns the gradient of every parameter reached from the tape; the
        same gradients are added into ``Parameter.grad``.
        """
        if loss is None:
            if not self.nodes:
                return {}
            raise ValueError("backward needs a loss node")
        if loss.tape is not self:
            raise ValueError("loss node belongs to another tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
        for node in self.nodes:
            node.grad = np.zeros_like(node.value)
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.index + 1]):
            if node.backward_fn is None or not node.grad.any():
                continue
            for inp, g in zip(node.inputs, node.backward_fn(node.grad)):
                if g is not None:
                    inp.grad += g
        grads: dict[str, np.ndarray] = {}
        for node in self.nodes:
            if node.param is not None:
                node.param.grad += node.grad
                name = node.param.name
                grads[name] = grads[name] + node.grad if name in grads else node.grad.copy()
        return grads


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _lift(tape, v):
    return v if isinstance(v, Node) else tape.constant(v)


# -- elementwise and structural ops ------------------------------------------


def add(a: Node, b) -> Node:
    b = _lift(a.tape, b)
    return a.tape.record(
        "add", (a, b), a.value + b.value,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Node, b) -> Node:
    b = _lift(a.tape, b)
    return a.tape.record(
        "sub", (a, b), a.value - b.value,
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a: Node, b) -> Node:
    b = _lift(a.tape, b)
    return a.tape.record(
        "mul", (a, b), a.value * b.value,
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def scale(a: Node, c: float) -> Node:
    return a.tape.record("scale", (a,), a.value * c, lambda g: (g * c,))


def total(a: Node) -> Node:
    return a.tape.record(
        "sum", (a,), np.asarray(a.value.sum()), lambda g: (np.broadcast_to(g, a.shape).copy(),)
    )


def reshape(a: Node, shape) -> Node:
    return a.tape.record("reshape", (a,), a.value.reshape(shape), lambda g: (g.reshape(a.shape),))


def transpose(a: Node, axes) -> Node:
    inv = np.argsort(axes)
    return a.tape.record(
        "transpose", (a,), a.value.transpose(axes), lambda g: (g.transpose(inv),)
    )


def index(a: Node, key) -> Node:
    """Basic (slice/integer) indexing."""

    def backward(g):
        ga = np.zeros_like(a.value)
        ga[key] += g
        return (ga,)

    return a.tape.record("index", (a,), a.value[key].copy(), backward)


def concatenate(nodes: Sequence[Node], axis: int = 0) -> Node:
    splits = np.cumsum([n.shape[axis] for n in nodes])[:-1]
    return nodes[0].tape.record(
        "concatenate", nodes, np.concatenate([n.value for n in nodes], axis=axis),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def relu(a: Node) -> Node:
    mask = a.value > 0
    return a.tape.record("relu", (a,), a.value * mask, lambda g: (g * mask,))


def avg_pool2d(a: Node, size: int = 2) -> Node:
    n, c, h, w = a.shape
    if h % size or w % size:
        raise ValueError(f"{h}x{w} is not divisible by pool size {size}")
    out = a.value.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))

    def backward(g):
        return (np.repeat(np.repeat(g, size, axis=2), size, axis=3) / size**2,)

    return a.tape.record("avg_pool2d", (a,), out, backward)


def global_avg_pool(a: Node) -> Node:
    n, c, h, w = a.shape
    return a.tape.record(
        "global_avg_pool", (a,), a.value.mean(axis=(2, 3)),
        lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), a.shape).copy(),),
    )


# -- linear algebra ------------------------------------------------------------


def matmul(a: Node, b: Node) -> Node:
    """Matrix product, batched over leading axes like ``np.matmul``."""

    def backward(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return a.tape.record("matmul", (a, b), a.value @ b.value, backward)


def softmax(a: Node, axis: int = 0) -> Node:
    s = tensor.softmax_over_branches(a.value, axis=axis)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return a.tape.record("softmax", (a,), s, backward)


# -- convolution ----------------------------------------------------------------


def conv2d(x: Node, k: Node, pad_h: int = 0, pad_w: int = 0) -> Node:
    out = tensor.conv2d(x.value, k.value, pad_h, pad_w)
    kh, kw = k.shape[2:]

    def backward(g):
        xp = np.pad(x.value, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
        if kh == kw == 1:
            gk = np.tensordot(g, xp, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
        else:
            win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
            gk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        # Input gradient: full correlation of g with the flipped, transposed kernel.
        gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        k_t = k.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        gxp = tensor.correlate_valid(gp, np.ascontiguousarray(k_t))
        gx = gxp[:, :, pad_h:pad_h + x.shape[2], pad_w:pad_w + x.shape[3]]
        return gx, gk

    return x.tape.record("conv2d", (x, k), out, backward)


def channel_scale(x: Node, w: Node) -> Node:
    """Per-channel scaling; ``w`` is ``(c,)`` or per-sample ``(n, c)``."""
    out = tensor.channel_scale(x.value, w.value)

    def backward(g):
        gw = (g * x.value).sum(axis=(2, 3))
        if w.value.ndim == 1:
            gw = gw.sum(axis=0)
        return g * w.value[..., None, None], gw

    return x.tape.record("channel_scale", (x, w), out, backward)


def kernel_channel_scale(k: Node, w: Node) -> Node:
    out = tensor.kernel_channel_scale(k.value, w.value)
    return k.tape.record(
        "kernel_channel_scale", (k, w), out,
        lambda g: (g * w.value[:, None, None, None], (g * k.value).sum(axis=(1, 2, 3))),
    )


def pad_kernel_to_3x3(k: Node) -> Node:
    kh, kw = k.shape[2:]
    r0, c0 = (3 - kh) // 2, (3 - kw) // 2
    return k.tape.record(
        "pad_kernel_to_3x3", (k,), tensor.pad_kernel_to_3x3(k.value),
        lambda g: (g[:, :, r0:r0 + kh, c0:c0 + kw].copy(),),
    )


# -- losses ---------------------------------------------------------------------


def mse_loss(x: Node, target) -> Node:
    target = np.asarray(target, dtype=np.float64)
    diff = x.value - target
    return x.tape.record(
        "mse_loss", (x,), np.asarray(np.mean(diff**2)), lambda g: (g * 2.0 * diff / diff.size,)
    )


def cross_entropy(logits: Node, labels) -> Node:
    """Mean softmax cross-entropy of ``(n, k)`` logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = labels.shape[0]
    loss = -log_p[np.arange(n), labels].mean()

    def backward(g):
        d = np.exp(log_p)
        d[np.arange(n), labels] -= 1.0
        return (g * d / n,)

    return logits.tape.record("cross_entropy", (logits,), np.asarray(loss), backward)


# -- the layer ------------------------------------------------------------------


def drpn_weights(x: Node, f1: Node, f2: Node) -> Node:
    """Per-sample branch weights, shape ``(n, B, c_out)``."""
    n, _, h, w = x.shape
    npix = h * w
    q = reshape(conv2d(x, f1), (n, f1.shape[0], npix))
    k = reshape(conv2d(x, f2), (n, f2.shape[0], npix))
    logits = scale(matmul(q, transpose(k, (0, 2, 1))), 1.0 / npix)
    return softmax(logits, axis=1)


def drpn_forward(params: dict[str, Node], x: Node, mode: str = "train", fixed_weights=None):
    """Differentiable layer forward on the tape.

    ``params`` maps ``f1, f2, k3x3, k1x3, k3x1, k1x1`` to nodes. ``mode`` is
    ``"train"`` (mix branch outputs) or ``"inference"`` (mix kernels, then
    one convolution per sample). Returns ``(output, weights)``.
    """
    tape = x.tape
    co, ci = params["k3x3"].shape[:2]
    shortcut = ci == co
    if fixed_weights is not None:
        fw = np.broadcast_to(fixed_weights, (x.shape[0],) + np.shape(fixed_weights))
        weights = tape.constant(fw.copy())
    else:
        weights = drpn_weights(x, params["f1"], params["f2"])
    n_branches = weights.shape[1]
    if n_branches != (5 if shortcut else 4):
        raise ValueError(f"{n_branches} branch weights for a layer with shortcut={shortcut}")

    if mode == "train":
        out = None
        for b, name in enumerate(KERNEL_NAMES):
            y = conv2d(x, params[name], *BRANCH_PADDING[name])
            term = channel_scale(y, index(weights, (slice(None), b)))
            out = term if out is None else add(out, term)
        if shortcut:
            out = add(out, channel_scale(x, index(weights, (slice(None), 4))))
        return out, weights

    if mode == "inference":
        padded = [pad_kernel_to_3x3(params[name]) for name in KERNEL_NAMES]
        if shortcut:
            padded.append(tape.constant(tensor.identity_kernel(ci)))
        outs = []
        for i in range(x.shape[0]):
            wi = index(weights, i)
            k_final = None
            for b, kb in enumerate(padded):
                term = kernel_channel_scale(kb, index(wi, b))
                k_final = term if k_final is None else add(k_final, term)
            outs.append(conv2d(index(x, slice(i, i + 1)), k_final, 1, 1))
        return concatenate(outs, axis=0), weights

    raise ValueError(f"unknown mode {mode!r}")


# -- checking -------------------------------------------------------------------


def finite_diff_check(
    f: Callable[[], float],
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    h: float = 1e-6,
) -> float:
    """Largest relative error between ``grads`` and central differences of ``f``.

    ``f`` takes no arguments and reads ``params``, which are perturbed in
    place one coordinate at a time and restored afterwards. Relative error
    uses ``max(|analytic|, |numeric|, 1e-8)`` as the denominator.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
