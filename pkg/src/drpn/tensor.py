"""Dense f64 tensor primitives.

Activations are ``(n, c, h, w)`` arrays, kernels are ``(co, ci, kh, kw)``
arrays and matrices are plain 2-D arrays. Every function here is pure and
returns a fresh array.

Convolution and scaling calls can be tallied with :func:`count_ops`, which is
how the benchmark code cross-checks its closed-form cost model.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL_SHAPES = {(3, 3), (1, 3), (3, 1), (1, 1)}


@dataclass
class OpCounter:
    """Tally of convolution calls and multiply-accumulates."""

    conv_calls: int = 0
    conv_macs: int = 0
    matmul_macs: int = 0
    scale_macs: int = 0

    @property
    def macs(self) -> int:
        return self.conv_macs + self.matmul_macs + self.scale_macs


_counter: contextvars.ContextVar[OpCounter | None] = contextvars.ContextVar(
    "drpn_op_counter", default=None
)


@contextlib.contextmanager
def count_ops():
    """Count primitive calls made inside the ``with`` block.

    >>> with count_ops() as c:
    ...     _ = conv2d(np.ones((1, 1, 4, 4)), np.ones((1, 1, 1, 1)))
    >>> c.conv_calls, c.conv_macs
    (1, 16)
    """
    counter = OpCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def _as_f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _check_kernel_shape(k: np.ndarray) -> None:
    if k.ndim != 4:
        raise ValueError(f"kernel must be rank 4, got shape {k.shape}")
    if (k.shape[2], k.shape[3]) not in KERNEL_SHAPES:
        raise ValueError(f"unsupported kernel extent {k.shape[2]}x{k.shape[3]}")


def _conv_output_shape(x, k, pad_h, pad_w):
    if x.ndim != 4:
        raise ValueError(f"input must be rank 4, got shape {x.shape}")
    if k.ndim != 4:
        raise ValueError(f"kernel must be rank 4, got shape {k.shape}")
    if x.shape[1] != k.shape[1]:
        raise ValueError(
            f"channel mismatch: input has {x.shape[1]}, kernel expects {k.shape[1]}"
        )
    if pad_h < 0 or pad_w < 0:
        raise ValueError("padding must be non-negative")
    ho = x.shape[2] + 2 * pad_h - k.shape[2] + 1
    wo = x.shape[3] + 2 * pad_w - k.shape[3] + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"output extent {ho}x{wo} is empty")
    return x.shape[0], k.shape[0], ho, wo


def _record_conv(x_shape, k_shape, out_shape) -> None:
    counter = _counter.get()
    if counter is not None:
        n, co, ho, wo = out_shape
        counter.conv_calls += n
        counter.conv_macs += n * ho * wo * co * k_shape[1] * k_shape[2] * k_shape[3]


def conv2d(x, k, pad_h: int = 0, pad_w: int = 0) -> np.ndarray:
    """Stride-1 cross-correlation with zero padding.

    Windowed (im2col-style) evaluation; agrees with :func:`conv2d_direct`
    to rounding.
    """
    x, k = _as_f64(x), _as_f64(k)
    out_shape = _conv_output_shape(x, k, pad_h, pad_w)
    out = correlate_valid(np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w))), k)
    _record_conv(x.shape, k.shape, out_shape)
    return out


def correlate_valid(xp: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Unpadded, uncounted stride-1 correlation as one GEMM over unfolded columns."""
    n, ci, hp, wp = xp.shape
    co, _, kh, kw = k.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    if kh == kw == 1:
        out = k.reshape(co, ci) @ xp.transpose(1, 0, 2, 3).reshape(ci, -1)
    else:
        # (n, ci, ho, wo, kh, kw) -> (ci*kh*kw, n*ho*wo)
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(ci * kh * kw, -1)
        out = k.reshape(co, -1) @ cols
    return np.ascontiguousarray(out.reshape(co, n, ho, wo).transpose(1, 0, 2, 3))


def conv2d_direct(x, k, pad_h: int = 0, pad_w: int = 0) -> np.ndarray:
    """Reference convolution: explicit loops over every output element."""
    x, k = _as_f64(x), _as_f64(k)
    n, co, ho, wo = _conv_output_shape(x, k, pad_h, pad_w)
    ci, kh, kw = k.shape[1:]
    xp = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    out = np.zeros((n, co, ho, wo))
    for b in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(ci):
                        for r in range(kh):
                            for s in range(kw):
                                acc += xp[b, c, i + r, j + s] * k[o, c, r, s]
                    out[b, o, i, j] = acc
    _record_conv(x.shape, k.shape, out.shape)
    return out


def same_padding(k) -> tuple[int, int]:
    """Padding that keeps the spatial extent for an odd kernel."""
    return (k.shape[2] - 1) // 2, (k.shape[3] - 1) // 2


def pad_kernel_to_3x3(k) -> np.ndarray:
    """Embed a 1x1, 1x3 or 3x1 kernel in the centre of a zero 3x3 kernel."""
    k = _as_f64(k)
    _check_kernel_shape(k)
    kh, kw = k.shape[2:]
    if (kh, kw) == (3, 3):
        return k.copy()
    out = np.zeros(k.shape[:2] + (3, 3))
    r0, c0 = (3 - kh) // 2, (3 - kw) // 2
    out[:, :, r0:r0 + kh, c0:c0 + kw] = k
    return out


def identity_kernel(c: int) -> np.ndarray:
    """3x3 kernel whose convolution (padding 1) reproduces its input."""
    if c < 1:
        raise ValueError("channel count must be >= 1")
    k = np.zeros((c, c, 3, 3))
    k[np.arange(c), np.arange(c), 1, 1] = 1.0
    return k


def identity_kernel_1x1(c: int) -> np.ndarray:
    if c < 1:
        raise ValueError("channel count must be >= 1")
    return np.eye(c).reshape(c, c, 1, 1)


def channel_scale(x, w) -> np.ndarray:
    """Scale each channel of ``x`` by the matching entry of ``w``.

    ``w`` is either one vector shared by the batch, shape ``(c,)``, or one
    vector per sample, shape ``(n, c)``.
    """
    x, w = _as_f64(x), _as_f64(w)
    if w.shape not in ((x.shape[1],), x.shape[:2]):
        raise ValueError(f"weights of shape {w.shape} do not fit input {x.shape}")
    counter = _counter.get()
    if counter is not None:
        counter.scale_macs += x.size
    return x * w[..., None, None]


def kernel_channel_scale(k, w) -> np.ndarray:
    """Scale each output-channel slice of a kernel: ``out[o] = w[o] * k[o]``."""
    k, w = _as_f64(k), _as_f64(w)
    if w.shape != (k.shape[0],):
        raise ValueError(f"expected {k.shape[0]} weights, got shape {w.shape}")
    counter = _counter.get()
    if counter is not None:
        counter.scale_macs += k.size
    return k * w[:, None, None, None]


def matmul(a, b) -> np.ndarray:
    a, b = _as_f64(a), _as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects two matrices")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    counter = _counter.get()
    if counter is not None:
        counter.matmul_macs += a.shape[0] * a.shape[1] * b.shape[1]
    return a @ b


def softmax_over_branches(m, axis: int = 0) -> np.ndarray:
    """Column-wise softmax: every column of the result sums to one."""
    m = _as_f64(m)
    e = np.exp(m - m.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def flatten_spatial(x) -> np.ndarray:
    """Stack pixels row by row: ``(1, c, h, w) -> (h*w, c)``."""
    x = _as_f64(x)
    if x.ndim != 4 or x.shape[0] != 1:
        raise ValueError(f"expected a single-sample tensor, got shape {x.shape}")
    c, h, w = x.shape[1:]
    return x.reshape(c, h * w).T.copy()


def unflatten_spatial(m, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`flatten_spatial`."""
    m = _as_f64(m)
    if m.shape[0] != h * w:
        raise ValueError(f"{m.shape[0]} rows cannot form a {h}x{w} grid")
    return m.T.reshape(1, m.shape[1], h, w).copy()
