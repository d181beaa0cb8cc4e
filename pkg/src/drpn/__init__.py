"""Dynamic re-parameterized multi-branch convolution, in NumPy."""

from drpn.layer import (
    BRANCHES,
    SPECIAL_CASES,
    DrpnLayer,
    fold_kernels,
    forward_inference,
    forward_train,
    generate_weights,
    init_layer,
    make_special_case,
)

__all__ = [
    "BRANCHES",
    "SPECIAL_CASES",
    "DrpnLayer",
    "fold_kernels",
    "forward_inference",
    "forward_train",
    "generate_weights",
    "init_layer",
    "make_special_case",
]
