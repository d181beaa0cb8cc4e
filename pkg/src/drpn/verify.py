"""Self-checks run by ``drpn verify``.

Each check returns ``(name, passed, detail)``. All randomness derives from
the seed passed to :func:`run_checks`, so a run is reproducible.
"""

from __future__ import annotations

import numpy as np

from drpn import autodiff as ad
from drpn import bench, tensor
from drpn.layer import (
    SPECIAL_CASES,
    forward_inference,
    forward_train,
    generate_weights,
    init_layer,
    make_special_case,
)


def _random_layer(rng, shortcut=None, attention_std=0.5):
    c_in = int(rng.integers(1, 9))
    c_out = c_in if shortcut else int(rng.integers(1, 9))
    if shortcut is False and c_out == c_in:
        c_out = c_in % 8 + 1
    return init_layer(c_in, c_out, rng, attention_std=attention_std)


def check_fold_equivalence(rng, trials=100, tol=1e-9):
    worst = 0.0
    for t in range(trials):
        layer = _random_layer(rng, shortcut=(t % 2 == 0))
        x = rng.normal(size=(1, layer.c_in, int(rng.integers(4, 17)), int(rng.integers(4, 17))))
        a = forward_train(layer, x)
        b = forward_inference(layer, x)
        worst = max(worst, np.abs(a - b).max() / (1.0 + np.abs(a).max()))
    return "fold equivalence", worst <= tol, f"max scaled deviation {worst:.2e} over {trials} layers"


def check_special_cases(rng, tol=1e-12):
    c = 4
    x = rng.normal(size=(2, c, 7, 9))
    ks = {
        "k3x3": rng.normal(size=(c, c, 3, 3)),
        "k1x3": rng.normal(size=(c, c, 1, 3)),
        "k3x1": rng.normal(size=(c, c, 3, 1)),
        "k1x1": rng.normal(size=(c, c, 1, 1)),
    }
    conv3 = tensor.conv2d(x, ks["k3x3"], 1, 1)
    conv1 = tensor.conv2d(x, ks["k1x1"])
    expected = {
        "vgg": conv3,
        "resnet": 0.5 * conv3 + 0.5 * x,
        "repvgg": (conv3 + conv1 + x) / 3,
        "lightweight": x,
    }
    worst = 0.0
    for case in SPECIAL_CASES:
        layer = make_special_case(case, **ks)
        for out in (forward_train(layer, x), forward_inference(layer, x)):
            worst = max(worst, np.abs(out - expected[case]).max())
    exact = np.array_equal(forward_train(make_special_case("lightweight", **ks), x), x)
    return "classic special cases", worst <= tol and exact, f"max deviation {worst:.2e}"


def check_kernel_padding(rng, trials=20, tol=1e-12):
    worst = 0.0
    for kh, kw in [(1, 3), (3, 1), (1, 1)]:
        for _ in range(trials):
            ci, co = rng.integers(1, 9, size=2)
            x = rng.normal(size=(1, ci, int(rng.integers(3, 17)), int(rng.integers(3, 17))))
            k = rng.normal(size=(co, ci, kh, kw))
            a = tensor.conv2d(x, k, (kh - 1) // 2, (kw - 1) // 2)
            b = tensor.conv2d(x, tensor.pad_kernel_to_3x3(k), 1, 1)
            worst = max(worst, np.abs(a - b).max())
    return "kernel padding", worst <= tol, f"max deviation {worst:.2e}"


def check_weight_validity(rng, trials=50, tol=1e-12):
    worst, min_entry = 0.0, 1.0
    for _ in range(trials):
        layer = _random_layer(rng)
        x = rng.normal(size=(1, layer.c_in, int(rng.integers(4, 17)), int(rng.integers(4, 17))))
        w = generate_weights(layer, x)
        worst = max(worst, np.abs(w.sum(axis=0) - 1.0).max())
        min_entry = min(min_entry, w.min())
    ok = worst <= tol and min_entry > 0
    return "weight validity", ok, f"max column-sum error {worst:.2e}, min entry {min_entry:.2e}"


def drpn_gradient_error(rng, mode="train", h=1e-6):
    """Relative error of tape gradients against central differences."""
    layer = init_layer(2, 2, rng, attention_std=0.5)
    params = {k: ad.Parameter(k, v.copy()) for k, v in layer.parameters().items()}
    x = rng.normal(size=(1, 2, 6, 6))
    proj = rng.normal(size=(1, 2, 6, 6))

    def loss_node():
        tape = ad.Tape()
        nodes = {k: tape.param(p) for k, p in params.items()}
        out, _ = ad.drpn_forward(nodes, tape.constant(x), mode)
        return tape, ad.total(ad.mul(out, proj))

    tape, loss = loss_node()
    grads = tape.backward(loss)
    names = list(params)
    return ad.finite_diff_check(
        lambda: float(loss_node()[1].value),
        [params[k].value for k in names],
        [grads[k] for k in names],
        h,
    )


def check_gradients(rng, tol=1e-6):
    err = drpn_gradient_error(rng)
    return "gradient vs finite differences", err <= tol, f"max relative error {err:.2e}"


def check_conv_counts(rng, trials=20):
    problems = []
    for _ in range(trials):
        layer = _random_layer(rng)
        shape = (int(rng.integers(1, 3)), layer.c_in, int(rng.integers(4, 13)), int(rng.integers(4, 13)))
        x = rng.normal(size=shape)
        for mode in bench.MODES:
            c = bench.instrumented_counts(layer, x, mode)
            if c.conv_calls != bench.count_convolutions(layer, mode) * shape[0]:
                problems.append(f"{mode} conv calls {c.conv_calls}")
            if c.macs != bench.count_macs(layer, shape, mode):
                problems.append(f"{mode} MACs {c.macs} != {bench.count_macs(layer, shape, mode)}")
    return "convolution and MAC counts", not problems, "; ".join(problems[:3]) or f"{trials} shapes x 3 modes"


def run_checks(seed=42, tol=1e-9):
    rng = np.random.default_rng(seed)
    return [
        check_fold_equivalence(rng, tol=tol),
        check_special_cases(rng),
        check_kernel_padding(rng),
        check_weight_validity(rng),
        check_gradients(rng),
        check_conv_counts(rng),
    ]
