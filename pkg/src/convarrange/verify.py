"""Built-in verification suite: every fast path in the package is replayed
against a slow reference implementation on seeded random inputs.

Each check returns (name, passed, detail); the CLI renders the table and
maps any failure to exit code 3.
"""

from dataclasses import dataclass

import numpy as np

from . import npyio
from .arrangement import row_angle_uniformity
from .layers import Model
from .projections import filter_cosine
from .train import (
    ExponentialSchedule,
    OptimizerState,
    PerEpochFactorSchedule,
    StepSchedule,
    grad_check,
    lr_at,
    sgd_step,
)
from .vectorize import ConvGeometry, dense_matrix, receptive_field_count


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def conv_reference(x, w, bias, geom: ConvGeometry) -> np.ndarray:
    """Direct nested-loop convolution; the trusted slow path."""
    F = w.shape[0]
    out = np.zeros((F, geom.out_height, geom.out_width), dtype=np.float64)
    C, H, W = geom.in_channels, geom.in_height, geom.in_width
    k, s, p = geom.kernel, geom.stride, geom.padding
    for f in range(F):
        for oh in range(geom.out_height):
            for ow in range(geom.out_width):
                acc = 0.0 if bias is None else float(bias[f])
                for c in range(C):
                    for u in range(k):
                        for v in range(k):
                            if geom.padding_mode == "circular":
                                flat = (oh * W + ow + (u - p) * W + (v - p)) % (H * W)
                                acc += float(w[f, c, u, v]) * float(x[c].reshape(-1)[flat])
                            else:
                                ih = oh * s - p + u
                                iw = ow * s - p + v
                                if 0 <= ih < H and 0 <= iw < W:
                                    acc += float(w[f, c, u, v]) * float(x[c, ih, iw])
                out[f, oh, ow] = acc
    return out


def check_cosine_oracle(seed: int = 0, filters: int = 100) -> CheckResult:
    """filter_cosine against normalized dense-row inner products."""
    rng = np.random.default_rng(seed)
    geoms = [
        ConvGeometry(1, 6, 6, 3, padding=1, padding_mode="circular"),
        ConvGeometry(2, 5, 7, 3, padding_mode="circular"),
        ConvGeometry(3, 8, 8, 5, padding=2, padding_mode="circular"),
    ]
    worst = 0.0
    for i in range(filters):
        geom = geoms[i % len(geoms)]
        w = rng.standard_normal((1,) + geom.filter_shape)
        fast = filter_cosine(w[0], geom)
        dense = dense_matrix(w, geom)
        ones = np.ones(geom.input_dim)
        for m in range(0, receptive_field_count(geom), 7):
            row = dense[m]
            slow = float(row @ ones / (np.linalg.norm(row) * np.linalg.norm(ones)))
            worst = max(worst, abs(fast - slow))
    return CheckResult("cosine-vs-dense-rows", worst <= 1e-12, f"max abs err {worst:.3e}")


def check_circulant(seed: int = 0, filters: int = 20) -> CheckResult:
    from .vectorize import verify_circulant

    rng = np.random.default_rng(seed)
    geom = ConvGeometry(1, 6, 6, 3, padding=1, padding_mode="circular")
    w = rng.standard_normal((filters,) + geom.filter_shape)
    report = verify_circulant(w, geom)
    dev = max(row_angle_uniformity(w[i], geom).max_deviation for i in range(filters))
    ok = report.applicable and report.is_circulant and dev == 0.0
    return CheckResult("circulant-structure", bool(ok), f"row-sum deviation {dev!r}")


def check_conv_forward(seed: int = 0) -> CheckResult:
    """im2col convolution against the nested-loop reference."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for geom in (
        ConvGeometry(2, 7, 9, 3, stride=1, padding=1),
        ConvGeometry(3, 8, 8, 3, stride=2, padding=1),
        ConvGeometry(1, 6, 6, 5, stride=1, padding=0),
    ):
        from .layers import Conv2D

        layer = Conv2D(geom, filters=4, dtype=np.float64)
        layer.weight[...] = rng.standard_normal(layer.weight.shape)
        layer.bias[...] = rng.standard_normal(layer.bias.shape)
        x = rng.standard_normal((2, geom.in_channels, geom.in_height, geom.in_width))
        fast, _ = layer.forward(x)
        for n in range(x.shape[0]):
            slow = conv_reference(x[n], layer.weight, layer.bias, geom)
            worst = max(worst, float(np.abs(fast[n] - slow).max()))
    return CheckResult("conv-vs-direct-loops", worst <= 1e-10, f"max abs err {worst:.3e}")


def check_gradients(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    spec = {
        "input_shape": [2, 8, 8],
        "layers": [
            {"kind": "conv", "filters": 4, "kernel": 3, "padding": 1},
            {"kind": "relu"},
            {"kind": "maxpool"},
            {"kind": "conv", "filters": 6, "kernel": 3, "padding": 1},
            {"kind": "relu"},
            {"kind": "maxpool"},
            {"kind": "flatten"},
            {"kind": "dense", "out": 3},
        ],
    }
    model = Model.build(spec, dtype=np.float64)
    for _, p in model.parameters():
        p[...] = rng.standard_normal(p.shape) * 0.5
    x = rng.standard_normal((4, 2, 8, 8))
    labels = rng.integers(0, 3, size=4)
    worst = grad_check(model, x, labels, seed=seed)
    return CheckResult("gradient-finite-difference", worst <= 1e-5, f"max rel err {worst:.3e}")


def check_roundtrip(seed: int = 0, count: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        shape = tuple(int(d) for d in rng.integers(1, 5, size=int(rng.integers(1, 4))))
        dtype = "f4" if i % 2 else "f8"
        arr = rng.standard_normal(shape).astype("<" + dtype)
        records.append(npyio.TensorRecord.from_array(f"t{i}", arr))
    back = npyio.read_npz(npyio.write_npz(records))
    ok = back == records
    return CheckResult("npz-round-trip", bool(ok), f"{count} records")


def check_sgd_recurrence() -> CheckResult:
    """Vector update path against a hand-run scalar recurrence."""
    spec = {"input_shape": [1, 2, 2], "layers": [{"kind": "flatten"}, {"kind": "dense", "out": 1}]}
    model = Model.build(spec, dtype=np.float64)
    model.layers[1].weight[...] = 1.0
    state = OptimizerState(model, momentum=0.9, weight_decay=0.0)
    grads = [None, {"weight": np.ones((1, 4)), "bias": np.zeros(1)}]
    sgd_step(model, grads, 0.1, state)
    first = float(model.layers[1].weight[0, 0])
    sgd_step(model, grads, 0.1, state)
    second = float(model.layers[1].weight[0, 0])
    ok = abs(first - 0.9) < 1e-15 and abs(second - (0.9 - 0.19)) < 1e-15
    return CheckResult("sgd-momentum-recurrence", ok, f"steps to {first!r}, {second!r}")


def check_schedules() -> CheckResult:
    step = StepSchedule(base=0.01, factor=0.1, period=25)
    exp = ExponentialSchedule(base=0.01, decade_epochs=25)
    per = PerEpochFactorSchedule(base=0.01, factor=0.95)
    ok = (
        lr_at(step, 0) == 0.01
        and lr_at(step, 24) == 0.01
        and lr_at(step, 25) == 0.01 * 0.1
        and abs(lr_at(exp, 25) - 0.001) < 1e-18
        and lr_at(per, 2) == 0.01 * 0.95**2
    )
    return CheckResult("lr-schedule-closed-forms", ok, "epochs 0/24/25 spot checks")


def run_all(seed: int = 0) -> list:
    return [
        check_roundtrip(seed),
        check_cosine_oracle(seed),
        check_circulant(seed),
        check_conv_forward(seed),
        check_gradients(seed),
        check_sgd_recurrence(),
        check_schedules(),
    ]
