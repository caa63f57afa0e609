"""SGD training loop with momentum, weight decay, LR schedules, and
finite-difference gradient verification.

The update rule, per parameter tensor p with gradient g:

    g' = g + weight_decay * p        (decay skipped for bias tensors)
    buf = momentum * buf + g'
    p  -= lr * buf

Schedules expose closed-form lr_at(epoch) so epoch e's rate never depends on
accumulated float products.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoints import CheckpointManifest, SnapshotStore
from .datasets import augment_batch
from .errors import LabelOutOfRange, NonFiniteLoss
from .layers import Conv2D, Dense, Model


@dataclass(frozen=True)
class StepSchedule:
    base: float = 0.01
    factor: float = 0.1
    period: int = 25

    def lr_at(self, epoch: int) -> float:
        return self.base * self.factor ** (epoch // self.period)


@dataclass(frozen=True)
class ExponentialSchedule:
    """lr = base * 10^(-epoch / decade_epochs)."""

    base: float = 0.01
    decade_epochs: int = 25

    def lr_at(self, epoch: int) -> float:
        return self.base * 10.0 ** (-epoch / self.decade_epochs)


@dataclass(frozen=True)
class PerEpochFactorSchedule:
    base: float = 0.01
    factor: float = 0.95

    def lr_at(self, epoch: int) -> float:
        return self.base * self.factor**epoch


_SCHEDULES = {
    "step": StepSchedule,
    "exponential": ExponentialSchedule,
    "per_epoch_factor": PerEpochFactorSchedule,
}


def lr_at(schedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch {epoch} < 0")
    return schedule.lr_at(epoch)


def schedule_to_dict(schedule) -> dict:
    for kind, cls in _SCHEDULES.items():
        if isinstance(schedule, cls):
            d = {"kind": kind}
            d.update({f.name: getattr(schedule, f.name) for f in schedule.__dataclass_fields__.values()})
            return d
    raise ValueError(f"unknown schedule {schedule!r}")


def schedule_from_dict(d: dict):
    kind = d.get("kind")
    if kind not in _SCHEDULES:
        raise ValueError(f"unknown schedule kind {kind!r}")
    args = {k: v for k, v in d.items() if k != "kind"}
    return _SCHEDULES[kind](**args)


@dataclass(frozen=True)
class InitSpec:
    scheme: str = "kaiming_normal"  # or "fixed_gaussian"
    seed: int = 0
    sigma: float = 0.01  # fixed_gaussian only
    fan: str = "fan_out"  # kaiming_normal only

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "seed": self.seed, "sigma": self.sigma, "fan": self.fan}

    @classmethod
    def from_dict(cls, d: dict) -> "InitSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def _fan(layer, mode: str) -> int:
    if isinstance(layer, Conv2D):
        k2 = layer.geom.kernel * layer.geom.kernel
        return layer.filters * k2 if mode == "fan_out" else layer.geom.in_channels * k2
    if isinstance(layer, Dense):
        return layer.out_features if mode == "fan_out" else layer.in_features
    raise TypeError(f"no fan for {layer!r}")


def initialize(model: Model, spec: InitSpec) -> None:
    """Draw weights layer by layer from one seeded generator; biases stay 0."""
    if spec.scheme not in ("kaiming_normal", "fixed_gaussian"):
        raise ValueError(f"unknown init scheme {spec.scheme!r}")
    if spec.fan not in ("fan_out", "fan_in"):
        raise ValueError(f"unknown fan mode {spec.fan!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 23]))
    for layer in model.layers:
        if not isinstance(layer, (Conv2D, Dense)):
            continue
        if spec.scheme == "kaiming_normal":
            std = math.sqrt(2.0 / _fan(layer, spec.fan))
        else:
            std = spec.sigma
        draw = rng.normal(0.0, std, size=layer.weight.shape)
        layer.weight[...] = draw.astype(layer.weight.dtype)
        layer.bias[...] = 0.0
    model.bump()


def kaiming_std(fan: int) -> float:
    return math.sqrt(2.0 / fan)


class OptimizerState:
    def __init__(self, model: Model, momentum: float = 0.9, weight_decay: float = 5e-4):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers = {name: np.zeros_like(p) for name, p in model.parameters()}


def sgd_step(model: Model, grads: list, lr: float, state: OptimizerState) -> None:
    flat = model.flat_grads(grads)
    for (name, p), g in zip(model.parameters(), flat):
        if state.weight_decay and not name.endswith(".bias"):
            g = g + state.weight_decay * p
        buf = state.buffers[name]
        buf *= state.momentum
        buf += g
        p -= lr * buf
    model.bump()


def loss_softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch plus its gradient w.r.t. logits."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty batch")
    if labels.min() < 0 or labels.max() >= k:
        raise LabelOutOfRange(f"labels outside [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    logp = z - lse
    loss = float(-logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def evaluate(model: Model, dataset, batch_size: int = 128):
    """(mean loss, accuracy) over a dataset in fixed order."""
    n = len(dataset)
    total_loss = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        xb = dataset.images[start : start + batch_size]
        yb = dataset.labels[start : start + batch_size]
        logits, _ = model.forward(xb)
        loss, _ = loss_softmax_xent(logits, yb)
        total_loss += loss * xb.shape[0]
        correct += int(np.count_nonzero(logits.argmax(axis=1) == yb))
    return total_loss / n, correct / n


def grad_check(model: Model, x, labels, *, eps: float = 1e-5,
               samples_per_tensor: int = 8, seed: int = 0) -> float:
    """Worst relative error between backward() and central finite differences
    over a random subset of each parameter tensor, all in float64."""
    m = model.astype(np.float64)
    x64 = np.asarray(x, dtype=np.float64)
    logits, caches = m.forward(x64)
    _, dlogits = loss_softmax_xent(logits, labels)
    analytic = m.flat_grads(m.backward(caches, dlogits))

    def loss_only():
        out, _ = m.forward(x64)
        return loss_softmax_xent(out, labels)[0]

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 29]))
    worst = 0.0
    for (_, p), g in zip(m.parameters(), analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        take = min(samples_per_tensor, flat_p.size)
        for j in rng.choice(flat_p.size, size=take, replace=False):
            orig = flat_p[j]
            flat_p[j] = orig + eps
            lp = loss_only()
            flat_p[j] = orig - eps
            lm = loss_only()
            flat_p[j] = orig
            numeric = (lp - lm) / (2.0 * eps)
            denom = max(abs(numeric), abs(flat_g[j]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[j]) / denom)
    return worst


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    metrics: list
    store: SnapshotStore | None

    @property
    def final(self) -> EpochMetrics:
        return self.metrics[-1]


def _save(store, model, epoch, run_id, normalization, callbacks):
    if store is None and not callbacks:
        return
    manifest = CheckpointManifest(
        run_id=run_id,
        epoch=epoch,
        normalization=normalization,
        layers=tuple(model.checkpoint_layers()),
    )
    state = model.state_dict()
    if store is not None:
        store.save(manifest, state)
    for cb in callbacks:
        cb(epoch, manifest, state)


def train_run(model: Model, train_set, val_set, schedule, epochs: int, *,
              seed: int, store: SnapshotStore | None = None,
              momentum: float = 0.9, weight_decay: float = 5e-4,
              batch_size: int = 128, augment: bool = False,
              snapshot_every: int = 1, run_id: str = "run",
              normalization: str | None = None, callbacks=()) -> TrainResult:
    """Deterministic SGD run. Snapshots epoch 0 (initialization) and then
    every snapshot_every-th epoch plus the final one. Train loss/accuracy are
    running averages over the epoch's batches; validation is evaluated after
    each epoch."""
    if epochs < 0:
        raise ValueError(f"epochs {epochs} < 0")
    opt = OptimizerState(model, momentum=momentum, weight_decay=weight_decay)
    perm_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    _save(store, model, 0, run_id, normalization, callbacks)
    metrics = []
    n = len(train_set)
    for e in range(epochs):
        lr = lr_at(schedule, e)
        order = perm_rng.permutation(n)
        aug_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, e]))
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb = train_set.images[idx]
            yb = train_set.labels[idx]
            if augment:
                xb = augment_batch(xb, aug_rng)
            logits, caches = model.forward(xb)
            loss, dlogits = loss_softmax_xent(logits, yb)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"epoch {e + 1}, batch at {start}: loss {loss}")
            loss_sum += loss * xb.shape[0]
            correct += int(np.count_nonzero(logits.argmax(axis=1) == yb))
            grads = model.backward(caches, dlogits)
            sgd_step(model, grads, lr, opt)
        val_loss, val_acc = evaluate(model, val_set, batch_size)
        epoch_no = e + 1
        metrics.append(
            EpochMetrics(
                epoch=epoch_no,
                lr=lr,
                train_loss=loss_sum / n,
                train_acc=correct / n,
                val_loss=val_loss,
                val_acc=val_acc,
            )
        )
        if epoch_no % snapshot_every == 0 or epoch_no == epochs:
            _save(store, model, epoch_no, run_id, normalization, callbacks)
    return TrainResult(metrics=metrics, store=store)
