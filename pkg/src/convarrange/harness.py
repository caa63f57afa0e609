"""Experiment orchestration: configured runs, bias trajectories, the
failure-to-converge control, layer reinitialization grids, and corrupted-label
/ shuffled-pixel runs.

Every run is pinned by a RunConfig (JSON round-trippable) and a single seed;
rerunning a config reproduces snapshots and statistics byte-for-byte.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoints import SnapshotStore
from .datasets import (
    Dataset,
    load_cifar_binary,
    load_idx,
    pixel_shuffle,
    randomize_labels,
    split_train_val,
    synth_shapes,
)
from .errors import MissingLayer
from .layers import Model
from .projections import BiasTrajectory, trajectory
from .train import (
    InitSpec,
    TrainResult,
    evaluate,
    initialize,
    schedule_from_dict,
    schedule_to_dict,
    train_run,
)

CORRUPTIONS = ("noisy_labels", "pixel_shuffle")

# offset added to the run seed when generating a held-out synthetic test set,
# so train pool and test set never share a generator stream
_TEST_SEED_OFFSET = 1_000_003


def reference6_spec(class_count: int, in_channels: int = 1, size: int = 16) -> dict:
    """Six 3x3 conv layers (16,16,32,32,64,64), ReLU after each, 2x2 max-pool
    after layers 2/4/6, one dense head."""
    layers = []
    for i, filters in enumerate((16, 16, 32, 32, 64, 64)):
        layers.append({"kind": "conv", "filters": filters, "kernel": 3, "stride": 1, "padding": 1})
        layers.append({"kind": "relu"})
        if i % 2 == 1:
            layers.append({"kind": "maxpool"})
    layers.append({"kind": "flatten"})
    layers.append({"kind": "dense", "out": class_count})
    return {"input_shape": [in_channels, size, size], "layers": layers}


def deep12_spec(class_count: int, in_channels: int = 1, size: int = 16, width: int = 64) -> dict:
    """Twelve 3x3 conv layers of one width, pools after layers 2 and 6; deep
    enough that a tiny fixed-sigma init cannot propagate a usable signal."""
    layers = []
    for i in range(12):
        layers.append({"kind": "conv", "filters": width, "kernel": 3, "stride": 1, "padding": 1})
        layers.append({"kind": "relu"})
        if i in (1, 5):
            layers.append({"kind": "maxpool"})
    layers.append({"kind": "flatten"})
    layers.append({"kind": "dense", "out": class_count})
    return {"input_shape": [in_channels, size, size], "layers": layers}


_PRESETS = {"reference6": reference6_spec, "deep12": deep12_spec}


@dataclass(frozen=True)
class RunConfig:
    dataset: dict
    model: dict = field(default_factory=lambda: {"preset": "reference6"})
    schedule: dict = field(default_factory=lambda: {"kind": "step"})
    init: dict | None = None
    epochs: int = 25
    seed: int = 0
    batch_size: int = 128
    momentum: float = 0.9
    weight_decay: float = 5e-4
    augment: bool = False
    corruption: str | None = None
    corruption_fraction: float = 1.0
    snapshot_every: int = 1
    tracked_layers: tuple | None = None
    run_id: str = "run"

    def to_json(self) -> str:
        doc = dict(self.__dict__)
        doc["tracked_layers"] = list(self.tracked_layers) if self.tracked_layers else None
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        doc = json.loads(text)
        if "tracked_layers" in doc and doc["tracked_layers"] is not None:
            doc["tracked_layers"] = tuple(doc["tracked_layers"])
        return cls(**doc)

    def resolve_init(self) -> InitSpec:
        if self.init is None:
            return InitSpec(seed=self.seed)
        d = dict(self.init)
        d.setdefault("seed", self.seed)
        return InitSpec.from_dict(d)

    def resolve_schedule(self):
        return schedule_from_dict(self.schedule)


def build_datasets(config: RunConfig) -> dict:
    """{"train", "val", "test"} for a config, with any corruption applied to
    the training pool before the 90/10 split (the held-out test set stays
    clean)."""
    d = config.dataset
    kind = d.get("kind")
    normalization = d.get("normalization", "positive_unit")
    if kind == "synth_shapes":
        n = int(d["n"])
        classes = int(d["classes"])
        size = int(d.get("size", 16))
        noise = float(d.get("noise", 0.1))
        brightness = float(d.get("brightness", 0.0))
        pool = synth_shapes(n, classes, config.seed, size=size, noise=noise,
                            brightness=brightness)
        test = synth_shapes(
            int(d.get("test_n", 1000)), classes, config.seed + _TEST_SEED_OFFSET,
            size=size, noise=noise, brightness=brightness, split="test",
        )
    elif kind == "idx":
        pool = load_idx(d["images"], d["labels"], normalization=normalization,
                        class_count=int(d.get("classes", 10)))
        test = None
        if d.get("test_images"):
            test = load_idx(d["test_images"], d["test_labels"],
                            normalization=normalization,
                            class_count=int(d.get("classes", 10)), split="test")
    elif kind == "cifar":
        parts = [load_cifar_binary(p, normalization=normalization,
                                   class_count=int(d.get("classes", 10)))
                 for p in d["train"]]
        pool = Dataset(
            np.concatenate([p.images for p in parts]),
            np.concatenate([p.labels for p in parts]),
            parts[0].class_count, "train",
        )
        test = None
        if d.get("test"):
            test = load_cifar_binary(d["test"], normalization=normalization,
                                     class_count=int(d.get("classes", 10)), split="test")
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")

    if config.corruption == "noisy_labels":
        pool = randomize_labels(pool, config.corruption_fraction, config.seed)
    elif config.corruption == "pixel_shuffle":
        pool = pixel_shuffle(pool, config.seed)
    elif config.corruption is not None:
        raise ValueError(f"unknown corruption {config.corruption!r}")

    train, val = split_train_val(pool, config.seed)
    return {"train": train, "val": val, "test": test}


def build_model(config: RunConfig, class_count: int, in_shape: tuple) -> Model:
    spec = config.model
    if "preset" in spec:
        builder = _PRESETS.get(spec["preset"])
        if builder is None:
            raise ValueError(f"unknown preset {spec['preset']!r}")
        kwargs = {k: v for k, v in spec.items() if k != "preset"}
        spec = builder(class_count, in_channels=in_shape[0], size=in_shape[1], **kwargs)
    return Model.build(spec)


@dataclass
class RunResult:
    config: RunConfig
    work_dir: Path
    store: SnapshotStore
    metrics: list
    trajectories: dict
    model: Model
    datasets: dict

    def trajectory(self, layer_id: int) -> BiasTrajectory:
        return self.trajectories[layer_id]


def run_training(config: RunConfig, work_dir) -> RunResult:
    """Train per the config, persisting config.json and per-epoch snapshots
    under work_dir. Trajectories are left empty."""
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    datasets = build_datasets(config)
    train_set = datasets["train"]
    in_shape = train_set.images.shape[1:]
    model = build_model(config, train_set.class_count, in_shape)
    initialize(model, config.resolve_init())
    store = SnapshotStore(work_dir / "snapshots")
    normalization = config.dataset.get("normalization", "positive_unit")
    result = train_run(
        model, train_set, datasets["val"], config.resolve_schedule(), config.epochs,
        seed=config.seed, store=store, momentum=config.momentum,
        weight_decay=config.weight_decay, batch_size=config.batch_size,
        augment=config.augment, snapshot_every=config.snapshot_every,
        run_id=config.run_id, normalization=normalization,
    )
    (work_dir / "config.json").write_text(config.to_json())
    return RunResult(
        config=config, work_dir=work_dir, store=store, metrics=result.metrics,
        trajectories={}, model=model, datasets=datasets,
    )


def run_bias_tracking(config: RunConfig, work_dir) -> RunResult:
    """Train per the config, then recompute each conv layer's
    negative-fraction trajectory from the stored snapshots."""
    result = run_training(config, work_dir)
    conv_ids = [lid for lid, _ in result.model.conv_layers()]
    result.trajectories = {lid: trajectory(result.store, lid) for lid in conv_ids}
    return result


def run_corruption(config: RunConfig, corruption: str | None, work_dir) -> RunResult:
    """Bias tracking under a fixed corruption protocol. Noisy labels force
    augmentation and weight decay off; "none" strips any corruption."""
    if corruption in (None, "none"):
        config = replace(config, corruption=None)
    elif corruption == "noisy_labels":
        config = replace(config, corruption="noisy_labels", augment=False, weight_decay=0.0)
    elif corruption == "pixel_shuffle":
        config = replace(config, corruption="pixel_shuffle")
    else:
        raise ValueError(f"unknown corruption {corruption!r}")
    return run_bias_tracking(config, work_dir)


@dataclass
class ConvergenceReport:
    converged: bool
    loss_rel_change: float
    max_band_deviation: float
    tracked_layers: tuple
    trajectories: dict
    metrics: list

    def within_band(self, radius: float = 0.1) -> bool:
        return self.max_band_deviation <= radius


def run_failure_control(config: RunConfig, work_dir) -> ConvergenceReport:
    """Tiny fixed-sigma init on a deep stack: training must stall. Converged
    means the running train loss moved by >= 1% relative to epoch 1; it is
    reported, not asserted."""
    init = config.resolve_init()
    if init.scheme != "fixed_gaussian":
        raise ValueError("failure control requires a fixed_gaussian init")
    result = run_bias_tracking(config, work_dir)
    conv_ids = [lid for lid, _ in result.model.conv_layers()]
    if len(conv_ids) < 10:
        raise ValueError(f"failure control needs >= 10 conv layers, model has {len(conv_ids)}")
    tracked = tuple(config.tracked_layers) if config.tracked_layers else tuple(conv_ids)
    for lid in tracked:
        if lid not in result.trajectories:
            raise MissingLayer(f"tracked layer {lid} is not a conv layer")
    first = result.metrics[0].train_loss
    last = result.metrics[-1].train_loss
    rel = abs(last - first) / abs(first)
    max_dev = max(
        abs(rec.negative_fraction - 0.5)
        for lid in tracked
        for rec in result.trajectories[lid].records
    )
    return ConvergenceReport(
        converged=rel >= 0.01,
        loss_rel_change=rel,
        max_band_deviation=max_dev,
        tracked_layers=tracked,
        trajectories={lid: result.trajectories[lid] for lid in tracked},
        metrics=result.metrics,
    )


@dataclass
class HeatmapGrid:
    epochs: list
    layer_ids: list
    drops: np.ndarray  # (len(epochs), len(layer_ids)) accuracy drops
    accuracy_full: float

    def drop(self, epoch: int, layer_id: int) -> float:
        return float(self.drops[self.epochs.index(epoch), self.layer_ids.index(layer_id)])


def run_reinit(model: Model, store: SnapshotStore, eval_set: Dataset,
               layer_ids=None, epochs=None, batch_size: int = 128) -> HeatmapGrid:
    """Accuracy drop from resetting one conv layer at a time to an earlier
    snapshot while every other layer keeps its final weights. The dense head
    is excluded; the final-epoch column is exactly zero by construction."""
    available = store.epochs()
    if not available:
        raise MissingLayer(f"store at {store.root} holds no snapshots")
    final_epoch = available[-1]
    if epochs is None:
        epochs = sorted(set(e for e in (0, 1, 2, 5, 10) if e in available) | {final_epoch})
    manifest = store.manifest(final_epoch)
    conv_ids = manifest.conv_layer_ids()
    if layer_ids is None:
        layer_ids = conv_ids
    for lid in layer_ids:
        if lid not in conv_ids:
            raise MissingLayer(f"layer {lid} is not a conv layer in this run")
    _, acc_full = evaluate(model, eval_set, batch_size)
    drops = np.zeros((len(epochs), len(layer_ids)))
    state_full = model.state_dict()
    for i, epoch in enumerate(epochs):
        snap_manifest = store.manifest(epoch)
        snap = store.load(epoch)
        for j, lid in enumerate(layer_ids):
            entry = snap_manifest.find_layer(lid)
            if entry is None:
                raise MissingLayer(f"epoch {epoch} snapshot lacks layer {lid}")
            probe = model.copy()
            state = dict(state_full)
            state[entry.weight] = snap[entry.weight]
            state[entry.bias] = snap[entry.bias]
            probe.load_state_dict(state)
            _, acc = evaluate(probe, eval_set, batch_size)
            drops[i, j] = acc_full - acc
    return HeatmapGrid(epochs=list(epochs), layer_ids=list(layer_ids),
                       drops=drops, accuracy_full=acc_full)


def reinit_from_run(work_dir, layer_ids=None, epochs=None) -> HeatmapGrid:
    """Rebuild a finished run from its directory and compute the grid on the
    run's held-out test set."""
    work_dir = Path(work_dir)
    config = RunConfig.from_json((work_dir / "config.json").read_text())
    store = SnapshotStore(work_dir / "snapshots")
    available = store.epochs()
    if not available:
        raise MissingLayer(f"{work_dir} holds no snapshots")
    datasets = build_datasets(config)
    eval_set = datasets["test"] if datasets["test"] is not None else datasets["val"]
    train_set = datasets["train"]
    model = build_model(config, train_set.class_count, train_set.images.shape[1:])
    model.load_state_dict(store.load(available[-1]))
    return run_reinit(model, store, eval_set, layer_ids=layer_ids, epochs=epochs,
                      batch_size=config.batch_size)


@dataclass(frozen=True)
class TrajectoryBand:
    layer_id: int
    epochs: tuple
    mean: tuple
    std: tuple


def aggregate_trajectories(results) -> dict:
    """Per-layer mean/std of negative fractions across same-config runs that
    differ only by seed."""
    if not results:
        raise ValueError("no results to aggregate")
    layer_ids = sorted(results[0].trajectories)
    bands = {}
    for lid in layer_ids:
        epochs = results[0].trajectories[lid].epochs
        stack = []
        for res in results:
            traj = res.trajectories[lid]
            if traj.epochs != epochs:
                raise ValueError(f"layer {lid}: epoch grids differ across seeds")
            stack.append(traj.values)
        arr = np.asarray(stack)
        bands[lid] = TrajectoryBand(
            layer_id=lid,
            epochs=tuple(epochs),
            mean=tuple(arr.mean(axis=0).tolist()),
            std=tuple(arr.std(axis=0).tolist()),
        )
    return bands


def run_bias_tracking_multi(config: RunConfig, seeds, work_root) -> list:
    work_root = Path(work_root)
    results = []
    for seed in seeds:
        cfg = replace(config, seed=int(seed), run_id=f"{config.run_id}-s{seed}")
        results.append(run_bias_tracking(cfg, work_root / f"seed_{seed}"))
    return results


# -- desk-scale recipes ------------------------------------------------------

def desk_bias_config(seed: int = 2, epochs: int = 30) -> RunConfig:
    """Reference 6-conv model on synthetic shapes with a strong per-image
    brightness nuisance; trains past 95% and grows significant projection
    bias in most layers.

    The brightness offset rides the all-ones direction, so filters only
    become invariant to it by driving their weight sums negative: the bias
    this toolkit measures is then load-bearing, and resetting a biased
    layer to its initial weights costs real test accuracy. A constant
    learning rate (the step never fires inside 30 epochs) keeps gradient
    pressure on the arrangement through the final epoch."""
    return RunConfig(
        dataset={"kind": "synth_shapes", "n": 2000, "classes": 6,
                 "test_n": 1000, "noise": 0.1, "brightness": 4.0},
        model={"preset": "reference6"},
        schedule={"kind": "step", "base": 0.01, "factor": 0.1, "period": 100},
        epochs=epochs,
        seed=seed,
        augment=True,
        batch_size=64,
        run_id=f"desk-bias-s{seed}",
    )


def desk_failure_config(seed: int = 3, epochs: int = 10) -> RunConfig:
    """Twelve-conv stack with sigma=0.01 Gaussian init: loss stays flat and
    the tracked layers' negative fractions stay near 1/2."""
    return RunConfig(
        dataset={"kind": "synth_shapes", "n": 512, "classes": 4, "test_n": 256},
        model={"preset": "deep12"},
        schedule={"kind": "step", "base": 0.01, "factor": 0.1, "period": 25},
        init={"scheme": "fixed_gaussian", "sigma": 0.01},
        epochs=epochs,
        seed=seed,
        tracked_layers=tuple(range(5, 13)),
        run_id=f"desk-failure-s{seed}",
    )


def desk_corruption_config(seed: int = 1, corruption: str | None = None,
                           epochs: int = 25) -> RunConfig:
    """Matched clean/corrupted recipe so corrupted runs differ from clean
    only in the corruption itself.

    Heavy pixel noise (not a brightness offset, which a global pixel
    permutation would preserve) carries the bias pressure here: shuffling
    destroys the spatial structure the clean run aligns against, and the
    noisy-label run stalls without ever reorienting its arrangements. The
    learning rate sits below the bias recipe's so the stalled runs diffuse
    slowly enough for their negative fractions to stay near one half."""
    tag = corruption or "clean"
    config = RunConfig(
        dataset={"kind": "synth_shapes", "n": 2000, "classes": 6,
                 "test_n": 1000, "noise": 0.45},
        model={"preset": "reference6"},
        schedule={"kind": "step", "base": 0.005, "factor": 0.1, "period": 100},
        epochs=epochs,
        seed=seed,
        augment=True,
        batch_size=64,
        run_id=f"desk-{tag}-s{seed}",
    )
    if corruption == "noisy_labels":
        config = replace(config, corruption="noisy_labels", augment=False, weight_decay=0.0)
    elif corruption == "pixel_shuffle":
        config = replace(config, corruption="pixel_shuffle")
    elif corruption not in (None, "none"):
        raise ValueError(f"unknown corruption {corruption!r}")
    return config
