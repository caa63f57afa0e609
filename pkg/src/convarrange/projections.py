"""Per-filter projection statistics against the all-ones input direction.

The statistic for one filter is the cosine between any row of its vectorized
matrix (circular mode, where all rows share the same sum and norm) and the
all-ones vector:

    cosine = sum(weights) / (frobenius_norm(weights) * sqrt(C*H*W))

A layer's bias measure is the fraction of its filters with cosine <= 0; at a
sign-symmetric random init that fraction concentrates around 1/2.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyLayer, MissingLayer, ShapeMismatch, ZeroFilter
from .vectorize import ConvGeometry

DEFAULT_BINS = 40


def filter_cosine(filter_weights, geom: ConvGeometry) -> float:
    w = np.asarray(filter_weights, dtype=np.float64)
    if w.shape != geom.filter_shape:
        raise ShapeMismatch(f"filter shape {w.shape}, geometry wants {geom.filter_shape}")
    norm = float(np.sqrt(np.sum(w * w)))
    if norm == 0.0:
        raise ZeroFilter("filter has zero Frobenius norm")
    return float(np.sum(w)) / (norm * math.sqrt(geom.input_dim))


def layer_cosines(layer_weights, geom: ConvGeometry) -> np.ndarray:
    w = np.asarray(layer_weights, dtype=np.float64)
    if w.ndim != 4 or w.shape[1:] != geom.filter_shape:
        raise ShapeMismatch(f"layer shape {w.shape}, geometry wants (F,) + {geom.filter_shape}")
    if w.shape[0] == 0:
        raise EmptyLayer("layer has no filters")
    out = np.empty(w.shape[0], dtype=np.float64)
    for i in range(w.shape[0]):
        try:
            out[i] = filter_cosine(w[i], geom)
        except ZeroFilter:
            raise ZeroFilter(f"filter {i} has zero Frobenius norm", filter_index=i) from None
    return out


def negative_fraction(cosines) -> float:
    """Fraction of filters with cosine <= 0 (zero counts as negative)."""
    c = np.asarray(cosines, dtype=np.float64)
    if c.size == 0:
        raise EmptyLayer("no cosines given")
    return float(np.count_nonzero(c <= 0.0)) / c.size


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def histogram(cosines, n_bins: int = DEFAULT_BINS) -> Histogram:
    """Uniform histogram over [-1, 1]; interior edges belong to the upper bin,
    the last bin is closed on the right."""
    if n_bins < 1:
        raise ValueError(f"n_bins {n_bins} < 1")
    c = np.asarray(cosines, dtype=np.float64)
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    idx = np.searchsorted(edges, c, side="right") - 1
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return Histogram(edges=edges, counts=counts)


@dataclass(frozen=True)
class FilterProjection:
    layer_id: int
    filter_index: int
    cosine: float


@dataclass(frozen=True)
class LayerBiasRecord:
    layer_id: int
    epoch: int
    negative_fraction: float
    filter_count: int


@dataclass(frozen=True)
class BiasTrajectory:
    layer_id: int
    records: tuple[LayerBiasRecord, ...]

    @property
    def epochs(self) -> list[int]:
        return [rec.epoch for rec in self.records]

    @property
    def values(self) -> list[float]:
        return [rec.negative_fraction for rec in self.records]


def trajectory(store, layer_id: int) -> BiasTrajectory:
    """negative_fraction of one conv layer across every snapshot in a store,
    recomputed from the stored weights (single code path, epoch-sorted)."""
    records = []
    epochs = store.epochs()
    if not epochs:
        raise MissingLayer(f"store at {store.root} holds no snapshots")
    for epoch in epochs:
        manifest = store.manifest(epoch)
        entry = manifest.find_layer(layer_id)
        if entry is None or entry.kind != "conv":
            raise MissingLayer(f"epoch {epoch} has no conv layer {layer_id}")
        arrays = store.load(epoch)
        w = arrays[entry.weight]
        cosines = layer_cosines(w, entry.geometry)
        records.append(
            LayerBiasRecord(
                layer_id=layer_id,
                epoch=epoch,
                negative_fraction=negative_fraction(cosines),
                filter_count=w.shape[0],
            )
        )
    return BiasTrajectory(layer_id=layer_id, records=tuple(records))
