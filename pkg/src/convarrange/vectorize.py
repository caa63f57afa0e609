"""Row-major vectorization of conv layers as sparse matrices.

A weight tensor (F, C, k, k) applied to inputs flattened with
index = c*H*W + h*W + w acts as a matrix of shape (F*r, C*H*W), one row per
(filter, receptive field), r = out_height*out_width. Two padding modes:

* "zero": ordinary zero padding. Out-of-bounds taps are dropped, so boundary
  rows carry fewer nonzeros than interior rows.
* "circular": stride-1 wraparound in the flattened spatial index; the tap for
  kernel offset (u, v) lands at column (anchor + (u-p)*W + (v-p)) mod (H*W).
  Each filter's block is then an exact circulant: row m equals row m-1 with
  every column index advanced by one, wrapping at H*W.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExceeded,
    DegenerateGeometry,
    RowOutOfRange,
    ShapeMismatch,
)

PADDING_MODES = ("zero", "circular")


@dataclass(frozen=True)
class ConvGeometry:
    in_channels: int
    in_height: int
    in_width: int
    kernel: int
    stride: int = 1
    padding: int = 0
    padding_mode: str = "zero"

    def __post_init__(self):
        if min(self.in_channels, self.in_height, self.in_width, self.kernel) < 1:
            raise DegenerateGeometry(f"non-positive extent in {self}")
        if self.stride < 1:
            raise DegenerateGeometry(f"stride {self.stride} < 1")
        if self.padding < 0:
            raise DegenerateGeometry(f"padding {self.padding} < 0")
        if self.padding_mode not in PADDING_MODES:
            raise DegenerateGeometry(f"padding_mode {self.padding_mode!r}")
        if self.padding_mode == "circular":
            if self.stride != 1:
                raise DegenerateGeometry("circular mode requires stride 1")
            if self.kernel > min(self.in_height, self.in_width):
                # larger kernels would fold distinct taps onto one column
                raise DegenerateGeometry(
                    "circular mode requires kernel <= min(height, width)"
                )
        elif self.out_height < 1 or self.out_width < 1:
            raise DegenerateGeometry(f"no valid receptive fields for {self}")

    @property
    def out_height(self) -> int:
        if self.padding_mode == "circular":
            return self.in_height
        return (self.in_height + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def out_width(self) -> int:
        if self.padding_mode == "circular":
            return self.in_width
        return (self.in_width + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def input_dim(self) -> int:
        return self.in_channels * self.in_height * self.in_width

    @property
    def filter_shape(self) -> tuple[int, int, int]:
        return (self.in_channels, self.kernel, self.kernel)

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "in_height": self.in_height,
            "in_width": self.in_width,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "padding_mode": self.padding_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConvGeometry":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def receptive_field_count(geom: ConvGeometry) -> int:
    return geom.out_height * geom.out_width


@dataclass(frozen=True)
class SparseRow:
    """One matrix row: strictly increasing column indices and their values."""

    indices: np.ndarray
    values: np.ndarray


def _check_filter(filter_weights, geom) -> np.ndarray:
    w = np.asarray(filter_weights)
    if w.shape != geom.filter_shape:
        raise ShapeMismatch(f"filter shape {w.shape}, geometry wants {geom.filter_shape}")
    return w


def _row_taps(geom: ConvGeometry, m: int):
    """Yield (c, u, v, column) for every in-bounds tap of receptive field m,
    in fixed (c, u, v) scan order."""
    C, H, W = geom.in_channels, geom.in_height, geom.in_width
    k, s, p = geom.kernel, geom.stride, geom.padding
    oh, ow = divmod(m, geom.out_width)
    if geom.padding_mode == "circular":
        anchor = oh * W + ow
        hw = H * W
        for c, u, v in itertools.product(range(C), range(k), range(k)):
            yield c, u, v, c * hw + (anchor + (u - p) * W + (v - p)) % hw
    else:
        for c, u, v in itertools.product(range(C), range(k), range(k)):
            ih = oh * s - p + u
            iw = ow * s - p + v
            if 0 <= ih < H and 0 <= iw < W:
                yield c, u, v, (c * H + ih) * W + iw


def sparse_row(filter_weights, geom: ConvGeometry, m: int) -> SparseRow:
    """Row m of one filter's (r, C*H*W) matrix block."""
    w = _check_filter(filter_weights, geom)
    r = receptive_field_count(geom)
    if not 0 <= m < r:
        raise RowOutOfRange(f"row {m} outside [0, {r})")
    cols = []
    vals = []
    for c, u, v, col in _row_taps(geom, m):
        cols.append(col)
        vals.append(w[c, u, v])
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=w.dtype)
    order = np.argsort(cols, kind="stable")
    return SparseRow(indices=cols[order], values=vals[order])


def row_inner_one(filter_weights, geom: ConvGeometry, m: int) -> float:
    """<row m, all-ones>, accumulated in fixed (c, u, v) tap order so equal
    rows sum to bitwise-equal floats regardless of column permutation."""
    w = _check_filter(filter_weights, geom)
    r = receptive_field_count(geom)
    if not 0 <= m < r:
        raise RowOutOfRange(f"row {m} outside [0, {r})")
    total = 0.0
    for c, u, v, _ in _row_taps(geom, m):
        total += float(w[c, u, v])
    return total


def dense_matrix(layer_weights, geom: ConvGeometry, budget: int = 10_000_000) -> np.ndarray:
    """Materialize the full (F*r, C*H*W) float64 matrix for a whole layer.

    Intended for oracle-scale checks; refuses matrices above `budget` elements.
    """
    w = np.asarray(layer_weights)
    if w.ndim != 4 or w.shape[1:] != geom.filter_shape:
        raise ShapeMismatch(f"layer shape {w.shape}, geometry wants (F,) + {geom.filter_shape}")
    F = w.shape[0]
    r = receptive_field_count(geom)
    n = geom.input_dim
    if F * r * n > budget:
        raise BudgetExceeded(f"{F}*{r}*{n} elements exceed budget {budget}")
    out = np.zeros((F * r, n), dtype=np.float64)
    for i in range(F):
        for m in range(r):
            row = sparse_row(w[i], geom, m)
            out[i * r + m, row.indices] = row.values
    return out


@dataclass(frozen=True)
class FilterMatrixView:
    """Lazy view of one filter's r-row matrix block."""

    filter_index: int
    geometry: ConvGeometry
    weights: np.ndarray = field(repr=False)

    def row(self, m: int) -> SparseRow:
        return sparse_row(self.weights, self.geometry, m)

    def rows(self):
        for m in range(receptive_field_count(self.geometry)):
            yield self.row(m)

    def dense(self, budget: int = 10_000_000) -> np.ndarray:
        return dense_matrix(self.weights[None], self.geometry, budget=budget)


@dataclass(frozen=True)
class CirculantReport:
    applicable: bool
    is_circulant: bool | None
    first_violation: tuple[int, int] | None
    reason: str = ""


def verify_circulant(layer_weights, geom: ConvGeometry) -> CirculantReport:
    """Check that every filter's block is a true circulant: each row equals
    the previous row with all column indices advanced by one, mod H*W.

    Only meaningful for single-channel circular geometries; anything else
    gets a not-applicable report rather than a failure.
    """
    w = np.asarray(layer_weights)
    if w.ndim != 4 or w.shape[1:] != geom.filter_shape:
        raise ShapeMismatch(f"layer shape {w.shape}, geometry wants (F,) + {geom.filter_shape}")
    if geom.padding_mode != "circular":
        return CirculantReport(False, None, None, "requires circular padding mode")
    if geom.in_channels != 1:
        return CirculantReport(False, None, None, "requires a single input channel")
    hw = geom.in_height * geom.in_width
    r = receptive_field_count(geom)
    for i in range(w.shape[0]):
        rows = [sparse_row(w[i], geom, m) for m in range(r)]
        for m in range(r):
            prev = rows[m - 1]  # m == 0 wraps to the last row
            shifted = (prev.indices + 1) % hw
            order = np.argsort(shifted, kind="stable")
            same = np.array_equal(shifted[order], rows[m].indices) and np.array_equal(
                prev.values[order], rows[m].values
            )
            if not same:
                return CirculantReport(True, False, (i, m))
    return CirculantReport(True, True, None)
