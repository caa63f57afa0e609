"""Where the identity ray lands in a filter's hyperplane arrangement.

Each receptive field of a filter contributes one hyperplane
{x : <row_m, x> + bias = 0}. Along the ray x = lam * ones (lam > 0) the m-th
activation is lam * <row_m, ones> + bias, so for large lam every sign is
decided by the row sums, and the crossing points give a threshold lam_star
past which the ray stays inside a single cell.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroSum
from .vectorize import ConvGeometry, receptive_field_count, row_inner_one

ALL_POSITIVE = "all_positive"
ALL_NEGATIVE = "all_negative"
MIXED = "mixed"


@dataclass(frozen=True)
class FilterPolyhedron:
    filter_index: int
    geometry: ConvGeometry
    weights: np.ndarray = field(repr=False)
    bias: float = 0.0


@dataclass(frozen=True)
class CellAssignment:
    cell: str
    lambda_star: float


def asymptotic_cell(poly: FilterPolyhedron) -> CellAssignment:
    """Cell reached by lam * ones as lam grows, with the smallest lam_star
    such that every lam > lam_star keeps all activations at their final sign.

    Circular mode: all row sums coincide with the filter's total weight sum,
    so the cell is all-positive or all-negative by that sign. Zero mode:
    boundary rows have their own sums; if the signs disagree the ray stays in
    a mixed cell forever (lambda_star = inf).
    """
    geom = poly.geometry
    b = float(poly.bias)
    sums = [row_inner_one(poly.weights, geom, m) for m in range(receptive_field_count(geom))]
    if any(s == 0.0 for s in sums):
        raise ZeroSum(f"filter {poly.filter_index}: a row sum is exactly zero")
    if all(s > 0.0 for s in sums):
        lam = max(0.0, max(-b / s for s in sums))
        return CellAssignment(ALL_POSITIVE, lam)
    if all(s < 0.0 for s in sums):
        lam = max(0.0, max(b / -s for s in sums))
        return CellAssignment(ALL_NEGATIVE, lam)
    return CellAssignment(MIXED, math.inf)


@dataclass(frozen=True)
class RowAngleReport:
    max_deviation: float
    row_count: int
    padding_mode: str


def row_angle_uniformity(filter_weights, geom: ConvGeometry) -> RowAngleReport:
    """Largest |<row_m, ones> - <row_0, ones>| across rows. Circular-mode rows
    are permutations of each other and are summed in identical tap order, so
    the deviation there is exactly 0.0."""
    r = receptive_field_count(geom)
    first = row_inner_one(filter_weights, geom, 0)
    dev = 0.0
    for m in range(1, r):
        dev = max(dev, abs(row_inner_one(filter_weights, geom, m) - first))
    return RowAngleReport(max_deviation=dev, row_count=r, padding_mode=geom.padding_mode)


def alignment_probability(filter_count: int) -> float:
    """Probability that F independent sign-symmetric filters all place the
    all-ones direction on the same side: F / 2**F."""
    if filter_count < 1:
        raise ValueError(f"filter_count {filter_count} < 1")
    return math.ldexp(filter_count, -filter_count)


def binomial_two_sided_p(negatives: int, filter_count: int) -> float:
    """Exact two-sided p-value for `negatives` successes under
    Binomial(filter_count, 1/2): mass of outcomes at least as far from the
    mean, computed with integer arithmetic and a single final division."""
    n = filter_count
    if n < 1:
        raise ValueError(f"filter_count {n} < 1")
    if not 0 <= negatives <= n:
        raise ValueError(f"negatives {negatives} outside [0, {n}]")
    dist = abs(2 * negatives - n)
    mass = sum(math.comb(n, j) for j in range(n + 1) if abs(2 * j - n) >= dist)
    return mass / 2**n


@dataclass(frozen=True)
class SignificanceReport:
    filter_count: int
    negatives: int
    negative_fraction: float
    p_value: float
    null_mean: float = 0.5

    def to_dict(self) -> dict:
        return {
            "filter_count": self.filter_count,
            "negatives": self.negatives,
            "negative_fraction": self.negative_fraction,
            "p_value": self.p_value,
            "null_mean": self.null_mean,
        }


def significance_report(cosines) -> SignificanceReport:
    c = np.asarray(cosines, dtype=np.float64)
    if c.size == 0:
        raise ValueError("no cosines given")
    k = int(np.count_nonzero(c <= 0.0))
    n = int(c.size)
    return SignificanceReport(
        filter_count=n,
        negatives=k,
        negative_fraction=k / n,
        p_value=binomial_two_sided_p(k, n),
    )
