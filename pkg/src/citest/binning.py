"""Bin layouts over the conditioning variable and dataset binning.

Every plan fixes d cells per z axis; cells are half-open on the left and
closed at the top so the support endpoint falls in the last cell. Bivariate
cells are numbered row-major by axis order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CATEGORY, TripleDataset
from .ustat import DiscretePairSample

__all__ = [
    "OutOfSupportError",
    "UnsupportedDimensionError",
    "BinPlan",
    "BinnedDataset",
    "SupportEstimate",
    "fixed_discrete_plan",
    "scaling_discrete_plan",
    "continuous_plan",
    "multivariate_plan",
    "unbounded_plan",
    "assign_bin",
    "discretize_xy",
    "bin_dataset",
    "estimate_support",
]


class OutOfSupportError(ValueError):
    """Raised when a z value falls outside the plan's support."""


class UnsupportedDimensionError(ValueError):
    """Raised for conditioning dimensions other than 1 and 2."""


@dataclass(frozen=True)
class BinPlan:
    """Equal-width binning of z into d cells per axis.

    ``d_prime`` is the per-axis discretization level for real-valued (X, Y)
    and stays None when those are already categorical. ``support`` holds one
    (low, high) interval per z axis. ``threshold_scale`` is the plan's
    contribution to the rejection threshold where the procedure takes it
    from the bin count; it is None for the fixed test whose threshold is set
    from the sample size directly. ``scaling_ok`` reports the cell-budget
    condition d * max(ell1, ell2) <= n for the scaling plan and is None
    elsewhere.
    """

    d: int
    d_z: int = 1
    d_prime: int | None = None
    support: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    threshold_scale: float | None = None
    scaling_ok: bool | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.d_z not in (1, 2):
            raise UnsupportedDimensionError("d_z must be 1 or 2")
        if self.d_prime is not None and self.d_prime < 1:
            raise ValueError("d_prime must be at least 1")
        if len(self.support) != self.d_z:
            raise ValueError("support must list one interval per z axis")
        for lo, hi in self.support:
            if not (hi > lo):
                raise ValueError("support intervals must have positive width")

    @property
    def total_cells(self) -> int:
        return self.d ** self.d_z


def fixed_discrete_plan(n: int) -> BinPlan:
    """d = ceil(n^(2/5)) cells on [0, 1]."""
    if n < 1:
        raise ValueError("n must be positive")
    return BinPlan(d=math.ceil(n ** 0.4))


def scaling_discrete_plan(n: int, ell1: int, ell2: int) -> BinPlan:
    """d = ceil(n^(2/5) / (ell1 ell2)^(1/5)) cells on [0, 1].

    ``scaling_ok`` records whether d * max(ell1, ell2) <= n, the regime the
    scaled threshold is tuned for; the plan is still returned when it fails.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if ell1 < 1 or ell2 < 1:
        raise ValueError("support sizes must be positive")
    d = math.ceil(n ** 0.4 / (ell1 * ell2) ** 0.2)
    return BinPlan(d=d, threshold_scale=math.sqrt(d),
                   scaling_ok=(d * max(ell1, ell2) <= n))


def continuous_plan(n: int, s: float) -> BinPlan:
    """Plan for real (X, Y) with smoothness s.

    d = ceil(n^(2s / (5s + 2))) z cells and d' = ceil(d^(1/s)) levels per
    observation axis.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if s <= 0:
        raise ValueError("smoothness must be positive")
    d = math.ceil(n ** (2.0 * s / (5.0 * s + 2.0)))
    d_prime = math.ceil(d ** (1.0 / s))
    return BinPlan(d=d, d_prime=d_prime, threshold_scale=math.sqrt(d))


def multivariate_plan(n: int, d_z: int, s: float | None = None) -> BinPlan:
    """Plan for bivariate z, categorical or real (X, Y).

    With categorical observations (s is None) d = ceil(n^(2 / (4 + d_z))).
    With real observations and smoothness s >= 1,
    d = ceil(n^(2s / ((4 + d_z) s + 2))) and d' = ceil(d^(1/s)). Either way
    the threshold scale is d^(d_z / 2).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if d_z not in (1, 2):
        raise UnsupportedDimensionError("d_z must be 1 or 2")
    if s is None:
        d = math.ceil(n ** (2.0 / (4.0 + d_z)))
        d_prime = None
    else:
        if s < 1:
            raise ValueError("real-valued observations need smoothness >= 1 here")
        d = math.ceil(n ** (2.0 * s / ((4.0 + d_z) * s + 2.0)))
        d_prime = math.ceil(d ** (1.0 / s))
    support = tuple(((0.0, 1.0),) * d_z)
    return BinPlan(d=d, d_z=d_z, d_prime=d_prime, support=support,
                   threshold_scale=float(d) ** (d_z / 2.0))


@dataclass(frozen=True)
class SupportEstimate:
    """Shortest interval covering a target fraction of the z sample."""

    low: float
    high: float
    k: int
    n: int

    def __post_init__(self) -> None:
        if not (self.high >= self.low):
            raise ValueError("interval must have nonnegative width")
        if not (1 <= self.k <= self.n):
            raise ValueError("k must lie in 1..n")

    @property
    def width(self) -> float:
        return self.high - self.low


def estimate_support(z: np.ndarray, eta: float = 0.05,
                     c_const: float = 1.0) -> SupportEstimate:
    """Shortest interval holding k = ceil(n (1 - eta) + c sqrt(n log n))
    of the sorted z values, found by a linear window scan."""
    z = np.asarray(z, dtype=np.float64).ravel()
    n = len(z)
    if n < 1:
        raise ValueError("need at least one observation")
    if not (0.0 <= eta < 1.0):
        raise ValueError("eta must lie in [0, 1)")
    slack = c_const * math.sqrt(n * math.log(n)) if n > 1 else 0.0
    k = min(n, max(1, math.ceil(n * (1.0 - eta) + slack)))
    zs = np.sort(z)
    widths = zs[k - 1:] - zs[:n - k + 1]
    start = int(np.argmin(widths))
    return SupportEstimate(low=float(zs[start]), high=float(zs[start + k - 1]),
                           k=k, n=n)


def unbounded_plan(n: int, support: SupportEstimate) -> BinPlan:
    """Plan over an estimated interval for z of unknown range.

    With mu the interval width, d = min(ceil(mu^(4/5) n^(2/5)),
    ceil(mu^(8/15) n^(8/15))); observations outside the interval are meant
    to be discarded when binning.
    """
    if n < 1:
        raise ValueError("n must be positive")
    mu = support.width
    if mu <= 0:
        raise ValueError("support estimate has zero width")
    d = min(math.ceil(mu ** 0.8 * n ** 0.4),
            math.ceil(mu ** (8.0 / 15.0) * n ** (8.0 / 15.0)))
    return BinPlan(d=d, support=((support.low, support.high),),
                   threshold_scale=math.sqrt(d))


def _axis_bin(v: np.ndarray, lo: float, hi: float, d: int) -> np.ndarray:
    """0-based cell index per axis; out-of-interval values are -1."""
    scaled = (v - lo) / (hi - lo) * d
    idx = np.floor(scaled).astype(np.int64)
    np.minimum(idx, d - 1, out=idx)
    idx[(v < lo) | (v > hi)] = -1
    return idx


def assign_bin(z: np.ndarray | float, plan: BinPlan) -> np.ndarray | int:
    """1-based bin index of each z, row-major across axes for d_z = 2.

    Raises OutOfSupportError when any value leaves the plan's support.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    if plan.d_z == 1:
        flat = np.atleast_1d(z_arr).ravel()
        lo, hi = plan.support[0]
        idx = _axis_bin(flat, lo, hi, plan.d)
        if np.any(idx < 0):
            raise OutOfSupportError("z value outside the plan support")
        out = idx + 1
        return int(out[0]) if np.ndim(z) == 0 else out
    if z_arr.ndim == 1:
        z_arr = z_arr[None, :]
        single = True
    else:
        single = False
    if z_arr.shape[1] != 2:
        raise UnsupportedDimensionError("bivariate plan needs z rows of length 2")
    cols = []
    for axis in range(2):
        lo, hi = plan.support[axis]
        cols.append(_axis_bin(z_arr[:, axis], lo, hi, plan.d))
    i0, i1 = cols
    if np.any(i0 < 0) or np.any(i1 < 0):
        raise OutOfSupportError("z value outside the plan support")
    out = i0 * plan.d + i1 + 1
    return int(out[0]) if single else out


def discretize_xy(v: np.ndarray, d_prime: int) -> np.ndarray:
    """Map [0, 1] values to 1-based levels 1..d_prime, top endpoint closed."""
    v = np.asarray(v, dtype=np.float64)
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        raise OutOfSupportError("real observations must lie in [0, 1]")
    idx = np.floor(v * d_prime).astype(np.int64)
    idx[v == 1.0] = d_prime - 1
    return idx + 1


@dataclass(frozen=True)
class BinnedDataset:
    """Per-bin categorical pair samples plus the plan that produced them.

    ``sigma`` lists the per-bin sizes; bins are ordered by their 1-based
    index, empty bins included.
    """

    xs_by_bin: tuple[np.ndarray, ...]
    ys_by_bin: tuple[np.ndarray, ...]
    ell1: int
    ell2: int
    plan: BinPlan
    n_discarded: int = 0

    def __post_init__(self) -> None:
        if len(self.xs_by_bin) != len(self.ys_by_bin):
            raise ValueError("per-bin x and y lists must align")
        if len(self.xs_by_bin) != self.plan.total_cells:
            raise ValueError("bin count must match the plan")

    @property
    def sigma(self) -> np.ndarray:
        return np.array([len(b) for b in self.xs_by_bin], dtype=np.int64)

    @property
    def n_binned(self) -> int:
        return int(self.sigma.sum())

    def pair_sample(self, m: int) -> DiscretePairSample:
        """Bin m (0-based) as a DiscretePairSample."""
        return DiscretePairSample(self.xs_by_bin[m], self.ys_by_bin[m],
                                  ell1=self.ell1, ell2=self.ell2)


def bin_dataset(data: TripleDataset, plan: BinPlan,
                discard_out_of_support: bool = False) -> BinnedDataset:
    """Group categorical observations by the bin of their z value.

    X and Y must already be categorical; real observations are discretized
    by the callers (see ``discretize_xy``). Out-of-support z values raise
    unless ``discard_out_of_support`` is set, which drops them and counts
    them in ``n_discarded``.
    """
    if data.x_kind != CATEGORY or data.y_kind != CATEGORY:
        raise ValueError("bin_dataset expects categorical observations")
    if data.d_z != plan.d_z:
        raise UnsupportedDimensionError(
            f"data has d_z={data.d_z}, plan has d_z={plan.d_z}")
    z = data.z if plan.d_z == 2 else data.z[:, 0]
    if discard_out_of_support:
        if plan.d_z == 1:
            lo, hi = plan.support[0]
            keep = (z >= lo) & (z <= hi)
        else:
            keep = np.ones(len(z), dtype=bool)
            for axis in range(2):
                lo, hi = plan.support[axis]
                keep &= (z[:, axis] >= lo) & (z[:, axis] <= hi)
        dropped = int((~keep).sum())
        xs, ys, z = data.x[keep], data.y[keep], z[keep]
    else:
        dropped = 0
        xs, ys = data.x, data.y
    if len(xs):
        idx = np.atleast_1d(np.asarray(assign_bin(z, plan)))
    else:
        idx = np.zeros(0, dtype=np.int64)
    cells = plan.total_cells
    order = np.argsort(idx, kind="stable")
    idx_sorted = idx[order]
    xs_sorted = xs[order]
    ys_sorted = ys[order]
    bounds = np.searchsorted(idx_sorted, np.arange(1, cells + 2))
    xs_by_bin = []
    ys_by_bin = []
    for m in range(cells):
        xs_by_bin.append(xs_sorted[bounds[m]:bounds[m + 1]])
        ys_by_bin.append(ys_sorted[bounds[m]:bounds[m + 1]])
    return BinnedDataset(
        xs_by_bin=tuple(xs_by_bin), ys_by_bin=tuple(ys_by_bin),
        ell1=int(data.ell1), ell2=int(data.ell2), plan=plan,
        n_discarded=dropped)
