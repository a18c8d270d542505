"""Sample splitting and count weighting for heavily-binned regimes.

When a bin holds many more observations than the cell budget would like, the
leading samples are spent estimating which rows and columns are heavy, and
the trailing samples form the pair set scored by a weighted U-statistic. The
weight of cell (x, y) is 1 / ((1 + ax[x]) (1 + ay[y])), which factorizes, so
the count closed form carries over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ustat import (
    DiscretePairSample,
    InsufficientSampleError,
    _u_from_counts,
    u_statistic_naive,
)

__all__ = [
    "SplitPlan",
    "FlatteningWeights",
    "split_dataset",
    "flattening_weights",
    "split_norm_sq",
    "split_distance_sq",
    "weighted_u_statistic",
    "weighted_u_statistic_naive",
    "omega_weight",
]


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic three-way split of one bin's observations.

    dx holds the first t1 x-values, dy the next t2 y-values, and dxy the
    final 2t + 4 complete pairs; the stretch between t1 + t2 and 2t is
    discarded so the three parts never overlap.
    """

    dx: np.ndarray
    dy: np.ndarray
    dxy: DiscretePairSample
    t: int
    t1: int
    t2: int

    def __post_init__(self) -> None:
        if self.t < 0 or self.t1 < 0 or self.t2 < 0:
            raise ValueError("split sizes must be nonnegative")
        if self.t1 > self.t or self.t2 > self.t:
            raise ValueError("t1 and t2 cannot exceed t")
        if len(self.dx) != self.t1 or len(self.dy) != self.t2:
            raise ValueError("dx, dy lengths must equal t1, t2")
        if self.dxy.n != 2 * self.t + 4:
            raise ValueError("dxy must hold exactly 2t + 4 pairs")
        object.__setattr__(self, "dx", np.asarray(self.dx, dtype=np.int64))
        object.__setattr__(self, "dy", np.asarray(self.dy, dtype=np.int64))


def split_dataset(sample: DiscretePairSample) -> SplitPlan:
    """Split one bin's paired sample into marginal and pair parts.

    Trailing observations are dropped until the size is 4 mod 4 relative to
    the split sizes: with sigma' = 4t + 4 usable observations, the first
    t1 = min(t, ell1) feed the x counts, the next t2 = min(t, ell2) feed the
    y counts, positions t1 + t2 .. 2t are unused, and the last 2t + 4 are
    kept as pairs.
    """
    sigma = sample.n
    if sigma < 4:
        raise InsufficientSampleError(f"need at least 4 observations, got {sigma}")
    sigma_prime = sigma - (sigma - 4) % 4
    t = (sigma_prime - 4) // 4
    t1 = min(t, sample.ell1)
    t2 = min(t, sample.ell2)
    dx = sample.xs[:t1]
    dy = sample.ys[t1:t1 + t2]
    pair_lo = 2 * t
    dxy = DiscretePairSample(
        sample.xs[pair_lo:sigma_prime], sample.ys[pair_lo:sigma_prime],
        ell1=sample.ell1, ell2=sample.ell2)
    return SplitPlan(dx=dx, dy=dy, dxy=dxy, t=t, t1=t1, t2=t2)


@dataclass(frozen=True)
class FlatteningWeights:
    """Row and column counts from the marginal parts of a split.

    Cell (x, y) receives multiplicative weight 1 / ((1 + ax[x]) (1 + ay[y])).
    """

    ax: np.ndarray
    ay: np.ndarray

    def __post_init__(self) -> None:
        ax = np.asarray(self.ax, dtype=np.int64)
        ay = np.asarray(self.ay, dtype=np.int64)
        if ax.ndim != 1 or ay.ndim != 1:
            raise ValueError("ax, ay must be vectors")
        if np.any(ax < 0) or np.any(ay < 0):
            raise ValueError("counts must be nonnegative")
        ax.setflags(write=False)
        ay.setflags(write=False)
        object.__setattr__(self, "ax", ax)
        object.__setattr__(self, "ay", ay)

    def row_factors(self) -> np.ndarray:
        """1 / (1 + ax) per row."""
        return 1.0 / (1.0 + self.ax)

    def col_factors(self) -> np.ndarray:
        """1 / (1 + ay) per column."""
        return 1.0 / (1.0 + self.ay)

    def cell_weights(self) -> np.ndarray:
        """Full (ell1, ell2) weight matrix."""
        return np.outer(self.row_factors(), self.col_factors())


def flattening_weights(plan: SplitPlan) -> FlatteningWeights:
    """Occupancy counts of dx per row and dy per column."""
    ell1 = plan.dxy.ell1
    ell2 = plan.dxy.ell2
    ax = np.bincount(plan.dx - 1, minlength=ell1)[:ell1]
    ay = np.bincount(plan.dy - 1, minlength=ell2)[:ell2]
    return FlatteningWeights(ax=ax, ay=ay)


def split_norm_sq(p: np.ndarray, weights: FlatteningWeights) -> float:
    """Weighted squared norm sum_xy p_xy^2 / ((1 + ax)(1 + ay))."""
    p = np.asarray(p, dtype=np.float64)
    return float((p ** 2 * weights.cell_weights()).sum())


def split_distance_sq(p: np.ndarray, q: np.ndarray,
                      weights: FlatteningWeights) -> float:
    """Weighted squared distance between two tables of equal shape."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    return float(((p - q) ** 2 * weights.cell_weights()).sum())


def weighted_u_statistic(plan: SplitPlan,
                         weights: FlatteningWeights | None = None) -> float:
    """Count closed form of the weighted U-statistic on the pair part.

    Unbiased, conditionally on the marginal parts, for the weighted squared
    independence gap ``split_distance_sq(p_xy, p_x p_y, weights)``. Weights
    default to ``flattening_weights(plan)``; passing them explicitly lets
    tests fix arbitrary row and column counts.
    """
    if weights is None:
        weights = flattening_weights(plan)
    if plan.dxy.n < 4:
        raise InsufficientSampleError("pair part holds fewer than 4 observations")
    return float(_u_from_counts(plan.dxy.counts(),
                                ux=weights.row_factors(),
                                vy=weights.col_factors()))


def weighted_u_statistic_naive(plan: SplitPlan,
                               weights: FlatteningWeights | None = None) -> float:
    """Kernel-enumeration form of the weighted statistic, for tests only."""
    if weights is None:
        weights = flattening_weights(plan)
    return u_statistic_naive(plan.dxy, cell_weights=weights.cell_weights())


def omega_weight(sigma: int, ell1: int, ell2: int) -> float:
    """Per-bin scale sqrt(min(sigma, ell1) * min(sigma, ell2))."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return float(np.sqrt(min(sigma, ell1) * min(sigma, ell2)))
