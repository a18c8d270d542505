"""Conditional-independence tests built from binned U-statistics.

Pipeline: optionally Poissonize the sample size, bin by z, aggregate a
per-bin U-statistic, then decide by permutation p-value (default) or by a
fixed analytic threshold when an explicit constant is supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .binning import (
    BinnedDataset,
    BinPlan,
    continuous_plan,
    discretize_xy,
    bin_dataset,
    estimate_support,
    fixed_discrete_plan,
    multivariate_plan,
    scaling_discrete_plan,
    unbounded_plan,
)
from .calibration import permutation_pvalue
from .data import CATEGORY, REAL, TripleDataset
from .flatten import flattening_weights, omega_weight, split_dataset, weighted_u_statistic
from .ustat import DiscretePairSample, _u_from_counts, u_statistic_fast

__all__ = [
    "MODES",
    "TestConfig",
    "TestReport",
    "poissonize",
    "statistic_fixed_discrete",
    "statistic_scaling_discrete",
    "test",
]

MODES = ("fixed_discrete", "scaling_discrete", "continuous",
         "multivariate", "unbounded")
CALIBRATIONS = ("permutation", "fixed")


@dataclass(frozen=True)
class TestConfig:
    """Choices that determine a test run.

    mode selects the plan and statistic; s is the smoothness index for
    real-valued observations; zeta is the threshold constant for the fixed
    calibration and is required there; permutation calibration uses
    ``permutations`` reference draws and rejects when the p-value is at most
    ``alpha``. ``eta`` and ``c_const`` only matter for the unbounded mode's
    support estimate. ``poissonize=False`` keeps the whole sample instead of
    the Poisson(n/2) subsample; the simulation presets use it so rejection
    rates refer to the sample size actually generated.
    """

    mode: str
    s: float | None = None
    zeta: float | None = None
    calibration: str = "permutation"
    permutations: int = 100
    conservative: bool = False
    alpha: float = 0.05
    seed: int = 0
    eta: float = 0.05
    c_const: float = 1.0
    poissonize: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"calibration must be one of {CALIBRATIONS}")
        if self.calibration == "fixed" and self.zeta is None:
            raise ValueError("fixed calibration needs a zeta constant")
        if self.mode == "continuous" and (self.s is None or self.s <= 0):
            raise ValueError("continuous mode needs a positive smoothness s")
        if self.s is not None and self.s <= 0:
            raise ValueError("smoothness must be positive")
        if self.zeta is not None and self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.permutations < 1:
            raise ValueError("permutations must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if not (0.0 <= self.eta < 1.0):
            raise ValueError("eta must lie in [0, 1)")


@dataclass(frozen=True)
class TestReport:
    """Everything a run decided and the evidence behind it.

    per_bin lists (size, omega, u_value) per bin in index order; bins of
    fewer than 4 points report a NaN u_value and contribute nothing.
    decision is "reject" or "accept".
    """

    statistic: float | None
    per_bin: tuple[tuple[int, float, float], ...]
    n_input: int
    n_effective: int
    plan: BinPlan | None
    decision: str
    p_value: float | None
    threshold_used: float | None
    poisson_overflow: bool
    seed: int
    config: TestConfig

    @property
    def rejected(self) -> bool:
        return self.decision == "reject"

    def as_dict(self) -> dict[str, Any]:
        """JSON-ready view with the plan and config flattened to plain types."""
        plan = None
        if self.plan is not None:
            plan = {
                "d": self.plan.d,
                "d_z": self.plan.d_z,
                "d_prime": self.plan.d_prime,
                "support": [list(iv) for iv in self.plan.support],
                "threshold_scale": self.plan.threshold_scale,
                "scaling_ok": self.plan.scaling_ok,
            }
        cfg = {
            "mode": self.config.mode,
            "s": self.config.s,
            "zeta": self.config.zeta,
            "calibration": self.config.calibration,
            "permutations": self.config.permutations,
            "conservative": self.config.conservative,
            "alpha": self.config.alpha,
            "seed": self.config.seed,
            "eta": self.config.eta,
            "c_const": self.config.c_const,
            "poissonize": self.config.poissonize,
        }
        return {
            "decision": self.decision,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "threshold_used": self.threshold_used,
            "n_input": self.n_input,
            "n_effective": self.n_effective,
            "poisson_overflow": self.poisson_overflow,
            "d": None if self.plan is None else self.plan.d,
            "d_prime": None if self.plan is None else self.plan.d_prime,
            "seed": self.seed,
            "plan": plan,
            "per_bin": [list(row) for row in self.per_bin],
            "config": cfg,
        }


def poissonize(n: int, rng: np.random.Generator) -> tuple[int, bool]:
    """Draw N ~ Poisson(n / 2); the second element flags N > n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    n_eff = int(rng.poisson(n / 2.0))
    return n_eff, n_eff > n


def _draw_effective_n(n: int, config: TestConfig,
                      rng: np.random.Generator) -> tuple[int, bool]:
    if not config.poissonize:
        return n, False
    return poissonize(n, rng)


def statistic_fixed_discrete(binned: BinnedDataset):
    """Sum over bins of size times the unweighted U-statistic.

    Bins with fewer than 4 observations are skipped. Returns the statistic
    and the per-bin (size, omega, u_value) rows; omega is 1 here.
    """
    total = 0.0
    rows = []
    for m in range(len(binned.xs_by_bin)):
        sigma = len(binned.xs_by_bin[m])
        if sigma < 4:
            rows.append((sigma, 1.0, float("nan")))
            continue
        u = u_statistic_fast(binned.pair_sample(m))
        total += sigma * u
        rows.append((sigma, 1.0, u))
    return total, tuple(rows)


def statistic_scaling_discrete(binned: BinnedDataset, rng=None):
    """Sum over bins of size times omega times the weighted U-statistic.

    Each qualifying bin is split into marginal and pair parts in sample
    order; passing a generator shuffles each bin first, which only matters
    when the row order is not exchangeable. omega is
    sqrt(min(size, ell1) * min(size, ell2)).
    """
    total = 0.0
    rows = []
    for m in range(len(binned.xs_by_bin)):
        xs = binned.xs_by_bin[m]
        ys = binned.ys_by_bin[m]
        sigma = len(xs)
        omega = omega_weight(sigma, binned.ell1, binned.ell2)
        if sigma < 4:
            rows.append((sigma, omega, float("nan")))
            continue
        if rng is not None:
            order = rng.permutation(sigma)
            xs = xs[order]
            ys = ys[order]
        plan = split_dataset(DiscretePairSample(
            xs, ys, ell1=binned.ell1, ell2=binned.ell2))
        u = weighted_u_statistic(plan, flattening_weights(plan))
        total += sigma * omega * u
        rows.append((sigma, omega, u))
    return total, tuple(rows)


def _permuted_rows(xs: np.ndarray, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    mat = np.tile(xs, (count, 1))
    return rng.permuted(mat, axis=1)


def _counts_by_row(xcodes: np.ndarray, ycodes: np.ndarray,
                   ell1: int, ell2: int) -> np.ndarray:
    """Cell counts per row of permuted codes; ycodes broadcasts over rows."""
    rows, _ = xcodes.shape
    flat = (xcodes - 1) * ell2 + (np.broadcast_to(ycodes, xcodes.shape) - 1)
    offset = np.arange(rows)[:, None] * (ell1 * ell2)
    cnt = np.bincount((flat + offset).ravel(), minlength=rows * ell1 * ell2)
    return cnt.reshape(rows, ell1, ell2).astype(np.float64)


def _fixed_bin_batch(xs, ys, ell1, ell2, count, rng):
    sigma = len(xs)
    perms = _permuted_rows(np.asarray(xs), count, rng)
    counts = _counts_by_row(perms, np.asarray(ys), ell1, ell2)
    return sigma * _u_from_counts(counts)


def _scaling_bin_batch(xs, ys, ell1, ell2, count, rng):
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    sigma = len(xs)
    sigma_prime = sigma - (sigma - 4) % 4
    t = (sigma_prime - 4) // 4
    t1 = min(t, ell1)
    t2 = min(t, ell2)
    omega = omega_weight(sigma, ell1, ell2)
    perms = _permuted_rows(xs, count, rng)
    if t1 > 0:
        dx = perms[:, :t1] - 1
        offset = np.arange(count)[:, None] * ell1
        ax = np.bincount((dx + offset).ravel(),
                         minlength=count * ell1).reshape(count, ell1)
    else:
        ax = np.zeros((count, ell1))
    ay = np.bincount(ys[t1:t1 + t2] - 1, minlength=ell2)[:ell2]
    ux = 1.0 / (1.0 + ax)
    vy = 1.0 / (1.0 + ay)
    counts = _counts_by_row(perms[:, 2 * t:sigma_prime],
                            ys[2 * t:sigma_prime], ell1, ell2)
    return sigma * omega * _u_from_counts(counts, ux=ux, vy=vy)


statistic_fixed_discrete._bin_batch = _fixed_bin_batch
statistic_scaling_discrete._bin_batch = _scaling_bin_batch


def _require_categorical(data: TripleDataset, mode: str) -> None:
    if data.x_kind != CATEGORY or data.y_kind != CATEGORY:
        raise ValueError(f"{mode} mode expects categorical observations")


def _discretized(data: TripleDataset, d_prime: int) -> TripleDataset:
    x = discretize_xy(data.x, d_prime) if data.x_kind == REAL else data.x
    y = discretize_xy(data.y, d_prime) if data.y_kind == REAL else data.y
    ell1 = d_prime if data.x_kind == REAL else data.ell1
    ell2 = d_prime if data.y_kind == REAL else data.ell2
    return TripleDataset(x, y, data.z, ell1=ell1, ell2=ell2)


def _accept_overflow(config: TestConfig, n_input: int, n_eff: int,
                     plan: BinPlan | None) -> TestReport:
    return TestReport(
        statistic=None, per_bin=(), n_input=n_input, n_effective=n_eff,
        plan=plan, decision="accept", p_value=None, threshold_used=None,
        poisson_overflow=True, seed=config.seed, config=config)


def test(data: TripleDataset, config: TestConfig,
         rng: np.random.Generator | None = None) -> TestReport:
    """Run the conditional-independence test selected by ``config``.

    The generator drives Poissonization, permutation draws and any split
    shuffling; when omitted it is seeded from ``config.seed`` so a run is
    reproducible from the report alone.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n_input = data.n
    mode = config.mode

    if mode == "unbounded":
        _require_categorical(data, mode)
        if data.d_z != 1:
            raise ValueError("unbounded mode supports univariate z only")
        n_test = n_input // 2
        if n_test < 1:
            raise ValueError("unbounded mode needs at least 2 observations")
        test_half = data.head(n_test)
        support = estimate_support(data.tail(n_test).z[:, 0],
                                   eta=config.eta, c_const=config.c_const)
        plan = unbounded_plan(n_test, support)
        n_eff, overflow = _draw_effective_n(n_test, config, rng)
        if overflow:
            return _accept_overflow(config, n_input, n_eff, plan)
        binned = bin_dataset(test_half.head(n_eff), plan,
                             discard_out_of_support=True)
        stat_fn = statistic_fixed_discrete
        tau = None if config.zeta is None else config.zeta * math.sqrt(plan.d)
    elif mode == "fixed_discrete":
        _require_categorical(data, mode)
        if data.d_z != 1:
            raise ValueError("fixed_discrete mode supports univariate z only")
        plan = fixed_discrete_plan(n_input)
        n_eff, overflow = _draw_effective_n(n_input, config, rng)
        if overflow:
            return _accept_overflow(config, n_input, n_eff, plan)
        binned = bin_dataset(data.head(n_eff), plan)
        stat_fn = statistic_fixed_discrete
        tau = None if config.zeta is None else config.zeta * n_input ** 0.2
    elif mode == "scaling_discrete":
        _require_categorical(data, mode)
        if data.d_z != 1:
            raise ValueError("scaling_discrete mode supports univariate z only")
        plan = scaling_discrete_plan(n_input, int(data.ell1), int(data.ell2))
        n_eff, overflow = _draw_effective_n(n_input, config, rng)
        if overflow:
            return _accept_overflow(config, n_input, n_eff, plan)
        binned = bin_dataset(data.head(n_eff), plan)
        stat_fn = statistic_scaling_discrete
        tau = None if config.zeta is None else math.sqrt(config.zeta * plan.d)
    elif mode == "continuous":
        if data.x_kind != REAL or data.y_kind != REAL:
            raise ValueError("continuous mode expects real observations")
        if data.d_z != 1:
            raise ValueError("continuous mode supports univariate z only")
        plan = continuous_plan(n_input, float(config.s))
        n_eff, overflow = _draw_effective_n(n_input, config, rng)
        if overflow:
            return _accept_overflow(config, n_input, n_eff, plan)
        binned = bin_dataset(_discretized(data.head(n_eff), plan.d_prime), plan)
        stat_fn = statistic_scaling_discrete
        tau = None if config.zeta is None else math.sqrt(config.zeta * plan.d)
    elif mode == "multivariate":
        real_xy = data.x_kind == REAL or data.y_kind == REAL
        if real_xy and (data.x_kind != REAL or data.y_kind != REAL):
            raise ValueError("multivariate mode needs x and y of one kind")
        if real_xy and config.s is None:
            raise ValueError("real observations need a smoothness s")
        plan = multivariate_plan(n_input, data.d_z,
                                 s=float(config.s) if real_xy else None)
        n_eff, overflow = _draw_effective_n(n_input, config, rng)
        if overflow:
            return _accept_overflow(config, n_input, n_eff, plan)
        subset = data.head(n_eff)
        if real_xy:
            subset = _discretized(subset, plan.d_prime)
            stat_fn = statistic_scaling_discrete
        else:
            stat_fn = statistic_fixed_discrete
        binned = bin_dataset(subset, plan)
        tau = None if config.zeta is None else \
            config.zeta * float(plan.d) ** (plan.d_z / 2.0)
    else:  # pragma: no cover - guarded by TestConfig
        raise ValueError(f"unknown mode {mode!r}")

    statistic, per_bin = stat_fn(binned)
    if config.calibration == "permutation":
        p_value = permutation_pvalue(binned, stat_fn, config.permutations,
                                     rng, conservative=config.conservative)
        decision = "reject" if p_value <= config.alpha else "accept"
        threshold = tau
    else:
        p_value = None
        threshold = tau
        decision = "reject" if statistic >= threshold else "accept"
    return TestReport(
        statistic=float(statistic), per_bin=per_bin, n_input=n_input,
        n_effective=n_eff, plan=plan, decision=decision, p_value=p_value,
        threshold_used=threshold, poisson_overflow=False, seed=config.seed,
        config=config)
