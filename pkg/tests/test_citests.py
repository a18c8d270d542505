import json
import math

import numpy as np
import pytest

from citest.binning import BinnedDataset, BinPlan
from citest.citests import (
    MODES,
    TestConfig as Config,
    poissonize,
    statistic_fixed_discrete,
    statistic_scaling_discrete,
    test as run_test,
)
from citest.data import TripleDataset


class OverflowRng:
    """Stub generator whose Poisson draw always exceeds the sample size."""

    def poisson(self, lam):
        return 10 ** 9


def dependent_dataset(rng, n, ell=3):
    x = rng.integers(1, ell + 1, n)
    return TripleDataset(x=x, y=x, z=rng.random(n))


def independent_dataset(rng, n, ell=3):
    return TripleDataset(x=rng.integers(1, ell + 1, n),
                         y=rng.integers(1, ell + 1, n), z=rng.random(n))


def test_config_validation():
    for bad in (
        dict(mode="nope"),
        dict(mode="fixed_discrete", calibration="fixed"),  # zeta missing
        dict(mode="fixed_discrete", calibration="analytic"),
        dict(mode="continuous"),  # s missing
        dict(mode="continuous", s=-1.0),
        dict(mode="fixed_discrete", s=0.0),
        dict(mode="fixed_discrete", zeta=0.0),
        dict(mode="fixed_discrete", permutations=0),
        dict(mode="fixed_discrete", alpha=0.0),
        dict(mode="fixed_discrete", alpha=1.0),
        dict(mode="fixed_discrete", eta=1.0),
    ):
        with pytest.raises(ValueError):
            Config(**bad)
    assert Config(mode="unbounded").eta == 0.05


def test_poissonize():
    rng = np.random.default_rng(0)
    draws = np.array([poissonize(100, rng)[0] for _ in range(4000)])
    assert draws.mean() == pytest.approx(50.0, abs=0.5)
    n_eff, overflow = poissonize(4, np.random.default_rng(5))
    assert overflow == (n_eff > 4)
    with pytest.raises(ValueError):
        poissonize(-1, rng)


FIXTURE_U = 2.0 / 3.0


def frozen_binned():
    """Bin 0 is the hand-computed fixture with U = 2/3; bin 1 is too small
    to score."""
    return BinnedDataset(
        xs_by_bin=(np.array([1, 1, 2, 2]), np.array([1, 2, 1])),
        ys_by_bin=(np.array([1, 1, 2, 2]), np.array([2, 1, 1])),
        ell1=2, ell2=2, plan=BinPlan(d=2))


def test_fixed_statistic_frozen_value():
    total, rows = statistic_fixed_discrete(frozen_binned())
    assert total == pytest.approx(4 * FIXTURE_U, abs=1e-15)
    assert rows[0] == (4, 1.0, pytest.approx(FIXTURE_U))
    assert rows[1][0] == 3 and math.isnan(rows[1][2])


def test_scaling_statistic_frozen_value():
    # sigma = 4 gives t = 0, unit weights, omega = 2, so the scored bin
    # contributes 4 * 2 * (2/3)
    total, rows = statistic_scaling_discrete(frozen_binned())
    assert total == pytest.approx(16.0 / 3.0, abs=1e-14)
    assert rows[0][1] == pytest.approx(2.0)
    assert math.isnan(rows[1][2]) and rows[1][1] == pytest.approx(2.0)


def test_scaling_statistic_optional_shuffle():
    rng = np.random.default_rng(21)
    binned = BinnedDataset(
        xs_by_bin=(rng.integers(1, 3, 40),),
        ys_by_bin=(rng.integers(1, 3, 40),),
        ell1=2, ell2=2, plan=BinPlan(d=1))
    plain, _ = statistic_scaling_discrete(binned)
    shuffled, _ = statistic_scaling_discrete(binned,
                                             rng=np.random.default_rng(2))
    assert shuffled != plain  # different split, same distribution


@pytest.mark.parametrize("mode", ["fixed_discrete", "scaling_discrete"])
def test_discrete_modes_end_to_end(mode):
    rng = np.random.default_rng(30)
    config = Config(mode=mode, permutations=60, seed=7)
    report = run_test(dependent_dataset(rng, 400), config)
    assert report.rejected
    assert report.p_value <= 0.05
    report = run_test(independent_dataset(rng, 400), config)
    assert not report.rejected
    assert report.n_effective < 400
    assert report.plan.d >= 1
    assert len(report.per_bin) == report.plan.total_cells


def test_continuous_mode_end_to_end():
    rng = np.random.default_rng(31)
    n = 500
    u = rng.random(n)
    dep = TripleDataset(x=u, y=np.clip(u + 0.02 * rng.random(n), 0, 1),
                        z=rng.random(n), x_kind="real", y_kind="real")
    config = Config(mode="continuous", s=1.0, permutations=60, seed=3)
    assert run_test(dep, config).rejected
    ind = TripleDataset(x=rng.random(n), y=rng.random(n), z=rng.random(n),
                        x_kind="real", y_kind="real")
    report = run_test(ind, config)
    assert not report.rejected
    assert report.plan.d_prime is not None


def test_multivariate_mode_both_kinds():
    rng = np.random.default_rng(32)
    n = 500
    z = rng.random((n, 2))
    x = rng.integers(1, 3, n)
    config = Config(mode="multivariate", permutations=40, seed=5)
    assert run_test(TripleDataset(x=x, y=x, z=z), config).rejected
    u = rng.random(n)
    real = TripleDataset(x=u, y=u, z=z, x_kind="real", y_kind="real")
    config = Config(mode="multivariate", s=1.0, permutations=40, seed=5)
    report = run_test(real, config)
    assert report.rejected
    assert report.plan.d_z == 2


def test_unbounded_mode_end_to_end():
    rng = np.random.default_rng(33)
    n = 800
    x = rng.integers(1, 3, n)
    dep = TripleDataset(x=x, y=x, z=rng.normal(size=n))
    config = Config(mode="unbounded", permutations=60, seed=9)
    report = run_test(dep, config)
    assert report.rejected
    # the plan's support comes from the held-out half
    lo, hi = report.plan.support[0]
    assert lo < hi
    assert report.n_input == n
    ind = TripleDataset(x=rng.integers(1, 3, n), y=rng.integers(1, 3, n),
                        z=rng.normal(size=n))
    assert not run_test(ind, config).rejected


def test_fixed_threshold_calibration():
    rng = np.random.default_rng(34)
    data = dependent_dataset(rng, 300)
    tiny = Config(mode="fixed_discrete", calibration="fixed", zeta=0.01)
    report = run_test(data, tiny)
    assert report.rejected
    assert report.p_value is None
    assert report.threshold_used == pytest.approx(0.01 * 300 ** 0.2)
    huge = Config(mode="fixed_discrete", calibration="fixed", zeta=1e6)
    assert not run_test(data, huge).rejected


def test_threshold_scales_by_mode():
    rng = np.random.default_rng(35)
    data = independent_dataset(rng, 200, ell=2)
    cfg = Config(mode="scaling_discrete", calibration="fixed", zeta=2.0)
    report = run_test(data, cfg)
    assert report.threshold_used == pytest.approx(
        math.sqrt(2.0 * report.plan.d))
    z = np.random.default_rng(36).random((200, 2))
    data2 = TripleDataset(x=data.x, y=data.y, z=z)
    cfg = Config(mode="multivariate", calibration="fixed", zeta=2.0)
    report = run_test(data2, cfg)
    assert report.threshold_used == pytest.approx(2.0 * report.plan.d)


def test_poisson_overflow_accepts():
    rng = np.random.default_rng(37)
    data = dependent_dataset(rng, 50)
    config = Config(mode="fixed_discrete")
    report = run_test(data, config, rng=OverflowRng())
    assert report.poisson_overflow
    assert report.decision == "accept"
    assert report.statistic is None
    assert report.p_value is None
    assert report.per_bin == ()


def test_kind_and_dimension_mismatches():
    rng = np.random.default_rng(38)
    real = TripleDataset(x=rng.random(50), y=rng.random(50), z=rng.random(50),
                         x_kind="real", y_kind="real")
    cat = independent_dataset(rng, 50)
    biv = TripleDataset(x=cat.x, y=cat.y, z=rng.random((50, 2)))
    mixed = TripleDataset(x=rng.random(50), y=cat.y, z=rng.random(50),
                          x_kind="real")
    cases = [
        (real, Config(mode="fixed_discrete")),
        (real, Config(mode="scaling_discrete")),
        (real, Config(mode="unbounded")),
        (cat, Config(mode="continuous", s=1.0)),
        (biv, Config(mode="fixed_discrete")),
        (biv, Config(mode="unbounded")),
        (mixed, Config(mode="multivariate")),
        (real, Config(mode="multivariate")),  # s missing for real pair
    ]
    for data, config in cases:
        with pytest.raises(ValueError):
            run_test(data, config)


def test_report_round_trips_to_json():
    rng = np.random.default_rng(39)
    report = run_test(independent_dataset(rng, 120),
                      Config(mode="fixed_discrete", permutations=20))
    blob = report.as_dict()
    assert blob["d"] == report.plan.d
    assert blob["d_prime"] is None
    assert blob["config"]["mode"] == "fixed_discrete"
    text = json.dumps(blob)
    assert "decision" in json.loads(text)


def test_runs_are_reproducible_from_seed():
    rng = np.random.default_rng(40)
    data = independent_dataset(rng, 250)
    config = Config(mode="scaling_discrete", permutations=50, seed=123)
    a = run_test(data, config)
    b = run_test(data, config)
    assert a.statistic == b.statistic
    assert a.p_value == b.p_value
    assert a.n_effective == b.n_effective


def test_modes_tuple_is_frozen():
    assert MODES == ("fixed_discrete", "scaling_discrete", "continuous",
                     "multivariate", "unbounded")
