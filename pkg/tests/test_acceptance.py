"""End-to-end acceptance gate: one test per shipped guarantee.

Each test measures everything it needs, then records a single PASS/FAIL
line; the conftest terminal hook replays the lines as a scoreboard after
the run. Seeds are frozen so every number here is reproducible. Budgeted
runtimes are asserted where a guarantee states one.
"""

import json
import math
import time
from itertools import product

import numpy as np

from citest.citests import TestConfig as Config, poissonize, test as run_test
from citest.data import TripleDataset
from citest.distributions import QuadratureSpec, model_ci_distance
from citest.flatten import (
    FlatteningWeights,
    SplitPlan,
    flattening_weights,
    split_dataset,
    split_distance_sq,
    weighted_u_statistic,
    weighted_u_statistic_naive,
)
from citest.generators import (
    AdversarialDiscreteSpec,
    CouplingSpec,
    adversarial_discrete_model,
    ci_coupling,
    continuous_null_model,
    coupling_displacement_bound,
    coupling_uniformity,
    default_bump,
    sample_discrete_null,
)
from citest.harness import ExperimentSpec, run_experiment
from citest.smoothness import check_inclusions, empirical_lipschitz
from citest.ustat import (
    DiscretePairSample,
    _u_from_counts,
    u_statistic_fast,
    u_statistic_naive,
)

RESULTS: dict[int, str] = {}

SIZE_GRID = tuple(range(100, 1001, 100))
FIGURE_SEED = 1001


def record(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def _sweep(generator, mode, s, sizes, replications, seed, params=None):
    spec = ExperimentSpec(
        generator=generator, sizes=sizes, replications=replications,
        mode=mode, s=s, permutations=100, alpha=0.05, seed=seed,
        generator_params=params or {})
    return run_experiment(spec, workers=1)


def _nondecreasing_within_2se(rows) -> bool:
    return all(
        rows[i + 1].rejection_rate - rows[i].rejection_rate
        >= -2.0 * math.hypot(rows[i].se, rows[i + 1].se)
        for i in range(len(rows) - 1))


def test_discrete_power_curve():
    t0 = time.monotonic()
    null = _sweep("discrete-null", "scaling_discrete", None,
                  SIZE_GRID, 100, FIGURE_SEED)
    alt = _sweep("discrete-alt", "scaling_discrete", None,
                 SIZE_GRID, 100, FIGURE_SEED)
    elapsed = time.monotonic() - t0
    null_ok = all(0.01 <= row.rejection_rate <= 0.12
                  for row in null.rows if row.n >= 500)
    power = alt.rejection_rates()[1000]
    monotone = _nondecreasing_within_2se(alt.rows)
    ok = null_ok and power >= 0.95 and monotone and elapsed <= 900
    record(1, ok,
           f"size in [0.01,0.12] for n>=500: {null_ok}; "
           f"power(1000)={power:.2f} vs 0.95; "
           f"nondecreasing within 2 SE: {monotone}; {elapsed:.0f}s of 900s")


def test_continuous_power_curve():
    t0 = time.monotonic()
    null = _sweep("continuous-null", "continuous", 1.0,
                  SIZE_GRID, 100, FIGURE_SEED)
    alt = _sweep("continuous-alt", "continuous", 1.0,
                 SIZE_GRID, 100, FIGURE_SEED)
    elapsed = time.monotonic() - t0
    null_ok = all(0.01 <= row.rejection_rate <= 0.12
                  for row in null.rows if row.n >= 500)
    power = alt.rejection_rates()[1000]
    ok = null_ok and power >= 0.80 and elapsed <= 900
    record(2, ok,
           f"size in [0.01,0.12] for n>=500: {null_ok}; "
           f"power(1000)={power:.2f} vs 0.80; {elapsed:.0f}s of 900s")


def _pairs_from_counts(counts: np.ndarray) -> DiscretePairSample:
    ell1, ell2 = counts.shape
    reps = counts.ravel().astype(np.int64)
    xs = np.repeat(np.repeat(np.arange(1, ell1 + 1), ell2), reps)
    ys = np.repeat(np.tile(np.arange(1, ell2 + 1), ell1), reps)
    return DiscretePairSample(xs, ys, ell1=ell1, ell2=ell2)


def test_u_statistic_unbiasedness():
    t0 = time.monotonic()
    rng = np.random.default_rng(30303)
    tables = [
        ("uniform 2x2", np.full((2, 2), 0.25)),
        ("diagonal 2x2", np.array([[0.5, 0.0], [0.0, 0.5]])),
        ("random 3x4", rng.dirichlet(np.ones(12)).reshape(3, 4)),
    ]
    reps = 100_000
    ok = True
    worst_z = 0.0
    for name, p in tables:
        target = float(((p - np.outer(p.sum(axis=1), p.sum(axis=0))) ** 2).sum())
        for sigma in (4, 8, 16):
            counts = rng.multinomial(sigma, p.ravel(), size=reps)
            counts = counts.reshape(reps, *p.shape)
            values = _u_from_counts(counts)
            # the vectorized closed form must replay the public op exactly
            for idx in rng.choice(reps, 25, replace=False):
                direct = u_statistic_fast(_pairs_from_counts(counts[idx]))
                assert abs(direct - values[idx]) <= 1e-12
            se = values.std(ddof=1) / math.sqrt(reps)
            z = abs(values.mean() - target) / se
            worst_z = max(worst_z, z)
            ok = ok and z <= 3.0
    elapsed = time.monotonic() - t0
    ok = ok and elapsed <= 60
    record(3, ok,
           f"9 table/sigma cells x {reps} reps, worst |z|={worst_z:.2f} "
           f"vs 3 SE; {elapsed:.0f}s of 60s")


def test_oracle_equivalence():
    t0 = time.monotonic()
    rng = np.random.default_rng(40404)
    worst_plain = 0.0
    worst_weighted = 0.0
    datasets = 220
    for _ in range(datasets):
        ell1 = int(rng.integers(1, 6))
        ell2 = int(rng.integers(1, 6))
        sigma = int(rng.integers(4, 17))
        sample = DiscretePairSample(
            rng.integers(1, ell1 + 1, sigma), rng.integers(1, ell2 + 1, sigma),
            ell1=ell1, ell2=ell2)
        worst_plain = max(worst_plain, abs(
            u_statistic_fast(sample) - u_statistic_naive(sample)))
        plan = split_dataset(sample)
        weights = flattening_weights(plan)
        worst_weighted = max(worst_weighted, abs(
            weighted_u_statistic(plan, weights)
            - weighted_u_statistic_naive(plan, weights)))
    elapsed = time.monotonic() - t0
    ok = worst_plain <= 1e-12 and worst_weighted <= 1e-12 and elapsed <= 60
    record(4, ok,
           f"{datasets} datasets: max |fast-naive|={worst_plain:.2e}, "
           f"max weighted gap={worst_weighted:.2e} vs 1e-12; "
           f"{elapsed:.0f}s of 60s")


def _pair_only_plan(sample: DiscretePairSample) -> SplitPlan:
    empty = np.empty(0, dtype=np.int64)
    return SplitPlan(dx=empty, dy=empty, dxy=sample,
                     t=(sample.n - 4) // 2, t1=0, t2=0)


def test_weighted_conditional_unbiasedness():
    rng = np.random.default_rng(50505)
    reps = 100_000

    # exhaustive sigma' = 4: all 256 outcome tuples, probability-weighted
    p4 = np.array([[0.35, 0.15], [0.05, 0.45]])
    w4 = FlatteningWeights(ax=[1, 0], ay=[0, 2])
    cells = list(product(range(2), repeat=2))
    total = 0.0
    for outcome in product(range(4), repeat=4):
        prob = float(np.prod([p4[cells[c]] for c in outcome]))
        xs = np.array([cells[c][0] + 1 for c in outcome])
        ys = np.array([cells[c][1] + 1 for c in outcome])
        sample = DiscretePairSample(xs, ys, ell1=2, ell2=2)
        total += prob * weighted_u_statistic(_pair_only_plan(sample), w4)
    target4 = split_distance_sq(
        p4, np.outer(p4.sum(axis=1), p4.sum(axis=0)), w4)
    enum_gap = abs(total - target4)

    configs = [
        (np.array([[0.20, 0.30], [0.25, 0.25]]),
         FlatteningWeights(ax=[0, 1], ay=[4, 0]), 8),
        (np.array([[0.10, 0.15, 0.25], [0.30, 0.05, 0.15]]),
         FlatteningWeights(ax=[2, 0], ay=[1, 0, 3]), 12),
        (rng.dirichlet(np.ones(9)).reshape(3, 3),
         FlatteningWeights(ax=[1, 2, 0], ay=[0, 1, 1]), 16),
    ]
    worst_z = 0.0
    mc_ok = True
    for p, weights, sigma in configs:
        target = split_distance_sq(
            p, np.outer(p.sum(axis=1), p.sum(axis=0)), weights)
        counts = rng.multinomial(sigma, p.ravel(), size=reps)
        counts = counts.reshape(reps, *p.shape)
        values = _u_from_counts(counts, ux=weights.row_factors(),
                                vy=weights.col_factors())
        for idx in rng.choice(reps, 10, replace=False):
            direct = weighted_u_statistic(
                _pair_only_plan(_pairs_from_counts(counts[idx])), weights)
            assert abs(direct - values[idx]) <= 1e-12
        se = values.std(ddof=1) / math.sqrt(reps)
        z = abs(values.mean() - target) / se
        worst_z = max(worst_z, z)
        mc_ok = mc_ok and z <= 3.0
    ok = enum_gap <= 1e-12 and mc_ok
    record(5, ok,
           f"exhaustive sigma'=4 gap {enum_gap:.2e} vs 1e-12; "
           f"3 fixed-weight configs x {reps} reps, worst |z|={worst_z:.2f} "
           f"vs 3 SE")


def _dependent_box(n: int, rng: np.random.Generator) -> TripleDataset:
    x = rng.uniform(-1.0, 1.0, n)
    y = np.clip(x + rng.uniform(-0.05, 0.05, n), -1.0, 1.0)
    z = rng.uniform(-1.0, 1.0, n)
    return TripleDataset(x, y, z, x_kind="real", y_kind="real")


def _four_level(data: TripleDataset) -> TripleDataset:
    # 4 equal-width levels on [-1, 1]; z rescaled onto the plan's [0, 1]
    def codes(v):
        idx = np.floor(4.0 * (v + 1.0) / 2.0).astype(np.int64)
        return np.minimum(idx, 3) + 1

    return TripleDataset(codes(data.x), codes(data.y),
                         (data.z[:, 0] + 1.0) / 2.0, ell1=4, ell2=4)


def test_coupling_removes_only_fine_scale_dependence():
    spec = CouplingSpec(m=50, big_m=1.0)
    bound = coupling_displacement_bound(spec)
    config = Config(mode="fixed_discrete", permutations=100, alpha=0.05)
    reps = 200
    max_disp = 0.0
    uniform_frac = 0.0
    cells_tested = 0
    reject_original = 0
    reject_coupled = 0
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([60606, rep]))
        data = _dependent_box(10_000, rng)
        coupled = ci_coupling(data, spec, rng)
        disp = np.sqrt((coupled.x - data.x) ** 2 + (coupled.y - data.y) ** 2
                       + (coupled.z[:, 0] - data.z[:, 0]) ** 2)
        max_disp = max(max_disp, float(disp.max()))
        if rep == 0:
            uniform_frac, cells_tested = coupling_uniformity(coupled, spec)
        reject_original += run_test(
            _four_level(data), config,
            rng=np.random.default_rng(np.random.SeedSequence([60607, rep]))
        ).rejected
        reject_coupled += run_test(
            _four_level(coupled), config,
            rng=np.random.default_rng(np.random.SeedSequence([60608, rep]))
        ).rejected
    rate_original = reject_original / reps
    rate_coupled = reject_coupled / reps
    disp_ok = max_disp <= bound + 1e-12
    uniform_ok = uniform_frac >= 0.95
    ok = disp_ok and uniform_ok and rate_coupled <= 0.10 \
        and rate_original >= 0.95
    record(6, ok,
           f"(a) max displacement {max_disp:.4f} vs bound {bound:.4f}: "
           f"{disp_ok}; (b) uniform fraction {uniform_frac:.3f} over "
           f"{cells_tested} cells vs 0.95: {uniform_ok}; (c) coupled "
           f"rejection {rate_coupled:.2f} vs <=0.10, original "
           f"{rate_original:.2f} vs >=0.95")


def test_adversarial_separation_closed_form():
    rng = np.random.default_rng(70707)
    bump = default_bump()
    worst_rel = 0.0
    for _ in range(5):
        ell1 = int(2 * rng.integers(1, 3))
        ell2 = int(2 * rng.integers(1, 3))
        d = int(rng.integers(1, 9))
        cap = 1.0 / (ell1 * ell2 * math.sqrt(d) * bump.sup_norm)
        rho = float(rng.uniform(0.2, 0.8)) * cap
        spec = AdversarialDiscreteSpec(
            ell1=ell1, ell2=ell2, rho=rho,
            nu=rng.choice([-1.0, 1.0], d),
            delta=rng.choice([-1.0, 1.0], (ell1 // 2, ell2 // 2)),
            bump=bump)
        closed = ell1 * ell2 * rho * math.sqrt(d) * bump.abs_integral
        # 1680 panels divide every d <= 8, aligning cells with the rule
        quad = model_ci_distance(
            adversarial_discrete_model(spec),
            QuadratureSpec(z_points=1680, xy_points=2))
        worst_rel = max(worst_rel, abs(quad - closed) / closed)
    ok = worst_rel <= 1e-4
    record(7, ok,
           f"5 draws: worst relative quadrature gap {worst_rel:.2e} vs 1e-4")


def test_smoothness_constants_and_inclusions():
    report = empirical_lipschitz(continuous_null_model(), "tv", grid_size=256)
    rel = abs(report.constant - 2.0) / 2.0
    inclusions = check_inclusions(trials=1000,
                                  rng=np.random.default_rng(80808))
    ok = rel <= 0.05 and inclusions.passed
    record(8, ok,
           f"marginal-TV constant {report.constant:.4f} "
           f"({report.pair_strategy}, grid 256) within 5% of 2: {rel <= 0.05}; "
           f"inclusion checks over {inclusions.trials} trials: "
           f"{inclusions.passed}")


def test_power_invariant_at_pinned_rate():
    t0 = time.monotonic()
    table = _sweep("adversarial-rate", "fixed_discrete", None,
                   (250, 1000, 4000), 200, FIGURE_SEED, params={"c": 2.0})
    elapsed = time.monotonic() - t0
    rates = table.rejection_rates()
    spread = max(rates.values()) - min(rates.values())
    ok = spread <= 0.15 and elapsed <= 1800
    detail = ", ".join(f"{n}:{rates[n]:.3f}" for n in sorted(rates))
    record(9, ok,
           f"power at {detail}; spread {spread:.3f} vs 0.15; "
           f"{elapsed:.0f}s of 1800s")


def test_poissonization_tail_and_determinism():
    rng = np.random.default_rng(101010)
    draws = np.fromiter(
        (poissonize(40, rng)[0] for _ in range(1_000_000)),
        dtype=np.int64, count=1_000_000)
    p_hat = float((draws > 40).mean())
    se = math.sqrt(p_hat * (1.0 - p_hat) / len(draws))
    tail_ok = p_hat <= math.exp(-5.0) + 3.0 * se

    spec = ExperimentSpec(
        generator="discrete-null", sizes=(60, 90), replications=5,
        mode="fixed_discrete", permutations=20, seed=77)
    serial_a = run_experiment(spec, workers=1).csv_bytes()
    serial_b = run_experiment(spec, workers=1).csv_bytes()
    parallel = run_experiment(spec, workers=2).csv_bytes()
    data = sample_discrete_null(300, np.random.default_rng(5))
    config = Config(mode="fixed_discrete", permutations=40, seed=9)
    report_a = json.dumps(run_test(data, config).as_dict(), sort_keys=True)
    report_b = json.dumps(run_test(data, config).as_dict(), sort_keys=True)
    repro_ok = serial_a == serial_b == parallel and report_a == report_b
    ok = tail_ok and repro_ok
    record(10, ok,
           f"P(N>40)={p_hat:.1e} vs e^-5+3SE={math.exp(-5) + 3 * se:.2e}; "
           f"byte-identical reruns and worker counts: {repro_ok}")
