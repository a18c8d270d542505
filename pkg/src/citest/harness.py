"""Reproducible size-power experiments and dataset CSV interchange.

Replications are seeded as SeedSequence([seed, size_index, replication]),
so the table a sweep produces is byte-identical no matter how many workers
ran it or in which order they finished.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .citests import TestConfig, test
from .data import CATEGORY, REAL, TripleDataset
from .generators import (
    AdversarialContinuousSpec,
    AdversarialDiscreteSpec,
    default_bump,
    sample_adversarial_continuous,
    sample_adversarial_discrete,
    sample_continuous_alt,
    sample_continuous_null,
    sample_discrete_alt,
    sample_discrete_null,
)

__all__ = [
    "DataFormatError",
    "GENERATORS",
    "ExperimentSpec",
    "SizePowerRow",
    "SizePowerTable",
    "run_experiment",
    "read_csv_dataset",
    "write_csv_dataset",
    "thread_count",
]


class DataFormatError(ValueError):
    """Raised when a dataset CSV cannot be interpreted."""


def _random_signs(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=shape)


def _gen_adversarial_discrete(params: dict, n: int,
                              rng: np.random.Generator) -> TripleDataset:
    ell1 = int(params.get("ell1", 2))
    ell2 = int(params.get("ell2", 2))
    d = int(params.get("d", max(1, math.ceil(n ** 0.4))))
    rho = float(params["rho"])
    spec = AdversarialDiscreteSpec(
        ell1=ell1, ell2=ell2, rho=rho,
        nu=_random_signs(rng, d),
        delta=_random_signs(rng, (ell1 // 2, ell2 // 2)),
        bump=default_bump())
    return sample_adversarial_discrete(spec, n, rng)


def _gen_adversarial_continuous(params: dict, n: int,
                                rng: np.random.Generator) -> TripleDataset:
    d = int(params.get("d", max(1, math.ceil(n ** 0.4))))
    d_prime = int(params.get("d_prime", 2))
    rho = float(params["rho"])
    spec = AdversarialContinuousSpec(
        rho=rho, nu=_random_signs(rng, d),
        delta=_random_signs(rng, (d_prime, d_prime)),
        bump=default_bump())
    return sample_adversarial_continuous(spec, n, rng)


def _gen_adversarial_rate(params: dict, n: int,
                          rng: np.random.Generator) -> TripleDataset:
    """Adversarial table whose distance from independence is pinned to
    c * n^(-2/5), the detection radius of the basic binned test.

    The amplitude solves ell1 ell2 rho sqrt(d) c_bump = c * n^(-2/5). The
    bump scale d defaults to 1: a coarse perturbation the test's finer bins
    resolve, so power should sit flat in n. Matching d to the test's own
    bin count instead makes the signal invisible (each bin averages the
    bump to zero), which is the lower-bound regime.
    """
    ell1 = int(params.get("ell1", 2))
    ell2 = int(params.get("ell2", 2))
    c = float(params["c"])
    bump = default_bump()
    d = int(params.get("d", 1))
    rho = c * n ** -0.4 / (ell1 * ell2 * math.sqrt(d) * bump.abs_integral)
    spec = AdversarialDiscreteSpec(
        ell1=ell1, ell2=ell2, rho=rho,
        nu=_random_signs(rng, d),
        delta=_random_signs(rng, (ell1 // 2, ell2 // 2)),
        bump=bump)
    return sample_adversarial_discrete(spec, n, rng)


GENERATORS: dict[str, Callable[[dict, int, np.random.Generator], TripleDataset]] = {
    "discrete-null": lambda params, n, rng: sample_discrete_null(n, rng),
    "discrete-alt": lambda params, n, rng: sample_discrete_alt(n, rng),
    "continuous-null": lambda params, n, rng: sample_continuous_null(n, rng),
    "continuous-alt": lambda params, n, rng: sample_continuous_alt(n, rng),
    "adversarial-discrete": _gen_adversarial_discrete,
    "adversarial-continuous": _gen_adversarial_continuous,
    "adversarial-rate": _gen_adversarial_rate,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A full size-power sweep: generator, sizes, and the test to run.

    Sweeps skip the Poisson subsample by default so each row's rejection
    rate refers to the sample size the row is labeled with; set
    ``poissonize=True`` to exercise the test's own sampling device instead.
    """

    generator: str
    sizes: tuple[int, ...]
    replications: int
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
    poissonize: bool = False
    generator_params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.generator not in GENERATORS:
            raise ValueError(
                f"unknown generator {self.generator!r}; "
                f"choose from {sorted(GENERATORS)}")
        if not self.sizes or any(n < 1 for n in self.sizes):
            raise ValueError("sizes must be positive")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))

    def test_config(self) -> TestConfig:
        return TestConfig(
            mode=self.mode, s=self.s, zeta=self.zeta,
            calibration=self.calibration, permutations=self.permutations,
            conservative=self.conservative, alpha=self.alpha, seed=self.seed,
            eta=self.eta, c_const=self.c_const, poissonize=self.poissonize)


@dataclass(frozen=True)
class SizePowerRow:
    """One sample size's aggregate over replications."""

    n: int
    rejection_rate: float
    se: float
    mean_statistic: float
    mean_effective_n: float


@dataclass(frozen=True)
class SizePowerTable:
    """Rows by sample size plus provenance enough to rerun the sweep."""

    rows: tuple[SizePowerRow, ...]
    spec: ExperimentSpec

    CSV_HEADER = ("n", "rejection_rate", "se", "mean_T", "mean_N")

    def to_csv(self, target) -> None:
        """Write the table; ``target`` is a path or a text file object.

        Floats are written as their shortest round-trip representation so
        identical sweeps produce identical bytes.
        """
        own = isinstance(target, (str, os.PathLike))
        handle = open(target, "w", newline="") if own else target
        try:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(self.CSV_HEADER)
            for row in self.rows:
                writer.writerow([
                    row.n, repr(row.rejection_rate), repr(row.se),
                    repr(row.mean_statistic), repr(row.mean_effective_n)])
        finally:
            if own:
                handle.close()

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue().encode()

    def rejection_rates(self) -> dict[int, float]:
        return {row.n: row.rejection_rate for row in self.rows}


def _replicate(spec: ExperimentSpec, size_index: int,
               rep: int) -> tuple[int, float, float]:
    n = spec.sizes[size_index]
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed, size_index, rep]))
    data = GENERATORS[spec.generator](spec.generator_params, n, rng)
    report = test(data, spec.test_config(), rng=rng)
    stat = float("nan") if report.statistic is None else report.statistic
    return (1 if report.rejected else 0), stat, float(report.n_effective)


def _replicate_star(args) -> tuple[int, int, tuple[int, float, float]]:
    spec, size_index, rep = args
    return size_index, rep, _replicate(spec, size_index, rep)


def thread_count() -> int:
    """Worker count: CPUs, capped by the CITEST_THREADS variable."""
    cpus = os.cpu_count() or 1
    raw = os.environ.get("CITEST_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError as exc:
            raise ValueError("CITEST_THREADS must be an integer") from exc
        if cap >= 1:
            return min(cpus, cap)
    return cpus


def run_experiment(spec: ExperimentSpec,
                   workers: int | None = None) -> SizePowerTable:
    """Run the sweep and aggregate one row per sample size.

    ``workers`` defaults to ``thread_count()``; 1 runs inline. Results are
    keyed by (size, replication), never by completion order.
    """
    if workers is None:
        workers = thread_count()
    n_sizes = len(spec.sizes)
    reps = spec.replications
    rejects = np.zeros((n_sizes, reps))
    stats = np.zeros((n_sizes, reps))
    effectives = np.zeros((n_sizes, reps))
    tasks = [(spec, i, r) for i in range(n_sizes) for r in range(reps)]
    if workers <= 1:
        outcomes = map(_replicate_star, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        chunk = max(1, len(tasks) // (workers * 8))
        outcomes = pool.map(_replicate_star, tasks, chunksize=chunk)
    try:
        for i, r, (rej, stat, n_eff) in outcomes:
            rejects[i, r] = rej
            stats[i, r] = stat
            effectives[i, r] = n_eff
    finally:
        if workers > 1:
            pool.shutdown()
    rows = []
    for i, n in enumerate(spec.sizes):
        rate = float(rejects[i].mean())
        se = math.sqrt(rate * (1.0 - rate) / reps)
        finite = stats[i][np.isfinite(stats[i])]
        mean_stat = float(finite.mean()) if len(finite) else float("nan")
        rows.append(SizePowerRow(
            n=int(n), rejection_rate=rate, se=se, mean_statistic=mean_stat,
            mean_effective_n=float(effectives[i].mean())))
    return SizePowerTable(rows=tuple(rows), spec=spec)


def _parse_cell(text: str, column: str, line: int) -> tuple[bool, float]:
    """(is_integer, value); raises DataFormatError on junk."""
    raw = text.strip()
    if not raw:
        raise DataFormatError(f"empty {column} value on line {line}")
    try:
        return True, float(int(raw))
    except ValueError:
        pass
    try:
        return False, float(raw)
    except ValueError as exc:
        raise DataFormatError(
            f"cannot parse {column}={raw!r} on line {line}") from exc


def read_csv_dataset(path) -> TripleDataset:
    """Load observations from a header-led CSV.

    Columns are x,y,z or x,y,z1,z2. A column whose every entry is an
    integer literal is treated as categorical with 1-based codes; anything
    else is real-valued. z is always real.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file") from None
        if header == ["x", "y", "z"]:
            z_cols = ["z"]
        elif header == ["x", "y", "z1", "z2"]:
            z_cols = ["z1", "z2"]
        else:
            raise DataFormatError(
                f"header must be x,y,z or x,y,z1,z2, got {header}")
        names = ["x", "y"] + z_cols
        ints = {"x": True, "y": True}
        columns: dict[str, list[float]] = {name: [] for name in names}
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(names):
                raise DataFormatError(
                    f"expected {len(names)} fields on line {line_no}, "
                    f"got {len(row)}")
            for name, cell in zip(names, row):
                is_int, value = _parse_cell(cell, name, line_no)
                if name in ints:
                    ints[name] = ints[name] and is_int
                columns[name].append(value)
    if not columns["x"]:
        raise DataFormatError("no data rows")
    x_int = ints["x"] and min(columns["x"]) >= 1
    y_int = ints["y"] and min(columns["y"]) >= 1
    x = np.array(columns["x"], dtype=np.int64 if x_int else np.float64)
    y = np.array(columns["y"], dtype=np.int64 if y_int else np.float64)
    z = np.column_stack([np.array(columns[c]) for c in z_cols])
    return TripleDataset(
        x, y, z,
        x_kind=CATEGORY if x_int else REAL,
        y_kind=CATEGORY if y_int else REAL)


def write_csv_dataset(target, data: TripleDataset) -> None:
    """Inverse of read_csv_dataset, same header conventions.

    ``target`` is a path or a text file object.
    """
    own = isinstance(target, (str, os.PathLike))
    handle = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(handle, lineterminator="\n")
        if data.d_z == 1:
            writer.writerow(["x", "y", "z"])
        else:
            writer.writerow(["x", "y", "z1", "z2"])
        for idx in range(data.n):
            cells = []
            for value, kind in ((data.x[idx], data.x_kind),
                                (data.y[idx], data.y_kind)):
                cells.append(str(int(value)) if kind == CATEGORY
                             else repr(float(value)))
            cells.extend(repr(float(v)) for v in data.z[idx])
            writer.writerow(cells)
    finally:
        if own:
            handle.close()
