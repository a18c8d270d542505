"""Command-line front end.

Subcommands: ``test`` a dataset CSV, ``simulate`` a size-power sweep,
``generate`` synthetic data, ``smoothness`` profiling of a built-in model,
and ``couple`` to rebuild a dataset as conditionally independent.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
unreadable or malformed data.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from .citests import MODES, TestConfig, test
from .data import REAL
from .generators import (
    AdversarialContinuousSpec,
    AdversarialDiscreteSpec,
    CouplingSpec,
    adversarial_continuous_model,
    adversarial_discrete_model,
    ci_coupling,
    continuous_alt_model,
    continuous_null_model,
    default_bump,
    discrete_alt_model,
    discrete_null_model,
)
from .harness import (
    GENERATORS,
    DataFormatError,
    ExperimentSpec,
    read_csv_dataset,
    run_experiment,
    write_csv_dataset,
)
from .smoothness import CLASS_IDS, empirical_lipschitz

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

PRESETS = {
    "fig3": {
        "mode": "scaling_discrete",
        "generator_null": "discrete-null",
        "generator_alt": "discrete-alt",
        "sizes": tuple(range(100, 1001, 100)),
        "reps": 100,
        "perms": 100,
        "alpha": 0.05,
        "s": None,
    },
    "fig4": {
        "mode": "continuous",
        "generator_null": "continuous-null",
        "generator_alt": "continuous-alt",
        "sizes": tuple(range(100, 1001, 100)),
        "reps": 100,
        "perms": 100,
        "alpha": 0.05,
        "s": 1.0,
    },
}


class CliUsageError(Exception):
    def __init__(self, message: str, parser: argparse.ArgumentParser):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message, self)


def _build_parser() -> _Parser:
    parser = _Parser(prog="citest",
                     description="Binned conditional-independence testing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML file of defaults for the flags")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output path (default stdout)")

    p_test = sub.add_parser("test", parents=[], help="test one dataset CSV")
    p_test.add_argument("data", help="CSV with columns x,y,z or x,y,z1,z2")
    p_test.add_argument("--mode", choices=MODES, default=None)
    p_test.add_argument("--s", type=float, default=None)
    p_test.add_argument("--zeta", type=float, default=None)
    p_test.add_argument("--calibration", choices=("permutation", "fixed"),
                        default=None)
    p_test.add_argument("--perms", type=int, default=None)
    p_test.add_argument("--alpha", type=float, default=None)
    p_test.add_argument("--eta", type=float, default=None)
    p_test.add_argument("--c-const", type=float, default=None)
    p_test.add_argument("--conservative", action="store_const", const=True,
                        default=None)
    common(p_test)

    p_sim = sub.add_parser("simulate", help="size-power sweep to CSV")
    p_sim.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p_sim.add_argument("--family", choices=("null", "alt"), default=None,
                       help="which preset family to run (default alt)")
    p_sim.add_argument("--generator", choices=sorted(GENERATORS), default=None)
    p_sim.add_argument("--sizes", default=None,
                       help="comma-separated sample sizes")
    p_sim.add_argument("--reps", type=int, default=None)
    p_sim.add_argument("--mode", choices=MODES, default=None)
    p_sim.add_argument("--s", type=float, default=None)
    p_sim.add_argument("--zeta", type=float, default=None)
    p_sim.add_argument("--calibration", choices=("permutation", "fixed"),
                       default=None)
    p_sim.add_argument("--perms", type=int, default=None)
    p_sim.add_argument("--alpha", type=float, default=None)
    p_sim.add_argument("--eta", type=float, default=None)
    p_sim.add_argument("--c-const", type=float, default=None)
    p_sim.add_argument("--conservative", action="store_const", const=True,
                       default=None)
    p_sim.add_argument("--rho", type=float, default=None)
    p_sim.add_argument("--d", type=int, default=None)
    p_sim.add_argument("--d-prime", type=int, default=None)
    p_sim.add_argument("--ell1", type=int, default=None)
    p_sim.add_argument("--ell2", type=int, default=None)
    common(p_sim)

    p_gen = sub.add_parser("generate", help="write a synthetic dataset CSV")
    p_gen.add_argument("--generator", choices=sorted(GENERATORS),
                       required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--rho", type=float, default=None)
    p_gen.add_argument("--d", type=int, default=None)
    p_gen.add_argument("--d-prime", type=int, default=None)
    p_gen.add_argument("--ell1", type=int, default=None)
    p_gen.add_argument("--ell2", type=int, default=None)
    common(p_gen)

    p_sm = sub.add_parser("smoothness", help="empirical class constants")
    p_sm.add_argument("--model", required=True,
                      choices=("discrete-null", "discrete-alt",
                               "continuous-null", "continuous-alt",
                               "adversarial-discrete",
                               "adversarial-continuous"))
    p_sm.add_argument("--class-id", choices=CLASS_IDS, required=True)
    p_sm.add_argument("--grid", type=int, default=None)
    p_sm.add_argument("--rho", type=float, default=None)
    p_sm.add_argument("--d", type=int, default=None)
    p_sm.add_argument("--d-prime", type=int, default=None)
    p_sm.add_argument("--ell1", type=int, default=None)
    p_sm.add_argument("--ell2", type=int, default=None)
    common(p_sm)

    p_cp = sub.add_parser("couple", help="conditionally independent rebuild")
    p_cp.add_argument("data", help="CSV with real-valued x,y,z")
    p_cp.add_argument("--m", type=int, required=True,
                      help="cells per axis")
    p_cp.add_argument("--big-m", type=float, default=None,
                      help="box half-width M (default 1)")
    common(p_cp)
    return parser


def _apply_config(ns: argparse.Namespace) -> None:
    """Fill unset flags from the TOML file named by --config."""
    path = getattr(ns, "config", None)
    if not path:
        return
    with open(path, "rb") as handle:
        table = tomllib.load(handle)
    for key, value in table.items():
        dest = key.replace("-", "_")
        if not hasattr(ns, dest):
            raise ValueError(f"config key {key!r} matches no flag")
        if getattr(ns, dest) is None:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            setattr(ns, dest, value)


def _emit(ns: argparse.Namespace, text: str) -> None:
    if getattr(ns, "out", None):
        with open(ns.out, "w") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _pick(value, fallback):
    return fallback if value is None else value


def _adversarial_signs(rng, ns, continuous: bool):
    d = _pick(ns.d, 4)
    if continuous:
        dp = _pick(ns.d_prime, 2)
        return AdversarialContinuousSpec(
            rho=_pick(ns.rho, 0.5), nu=rng.choice([-1.0, 1.0], size=d),
            delta=rng.choice([-1.0, 1.0], size=(dp, dp)),
            bump=default_bump())
    ell1 = _pick(ns.ell1, 2)
    ell2 = _pick(ns.ell2, 2)
    return AdversarialDiscreteSpec(
        ell1=ell1, ell2=ell2, rho=_pick(ns.rho, 0.05),
        nu=rng.choice([-1.0, 1.0], size=d),
        delta=rng.choice([-1.0, 1.0], size=(ell1 // 2, ell2 // 2)),
        bump=default_bump())


def _cmd_test(ns: argparse.Namespace) -> int:
    if ns.mode is None:
        raise ValueError("--mode is required (flag or config)")
    config = TestConfig(
        mode=ns.mode, s=ns.s, zeta=ns.zeta,
        calibration=_pick(ns.calibration, "permutation"),
        permutations=_pick(ns.perms, 100),
        conservative=bool(_pick(ns.conservative, False)),
        alpha=_pick(ns.alpha, 0.05), seed=_pick(ns.seed, 0),
        eta=_pick(ns.eta, 0.05), c_const=_pick(ns.c_const, 1.0))
    data = read_csv_dataset(ns.data)
    report = test(data, config)
    _emit(ns, json.dumps(report.as_dict(), indent=2) + "\n")
    return 0


def _cmd_simulate(ns: argparse.Namespace) -> int:
    generator = ns.generator
    sizes = ns.sizes
    reps = ns.reps
    mode = ns.mode
    s = ns.s
    perms = ns.perms
    alpha = ns.alpha
    if ns.preset:
        preset = PRESETS[ns.preset]
        family = _pick(ns.family, "alt")
        generator = _pick(generator, preset[f"generator_{family}"])
        sizes = _pick(sizes, ",".join(str(v) for v in preset["sizes"]))
        reps = _pick(reps, preset["reps"])
        mode = _pick(mode, preset["mode"])
        s = _pick(s, preset["s"])
        perms = _pick(perms, preset["perms"])
        alpha = _pick(alpha, preset["alpha"])
    elif ns.family:
        raise ValueError("--family only applies with --preset")
    if generator is None or sizes is None or reps is None or mode is None:
        raise ValueError("simulate needs --generator, --sizes, --reps and "
                         "--mode (or a --preset)")
    if isinstance(sizes, str):
        sizes = tuple(int(tok) for tok in sizes.split(",") if tok.strip())
    params = {}
    for key in ("rho", "d", "d_prime", "ell1", "ell2"):
        value = getattr(ns, key)
        if value is not None:
            params[key] = value
    spec = ExperimentSpec(
        generator=generator, sizes=tuple(sizes), replications=reps,
        mode=mode, s=s, zeta=ns.zeta,
        calibration=_pick(ns.calibration, "permutation"),
        permutations=_pick(perms, 100),
        conservative=bool(_pick(ns.conservative, False)),
        alpha=_pick(alpha, 0.05), seed=_pick(ns.seed, 0),
        eta=_pick(ns.eta, 0.05), c_const=_pick(ns.c_const, 1.0),
        generator_params=params)
    table = run_experiment(spec)
    _emit(ns, table.csv_bytes().decode())
    return 0


def _cmd_generate(ns: argparse.Namespace) -> int:
    rng = np.random.default_rng(_pick(ns.seed, 0))
    params = {}
    for key in ("rho", "d", "d_prime", "ell1", "ell2"):
        value = getattr(ns, key)
        if value is not None:
            params[key] = value
    if ns.generator.startswith("adversarial") and "rho" not in params:
        params["rho"] = 0.05 if ns.generator.endswith("discrete") else 0.5
    data = GENERATORS[ns.generator](params, ns.n, rng)
    write_csv_dataset(ns.out if ns.out else sys.stdout, data)
    return 0


def _cmd_smoothness(ns: argparse.Namespace) -> int:
    rng = np.random.default_rng(_pick(ns.seed, 0))
    if ns.model == "discrete-null":
        model = discrete_null_model()
    elif ns.model == "discrete-alt":
        model = discrete_alt_model()
    elif ns.model == "continuous-null":
        model = continuous_null_model()
    elif ns.model == "continuous-alt":
        model = continuous_alt_model()
    elif ns.model == "adversarial-discrete":
        model = adversarial_discrete_model(
            _adversarial_signs(rng, ns, continuous=False))
    else:
        model = adversarial_continuous_model(
            _adversarial_signs(rng, ns, continuous=True))
    report = empirical_lipschitz(model, ns.class_id,
                                 grid_size=_pick(ns.grid, 64))
    _emit(ns, json.dumps(asdict(report), indent=2) + "\n")
    return 0


def _cmd_couple(ns: argparse.Namespace) -> int:
    data = read_csv_dataset(ns.data)
    if data.x_kind != REAL or data.y_kind != REAL:
        raise DataFormatError("coupling needs real-valued x and y")
    spec = CouplingSpec(m=ns.m, big_m=_pick(ns.big_m, 1.0))
    rng = np.random.default_rng(_pick(ns.seed, 0))
    coupled = ci_coupling(data, spec, rng)
    write_csv_dataset(ns.out if ns.out else sys.stdout, coupled)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        _apply_config(ns)
        handler = {
            "test": _cmd_test,
            "simulate": _cmd_simulate,
            "generate": _cmd_generate,
            "smoothness": _cmd_smoothness,
            "couple": _cmd_couple,
        }[ns.command]
        return handler(ns)
    except CliUsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"citest: error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"citest: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"citest: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
