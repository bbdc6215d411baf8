"""Command-line front end: run, sweep, validate, brute.

Config files are JSON or TOML with two sections, "system" and "scenario",
whose keys mirror the SystemConfig and ScenarioSpec field names (dB and
dBm quantities keep their _db/_dbm suffixes). Sweep axes (power budget,
aging, quantization) live in the scenario section only.

Exit codes: 0 success, 2 bad configuration, 3 infeasible scenario,
4 solver or validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

try:
    import tomllib
except ModuleNotFoundError:        # python 3.10
    import tomli as tomllib

import numpy as np

from .channel import draw_channels, realize_true_channel
from .config import SystemConfig
from .experiments import (
    ScenarioSpec,
    TrialRecord,
    emit_results,
    lognormal_params,
    run_sweep,
    sample_demands,
    summarize,
)
from .linkmodel import (
    BeamformerState,
    average_rate,
    build_error_stats,
    instantaneous_rate,
    qos,
)
from .optimizer import (
    InfeasibleConfigurationError,
    OptimizerConfig,
    SubproblemError,
    build_codebook,
    build_surface_step_data,
    exhaustive_surface_search,
    feasibility_report,
    initialize_state,
    optimize,
    quantize_surface,
    _refresh,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4


class ConfigError(Exception):
    pass


# -- config loading --------------------------------------------------------

_SCENARIO_FIELDS = {f.name for f in dataclasses.fields(ScenarioSpec)} - {"system_overrides"}
_SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}
_DIM_FIELDS = {"n_tx", "n_users", "n_ris"}
_SWEPT_FIELDS = {"p_all_max_dbm", "rho", "ris_active"}


def _parse_config_file(path: Path) -> Dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".toml":
        return tomllib.loads(text)
    if path.suffix == ".json":
        return json.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError:
            raise ConfigError(f"{path}: neither valid JSON nor valid TOML")


def load_scenario(path: Optional[Path], seed: Optional[int]) -> ScenarioSpec:
    """Build a ScenarioSpec from a config file plus CLI overrides."""
    raw = _parse_config_file(path) if path else {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table/object")
    unknown_sections = set(raw) - {"system", "scenario"}
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {sorted(unknown_sections)}")
    scenario = dict(raw.get("scenario", {}))
    system = dict(raw.get("system", {}))

    bad = set(scenario) - _SCENARIO_FIELDS
    if bad:
        raise ConfigError(f"unknown scenario keys: {sorted(bad)}")
    bad = set(system) - _SYSTEM_FIELDS
    if bad:
        raise ConfigError(f"unknown system keys: {sorted(bad)}")
    clash = set(system) & _SWEPT_FIELDS
    if clash:
        raise ConfigError(
            f"system keys {sorted(clash)} are swept; set them in the scenario section")

    # dimension keys may live in either section; scenario wins on conflict
    for dim in _DIM_FIELDS & set(system):
        scenario.setdefault(dim, system.pop(dim))
    if system:
        scenario["system_overrides"] = system
    if seed is not None:
        scenario["base_seed"] = seed
    try:
        return ScenarioSpec(**scenario)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


# -- shared sweep plumbing -------------------------------------------------


def _progress(done: int, total: int) -> None:
    print(f"trial {done}/{total}", file=sys.stderr)


def _sweep_exit_code(records: List[TrialRecord]) -> int:
    statuses = {rec.status for rec in records}
    if "ok" in statuses:
        return EXIT_OK
    if statuses <= {"infeasible"}:
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def _print_group_table(spec: ScenarioSpec, records: List[TrialRecord]) -> None:
    summary = summarize(spec, records)
    print(f"{'method':<13s} {'P_all':>6s} {'rho':>5s} {'bits':>5s} {'ok':>3s} "
          f"{'eta mean':>12s} {'qos':>6s}")
    for g in summary["groups"]:
        eta = g.get("eta_mean")
        q = g.get("qos_mean")
        print(f"{g['method']:<13s} {g['p_all_dbm']:>6.1f} {g['rho']:>5.2f} "
              f"{g['a_bits']}/{g['b_bits']:<3d} {g['n_ok']:>3d} "
              f"{eta if eta is None else f'{eta:.4e}':>12} "
              f"{q if q is None else f'{q:.3f}':>6}")


def _cmd_sweep(args: argparse.Namespace, singleton: bool) -> int:
    spec = load_scenario(args.config, args.seed)
    if singleton:
        n_points = len(spec.p_all_dbm) * len(spec.rho) * len(spec.quantization)
        if n_points != 1:
            raise ConfigError(
                "run expects a single grid point per axis; use sweep for grids")
    out = Path(args.out)
    records = run_sweep(spec, workers=args.threads, progress=_progress)
    paths = emit_results(spec, records, out)
    _print_group_table(spec, records)
    print(f"wrote {paths['results']}")
    return _sweep_exit_code(records)


# -- validate --------------------------------------------------------------


def _golden_max(fn, lo: float, hi: float) -> float:
    from scipy.optimize import minimize_scalar
    res = minimize_scalar(lambda x: -fn(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def _validate_checks() -> List[str]:
    """Fast oracle spot-checks; returns failure messages (empty = pass)."""
    failures = []
    rng = np.random.default_rng(0)

    cb = build_codebook(1, 1, 2.0)
    want = {1 + 0j, -1 + 0j, 2 + 0j, -2 + 0j}
    got = {complex(round(v.real, 9) + 1j * round(v.imag, 9)) for v in cb.entries}
    if got != want:
        failures.append(f"codebook(1,1,alpha=2) gave {got}, expected {want}")

    for _ in range(200):
        u = rng.uniform(0.01, 5.0, size=3)
        p = rng.uniform(0.5, 20.0)
        y_closed = float(np.sqrt(u.sum()) / p)
        y_gold = _golden_max(lambda y: 2 * y * np.sqrt(u.sum()) - y * y * p,
                             0.0, 10 * y_closed + 1.0)
        if abs(y_closed - y_gold) > 1e-6:
            failures.append(f"y* {y_closed} vs golden {y_gold}")
            break
        re, v = rng.uniform(0.01, 4.0), rng.uniform(0.1, 9.0)
        z_closed = re / v
        z_gold = _golden_max(lambda z: 2 * z * re - z * z * v, 0.0, 10 * z_closed)
        if abs(z_closed - z_gold) > 1e-6:
            failures.append(f"z* {z_closed} vs golden {z_gold}")
            break

    for _ in range(100):
        u = rng.uniform(0.01, 5.0, size=4)
        p = rng.uniform(0.5, 30.0)
        y = float(np.sqrt(u.sum()) / p)
        f_val = 2 * y * np.sqrt(u.sum()) - y * y * p
        ratio = u.sum() / p
        if abs(f_val - ratio) > 1e-9 * ratio:
            failures.append(f"transform identity broke: {f_val} vs {ratio}")
            break

    d = rng.uniform(1e6, 1e8, size=5)
    if abs(qos(d.copy(), d.copy()) - 1.0) > 1e-12:
        failures.append("qos at exact match is not 1")
    if abs(qos(np.zeros(5), d)) > 1e-12:
        failures.append("qos at zero rates is not 0")
    for _ in range(1000):
        r = rng.uniform(0, 2e8, size=4)
        dd = rng.uniform(1e5, 2e8, size=4)
        val = qos(r, dd)
        if not 0.0 <= val <= 1.0 + 1e-12:
            failures.append(f"qos out of range: {val}")
            break

    cfg = SystemConfig(n_tx=4, n_users=2, n_ris=8)
    for inst in range(3):
        crng = np.random.default_rng(100 + inst)
        chan = draw_channels(crng, cfg)
        stats = build_error_stats(chan, cfg.rho)
        w = (crng.standard_normal((4, 2)) + 1j * crng.standard_normal((4, 2))) * 0.1
        theta = np.exp(2j * np.pi * crng.uniform(size=8)) * 2.0
        state = BeamformerState(w=w, theta=theta)
        rbar = average_rate(chan, stats, state, cfg)
        draws = 2000
        acc = np.zeros((draws, 2))
        for i in range(draws):
            h_true = np.stack([
                realize_true_channel(crng, cfg.rho, chan.h_ru_est[k],
                                     chan.err_std[k]) for k in range(2)])
            acc[i] = instantaneous_rate(h_true, chan, state, cfg)
        mc_mean = acc.mean(axis=0)
        mc_se = acc.std(axis=0, ddof=1) / np.sqrt(draws)
        if np.any(mc_mean < rbar - 3 * mc_se):
            failures.append(
                f"average-rate bound violated: MC {mc_mean} vs bound {rbar}")
            break

    draws = rng.lognormal(*lognormal_params(60e6, 10e6), size=100000)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    if abs(draws.mean() - 60e6) > 3 * se:
        failures.append(f"demand mean {draws.mean():.3e} off 60e6 by >3 SE")

    try:
        cfg = SystemConfig(n_tx=4, n_users=2, n_ris=8)
        chan = draw_channels(np.random.default_rng(7), cfg)
        prof = sample_demands("case1", 2, np.random.default_rng(8))
        res = optimize(chan, prof, cfg, OptimizerConfig(),
                       rng=np.random.default_rng(9))
        g = res.g_trace
        if np.any(np.diff(g) < -1e-6 * np.maximum(np.abs(g[:-1]), 1)):
            failures.append("surrogate trace decreased")
        rep = feasibility_report(chan, res.state, cfg)
        worst = min(rep.values())
        if worst < -1e-6:
            failures.append(f"constraint slack {worst} below -1e-6")
    except (InfeasibleConfigurationError, SubproblemError) as exc:
        failures.append(f"reference run failed: {exc}")

    return failures


def _cmd_validate(args: argparse.Namespace) -> int:
    failures = _validate_checks()
    names = ("codebook", "closed-form maximizers", "transform identity",
             "qos units", "rate bound", "demand moments", "reference run")
    if failures:
        for f in failures:
            print(f"FAIL {f}")
        return EXIT_SOLVER
    for n in names:
        print(f"ok {n}")
    return EXIT_OK


# -- brute -----------------------------------------------------------------


def _cmd_brute(args: argparse.Namespace) -> int:
    if args.nris > 4:
        raise ConfigError("exhaustive search is limited to nris <= 4")
    a_bits, b_bits = args.bits
    cfg = SystemConfig(n_tx=4, n_users=2, n_ris=args.nris)
    ocfg = OptimizerConfig(amplitude_bits=a_bits, phase_bits=b_bits)
    cb = build_codebook(a_bits, b_bits, cfg.alpha_max)
    bits = a_bits + b_bits
    ratios = []
    for t in range(args.trials):
        rng = np.random.default_rng((args.seed, t))
        chan = draw_channels(rng, cfg)
        prof = sample_demands("case1", cfg.n_users, rng)
        state, idx = initialize_state(rng, chan, cfg, cb)
        d_int = prof.demands / cfg.bandwidth_hz
        zeros = np.zeros(cfg.n_users)
        data = build_surface_step_data(chan,
                                       build_error_stats(chan, cfg.rho),
                                       state.w, cfg)
        aux = _refresh(data, state.theta, d_int, cfg, ocfg, bits)
        theta_q, _, g_alg, _ = quantize_surface(
            data, state.theta, idx, cb, aux.y, aux.z, d_int, zeros,
            cfg, ocfg, bits)
        g_best, _ = exhaustive_surface_search(data, cb, aux.y, aux.z, d_int,
                                              cfg, ocfg, bits)
        ratio = g_alg / g_best if g_best > 0 else 1.0
        ratios.append(ratio)
        print(f"trial {t}: staged {g_alg:.6g}  exhaustive {g_best:.6g}  "
              f"ratio {ratio:.4f}")
    worst = min(ratios)
    print(f"worst ratio {worst:.4f} over {args.trials} trials")
    return EXIT_OK if worst >= 0.95 else EXIT_SOLVER


# -- entry -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="greenris",
        description="Active-RIS beamforming for demand-aware energy efficiency")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "single grid point"),
                            ("sweep", "full scenario grid")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON or TOML scenario/system file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the base seed")
        p.add_argument("--threads", type=int, default=1,
                       help="parallel trial workers")

    sub.add_parser("validate", help="oracle and invariant spot checks")

    p = sub.add_parser("brute", help="staged projection vs exhaustive codebook")
    p.add_argument("--nris", type=int, default=3, help="surface size, at most 4")
    p.add_argument("--bits", type=int, nargs=2, default=(1, 1),
                   metavar=("A", "B"), help="amplitude and phase bits")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_sweep(args, singleton=True)
        if args.command == "sweep":
            return _cmd_sweep(args, singleton=False)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "brute":
            return _cmd_brute(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
