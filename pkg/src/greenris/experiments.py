"""Monte-Carlo harness: scenario grids, baseline methods, result files.

A scenario fixes the network dimensions and sweeps transmit-power budget,
channel-aging coefficient, and surface quantization over seeded trials.
Each trial shares one channel draw and one demand draw across the whole
grid and across methods (common random numbers), so curves differ only
through the thing being swept.

Baselines, by token:
  aoso          staged-quantization block search on the active surface
  continuous    same search with the relaxed (unquantized) surface step
  passive_ris   unit-modulus surface with 100 elements, phase-only book
  naive_csi     optimizes as if the estimate were exact, then is scored
                against the true aging statistics
  ee_objective  drops the demand clip from the objective

`results.csv` and `summary.json` are byte-reproducible for a fixed
(spec, base_seed): wall-clock timings go to a separate sidecar file.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .channel import ChannelRealization, draw_channels
from .config import SystemConfig
from .linkmodel import (
    BeamformerState,
    DemandProfile,
    average_rate,
    build_error_stats,
    ee,
    iree,
    qos,
    total_power,
)
from .optimizer import (
    InfeasibleConfigurationError,
    MonotonicityError,
    OptimizerConfig,
    SubproblemError,
    optimize,
)

TRAFFIC_MEAN_BIT_S = {"case1": 60e6, "case2": 100e6}
TRAFFIC_SD_BIT_S = 10e6
FLOOR_FRACTION = 0.1
FLOOR_CAP_BIT_S = 1e6

METHODS = ("aoso", "continuous", "passive_ris", "naive_csi", "ee_objective")
PASSIVE_N_RIS = 100

Z90 = 1.6448536269514722      # one-sided 95% normal quantile, for 90% CIs


# -- traffic ---------------------------------------------------------------


def lognormal_params(mean: float, sd: float) -> Tuple[float, float]:
    """Underlying-normal (mu, sigma) matching the given linear moments."""
    if mean <= 0 or sd < 0:
        raise ValueError("demand mean must be positive and sd nonnegative")
    sigma2 = math.log(1.0 + (sd / mean) ** 2)
    mu = math.log(mean) - 0.5 * sigma2
    return mu, math.sqrt(sigma2)


def sample_demands(case: str, n_users: int, rng: np.random.Generator) -> DemandProfile:
    """Log-normal per-user demands with hard floors min(0.1 D, 1 Mbit/s)."""
    if case not in TRAFFIC_MEAN_BIT_S:
        raise ValueError(f"unknown traffic case {case!r}")
    mu, sigma = lognormal_params(TRAFFIC_MEAN_BIT_S[case], TRAFFIC_SD_BIT_S)
    demands = rng.lognormal(mu, sigma, size=n_users)
    floors = np.minimum(FLOOR_FRACTION * demands, FLOOR_CAP_BIT_S)
    return DemandProfile(demands=demands, c_min=floors)


# -- scenario description --------------------------------------------------


@dataclass
class ScenarioSpec:
    """One sweep: fixed dimensions, grids over budget / aging / bits.

    Desk-scale dimensions by default so a full grid runs in seconds;
    full_scale switches to the 12x8x20 reference layout. quantization
    entries are (amplitude_bits, phase_bits); the continuous method reads
    only the phase bits (for the control-power bill), and the passive
    surface always uses a phase-only book.
    """

    traffic_case: str = "case1"
    p_all_dbm: Tuple[float, ...] = (16.0, 20.0, 24.0, 28.0, 32.0, 36.0)
    rho: Tuple[float, ...] = (0.9,)
    quantization: Tuple[Tuple[int, int], ...] = ((2, 2),)
    methods: Tuple[str, ...] = ("aoso",)
    n_trials: int = 20
    base_seed: int = 0
    n_tx: int = 4
    n_users: int = 3
    n_ris: int = 10
    full_scale: bool = False
    epsilon: float = 1e-3
    max_outer: int = 30
    q_rounds: int = 3
    store_states: bool = False
    system_overrides: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.p_all_dbm = tuple(float(p) for p in self.p_all_dbm)
        self.rho = tuple(float(r) for r in self.rho)
        self.quantization = tuple((int(a), int(b)) for a, b in self.quantization)
        self.methods = tuple(str(m) for m in self.methods)
        if self.traffic_case not in TRAFFIC_MEAN_BIT_S:
            raise ValueError(f"unknown traffic case {self.traffic_case!r}")
        if not self.p_all_dbm or not self.rho or not self.quantization:
            raise ValueError("each sweep axis needs at least one point")
        if not self.methods:
            raise ValueError("at least one method required")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        for a, b in self.quantization:
            if a < 1 or b < 1:
                raise ValueError("quantization bits must be >= 1")
        for r in self.rho:
            if not 0.0 <= r <= 1.0:
                raise ValueError("rho grid points must lie in [0, 1]")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if min(self.n_tx, self.n_users, self.n_ris) < 1:
            raise ValueError("dimensions must be positive")
        reserved = {"n_tx", "n_users", "n_ris", "p_all_max_dbm", "rho", "ris_active"}
        clash = reserved & set(self.system_overrides)
        if clash:
            raise ValueError(f"system overrides collide with sweep axes: {sorted(clash)}")

    @property
    def dims(self) -> Tuple[int, int, int]:
        if self.full_scale:
            return 12, 8, 20
        return self.n_tx, self.n_users, self.n_ris

    def system_for(self, p_all_dbm: float, rho: float,
                   passive: bool = False) -> SystemConfig:
        n_tx, n_users, n_ris = self.dims
        if passive:
            n_ris = PASSIVE_N_RIS
        return SystemConfig(n_tx=n_tx, n_users=n_users, n_ris=n_ris,
                            p_all_max_dbm=p_all_dbm, rho=rho,
                            ris_active=not passive, **self.system_overrides)

    def grid(self) -> Iterator[Tuple[float, float, Tuple[int, int]]]:
        for p in self.p_all_dbm:
            for r in self.rho:
                for ab in self.quantization:
                    yield p, r, ab

    def n_records(self) -> int:
        return (self.n_trials * len(self.p_all_dbm) * len(self.rho)
                * len(self.quantization) * len(self.methods))


@dataclass
class TrialRecord:
    """One (trial, grid point, method) outcome."""

    traffic_case: str
    trial: int
    method: str
    p_all_dbm: float
    rho: float
    a_bits: int
    b_bits: int
    status: str                 # ok | infeasible | solver-failure | monotonicity
    eta: float = math.nan       # bit/J, demand-clipped, true aging statistics
    ee_value: float = math.nan  # bit/J without the clip
    qos_value: float = math.nan
    total_power_w: float = math.nan
    n_outer: int = 0
    converged: bool = False
    rates: Optional[np.ndarray] = None          # bit/s
    demands: Optional[np.ndarray] = None
    floors: Optional[np.ndarray] = None
    eta_trace: Optional[List[float]] = None
    wall_s: float = 0.0                          # excluded from results.csv
    state: Optional[BeamformerState] = None


# -- seeding ---------------------------------------------------------------

# Fixed stream tags so adding a draw never shifts an existing one.
_STREAM_CHANNEL = 0
_STREAM_PASSIVE_CHANNEL = 1
_STREAM_DEMANDS = 2
_STREAM_INIT = 3

_CASE_INDEX = {"case1": 1, "case2": 2}


def _rng(spec: ScenarioSpec, trial: int, *tags: int) -> np.random.Generator:
    entropy = [spec.base_seed, _CASE_INDEX[spec.traffic_case], trial, *tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


# -- one trial -------------------------------------------------------------


def _evaluate(chan: ChannelRealization, state: BeamformerState,
              profile: DemandProfile, cfg: SystemConfig, phase_bits: int):
    """Score a final design against the true aging statistics."""
    stats = build_error_stats(chan, cfg.rho)
    rates = average_rate(chan, stats, state, cfg)
    power = total_power(chan, state, cfg, phase_bits)
    return (iree(rates, profile.demands, power), ee(rates, power),
            qos(rates, profile.demands), rates, power)


def _optimizer_config(spec: ScenarioSpec, method: str, a_bits: int,
                      b_bits: int) -> OptimizerConfig:
    return OptimizerConfig(
        epsilon=spec.epsilon,
        max_outer=spec.max_outer,
        q_rounds=spec.q_rounds,
        amplitude_bits=a_bits,
        phase_bits=b_bits,
        continuous_surface=(method == "continuous"),
        objective=("ee" if method == "ee_objective" else "iree"),
    )


def _run_method(method: str, spec: ScenarioSpec, trial: int,
                chan: ChannelRealization,
                passive_chan: Optional[ChannelRealization],
                profile: DemandProfile, p_all_dbm: float, rho: float,
                a_bits: int, b_bits: int) -> TrialRecord:
    rec = TrialRecord(traffic_case=spec.traffic_case, trial=trial, method=method,
                      p_all_dbm=p_all_dbm, rho=rho, a_bits=a_bits, b_bits=b_bits,
                      status="ok", demands=profile.demands.copy(),
                      floors=profile.c_min.copy())
    passive = method == "passive_ris"
    cfg = spec.system_for(p_all_dbm, rho, passive=passive)
    chan_used = passive_chan if passive else chan
    assert chan_used is not None
    # naive baseline designs against rho = 1 but is judged at the true rho
    design_cfg = cfg.scaled(rho=1.0) if method == "naive_csi" else cfg
    init_rng = _rng(spec, trial, _STREAM_INIT, METHODS.index(method))
    ocfg = _optimizer_config(spec, method, a_bits, b_bits)
    t0 = time.perf_counter()
    try:
        result = optimize(chan_used, profile, design_cfg, ocfg, rng=init_rng)
    except InfeasibleConfigurationError:
        rec.status = "infeasible"
        rec.wall_s = time.perf_counter() - t0
        return rec
    except SubproblemError:
        rec.status = "solver-failure"
        rec.wall_s = time.perf_counter() - t0
        return rec
    except MonotonicityError:
        rec.status = "monotonicity"
        rec.wall_s = time.perf_counter() - t0
        return rec
    rec.wall_s = time.perf_counter() - t0
    rec.eta, rec.ee_value, rec.qos_value, rec.rates, rec.total_power_w = \
        _evaluate(chan_used, result.state, profile, cfg, result.phase_bits)
    rec.n_outer = result.n_outer
    rec.converged = result.converged
    rec.eta_trace = [float(v) for v in result.eta_trace]
    if spec.store_states:
        rec.state = result.state
    return rec


def run_trial(spec: ScenarioSpec, trial: int) -> List[TrialRecord]:
    """All grid points and methods for one shared channel/demand draw."""
    geom = spec.system_for(spec.p_all_dbm[0], spec.rho[0])
    chan = draw_channels(_rng(spec, trial, _STREAM_CHANNEL), geom)
    profile = sample_demands(spec.traffic_case, geom.n_users,
                             _rng(spec, trial, _STREAM_DEMANDS))
    passive_chan = None
    if "passive_ris" in spec.methods:
        passive_geom = spec.system_for(spec.p_all_dbm[0], spec.rho[0], passive=True)
        passive_chan = draw_channels(
            _rng(spec, trial, _STREAM_PASSIVE_CHANNEL), passive_geom)
    records = []
    for p, r, (a, b) in spec.grid():
        for method in spec.methods:
            records.append(_run_method(method, spec, trial, chan, passive_chan,
                                       profile, p, r, a, b))
    return records


def _trial_worker(args: Tuple[ScenarioSpec, int]) -> List[TrialRecord]:
    return run_trial(*args)


def run_sweep(spec: ScenarioSpec, workers: int = 1,
              progress: Optional[Callable[[int, int], None]] = None
              ) -> List[TrialRecord]:
    """Run every trial; record order is trial-major and deterministic."""
    per_trial: List[Optional[List[TrialRecord]]] = [None] * spec.n_trials
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = [(spec, t) for t in range(spec.n_trials)]
            for done, recs in enumerate(pool.map(_trial_worker, jobs)):
                per_trial[done] = recs
                if progress:
                    progress(done + 1, spec.n_trials)
    else:
        for t in range(spec.n_trials):
            per_trial[t] = run_trial(spec, t)
            if progress:
                progress(t + 1, spec.n_trials)
    records: List[TrialRecord] = []
    for recs in per_trial:
        assert recs is not None
        records.extend(recs)
    return records


# -- persistence -----------------------------------------------------------

RESULT_COLUMNS = (
    "traffic_case", "trial", "method", "p_all_dbm", "rho", "a_bits", "b_bits",
    "status", "eta_bit_per_j", "ee_bit_per_j", "qos", "sum_rate_bit_s",
    "total_power_w", "n_outer", "converged", "rates_bit_s", "demands_bit_s",
    "floors_bit_s",
)


def _num(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return "%.12g" % x


def _vec(v: Optional[np.ndarray]) -> str:
    if v is None:
        return ""
    return ";".join("%.12g" % float(x) for x in v)


def _record_row(rec: TrialRecord) -> List[str]:
    rates_sum = math.nan if rec.rates is None else float(np.sum(rec.rates))
    return [
        rec.traffic_case, str(rec.trial), rec.method, _num(rec.p_all_dbm),
        _num(rec.rho), str(rec.a_bits), str(rec.b_bits), rec.status,
        _num(rec.eta), _num(rec.ee_value), _num(rec.qos_value),
        _num(rates_sum), _num(rec.total_power_w), str(rec.n_outer),
        str(int(rec.converged)), _vec(rec.rates), _vec(rec.demands),
        _vec(rec.floors),
    ]


def write_results_csv(records: List[TrialRecord], path: Path) -> None:
    """Byte-stable CSV: fixed column order, %.12g floats, no timings."""
    lines = [",".join(RESULT_COLUMNS)]
    for rec in records:
        lines.append(",".join(_record_row(rec)))
    path.write_text("\n".join(lines) + "\n")


def _mean_ci(values: List[float]) -> Tuple[float, float, float]:
    """(mean, lo, hi) normal-approximation 90% interval."""
    arr = np.array(values, dtype=float)
    n = arr.size
    m = float(arr.mean())
    if n < 2:
        return m, m, m
    half = Z90 * float(arr.std(ddof=1)) / math.sqrt(n)
    return m, m - half, m + half


def summarize(spec: ScenarioSpec, records: List[TrialRecord]) -> Dict:
    """Per grid-point/method aggregates plus the demand-model metadata."""
    mu, sigma = lognormal_params(TRAFFIC_MEAN_BIT_S[spec.traffic_case],
                                 TRAFFIC_SD_BIT_S)
    groups = []
    for p, r, (a, b) in spec.grid():
        for method in spec.methods:
            sel = [rec for rec in records
                   if (rec.method == method and rec.p_all_dbm == p
                       and rec.rho == r and rec.a_bits == a and rec.b_bits == b)]
            ok = [rec for rec in sel if rec.status == "ok"]
            entry = {
                "method": method, "p_all_dbm": p, "rho": r,
                "a_bits": a, "b_bits": b,
                "n_ok": len(ok), "n_fail": len(sel) - len(ok),
            }
            if ok:
                for key, vals in (
                        ("eta", [rec.eta for rec in ok]),
                        ("ee", [rec.ee_value for rec in ok]),
                        ("qos", [rec.qos_value for rec in ok]),
                        ("power_w", [rec.total_power_w for rec in ok])):
                    m, lo, hi = _mean_ci(vals)
                    entry[f"{key}_mean"] = m
                    entry[f"{key}_ci90"] = [lo, hi]
                entry["n_outer_mean"] = float(np.mean([rec.n_outer for rec in ok]))
            groups.append(entry)
    return {
        "traffic_case": spec.traffic_case,
        "demand_model": {
            "distribution": "lognormal",
            "mean_bit_s": TRAFFIC_MEAN_BIT_S[spec.traffic_case],
            "sd_bit_s": TRAFFIC_SD_BIT_S,
            "log_mu": mu, "log_sigma": sigma,
            "floor_rule": "min(0.1 * demand, 1e6)",
        },
        "dims": {"n_tx": spec.dims[0], "n_users": spec.dims[1],
                 "n_ris": spec.dims[2]},
        "base_seed": spec.base_seed,
        "n_trials": spec.n_trials,
        "n_records": len(records),
        "methods": list(spec.methods),
        "groups": groups,
    }


def _plot_rows(spec: ScenarioSpec, records: List[TrialRecord], field_name: str,
               axis: str) -> List[str]:
    """CSV lines: one row per (axis value, method) at the first other coords."""
    p0, r0, (a0, b0) = next(spec.grid())
    lines = [f"{axis},method,mean,lo90,hi90"]
    axis_values = {"p_all_dbm": spec.p_all_dbm, "rho": spec.rho}[axis]
    for val in axis_values:
        for method in spec.methods:
            sel = [rec for rec in records
                   if (rec.method == method and rec.status == "ok"
                       and rec.a_bits == a0 and rec.b_bits == b0
                       and (rec.p_all_dbm == val if axis == "p_all_dbm"
                            else (rec.rho == val and rec.p_all_dbm == p0)))]
            if axis == "p_all_dbm":
                sel = [rec for rec in sel if rec.rho == r0]
            if not sel:
                continue
            m, lo, hi = _mean_ci([getattr(rec, field_name) for rec in sel])
            lines.append(f"{_num(val)},{method},{_num(m)},{_num(lo)},{_num(hi)}")
    return lines


def _quantization_rows(spec: ScenarioSpec, records: List[TrialRecord]) -> List[str]:
    p0, r0, _ = next(spec.grid())
    lines = ["a_bits,b_bits,method,mean,lo90,hi90"]
    for a, b in spec.quantization:
        for method in spec.methods:
            sel = [rec for rec in records
                   if (rec.method == method and rec.status == "ok"
                       and rec.p_all_dbm == p0 and rec.rho == r0
                       and rec.a_bits == a and rec.b_bits == b)]
            if not sel:
                continue
            m, lo, hi = _mean_ci([rec.eta for rec in sel])
            lines.append(f"{a},{b},{method},{_num(m)},{_num(lo)},{_num(hi)}")
    return lines


def _convergence_rows(records: List[TrialRecord]) -> List[str]:
    lines = ["iteration,eta_bit_per_j"]
    for rec in records:
        if rec.status == "ok" and rec.eta_trace:
            for i, v in enumerate(rec.eta_trace):
                lines.append(f"{i},{_num(v)}")
            break
    return lines


def emit_results(spec: ScenarioSpec, records: List[TrialRecord],
                 out_dir: Path) -> Dict[str, Path]:
    """Write results.csv, summary.json, plotdata/, and the timing sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plot_dir = out_dir / "plotdata"
    plot_dir.mkdir(exist_ok=True)

    paths = {"results": out_dir / "results.csv",
             "summary": out_dir / "summary.json",
             "timings": out_dir / "timings.json"}
    write_results_csv(records, paths["results"])
    paths["summary"].write_text(
        json.dumps(summarize(spec, records), indent=2) + "\n")

    for name, lines in (
            ("eta_vs_power.csv", _plot_rows(spec, records, "eta", "p_all_dbm")),
            ("eta_vs_rho.csv", _plot_rows(spec, records, "eta", "rho")),
            ("qos_vs_power.csv", _plot_rows(spec, records, "qos_value", "p_all_dbm")),
            ("eta_vs_quantization.csv", _quantization_rows(spec, records)),
            ("convergence.csv", _convergence_rows(records))):
        p = plot_dir / name
        p.write_text("\n".join(lines) + "\n")
        paths[name] = p

    # wall clock goes in its own file so the main outputs stay reproducible
    walls = [rec.wall_s for rec in records]
    by_method = {}
    for method in spec.methods:
        ws = [rec.wall_s for rec in records if rec.method == method]
        if ws:
            by_method[method] = {"mean_s": float(np.mean(ws)),
                                 "max_s": float(np.max(ws))}
    paths["timings"].write_text(json.dumps({
        "total_wall_s": float(np.sum(walls)) if walls else 0.0,
        "per_method": by_method,
    }, indent=2) + "\n")
    return paths
