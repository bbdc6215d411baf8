"""Alternating beam/surface optimization of demand-aware energy efficiency.

The fractional objective (clipped sum rate over total power) is handled with
a quadratic transform: closed-form auxiliary updates alternate with two conic
subproblems, one over the transmit beams and one over the surface response.
Discrete surfaces are produced by a staged quantization search that pins the
most confident elements round by round. Every block update keeps the
surrogate objective non-decreasing, which is checked at run time.

Internally the subproblems work in scaled units (rates per Hz, signal
amplitudes relative to the receiver noise level) to keep the conic programs
well conditioned; all reported quantities are in bit/s, watts and bit/J.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import conic
from .channel import ChannelRealization
from .config import SystemConfig
from .conic import AffineExpr, ConicProgram
from .linkmodel import (
    BeamformerState,
    DemandProfile,
    ErrorStats,
    PowerBreakdown,
    average_rate,
    bs_power,
    build_error_stats,
    ee,
    iree,
    power_breakdown,
    qos,
    ris_emitted_power,
    total_power,
)


class InfeasibleConfigurationError(RuntimeError):
    """No feasible point exists: demands/floors exceed what the budget allows."""


class SubproblemError(RuntimeError):
    """The conic backend could not produce a usable iterate."""


class MonotonicityError(RuntimeError):
    """The surrogate objective decreased beyond solver tolerance."""


# -- discrete reflection codebooks -----------------------------------------


@dataclass
class Codebook:
    """Discrete reflection values, amplitude-major ordering.

    entries[i * 2^b_bits + m] = amp_i * exp(j phi_m); a_bits = 0 marks a
    fixed-amplitude (phase-only) book.
    """

    a_bits: int
    b_bits: int
    alpha_max: float
    entries: np.ndarray

    @property
    def n_phase(self) -> int:
        return 2 ** self.b_bits

    def amplitude_level(self, entry_index: int) -> int:
        return entry_index // self.n_phase

    def step_down(self, entry_index: int) -> Optional[int]:
        """Same phase, one amplitude level lower; None at the bottom level."""
        if self.amplitude_level(entry_index) == 0:
            return None
        return entry_index - self.n_phase


def build_codebook(a_bits: int, b_bits: int, alpha_max: float) -> Codebook:
    """Graded amplitude/phase grid: 2^a amplitudes times 2^b phases."""
    if a_bits < 1 or b_bits < 1:
        raise ValueError("codebook needs at least one amplitude and one phase bit")
    if alpha_max <= 0:
        raise ValueError("amplitude cap must be positive")
    n_amp, n_ph = 2 ** a_bits, 2 ** b_bits
    amps = alpha_max * np.arange(1, n_amp + 1) / n_amp
    phases = np.exp(2j * np.pi * np.arange(n_ph) / n_ph)
    entries = (amps[:, None] * phases[None, :]).reshape(-1)
    return Codebook(a_bits=a_bits, b_bits=b_bits, alpha_max=alpha_max, entries=entries)


def phase_only_codebook(b_bits: int) -> Codebook:
    """Unit-modulus book for passive surfaces: 2^b phases, amplitude 1."""
    if b_bits < 1:
        raise ValueError("codebook needs at least one phase bit")
    phases = np.exp(2j * np.pi * np.arange(2 ** b_bits) / 2 ** b_bits)
    return Codebook(a_bits=0, b_bits=b_bits, alpha_max=1.0, entries=phases)


def project_to_codebook(theta: np.ndarray, cb: Codebook) -> Tuple[np.ndarray, np.ndarray]:
    """Per-element nearest codebook entry; ties take the smaller index."""
    if len(cb.entries) == 0:
        raise ValueError("empty codebook")
    theta = np.asarray(theta, dtype=complex)
    dist = np.abs(theta[:, None] - cb.entries[None, :])
    idx = np.argmin(dist, axis=1)
    return cb.entries[idx], idx


def normalized_distance(theta_rounded: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Projection displacement relative to the continuous magnitude.

    Zero continuous entries map to +inf (nothing to preserve there, the
    element is immediately eligible for pinning).
    """
    theta = np.asarray(theta, dtype=complex)
    diff = np.abs(np.asarray(theta_rounded, dtype=complex) - theta)
    mag = np.abs(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(mag > 0, diff / np.where(mag > 0, mag, 1.0), np.inf)
    return np.where((diff == 0) & (mag == 0), 0.0, d)


# -- closed-form auxiliary updates -----------------------------------------


def efficiency_ratio_weight(u: np.ndarray, chan: ChannelRealization,
                            state: BeamformerState, cfg: SystemConfig,
                            phase_bits: int) -> float:
    """Scalar weight of the outer quadratic transform.

    sqrt(sum u) over the FULL power bill (amplifier slopes and every static
    term); this is the choice that makes the transformed objective collapse
    back to the efficiency ratio exactly.
    """
    total = np.sum(u)
    if total < 0:
        raise ValueError("rate slacks must sum to a non-negative value")
    return float(np.sqrt(total) / total_power(chan, state, cfg, phase_bits))


def sinr_ratio_weight(numerator_re: float, v: float) -> float:
    """Per-user inner-transform weight Re(signal)/disturbance."""
    if v <= 0:
        raise ValueError("disturbance slack must be positive")
    return float(numerator_re) / float(v)


def quadratic_transform_value(u: np.ndarray, y: float, total_power_w: float) -> float:
    """Transformed objective 2 y sqrt(sum u) - y^2 P."""
    return 2.0 * y * float(np.sqrt(max(np.sum(u), 0.0))) - y ** 2 * total_power_w


# -- optimizer configuration and state -------------------------------------


@dataclass
class OptimizerConfig:
    """Knobs of the alternating search."""

    epsilon: float = 1e-3          # relative |efficiency change| stop threshold
    max_outer: int = 30
    q_rounds: int = 3              # staged-quantization rounds per surface step
    polish_sweeps: int = 2         # post-rounding coordinate sweeps, 0 disables
    amplitude_bits: int = 2
    phase_bits: int = 2
    continuous_surface: bool = False
    objective: str = "iree"        # "iree" clips rates at demand, "ee" does not
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    solver_max_iter: int = 200
    keep_iterates: bool = False    # snapshot (w, theta) at every recorded stage

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.q_rounds < 1:
            raise ValueError("need at least one quantization round")
        if self.objective not in ("iree", "ee"):
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass
class StageRecord:
    """One entry of the per-stage optimization trace.

    restoration marks a step taken from a floor-violating point (possible
    only straight after initialization); it starts a new monotone segment.
    """

    iteration: int
    stage: str            # refresh | surface | beam
    g: float
    eta: float
    solve_ms: float
    status: str
    gap: float
    restoration: bool = False
    w: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None


@dataclass
class SurfaceStepData:
    """Fixed-beam operators entering the surface subproblem.

    cross[k][k2] maps theta to the k2-th beam's disturbance seen by user k
    (own-beam entry uses the innovation scale only); sig_rows[k] . theta is
    the useful-signal amplitude; amp_rows[k] scales the surface-noise leak;
    out_rows[k] gives the per-beam surface output.
    """

    sig_rows: np.ndarray             # (K, N) complex
    cross: List[List[np.ndarray]]    # K x K matrices (N, N)
    amp_rows: np.ndarray             # (K, N) real
    out_rows: np.ndarray             # (K, N) complex
    bs_power_w: float


def build_surface_step_data(chan: ChannelRealization, stats: ErrorStats,
                            w: np.ndarray, cfg: SystemConfig) -> SurfaceStepData:
    k_users, n = chan.n_users, chan.n_ris
    hw = chan.h_bs_ris @ w                       # (N, K)
    sig = stats.rho * chan.h_ru_est.conj() * hw.T        # (K, N)
    cross: List[List[np.ndarray]] = []
    amp = np.zeros((k_users, n))
    for k in range(k_users):
        g = stats.factors[k]
        row: List[np.ndarray] = []
        for k2 in range(k_users):
            if k2 == k:
                row.append(stats.q_self[k] * np.diag(hw[:, k]))
            else:
                row.append(g @ np.diag(hw[:, k2]))
        cross.append(row)
        amp[k] = np.sqrt(cfg.noise_ris_w) * np.sqrt(np.sum(np.abs(g) ** 2, axis=0))
    return SurfaceStepData(
        sig_rows=sig,
        cross=cross,
        amp_rows=amp,
        out_rows=hw.T.copy(),
        bs_power_w=bs_power(w, cfg),
    )


def surface_point_terms(data: SurfaceStepData, theta: np.ndarray,
                        cfg: SystemConfig) -> Tuple[np.ndarray, np.ndarray, float]:
    """Signal amplitudes, disturbance powers and emitted power at one theta."""
    k_users = data.sig_rows.shape[0]
    a = data.sig_rows @ theta
    v = np.zeros(k_users)
    for k in range(k_users):
        acc = 0.0
        for k2 in range(k_users):
            acc += float(np.linalg.norm(data.cross[k][k2] @ theta) ** 2)
        acc += float(np.linalg.norm(data.amp_rows[k] * theta) ** 2)
        v[k] = acc + cfg.noise_user_w
    emitted = float(np.sum(np.abs(data.out_rows * theta[None, :]) ** 2)) \
        + cfg.noise_ris_w * float(np.sum(np.abs(theta) ** 2))
    return a, v, emitted


@dataclass
class _Auxiliaries:
    """Internally scaled quadratic-transform state at one (w, theta) point."""

    u: np.ndarray          # rates per Hz, clipped to the objective's range
    v: np.ndarray          # disturbance over receiver noise, >= 1
    z: np.ndarray
    y: float
    g: float
    power_w: float
    rate: np.ndarray       # pre-clip per-Hz rate bound, for floor checks


def _element_bits(cb: Optional[Codebook], ocfg: OptimizerConfig) -> int:
    if cb is not None and cb.b_bits >= 1 and not ocfg.continuous_surface:
        return cb.b_bits
    return ocfg.phase_bits


def _surface_surrogate(data: SurfaceStepData, theta: np.ndarray, y: float,
                       z: np.ndarray, d_int: np.ndarray, cfg: SystemConfig,
                       ocfg: OptimizerConfig, bits: int,
                       ) -> Tuple[float, np.ndarray, np.ndarray]:
    """Surrogate objective at a concrete theta with (y, z) held fixed.

    Returns (g, u, rate): rate is the pre-clip per-user bound, used to
    check the hard floors on quantization candidates.
    """
    a, v_w, emitted = surface_point_terms(data, theta, cfg)
    noise = cfg.noise_user_w
    v = v_w / noise
    re_a = a.real / np.sqrt(noise)
    q = 2.0 * z * re_a - z ** 2 * v
    rate = np.log2(np.maximum(1.0 + q, 1e-300))
    if ocfg.objective == "iree":
        u = np.clip(rate, 0.0, d_int)
    else:
        u = np.maximum(rate, 0.0)
    power = data.bs_power_w + cfg.mu_ris * emitted + cfg.p_ris_static_w \
        + cfg.n_ris * cfg.element_power_w(bits)
    return quadratic_transform_value(u, y, power), u, rate


def _fresh_rate(data: SurfaceStepData, theta: np.ndarray,
                cfg: SystemConfig) -> np.ndarray:
    """Per-Hz rate bound at theta with the inner auxiliary re-tightened.

    This is what the next refresh will report, so it is the right quantity
    for floor checks on candidate surfaces; the stale-z surrogate rate can
    go negative at points far from the incumbent and would over-reject.
    """
    a, v_w, _ = surface_point_terms(data, theta, cfg)
    noise = cfg.noise_user_w
    v = v_w / noise
    re_a = a.real / np.sqrt(noise)
    return np.log2(1.0 + re_a ** 2 / v)


def _beam_point_value(chan: ChannelRealization, stats: ErrorStats,
                      theta: np.ndarray, w: np.ndarray, y: float, z: np.ndarray,
                      d_int: np.ndarray, cfg: SystemConfig, ocfg: OptimizerConfig,
                      bits: int) -> float:
    """Surrogate objective at a concrete w with (y, z) held fixed.

    Independent of any solver output: slacks are recomputed tight, so a
    stalled iterate is scored by what it actually achieves.
    """
    data = build_surface_step_data(chan, stats, w, cfg)
    g, _, _ = _surface_surrogate(data, theta, y, z, d_int, cfg, ocfg, bits)
    return g


def _refresh(data: SurfaceStepData, theta: np.ndarray, d_int: np.ndarray,
             cfg: SystemConfig, ocfg: OptimizerConfig, bits: int) -> _Auxiliaries:
    """Closed-form block updates of (v, z, u, y) at the current point.

    Each update maximizes the surrogate over its own block, so the value
    never drops below the preceding stage.
    """
    a, v_w, emitted = surface_point_terms(data, theta, cfg)
    noise = cfg.noise_user_w
    v = v_w / noise
    re_a = a.real / np.sqrt(noise)
    z = re_a / v
    rate = np.log2(1.0 + re_a ** 2 / v)
    if ocfg.objective == "iree":
        u = np.clip(rate, 0.0, d_int)
    else:
        u = np.maximum(rate, 0.0)
    power = data.bs_power_w + cfg.mu_ris * emitted + cfg.p_ris_static_w \
        + cfg.n_ris * cfg.element_power_w(bits)
    y = float(np.sqrt(np.sum(u)) / power)
    g = quadratic_transform_value(u, y, power)
    return _Auxiliaries(u=u, v=v, z=z, y=y, g=g, power_w=power, rate=rate)


# -- conic subproblems -----------------------------------------------------


def _accept_report(prog: ConicProgram, rep: conic.SolveReport,
                   step_name: str) -> None:
    if rep.status == "optimal":
        return
    if rep.status == "infeasible":
        raise InfeasibleConfigurationError(
            f"{step_name} subproblem infeasible: demand floors cannot be met "
            f"within the power budget; relax c_min or raise the budget")
    if rep.status == "numerical-limit" and np.all(np.isfinite(rep.x)):
        checks = conic.check_solution(prog, rep.x)
        if conic.max_violation(checks) <= 1e-5 and np.isfinite(rep.objective):
            return
    raise SubproblemError(f"{step_name} subproblem ended with status {rep.status}")


def solve_beam_subproblem(chan: ChannelRealization, stats: ErrorStats,
                          theta: np.ndarray, y: float, z: np.ndarray,
                          d_int: np.ndarray, cmin_int: np.ndarray,
                          cfg: SystemConfig, ocfg: OptimizerConfig,
                          bits: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray,
                                              conic.SolveReport, Tuple[int, int]]:
    """Exact conic solve over the transmit beams with the surface fixed."""
    k_users, n_tx, n = chan.n_users, chan.n_tx, chan.n_ris
    noise = cfg.noise_user_w
    sn = np.sqrt(noise)
    th_h = theta[:, None] * chan.h_bs_ris            # (N, n_tx): surface-through map

    prog = ConicProgram("beam-step")
    wv = [prog.add_complex_vector(f"w{k}", n_tx) for k in range(k_users)]
    u = [prog.add_var(f"u{k}", lb=float(cmin_int[k]),
                      ub=float(d_int[k]) if ocfg.objective == "iree" else None)
         for k in range(k_users)]
    v = [prog.add_var(f"v{k}") for k in range(k_users)]
    t = prog.add_var("t")
    p_bs = prog.add_var("p_bs", ub=cfg.p_bs_max_w)
    p_ris = prog.add_var("p_ris", ub=cfg.p_ris_max_w)

    rows: List[AffineExpr] = []
    for k in range(k_users):
        rows += ConicProgram.vector_rows(wv[k])
    prog.sum_squares_le(rows, p_bs)

    rows = []
    for k in range(k_users):
        rows += ConicProgram.matvec_rows(th_h, wv[k])
    rows.append(AffineExpr.constant(
        float(np.sqrt(cfg.noise_ris_w) * np.linalg.norm(theta))))
    prog.sum_squares_le(rows, p_ris)

    for k in range(k_users):
        g = stats.factors[k]
        cross_map = (g @ th_h) / sn
        own_map = (stats.q_self[k] / sn) * th_h
        rows = []
        for k2 in range(k_users):
            rows += ConicProgram.matvec_rows(own_map if k2 == k else cross_map, wv[k2])
        amp_const = np.sqrt(cfg.noise_ris_w) * np.linalg.norm(
            np.sqrt(np.sum(np.abs(g) ** 2, axis=0)) * theta) / sn
        rows.append(AffineExpr.constant(float(amp_const)))
        prog.sum_squares_le(rows, v[k] - 1.0)

    for k in range(k_users):
        row = stats.rho * (chan.h_ru_est[k].conj() * theta) @ chan.h_bs_ris / sn
        re_sig = ConicProgram.re_inner(row.conj(), wv[k])
        q_expr = 2.0 * float(z[k]) * re_sig - float(z[k]) ** 2 * v[k]
        conic.encode_log_rate(prog, u[k], q_expr, 1.0)

    u_sum = AffineExpr()
    for k in range(k_users):
        u_sum = u_sum + u[k]
    conic.encode_sqrt_epigraph(prog, t, u_sum)

    static = cfg.p_bs_static_w + cfg.p_ris_static_w + n * cfg.element_power_w(bits)
    obj = t * (2.0 * y) - p_bs * (cfg.mu_bs * y ** 2) - p_ris * (cfg.mu_ris * y ** 2) \
        - y ** 2 * static
    prog.set_objective_max(obj)

    rep = conic.solve(prog, tol_gap=ocfg.tol_gap, tol_feas=ocfg.tol_feas,
                      max_iter=ocfg.solver_max_iter)
    _accept_report(prog, rep, "beam")
    w_new = np.stack([rep.complex_value(wv[k]) for k in range(k_users)], axis=1)
    u_new = np.array([rep.value(u[k]) for k in range(k_users)])
    v_new = np.array([rep.value(v[k]) for k in range(k_users)])
    return w_new, u_new, v_new, rep, (prog.n_vars, prog.n_constraints)


def solve_surface_subproblem(data: SurfaceStepData, y: float, z: np.ndarray,
                             d_int: np.ndarray, cmin_int: np.ndarray,
                             cfg: SystemConfig, ocfg: OptimizerConfig, bits: int,
                             alpha_max: float,
                             fixed: Optional[Dict[int, complex]] = None,
                             ) -> Tuple[np.ndarray, np.ndarray, np.ndarray,
                                        conic.SolveReport, Tuple[int, int]]:
    """Exact conic solve of the relaxed surface response with beams fixed.

    fixed pins selected elements to already-quantized values; the remaining
    elements move inside the per-element modulus ball.
    """
    k_users, n = data.sig_rows.shape
    noise = cfg.noise_user_w
    sn = np.sqrt(noise)
    fixed = fixed or {}

    prog = ConicProgram("surface-step")
    th = prog.add_complex_vector("theta", n)
    u = [prog.add_var(f"u{k}", lb=float(cmin_int[k]),
                      ub=float(d_int[k]) if ocfg.objective == "iree" else None)
         for k in range(k_users)]
    v = [prog.add_var(f"v{k}") for k in range(k_users)]
    t = prog.add_var("t")
    p_ris = prog.add_var("p_ris", ub=cfg.p_ris_max_w)

    for i in range(n):
        prog.add_soc([th.real_expr(i), th.imag_expr(i)],
                     AffineExpr.constant(alpha_max))
    for i, val in fixed.items():
        prog.add_eq(th.real_expr(i), complex(val).real)
        prog.add_eq(th.imag_expr(i), complex(val).imag)

    rows: List[AffineExpr] = []
    for k in range(k_users):
        rows += ConicProgram.matvec_rows(np.diag(data.out_rows[k]), th)
    rows += [r * np.sqrt(cfg.noise_ris_w) for r in ConicProgram.vector_rows(th)]
    prog.sum_squares_le(rows, p_ris)

    for k in range(k_users):
        rows = []
        for k2 in range(k_users):
            rows += ConicProgram.matvec_rows(data.cross[k][k2] / sn, th)
        rows += ConicProgram.matvec_rows(np.diag(data.amp_rows[k]) / sn, th)
        prog.sum_squares_le(rows, v[k] - 1.0)

    for k in range(k_users):
        re_sig = ConicProgram.re_inner(data.sig_rows[k].conj() / sn, th)
        q_expr = 2.0 * float(z[k]) * re_sig - float(z[k]) ** 2 * v[k]
        conic.encode_log_rate(prog, u[k], q_expr, 1.0)

    u_sum = AffineExpr()
    for k in range(k_users):
        u_sum = u_sum + u[k]
    conic.encode_sqrt_epigraph(prog, t, u_sum)

    static = data.bs_power_w + cfg.p_ris_static_w + cfg.n_ris * cfg.element_power_w(bits)
    obj = t * (2.0 * y) - p_ris * (cfg.mu_ris * y ** 2) - y ** 2 * static
    prog.set_objective_max(obj)

    rep = conic.solve(prog, tol_gap=ocfg.tol_gap, tol_feas=ocfg.tol_feas,
                      max_iter=ocfg.solver_max_iter)
    _accept_report(prog, rep, "surface")
    theta_new = rep.complex_value(th)
    u_new = np.array([rep.value(u[k]) for k in range(k_users)])
    v_new = np.array([rep.value(v[k]) for k in range(k_users)])
    return theta_new, u_new, v_new, rep, (prog.n_vars, prog.n_constraints)


# -- staged quantization of the surface ------------------------------------


def enforce_surface_power(theta_q: np.ndarray, idx: np.ndarray,
                          data: SurfaceStepData, cb: Codebook,
                          cfg: SystemConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Step amplitudes down (largest first) until the emitted-power cap holds."""
    theta_q = theta_q.copy()
    idx = idx.copy()
    cap = cfg.p_ris_max_w
    while True:
        _, _, emitted = surface_point_terms(data, theta_q, cfg)
        if emitted <= cap * (1.0 + 1e-12):
            return theta_q, idx
        order = np.argsort(-np.abs(theta_q))
        stepped = False
        for n in order:
            down = cb.step_down(int(idx[n]))
            if down is not None:
                idx[n] = down
                theta_q[n] = cb.entries[down]
                stepped = True
                break
        if not stepped:
            raise InfeasibleConfigurationError(
                "surface power cap violated even at the lowest amplitude level")


def quantize_surface(data: SurfaceStepData, incumbent: np.ndarray,
                     incumbent_idx: np.ndarray, cb: Codebook, y: float,
                     z: np.ndarray, d_int: np.ndarray, cmin_int: np.ndarray,
                     cfg: SystemConfig, ocfg: OptimizerConfig, bits: int,
                     ) -> Tuple[np.ndarray, np.ndarray, float, List[dict]]:
    """Staged search for a discrete surface that beats the incumbent.

    Each round solves the relaxed subproblem with already-pinned elements
    held at their discrete values, projects, scores the candidate, and pins
    the half of the remaining elements whose projection moved them least.
    The incumbent is candidate zero, so the result never scores below it.
    """
    best_theta = np.asarray(incumbent, dtype=complex).copy()
    best_idx = np.asarray(incumbent_idx).copy()
    best_g, _, _ = _surface_surrogate(data, best_theta, y, z, d_int, cfg, ocfg, bits)
    fixed: Dict[int, complex] = {}
    unfixed = list(range(len(incumbent)))
    trace: List[dict] = []

    for rnd in range(ocfg.q_rounds):
        try:
            theta_c, _, _, rep, dims = solve_surface_subproblem(
                data, y, z, d_int, cmin_int, cfg, ocfg, bits,
                alpha_max=cb.alpha_max, fixed=fixed)
        except (InfeasibleConfigurationError, SubproblemError):
            break
        theta_q, idx = project_to_codebook(theta_c, cb)
        theta_q, idx = enforce_surface_power(theta_q, idx, data, cb, cfg)
        g_q, _, _ = _surface_surrogate(data, theta_q, y, z, d_int, cfg,
                                       ocfg, bits)
        rate_q = _fresh_rate(data, theta_q, cfg)
        # challengers must beat the incumbent AND keep every rate floor;
        # otherwise a later beam step could start from an infeasible point
        if g_q > best_g and np.all(rate_q >= cmin_int - 1e-12):
            best_g, best_theta, best_idx = g_q, theta_q, idx
        d = normalized_distance(theta_q, theta_c)
        unfixed.sort(key=lambda i: d[i])
        n_fix = math.ceil(len(unfixed) / 2)
        for i in unfixed[:n_fix]:
            fixed[i] = complex(theta_q[i])
        unfixed = unfixed[n_fix:]
        trace.append({"round": rnd + 1, "g_continuous": rep.objective,
                      "g_discrete": g_q, "n_fixed": len(fixed), "dims": dims})
        if not unfixed:
            break
    best_theta, best_idx, best_g = polish_discrete(
        data, best_theta, best_idx, cb, y, z, d_int, cmin_int, cfg, ocfg, bits)
    return best_theta, best_idx, best_g, trace


def polish_discrete(data: SurfaceStepData, theta: np.ndarray, idx: np.ndarray,
                    cb: Codebook, y: float, z: np.ndarray, d_int: np.ndarray,
                    cmin_int: np.ndarray, cfg: SystemConfig,
                    ocfg: OptimizerConfig, bits: int,
                    ) -> Tuple[np.ndarray, np.ndarray, float]:
    """Coordinate sweeps over the codebook from an already-discrete point.

    Euclidean rounding picks the distance-nearest entry, which for large
    phase error prefers a smaller amplitude than the surrogate does; these
    sweeps fix that by scoring actual entry swaps. Moves must improve g,
    keep the emitted-power cap, and never break a rate floor that held.
    """
    theta = np.asarray(theta, dtype=complex).copy()
    idx = np.asarray(idx).copy()
    g_cur, _, _ = _surface_surrogate(data, theta, y, z, d_int, cfg, ocfg, bits)
    floors_held = bool(np.all(_fresh_rate(data, theta, cfg) >= cmin_int - 1e-12))
    # best single swap per step, not per-element commits in index order: the
    # emitted-power cap is shared, and committing a small early gain can eat
    # the headroom a larger later move needs
    for _ in range(ocfg.polish_sweeps * len(theta)):
        best_move, best_gain = None, 1e-12 * max(abs(g_cur), 1e-9)
        for n in range(len(theta)):
            for e, entry in enumerate(cb.entries):
                if e == idx[n]:
                    continue
                cand = theta.copy()
                cand[n] = entry
                _, _, emitted = surface_point_terms(data, cand, cfg)
                if emitted > cfg.p_ris_max_w * (1.0 + 1e-12):
                    continue
                g_c, _, _ = _surface_surrogate(data, cand, y, z, d_int,
                                               cfg, ocfg, bits)
                if g_c - g_cur <= best_gain:
                    continue
                rate_c = _fresh_rate(data, cand, cfg)
                if floors_held and not np.all(rate_c >= cmin_int - 1e-12):
                    continue
                best_move, best_gain = (n, e), g_c - g_cur
                best_rate = rate_c
        if best_move is None:
            break
        n, e = best_move
        theta[n] = cb.entries[e]
        idx[n] = e
        g_cur += best_gain
        if not floors_held:
            floors_held = bool(np.all(best_rate >= cmin_int - 1e-12))
    g_cur, _, _ = _surface_surrogate(data, theta, y, z, d_int, cfg, ocfg, bits)
    return theta, idx, g_cur


def exhaustive_surface_search(data: SurfaceStepData, cb: Codebook, y: float,
                              z: np.ndarray, d_int: np.ndarray,
                              cfg: SystemConfig, ocfg: OptimizerConfig,
                              bits: int) -> Tuple[float, np.ndarray]:
    """Best surrogate value over every joint codebook assignment.

    Enumerates |entries|^N combinations (power-cap feasible only), so this
    is an oracle for small surfaces, not an algorithm. Returns (g, theta).
    """
    n = data.sig_rows.shape[1]
    if len(cb.entries) ** n > 2_000_000:
        raise ValueError("joint codebook too large to enumerate")
    best_g = -np.inf
    best_theta = np.full(n, cb.entries[0])
    for combo in itertools.product(cb.entries, repeat=n):
        theta = np.array(combo)
        _, _, emitted = surface_point_terms(data, theta, cfg)
        if emitted > cfg.p_ris_max_w * (1.0 + 1e-12):
            continue
        g, _, _ = _surface_surrogate(data, theta, y, z, d_int, cfg, ocfg, bits)
        if g > best_g:
            best_g, best_theta = g, theta
    return best_g, best_theta


# -- initialization --------------------------------------------------------


def initialize_state(rng: np.random.Generator, chan: ChannelRealization,
                     cfg: SystemConfig, cb: Codebook,
                     ) -> Tuple[BeamformerState, np.ndarray]:
    """Feasible start: random discrete surface, matched-filter beams.

    The surface steps down uniformly in amplitude (beams rescale when the
    book is phase-only) until the emitted-power cap holds; beams take 90%
    of the transmit budget, split evenly.
    """
    n, k_users = chan.n_ris, chan.n_users
    idx = rng.integers(0, len(cb.entries), size=n)
    theta = cb.entries[idx].copy()

    h_eff = cfg.rho * (chan.h_ru_est.conj() * theta[None, :]) @ chan.h_bs_ris  # (K, n_tx)
    w = np.zeros((chan.n_tx, k_users), dtype=complex)
    per_user = np.sqrt(0.9 * cfg.p_bs_max_w / k_users)
    for k in range(k_users):
        nrm = np.linalg.norm(h_eff[k])
        if nrm > 0:
            w[:, k] = per_user * h_eff[k].conj() / nrm
        else:
            raw = rng.normal(size=chan.n_tx) + 1j * rng.normal(size=chan.n_tx)
            w[:, k] = per_user * raw / np.linalg.norm(raw)

    state = BeamformerState(w=w, theta=theta)
    for _ in range(2 ** max(cb.a_bits, 1) + 1):
        if ris_emitted_power(chan, state, cfg) <= cfg.p_ris_max_w:
            break
        stepped = False
        for i in range(n):
            down = cb.step_down(int(idx[i]))
            if down is not None:
                idx[i] = down
                stepped = True
        theta = cb.entries[idx].copy()
        state = BeamformerState(w=w, theta=theta)
        if not stepped:
            break
    emitted = ris_emitted_power(chan, state, cfg)
    if emitted > cfg.p_ris_max_w:
        noise_part = cfg.noise_ris_w * float(np.sum(np.abs(theta) ** 2))
        if noise_part >= cfg.p_ris_max_w:
            raise InfeasibleConfigurationError(
                "surface budget below the amplified-noise floor at minimum amplitude")
        scale = np.sqrt(0.95 * (cfg.p_ris_max_w - noise_part) / (emitted - noise_part))
        state = BeamformerState(w=w * scale, theta=theta)
    return state, idx


# -- results and the outer loop --------------------------------------------


@dataclass
class OptimizationResult:
    """Converged beams/surface with metrics and the full stage trace."""

    state: BeamformerState
    theta_indices: Optional[np.ndarray]
    eta: float                  # bit/J, demand-clipped
    ee_value: float             # bit/J, unclipped
    rates: np.ndarray           # bit/s
    qos_value: float
    power: PowerBreakdown
    converged: bool
    n_outer: int
    history: List[StageRecord]
    beam_dims: Tuple[int, int]
    surface_dims: Tuple[int, int]
    phase_bits: int

    @property
    def g_trace(self) -> np.ndarray:
        return np.array([r.g for r in self.history])

    @property
    def eta_trace(self) -> np.ndarray:
        iters = {}
        for r in self.history:
            iters[r.iteration] = r.eta
        return np.array([iters[i] for i in sorted(iters)])


def _external_eta(chan: ChannelRealization, stats: ErrorStats,
                  state: BeamformerState, profile: DemandProfile,
                  cfg: SystemConfig, bits: int, objective: str) -> float:
    rates = average_rate(chan, stats, state, cfg)
    power = total_power(chan, state, cfg, bits)
    if objective == "ee":
        return ee(rates, power)
    return iree(rates, profile.demands, power)


def optimize(chan: ChannelRealization, profile: DemandProfile, cfg: SystemConfig,
             ocfg: Optional[OptimizerConfig] = None,
             rng: Optional[np.random.Generator] = None,
             codebook: Optional[Codebook] = None) -> OptimizationResult:
    """Alternating block search until the efficiency stabilizes.

    Per iteration: closed-form auxiliary refresh, surface step (staged
    quantization, or the relaxed solve in continuous mode), second refresh,
    beam step, efficiency evaluation. Stops on relative efficiency change
    below epsilon or at max_outer.

    Every block move is accepted only if the surrogate value at the new
    point (recomputed from scratch, never trusted from the solver) does not
    fall below the incumbent's; otherwise the incumbent is kept, so a
    stalled solve degrades progress but never monotonicity. The recorded g
    trace must be non-decreasing within 10x solver gap; a violation raises.
    """
    ocfg = ocfg or OptimizerConfig()
    rng = rng or np.random.default_rng()
    if profile.demands.shape != (chan.n_users,):
        raise ValueError("demand profile does not match the user count")
    stats = build_error_stats(chan, cfg.rho)
    if codebook is None:
        if cfg.ris_active:
            codebook = build_codebook(ocfg.amplitude_bits, ocfg.phase_bits,
                                      cfg.alpha_max)
        else:
            codebook = phase_only_codebook(ocfg.phase_bits)
    bits = _element_bits(codebook, ocfg)
    d_int = profile.demands / cfg.bandwidth_hz
    cmin_int = profile.c_min / cfg.bandwidth_hz

    state, theta_idx = initialize_state(rng, chan, cfg, codebook)
    history: List[StageRecord] = []
    beam_dims = (0, 0)
    surface_dims = (0, 0)
    eta_prev: Optional[float] = None
    converged = False
    n_outer = 0

    def record(it: int, stage: str, g: float, solve_ms: float, status: str,
               gap: float, restoration: bool = False) -> None:
        eta_now = _external_eta(chan, stats, state, profile, cfg, bits,
                                ocfg.objective)
        rec = StageRecord(iteration=it, stage=stage, g=g, eta=eta_now,
                          solve_ms=solve_ms, status=status, gap=gap,
                          restoration=restoration)
        if ocfg.keep_iterates:
            rec.w = state.w.copy()
            rec.theta = state.theta.copy()
        history.append(rec)

    for it in range(1, ocfg.max_outer + 1):
        n_outer = it
        data = build_surface_step_data(chan, stats, state.w, cfg)
        aux = _refresh(data, state.theta, d_int, cfg, ocfg, bits)
        record(it, "refresh", aux.g, 0.0, "closed-form", 0.0)

        floors_ok = bool(np.all(aux.rate >= cmin_int - 1e-12))
        t0 = time.perf_counter()
        if ocfg.continuous_surface:
            theta_idx = None
            try:
                theta_new, _, _, rep, surface_dims = solve_surface_subproblem(
                    data, aux.y, aux.z, d_int, cmin_int, cfg, ocfg, bits,
                    alpha_max=cfg.alpha_max, fixed={})
                g_new, _, _ = _surface_surrogate(data, theta_new, aux.y, aux.z,
                                                 d_int, cfg, ocfg, bits)
                if g_new >= aux.g or not floors_ok:
                    state.theta = theta_new
                    record(it, "surface", g_new,
                           1e3 * (time.perf_counter() - t0), rep.status,
                           rep.gap, restoration=not floors_ok)
                else:
                    record(it, "surface", aux.g,
                           1e3 * (time.perf_counter() - t0), "kept-incumbent", 0.0)
            except SubproblemError:
                record(it, "surface", aux.g,
                       1e3 * (time.perf_counter() - t0), "stalled", 0.0)
        else:
            theta_new, theta_idx, g_disc, rounds = quantize_surface(
                data, state.theta, theta_idx, codebook, aux.y, aux.z,
                d_int, cmin_int, cfg, ocfg, bits)
            state.theta = theta_new
            if rounds:
                surface_dims = rounds[-1]["dims"]
            record(it, "surface", g_disc,
                   1e3 * (time.perf_counter() - t0), "quantized", 0.0)

        aux2 = _refresh(data, state.theta, d_int, cfg, ocfg, bits)
        record(it, "refresh", aux2.g, 0.0, "closed-form", 0.0)

        floors_ok = bool(np.all(aux2.rate >= cmin_int - 1e-12))
        t0 = time.perf_counter()
        try:
            w_new, _, _, rep_w, beam_dims = solve_beam_subproblem(
                chan, stats, state.theta, aux2.y, aux2.z, d_int, cmin_int,
                cfg, ocfg, bits)
            g_new = _beam_point_value(chan, stats, state.theta, w_new, aux2.y,
                                      aux2.z, d_int, cfg, ocfg, bits)
            if g_new >= aux2.g or not floors_ok:
                state.w = w_new
                record(it, "beam", g_new,
                       1e3 * (time.perf_counter() - t0), rep_w.status,
                       rep_w.gap, restoration=not floors_ok)
            else:
                record(it, "beam", aux2.g,
                       1e3 * (time.perf_counter() - t0), "kept-incumbent", 0.0)
        except SubproblemError:
            record(it, "beam", aux2.g,
                   1e3 * (time.perf_counter() - t0), "stalled", 0.0)

        eta_now = history[-1].eta
        if eta_prev is not None \
                and abs(eta_now - eta_prev) <= ocfg.epsilon * max(abs(eta_prev), 1.0):
            converged = True
            break
        eta_prev = eta_now

    _assert_monotone_g(history, ocfg)

    rates = average_rate(chan, stats, state, cfg)
    pb = power_breakdown(chan, state, cfg, bits)
    return OptimizationResult(
        state=state,
        theta_indices=theta_idx,
        eta=iree(rates, profile.demands, pb.total),
        ee_value=ee(rates, pb.total),
        rates=rates,
        qos_value=qos(rates, profile.demands),
        power=pb,
        converged=converged,
        n_outer=n_outer,
        history=history,
        beam_dims=beam_dims,
        surface_dims=surface_dims,
        phase_bits=bits,
    )


def _assert_monotone_g(history: Sequence[StageRecord],
                       ocfg: OptimizerConfig) -> None:
    for prev, nxt in zip(history, history[1:]):
        if nxt.restoration:
            # feasibility-restoring step from an infeasible start; the
            # monotone chain restarts here
            continue
        tol = 10.0 * max(prev.gap, nxt.gap, ocfg.tol_gap * max(1.0, abs(prev.g)))
        if nxt.g < prev.g - tol:
            raise MonotonicityError(
                f"surrogate dropped from {prev.g:.9g} ({prev.stage}) to "
                f"{nxt.g:.9g} ({nxt.stage}) at iteration {nxt.iteration}")


def write_trace(result: OptimizationResult, path: str) -> None:
    """Per-stage CSV trace: iter, g, eta, step, solve_ms, status."""
    lines = ["iter,g,eta,step,solve_ms,status"]
    for r in result.history:
        lines.append(f"{r.iteration},{r.g:.12g},{r.eta:.12g},{r.stage},"
                     f"{r.solve_ms:.3f},{r.status}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def feasibility_report(chan: ChannelRealization, state: BeamformerState,
                       cfg: SystemConfig, cb: Optional[Codebook] = None) -> Dict[str, float]:
    """Relative slack of every hard constraint; negative means violated."""
    bs_emitted = float(np.sum(np.abs(state.w) ** 2))
    ris_emitted = ris_emitted_power(chan, state, cfg)
    out = {
        "bs_power": (cfg.p_bs_max_w - bs_emitted) / cfg.p_bs_max_w,
        "ris_power": (cfg.p_ris_max_w - ris_emitted) / cfg.p_ris_max_w,
        "modulus": float(np.min((cfg.alpha_max - np.abs(state.theta)) / cfg.alpha_max)),
    }
    if cb is not None:
        proj, _ = project_to_codebook(state.theta, cb)
        out["codebook"] = -float(np.max(np.abs(proj - state.theta))
                                 / max(cb.alpha_max, 1e-300))
    return out


# -- complexity accounting -------------------------------------------------


@dataclass
class ComplexityReport:
    """Measured subproblem sizes next to the closed-form operation counts."""

    outer_iterations: int
    q_rounds: int
    beam_vars: int
    beam_constraints: int
    surface_vars: int
    surface_constraints: int
    predicted_beam: float
    predicted_surface: float
    predicted_total: float


def complexity_report(result: OptimizationResult, cfg: SystemConfig,
                      ocfg: OptimizerConfig) -> ComplexityReport:
    k, n_t, n = cfg.n_users, cfg.n_tx, cfg.n_ris
    o1 = float((n_t * k + 3 * k) ** 2 * (5 * k + 2))
    o2 = float((n + 3 * k) ** 2 * (5 * k + n + 1))
    i_outer = result.n_outer
    q = ocfg.q_rounds
    total = i_outer * (o1 + q * o2 + q * n * np.log2(1.0 + n))
    return ComplexityReport(
        outer_iterations=i_outer,
        q_rounds=q,
        beam_vars=result.beam_dims[0],
        beam_constraints=result.beam_dims[1],
        surface_vars=result.surface_dims[0],
        surface_constraints=result.surface_dims[1],
        predicted_beam=o1,
        predicted_surface=o2,
        predicted_total=float(total),
    )
