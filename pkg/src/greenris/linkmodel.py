"""Rates, power draw and efficiency metrics for the amplifying-surface downlink.

Average rates marginalize the CSI aging error in closed form (a Jensen lower
bound on the ergodic rate); instantaneous rates evaluate one true channel
draw. Efficiency metrics relate delivered demand-clipped throughput to the
full hardware power bill.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .config import SystemConfig


@dataclass
class BeamformerState:
    """Transmit beams w (n_tx, K) and surface response theta (n_ris,)."""

    w: np.ndarray
    theta: np.ndarray

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=complex)
        self.theta = np.asarray(self.theta, dtype=complex)
        if self.w.ndim != 2:
            raise ValueError("w must be (n_tx, n_users)")
        if self.theta.ndim != 1:
            raise ValueError("theta must be a vector")

    def copy(self) -> "BeamformerState":
        return BeamformerState(self.w.copy(), self.theta.copy())


@dataclass
class ErrorStats:
    """Per-user second-order statistics of the aged channel.

    factors[k] is a square root G_k of F_k = rho^2 h_k h_k^H + (1-rho^2) s_k^2 I
    (G_k^H G_k = F_k); q_self[k] = sqrt(1-rho^2) s_k scales the self-term.
    """

    factors: np.ndarray   # (K, n_ris, n_ris)
    q_self: np.ndarray    # (K,)
    rho: float

    def covariance(self, k: int) -> np.ndarray:
        g = self.factors[k]
        return g.conj().T @ g


def build_error_stats(chan: ChannelRealization, rho: float) -> ErrorStats:
    """Assemble the aged-channel statistics for every user."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    k_users, n = chan.h_ru_est.shape
    factors = np.zeros((k_users, n, n), dtype=complex)
    q_self = np.zeros(k_users)
    for k in range(k_users):
        h = chan.h_ru_est[k]
        f_cov = rho ** 2 * np.outer(h, h.conj()) \
            + (1.0 - rho ** 2) * chan.err_std[k] ** 2 * np.eye(n)
        try:
            low = np.linalg.cholesky(f_cov)
            factors[k] = low.conj().T
        except np.linalg.LinAlgError:
            # rank-deficient (rho = 1 or zero error): PSD square root via eigh
            vals, vecs = np.linalg.eigh(f_cov)
            vals = np.clip(vals, 0.0, None)
            factors[k] = (vecs * np.sqrt(vals)) @ vecs.conj().T
        q_self[k] = np.sqrt(1.0 - rho ** 2) * chan.err_std[k]
    return ErrorStats(factors=factors, q_self=q_self, rho=rho)


def _surface_outputs(chan: ChannelRealization, state: BeamformerState) -> np.ndarray:
    """(n_ris, K) columns theta o (H w_k): the per-beam surface output."""
    return state.theta[:, None] * (chan.h_bs_ris @ state.w)


def signal_amplitudes(chan: ChannelRealization, state: BeamformerState,
                      rho: float) -> np.ndarray:
    """(K,) complex useful-signal amplitudes rho * h_k^H Theta H w_k."""
    s = _surface_outputs(chan, state)
    return rho * np.einsum("kn,nk->k", chan.h_ru_est.conj(), s)


def interference_denominator(chan: ChannelRealization, stats: ErrorStats,
                             state: BeamformerState, cfg: SystemConfig) -> np.ndarray:
    """(K,) total disturbance power under aged CSI.

    Cross-beam terms pass through the full statistic factor, the own beam
    through the innovation scale only, plus amplified surface noise and
    receiver noise.
    """
    s = _surface_outputs(chan, state)
    k_users = chan.n_users
    den = np.zeros(k_users)
    theta_abs2 = np.abs(state.theta) ** 2
    for k in range(k_users):
        g = stats.factors[k]
        cross = 0.0
        for kp in range(k_users):
            if kp == k:
                continue
            cross += np.linalg.norm(g @ s[:, kp]) ** 2
        own = stats.q_self[k] ** 2 * np.linalg.norm(s[:, k]) ** 2
        col_pow = np.sum(np.abs(g) ** 2, axis=0)
        amp_noise = cfg.noise_ris_w * float(col_pow @ theta_abs2)
        den[k] = cross + own + amp_noise + cfg.noise_user_w
    return den


def average_rate(chan: ChannelRealization, stats: ErrorStats,
                 state: BeamformerState, cfg: SystemConfig) -> np.ndarray:
    """(K,) aging-aware achievable rates in bit/s."""
    num = np.abs(signal_amplitudes(chan, state, stats.rho)) ** 2
    den = interference_denominator(chan, stats, state, cfg)
    return cfg.bandwidth_hz * np.log2(1.0 + num / den)


def instantaneous_rate(h_true: np.ndarray, chan: ChannelRealization,
                       state: BeamformerState, cfg: SystemConfig) -> np.ndarray:
    """(K,) rates for one true channel draw h_true (K, n_ris), bit/s."""
    h_true = np.asarray(h_true, dtype=complex)
    s = _surface_outputs(chan, state)
    m = h_true.conj() @ s                      # (K, K): m[k, k'] = h_k^H theta o (H w_k')
    sig = np.abs(np.diag(m)) ** 2
    inter = np.sum(np.abs(m) ** 2, axis=1) - sig
    amp = cfg.noise_ris_w * np.sum(np.abs(h_true.conj() * state.theta[None, :]) ** 2, axis=1)
    sinr = sig / (inter + amp + cfg.noise_user_w)
    return cfg.bandwidth_hz * np.log2(1.0 + sinr)


# -- power models ---------------------------------------------------------


@dataclass
class PowerBreakdown:
    """Watt-level split of the hardware bill."""

    bs_dynamic: float
    bs_static: float
    ris_dynamic: float
    ris_static: float
    ris_elements: float

    @property
    def bs_total(self) -> float:
        return self.bs_dynamic + self.bs_static

    @property
    def ris_total(self) -> float:
        return self.ris_dynamic + self.ris_static + self.ris_elements

    @property
    def total(self) -> float:
        return self.bs_total + self.ris_total


def bs_power(w: np.ndarray, cfg: SystemConfig) -> float:
    """Base-station draw: amplifier slope times emitted power plus circuits."""
    return cfg.mu_bs * float(np.sum(np.abs(w) ** 2)) + cfg.p_bs_static_w


def ris_emitted_power(chan: ChannelRealization, state: BeamformerState,
                      cfg: SystemConfig) -> float:
    """Signal plus amplified-noise power leaving the surface, watts."""
    s = _surface_outputs(chan, state)
    sig = float(np.sum(np.abs(s) ** 2))
    noise = cfg.noise_ris_w * float(np.sum(np.abs(state.theta) ** 2))
    return sig + noise


def ris_power(chan: ChannelRealization, state: BeamformerState, cfg: SystemConfig,
              phase_bits: int) -> float:
    """Surface draw: amplifier slope times emitted power, circuits, elements."""
    return cfg.mu_ris * ris_emitted_power(chan, state, cfg) \
        + cfg.p_ris_static_w + cfg.n_ris * cfg.element_power_w(phase_bits)


def power_breakdown(chan: ChannelRealization, state: BeamformerState,
                    cfg: SystemConfig, phase_bits: int) -> PowerBreakdown:
    return PowerBreakdown(
        bs_dynamic=cfg.mu_bs * float(np.sum(np.abs(state.w) ** 2)),
        bs_static=cfg.p_bs_static_w,
        ris_dynamic=cfg.mu_ris * ris_emitted_power(chan, state, cfg),
        ris_static=cfg.p_ris_static_w,
        ris_elements=cfg.n_ris * cfg.element_power_w(phase_bits),
    )


def total_power(chan: ChannelRealization, state: BeamformerState,
                cfg: SystemConfig, phase_bits: int) -> float:
    return bs_power(state.w, cfg) + ris_power(chan, state, cfg, phase_bits)


# -- efficiency and service metrics ---------------------------------------


@dataclass
class DemandProfile:
    """Per-user requested rates and hard minimums, bit/s."""

    demands: np.ndarray
    c_min: np.ndarray

    def __post_init__(self) -> None:
        self.demands = np.asarray(self.demands, dtype=float)
        self.c_min = np.asarray(self.c_min, dtype=float)
        if self.demands.shape != self.c_min.shape:
            raise ValueError("demands and minimums must align")
        if np.any(self.demands <= 0):
            raise ValueError("demands must be positive")
        if np.any(self.c_min < 0) or np.any(self.c_min > self.demands):
            raise ValueError("minimum rates must lie in [0, demand]")


def iree(rates: np.ndarray, demands: np.ndarray, total_power_w: float) -> float:
    """Demand-clipped sum throughput per watt, bit/J."""
    if total_power_w <= 0:
        raise ValueError("total power must be positive")
    return float(np.sum(np.minimum(rates, demands)) / total_power_w)


def ee(rates: np.ndarray, total_power_w: float) -> float:
    """Raw sum throughput per watt, bit/J (ignores demand)."""
    if total_power_w <= 0:
        raise ValueError("total power must be positive")
    return float(np.sum(rates) / total_power_w)


def _js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence, base-2 logs, for distributions in [0,1]."""
    m = 0.5 * (p + q)
    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def qos(rates: np.ndarray, demands: np.ndarray) -> float:
    """Demand satisfaction in [0, 1].

    Delivered fraction of total demand, discounted by the base-2
    Jensen-Shannon mismatch between the rate and demand profiles; 1 exactly
    when every user gets exactly its demand.
    """
    rates = np.asarray(rates, dtype=float)
    demands = np.asarray(demands, dtype=float)
    if np.any(demands <= 0):
        raise ValueError("demands must be positive")
    if np.any(rates < 0):
        raise ValueError("rates must be non-negative")
    total_r = float(np.sum(rates))
    if total_r == 0.0:
        return 0.0
    served = float(np.sum(np.minimum(rates, demands)) / np.sum(demands))
    mismatch = _js_divergence(rates / total_r, demands / np.sum(demands))
    return served * (1.0 - mismatch)


def qos_literal(rates: np.ndarray, demands: np.ndarray) -> float:
    """Diagnostic variant with the divergence taken on raw bit/s profiles."""
    rates = np.asarray(rates, dtype=float)
    demands = np.asarray(demands, dtype=float)
    mid = 0.5 * (rates + demands)
    mask_r = rates > 0
    mask_d = demands > 0
    xi = 0.5 * float(np.sum(rates[mask_r] * np.log2(rates[mask_r] / mid[mask_r]))) \
        + 0.5 * float(np.sum(demands[mask_d] * np.log2(demands[mask_d] / mid[mask_d])))
    served = float(np.sum(np.minimum(rates, demands)) / np.sum(demands))
    return served * (1.0 - xi)
