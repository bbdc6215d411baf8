"""System-level configuration for the active-RIS downlink simulator.

All powers are stored in linear watts internally; constructors accept the
usual dB / dBm / dBi field conventions (suffix tells the unit).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np


def db_to_linear(x_db: float) -> float:
    """Power ratio from dB."""
    return float(10.0 ** (x_db / 10.0))


def dbm_to_watt(x_dbm: float) -> float:
    """Absolute power in watts from dBm."""
    return float(10.0 ** ((x_dbm - 30.0) / 10.0))


def dbi_to_amplitude(x_dbi: float) -> float:
    """Antenna gain as a linear field amplitude (applied once per link end)."""
    return float(10.0 ** (x_dbi / 20.0))


@dataclass
class SystemConfig:
    """Physical and budget parameters of one downlink scenario.

    Defaults reproduce the full-scale setup used throughout the experiments;
    tests shrink n_tx / n_users / n_ris for speed without touching the rest.
    """

    n_tx: int = 12                    # BS antennas (ULA)
    n_users: int = 8                  # single-antenna users
    n_ris: int = 20                   # reflecting elements (planar array)

    bandwidth_hz: float = 100e6
    carrier_hz: float = 28e9

    noise_user_dbm: float = -94.0     # receiver thermal noise power
    noise_ris_dbm: float = -94.0      # per-element dynamic noise (active surface)

    rho: float = 0.9                  # CSI outdating correlation in [0, 1]
    sigma_ru: float | None = None     # per-user error std override; None = RMS of estimate

    gain_tx_dbi: float = 12.98
    gain_ris_dbi: float = 19.8
    gain_rx_dbi: float = 5.51

    n_paths_bs_ris: int = 4           # NLOS paths; one LOS path is always added
    n_paths_ris_user: int = 4
    shadowing: bool = True

    p_all_max_dbm: float = 30.0       # total transmit-power budget
    bs_power_fraction: float = 0.99   # share of the budget granted to the BS
    ris_power_fraction: float = 0.01  # share granted to the surface output

    mu_bs: float = 1.2                # BS amplifier inefficiency slope
    mu_ris: float = 1.2               # RIS amplifier inefficiency slope
    p_bs_static_w: float = 10.0 ** 0.9   # BS circuit power, 9 dBW
    p_ris_static_w: float = 1.5          # RIS controller circuit power
    p_dc_mw: float = 20.5             # DC bias per active element, mW

    ris_active: bool = True           # False = passive surface (unit modulus, no DC draw)
    alpha_max_db: float = 23.0        # per-element amplification cap (power dB)

    bs_ris_distance_m: float = 10.0
    user_radius_m: float = 80.0       # users sit on a quarter circle around the BS

    def __post_init__(self) -> None:
        if self.n_tx < 1 or self.n_users < 1 or self.n_ris < 1:
            raise ValueError("array and user counts must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.bs_power_fraction <= 0 or self.ris_power_fraction <= 0:
            raise ValueError("power split fractions must be positive")
        if self.n_paths_bs_ris < 0 or self.n_paths_ris_user < 0:
            raise ValueError("path counts must be non-negative")

    # -- derived powers ----------------------------------------------------

    @property
    def noise_user_w(self) -> float:
        return dbm_to_watt(self.noise_user_dbm)

    @property
    def noise_ris_w(self) -> float:
        return dbm_to_watt(self.noise_ris_dbm)

    @property
    def p_all_max_w(self) -> float:
        return dbm_to_watt(self.p_all_max_dbm)

    @property
    def p_bs_max_w(self) -> float:
        return self.bs_power_fraction * self.p_all_max_w

    @property
    def p_ris_max_w(self) -> float:
        return self.ris_power_fraction * self.p_all_max_w

    @property
    def alpha_max(self) -> float:
        """Per-element amplitude bound; passive surfaces are pinned to 1."""
        if not self.ris_active:
            return 1.0
        return 10.0 ** (self.alpha_max_db / 20.0)

    def phase_shifter_power_w(self, phase_bits: int) -> float:
        """Phase-control circuit power per element, 1.5 mW per resolution bit."""
        if phase_bits < 1:
            raise ValueError("phase resolution needs at least one bit")
        return 1.5e-3 * phase_bits

    def element_power_w(self, phase_bits: int) -> float:
        """Per-element hardware draw: phase control plus DC bias when active."""
        p = self.phase_shifter_power_w(phase_bits)
        if self.ris_active:
            p += self.p_dc_mw * 1e-3
        return p

    # -- geometry ----------------------------------------------------------

    @property
    def ris_position(self) -> Tuple[float, float]:
        return (self.bs_ris_distance_m, 0.0)

    def user_positions(self) -> np.ndarray:
        """(K, 2) coordinates, evenly spread on the quarter circle."""
        k = np.arange(self.n_users)
        ang = (k + 0.5) / self.n_users * (np.pi / 2.0)
        return self.user_radius_m * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def ris_user_distances(self) -> np.ndarray:
        """(K,) distances from the surface to each user in metres."""
        pos = self.user_positions()
        ris = np.asarray(self.ris_position)
        return np.linalg.norm(pos - ris[None, :], axis=1)

    def scaled(self, **changes) -> "SystemConfig":
        """Copy with some fields replaced (convenience for sweeps)."""
        return replace(self, **changes)
