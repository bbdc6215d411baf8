"""mmWave channel generation for the BS -> surface -> user downlink.

Geometric multipath model: every link is one LOS ray plus a configurable
number of NLOS rays, each carrying its own path loss, log-normal shadowing
and array response. Estimated surface-to-user channels age according to a
first-order Gauss-Markov outdating model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .config import SystemConfig, dbi_to_amplitude

LOS_EXPONENT = 2.0
NLOS_EXPONENT = 2.82
LOS_SHADOW_STD_DB = 10.0 ** 0.2    # variance 10^0.4 in dB^2
NLOS_SHADOW_STD_DB = 10.0 ** 0.41  # variance 10^0.82 in dB^2


def ula_steering(n: int, azimuth: float) -> np.ndarray:
    """Half-wavelength ULA response, unit-modulus entries, squared norm n."""
    if n < 1:
        raise ValueError("array size must be positive")
    m = np.arange(n)
    return np.exp(1j * np.pi * m * np.sin(azimuth))


def nearest_square_factors(n: int) -> Tuple[int, int]:
    """Factor n = n1 * n2 with n1 <= n2 and the smallest gap (20 -> 4 x 5)."""
    if n < 1:
        raise ValueError("array size must be positive")
    n1 = int(np.floor(np.sqrt(n)))
    while n % n1 != 0:
        n1 -= 1
    return n1, n // n1


def upa_steering(n: int, azimuth: float, elevation: float) -> np.ndarray:
    """Planar-array response as the Kronecker product of two ULA factors.

    The element grid is the nearest-square factorization of n; the vertical
    factor sees sin(el), the horizontal factor sin(az)cos(el).
    """
    n_v, n_h = nearest_square_factors(n)
    v = np.exp(1j * np.pi * np.arange(n_v) * np.sin(elevation))
    h = np.exp(1j * np.pi * np.arange(n_h) * np.sin(azimuth) * np.cos(elevation))
    return np.kron(v, h)


def path_loss_db(distance_m: float, exponent: float, carrier_hz: float,
                 shadow_db: float = 0.0) -> float:
    """Distance loss in dB: 32.4 + 20 log10(f_GHz) + 10 a log10(d) + shadow."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    f_ghz = carrier_hz / 1e9
    return 32.4 + 20.0 * np.log10(f_ghz) + 10.0 * exponent * np.log10(distance_m) + shadow_db


def _path_gains(rng: np.random.Generator, n_paths_nlos: int, distance_m: float,
                cfg: SystemConfig) -> np.ndarray:
    """Complex small-scale gains, one per ray (index 0 = LOS)."""
    n_total = n_paths_nlos + 1
    gains = np.zeros(n_total, dtype=complex)
    for i in range(n_total):
        los = i == 0
        exponent = LOS_EXPONENT if los else NLOS_EXPONENT
        shadow_std = LOS_SHADOW_STD_DB if los else NLOS_SHADOW_STD_DB
        shadow = rng.normal(0.0, shadow_std) if cfg.shadowing else 0.0
        pl = path_loss_db(distance_m, exponent, cfg.carrier_hz, shadow)
        amp = 10.0 ** (-pl / 20.0)
        gains[i] = amp * (rng.normal() + 1j * rng.normal()) / np.sqrt(2.0)
    return gains


def sample_bs_ris_channel(rng: np.random.Generator, cfg: SystemConfig) -> np.ndarray:
    """Draw the BS-to-surface matrix, shape (n_ris, n_tx).

    Each ray contributes gain * upa(az_r, el_r) ula(az_t)^H with unit-norm
    array factors, scaled so the expected squared Frobenius norm with 0 dBi
    gains and no shadowing equals n_tx * n_ris * 10^(-PL/10).
    """
    n_total = cfg.n_paths_bs_ris + 1
    g_ends = dbi_to_amplitude(cfg.gain_tx_dbi) * dbi_to_amplitude(cfg.gain_ris_dbi)
    gains = _path_gains(rng, cfg.n_paths_bs_ris, cfg.bs_ris_distance_m, cfg)
    h = np.zeros((cfg.n_ris, cfg.n_tx), dtype=complex)
    for i in range(n_total):
        az_r = rng.uniform(-np.pi / 2, np.pi / 2)
        el_r = rng.uniform(-np.pi / 4, np.pi / 4)
        az_t = rng.uniform(-np.pi / 2, np.pi / 2)
        b = upa_steering(cfg.n_ris, az_r, el_r) / np.sqrt(cfg.n_ris)
        a = ula_steering(cfg.n_tx, az_t) / np.sqrt(cfg.n_tx)
        h += gains[i] * np.outer(b, a.conj())
    return np.sqrt(cfg.n_tx * cfg.n_ris / n_total) * g_ends * h


def sample_ris_user_channel(rng: np.random.Generator, cfg: SystemConfig,
                            distance_m: float) -> np.ndarray:
    """Draw one surface-to-user vector, shape (n_ris,)."""
    n_total = cfg.n_paths_ris_user + 1
    g_rx = dbi_to_amplitude(cfg.gain_rx_dbi)
    gains = _path_gains(rng, cfg.n_paths_ris_user, distance_m, cfg)
    h = np.zeros(cfg.n_ris, dtype=complex)
    for i in range(n_total):
        az = rng.uniform(-np.pi / 2, np.pi / 2)
        el = rng.uniform(-np.pi / 4, np.pi / 4)
        b = upa_steering(cfg.n_ris, az, el) / np.sqrt(cfg.n_ris)
        h += gains[i] * b
    return np.sqrt(cfg.n_ris / n_total) * g_rx * h


def realize_true_channel(rng: np.random.Generator, rho: float, estimate: np.ndarray,
                         err_std: float) -> np.ndarray:
    """Aged channel: rho * estimate + sqrt(1 - rho^2) * innovation.

    The innovation is CN(0, err_std^2 I); rho = 1 returns the estimate exactly.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rho == 1.0:
        return estimate.copy()
    delta = err_std * (rng.normal(size=estimate.shape)
                       + 1j * rng.normal(size=estimate.shape)) / np.sqrt(2.0)
    return rho * estimate + np.sqrt(1.0 - rho ** 2) * delta


def _complex_to_pairs(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _pairs_to_complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


@dataclass
class ChannelRealization:
    """One frozen draw of every link the optimizer needs.

    h_bs_ris: (n_ris, n_tx); h_ru_est: (K, n_ris) estimated user channels;
    err_std: (K,) innovation std per user.
    """

    h_bs_ris: np.ndarray
    h_ru_est: np.ndarray
    err_std: np.ndarray

    def __post_init__(self) -> None:
        self.h_bs_ris = np.asarray(self.h_bs_ris, dtype=complex)
        self.h_ru_est = np.asarray(self.h_ru_est, dtype=complex)
        self.err_std = np.asarray(self.err_std, dtype=float)
        if self.h_ru_est.ndim != 2 or self.h_bs_ris.ndim != 2:
            raise ValueError("channel arrays must be 2-D")
        if self.h_ru_est.shape[1] != self.h_bs_ris.shape[0]:
            raise ValueError("surface dimension mismatch between links")
        if self.err_std.shape != (self.h_ru_est.shape[0],):
            raise ValueError("need one error std per user")

    @property
    def n_users(self) -> int:
        return self.h_ru_est.shape[0]

    @property
    def n_ris(self) -> int:
        return self.h_bs_ris.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h_bs_ris.shape[1]

    def to_json(self) -> str:
        payload = {
            "h_bs_ris": _complex_to_pairs(self.h_bs_ris),
            "h_ru_est": _complex_to_pairs(self.h_ru_est),
            "err_std": self.err_std.tolist(),
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        payload = json.loads(text)
        return cls(
            h_bs_ris=_pairs_to_complex(payload["h_bs_ris"]),
            h_ru_est=_pairs_to_complex(payload["h_ru_est"]),
            err_std=np.asarray(payload["err_std"], dtype=float),
        )


def draw_channels(rng: np.random.Generator, cfg: SystemConfig) -> ChannelRealization:
    """Sample every link of one scenario and derive per-user error stds.

    err_std defaults to the RMS entry amplitude of each estimated vector
    (error power tracks link strength); cfg.sigma_ru overrides it globally.
    """
    h_br = sample_bs_ris_channel(rng, cfg)
    dists = cfg.ris_user_distances()
    h_est = np.zeros((cfg.n_users, cfg.n_ris), dtype=complex)
    err = np.zeros(cfg.n_users)
    for k in range(cfg.n_users):
        h_est[k] = sample_ris_user_channel(rng, cfg, float(dists[k]))
        if cfg.sigma_ru is not None:
            err[k] = cfg.sigma_ru
        else:
            err[k] = np.sqrt(np.mean(np.abs(h_est[k]) ** 2))
    return ChannelRealization(h_bs_ris=h_br, h_ru_est=h_est, err_std=err)
