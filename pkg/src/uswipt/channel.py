"""Gauss-Markov (AR(1)) Rayleigh block fading, path loss and power feedback."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .units import db_to_lin, dbm_to_watt

SPEED_OF_LIGHT = 299_792_458.0
# pilot power used for received-power feedback (29 dBm)
P_REF_DEFAULT = float(dbm_to_watt(29.0))


@dataclass(frozen=True)
class ChannelParams:
    zeta: float = 0.99
    sigma_h_sq: float = 1.0
    path_exponent: float = 2.5
    distance_m: float = 3.0
    antenna_gain_dbi_tx: float = 5.0
    antenna_gain_dbi_rx: float = 5.0
    carrier_hz: float = 2.4e9

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError("zeta must lie in [0, 1]")
        if self.distance_m <= 0:
            raise ValueError("distance must be positive")
        if self.path_exponent < 2:
            raise ValueError("path-loss exponent must be >= 2")
        if self.sigma_h_sq <= 0:
            raise ValueError("fading variance must be positive")


@dataclass(frozen=True)
class ChannelBlock:
    index: int
    h: complex
    p_r: float


def path_gain(params: ChannelParams, d0: float = 1.0) -> float:
    """Log-distance gain with a free-space reference at ``d0`` metres."""
    lam = SPEED_OF_LIGHT / params.carrier_hz
    g_ant = db_to_lin(params.antenna_gain_dbi_tx + params.antenna_gain_dbi_rx)
    return float(g_ant * (lam / (4.0 * np.pi * d0)) ** 2 * (d0 / params.distance_m) ** params.path_exponent)


def feedback_power(h, p_ref: float, pg: float):
    """Received pilot power |h|^2 * pg * p_ref reported (error-free) by the device."""
    if p_ref <= 0:
        raise ValueError("p_ref must be positive")
    return np.abs(h) ** 2 * pg * p_ref


def cscg(rng: np.random.Generator, variance: float, size=None):
    """Circularly-symmetric complex Gaussian draws; re/im pairs are drawn together."""
    shape = (2,) if size is None else (*np.atleast_1d(size), 2)
    z = rng.standard_normal(shape)
    out = np.sqrt(variance / 2.0) * (z[..., 0] + 1j * z[..., 1])
    return complex(out) if size is None else out


def initial_block(params: ChannelParams, rng: np.random.Generator, p_ref: float = P_REF_DEFAULT) -> ChannelBlock:
    h = cscg(rng, params.sigma_h_sq)
    return ChannelBlock(0, h, float(feedback_power(h, p_ref, path_gain(params))))


def advance(prev: ChannelBlock, params: ChannelParams, rng: np.random.Generator, p_ref: float = P_REF_DEFAULT) -> ChannelBlock:
    """One Gauss-Markov step h_v = zeta h_{v-1} + u_v, u_v ~ CN(0, (1 - zeta^2) sigma_h^2)."""
    u = cscg(rng, (1.0 - params.zeta**2) * params.sigma_h_sq)
    h = params.zeta * prev.h + u
    return ChannelBlock(prev.index + 1, h, float(feedback_power(h, p_ref, path_gain(params))))


def gauss_markov(params: ChannelParams, n_blocks: int, rng: np.random.Generator, h0: complex | None = None) -> np.ndarray:
    """Fading trajectory h_0..h_{n-1}.

    Draws exactly what ``initial_block`` followed by repeated ``advance`` would
    draw from ``rng`` (when ``h0`` is None), so both paths give identical
    trajectories for the same seed.
    """
    if h0 is None:
        h0 = cscg(rng, params.sigma_h_sq)
    if n_blocks <= 1:
        return np.array([h0], dtype=complex)[:n_blocks]
    u = cscg(rng, (1.0 - params.zeta**2) * params.sigma_h_sq, size=n_blocks - 1)
    rest, _ = lfilter([1.0], [1.0, -params.zeta], u, zi=np.array([params.zeta * h0], dtype=complex))
    return np.concatenate(([h0], rest))
