"""Memoryless SSPA (Rapp) amplifier: AM/AM only, AM/PM identically zero."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .units import db_to_lin, dbm_to_watt
from .waveform import ComplexWaveform, SignalConfig, TimeGrid, ToneWeights, default_grid, synthesize


@dataclass(frozen=True)
class HpaParams:
    """Small-signal voltage gain, input saturation amplitude and smoothness beta."""

    gain_v: float
    a_sat: float
    beta: float = 2.0

    def __post_init__(self):
        if self.gain_v <= 0 or self.a_sat <= 0:
            raise ValueError("gain_v and a_sat must be positive")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")

    @classmethod
    def from_db(cls, gain_db: float = 25.0, a_sat_sq_dbm: float = 10.0, beta: float = 2.0) -> "HpaParams":
        """Build from power gain g^2 in dB and saturation input power A_sat^2 in dBm."""
        return cls(float(np.sqrt(db_to_lin(gain_db))), float(np.sqrt(dbm_to_watt(a_sat_sq_dbm))), beta)


def _compression(a, p: HpaParams):
    """[1 + (a/a_sat)^(2 beta)]^(-1/(2 beta)), overflow-safe for large beta."""
    x = np.asarray(a, dtype=float) / p.a_sat
    two_b = 2.0 * p.beta
    with np.errstate(divide="ignore"):
        lx = np.log(x)
    t = two_b * lx
    # log of the denominator, split so that exp() never overflows
    log_den = np.where(
        t > 0,
        lx + np.log1p(np.exp(-np.abs(t))) / two_b,
        np.log1p(np.exp(np.minimum(t, 0.0))) / two_b,
    )
    return np.exp(-log_den)


def amam(a, p: HpaParams):
    """SSPA amplitude response G(a) = g a / [1 + (a/A_sat)^(2 beta)]^(1/(2 beta))."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("input amplitude must be nonnegative")
    out = p.gain_v * a * _compression(a, p)
    return float(out) if out.ndim == 0 else out


def amplify(w: ComplexWaveform, p: HpaParams) -> ComplexWaveform:
    """Map every sample magnitude through ``amam``; the phase is left untouched."""
    s = np.asarray(w.samples, dtype=complex)
    return ComplexWaveform(s * (p.gain_v * _compression(np.abs(s), p)), w.grid)


def average_output_power(
    cfg: SignalConfig,
    weights: ToneWeights | None,
    p: HpaParams,
    grid: TimeGrid | None = None,
) -> float:
    """Passband average power of the amplified unified signal (watts).

    Computed as half the sample mean of |G(|s|)|^2 on the symbol grid.
    """
    if grid is None:
        grid = default_grid(cfg)
    out = amplify(synthesize(cfg, weights, grid), p)
    return 0.5 * out.mean_power()
