"""Unified single-tone/multi-tone signal synthesis and PAPR.

Amplitudes are 1-ohm normalized (power = |amplitude|^2). The complex envelope
carries twice the passband power: an envelope of mean-square ``2 * p_dr``
corresponds to a passband signal of average power ``p_dr``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SignalConfig:
    """Transmit-side parameters of one unified SWIPT symbol.

    Parameters
    ----------
    rho : float
        Power allocation to the carrier (single-tone) component, in [0, 1].
    n_active : int
        Number of active tones N (the transmitted PAPR symbol).
    q_total : int
        Modulation index Q, the maximum number of tones.
    p_dr : float
        HPA drive power in watts (passband).
    delta_f : float
        Tone spacing in Hz.
    f1_offset : float, optional
        Baseband frequency of the first tone; defaults to ``delta_f`` so that
        no tone sits on DC.
    rho_fs : float
        Allocation ratio used when the single-tone mode is selected.
    """

    rho: float = 0.0
    n_active: int = 1
    q_total: int = 16
    p_dr: float = 1e-4
    delta_f: float = 10e3
    f1_offset: float | None = None
    rho_fs: float = 1.0 - 1e-4

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not 1 <= self.n_active <= self.q_total:
            raise ValueError(f"need 1 <= n_active <= q_total, got {self.n_active}, {self.q_total}")
        if self.p_dr <= 0:
            raise ValueError("p_dr must be positive")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")
        if not 0.0 <= self.rho_fs <= 1.0:
            raise ValueError("rho_fs must lie in [0, 1]")
        if self.f1_offset is None:
            object.__setattr__(self, "f1_offset", float(self.delta_f))

    @property
    def tone_freqs(self) -> np.ndarray:
        return self.f1_offset + self.delta_f * np.arange(self.n_active)


@dataclass(frozen=True)
class TimeGrid:
    duration: float
    samples_per_symbol: int

    def __post_init__(self):
        if self.duration <= 0 or self.samples_per_symbol < 2:
            raise ValueError("TimeGrid needs duration > 0 and at least 2 samples")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples_per_symbol) * (self.duration / self.samples_per_symbol)

    @property
    def dt(self) -> float:
        return self.duration / self.samples_per_symbol


def default_grid(cfg: SignalConfig, oversampling: int = 16) -> TimeGrid:
    """One symbol period T = 1/delta_f sampled at ``oversampling * q_total`` points."""
    return TimeGrid(1.0 / cfg.delta_f, oversampling * cfg.q_total)


@dataclass(frozen=True)
class ComplexWaveform:
    samples: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        if len(self.samples) != self.grid.samples_per_symbol:
            raise ValueError("sample count does not match the time grid")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.samples)

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class ToneWeights:
    """Per-tone amplitudes/phases plus the carrier amplitude/phase."""

    amplitudes: np.ndarray
    phases: np.ndarray
    carrier_amplitude: float = 1.0
    carrier_phase: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        phases = np.asarray(self.phases, dtype=float)
        if amps.shape != phases.shape or amps.ndim != 1:
            raise ValueError("amplitudes and phases must be 1-D and of equal length")
        if np.any(amps < 0):
            raise ValueError("tone amplitudes must be nonnegative")
        if abs(np.sum(amps**2) - 1.0) > 1e-9:
            raise ValueError("tone weights must have unit norm")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)

    @classmethod
    def default(cls, n: int) -> "ToneWeights":
        """Maximum-PAPR weights: equal amplitudes 1/sqrt(N), zero phases."""
        return cls(np.full(n, 1.0 / np.sqrt(n)), np.zeros(n))

    @property
    def n_tones(self) -> int:
        return len(self.amplitudes)


def _check_nyquist(cfg: SignalConfig, grid: TimeGrid):
    # occupied bins run from DC (carrier) to the highest tone, in units of 1/T
    f_max = max(abs(cfg.f1_offset), abs(cfg.f1_offset + (cfg.n_active - 1) * cfg.delta_f))
    n_bins = int(np.ceil(f_max * grid.duration - 1e-9)) + 1
    if grid.samples_per_symbol < 2 * n_bins:
        raise ValueError(
            f"grid of {grid.samples_per_symbol} samples violates Nyquist for {n_bins} occupied bins"
        )


def synthesize(cfg: SignalConfig, weights: ToneWeights | None = None, grid: TimeGrid | None = None) -> ComplexWaveform:
    """Sample the unified complex envelope s(t) on one symbol period."""
    if weights is None:
        weights = ToneWeights.default(cfg.n_active)
    if grid is None:
        grid = default_grid(cfg)
    if weights.n_tones != cfg.n_active:
        raise ValueError("weights must have one entry per active tone")
    _check_nyquist(cfg, grid)

    t = grid.times
    carrier = np.sqrt(2.0 * cfg.rho * cfg.p_dr) * weights.carrier_amplitude * np.exp(1j * weights.carrier_phase)
    tones = weights.amplitudes * np.exp(1j * weights.phases)
    multi = np.exp(2j * np.pi * np.outer(t, cfg.tone_freqs)) @ tones
    s = carrier + np.sqrt(2.0 * (1.0 - cfg.rho) * cfg.p_dr) * multi
    return ComplexWaveform(s, grid)


def precode(tone_gains, carrier_gain) -> ToneWeights:
    """Matched-filter weights from per-tone channel gains.

    Each tone gets the conjugate phase of its own gain and amplitude 1/sqrt(N);
    the carrier gets the conjugate phase of ``carrier_gain``.
    """
    g = np.atleast_1d(np.asarray(tone_gains, dtype=complex))
    if np.any(g == 0) or carrier_gain == 0:
        raise ValueError("zero channel gain has no defined phase")
    n = len(g)
    return ToneWeights(
        amplitudes=np.full(n, 1.0 / np.sqrt(n)),
        phases=np.angle(np.conj(g)),
        carrier_amplitude=1.0,
        carrier_phase=float(np.angle(np.conj(carrier_gain))),
    )


def papr(w: ComplexWaveform | np.ndarray) -> float:
    """max |w|^2 / mean |w|^2 over the sampled grid."""
    x = w.samples if isinstance(w, ComplexWaveform) else np.asarray(w)
    p = np.abs(x) ** 2
    mean = p.mean()
    if mean <= 0:
        raise ValueError("PAPR undefined for an all-zero waveform")
    return float(p.max() / mean)
