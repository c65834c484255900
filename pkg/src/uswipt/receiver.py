"""Unified receiver: envelope detector, static power split, FS DC removal,
PAPR estimators and the PAPR-axis symbol decision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import ComplexWaveform

FS_MODES = ("ideal", "highpass", "literal")


@dataclass(frozen=True)
class ReceiverParams:
    """Receiver constants.

    ``fs_mode`` selects how the FS branch removes DC: ``"ideal"`` subtracts the
    exact time mean; ``"highpass"`` applies a first-order high-pass with corner
    ``cutoff_hz``; ``"literal"`` applies 1 / (1 - j (f/f_cut)^2) as written for
    the LC divider. The two filter modes act on the periodic steady state, one
    DFT bin at a time.

    ``fs_floor`` guards the FS estimator against a branch with no AC content
    (a constant-envelope symbol): its mean power is floored at this fraction of
    the AC power a single-tone symbol would put there, which the receiver can
    predict from the PS-branch power. ``0`` disables the floor.

    Zero noise powers and ``rho_r = 1`` are accepted for noiseless checks.
    """

    rho_r: float = 1e-3
    sigma_ps_sq: float = 1e-13
    sigma_fs_sq: float = 1e-13
    cutoff_hz: float = 1e3
    filter_order: int = 1
    fs_mode: str = "ideal"
    fs_floor: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.rho_r <= 1.0:
            raise ValueError("rho_r must lie in (0, 1]")
        if self.sigma_ps_sq < 0 or self.sigma_fs_sq < 0:
            raise ValueError("noise powers must be nonnegative")
        if self.cutoff_hz <= 0:
            raise ValueError("cutoff must be positive")
        if self.fs_mode not in FS_MODES:
            raise ValueError(f"fs_mode must be one of {FS_MODES}")
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")
        if not 0.0 <= self.fs_floor < 1.0:
            raise ValueError("fs_floor must lie in [0, 1)")

    def fs_floor_coef(self, rho_fs: float) -> float:
        """Ratio of the FS power floor to the PS-branch mean power.

        A single-tone symbol puts roughly (1 - rho_r)(1 - rho_fs) P_rx on the
        FS branch, while the PS branch carries 2 rho_r P_rx.
        """
        if self.fs_floor == 0.0 or self.rho_r >= 1.0:
            return 0.0
        return self.fs_floor * (1.0 - self.rho_r) * (1.0 - rho_fs) / (2.0 * self.rho_r)


@dataclass(frozen=True)
class BranchSignals:
    y_env: np.ndarray
    y_ps: np.ndarray
    y_fs: np.ndarray


def envelope_detect(tx_envelope: ComplexWaveform, h: complex, pg: float = 1.0) -> np.ndarray:
    """Linear-region envelope detector output |h| sqrt(pg) |x_out(t)|.

    Antenna noise is not modeled.
    """
    return np.abs(h) * np.sqrt(pg) * np.abs(tx_envelope.samples)


def _noise(rng, var, shape):
    if var == 0 or rng is None:
        return np.zeros(shape)
    return np.sqrt(var) * rng.standard_normal(shape)


def fs_filter(y_env: np.ndarray, params: ReceiverParams, duration: float | None = None) -> np.ndarray:
    """DC-blocking stage of the FS branch (before the sqrt(1 - rho_r) split)."""
    y_env = np.asarray(y_env, dtype=float)
    if params.fs_mode == "ideal":
        return y_env - y_env.mean(axis=-1, keepdims=True)
    if duration is None:
        raise ValueError(f"fs_mode={params.fs_mode!r} needs the symbol duration")
    m = y_env.shape[-1]
    f = np.fft.rfftfreq(m, d=duration / m)
    r = f / params.cutoff_hz
    if params.fs_mode == "highpass":
        resp = (1j * r / (1.0 + 1j * r)) ** params.filter_order
    else:
        resp = (1.0 / (1.0 - 1j * r**2)) ** params.filter_order
    return np.fft.irfft(np.fft.rfft(y_env, axis=-1) * resp, n=m, axis=-1)


def split_ps(y_env, params: ReceiverParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """PS branch sqrt(rho_r) y_env + n_PS; ``rng=None`` gives the noiseless branch."""
    y_env = np.asarray(y_env, dtype=float)
    return np.sqrt(params.rho_r) * y_env + _noise(rng, params.sigma_ps_sq, y_env.shape)


def split_fs(y_env, params: ReceiverParams, rng: np.random.Generator | None = None, duration: float | None = None) -> np.ndarray:
    """FS branch sqrt(1 - rho_r) [y_env - DC] + n_FS."""
    y_env = np.asarray(y_env, dtype=float)
    ac = fs_filter(y_env, params, duration)
    return np.sqrt(1.0 - params.rho_r) * ac + _noise(rng, params.sigma_fs_sq, y_env.shape)


def receive(tx_envelope: ComplexWaveform, h: complex, pg: float, params: ReceiverParams, rng=None) -> BranchSignals:
    y_env = envelope_detect(tx_envelope, h, pg)
    y_ps = split_ps(y_env, params, rng)
    y_fs = split_fs(y_env, params, rng, tx_envelope.grid.duration)
    return BranchSignals(y_env, y_ps, y_fs)


def _peak_to_mean(y):
    p = np.asarray(y, dtype=float) ** 2
    mean = p.mean(axis=-1)
    if np.any(mean <= 0):
        raise ValueError("PAPR undefined for an all-zero branch signal")
    return p.max(axis=-1) / mean


def estimate_papr_ps(y_ps):
    """2 max|y|^2 / mean|y|^2 (the factor 2 maps to the passband PAPR scale)."""
    return 2.0 * _peak_to_mean(y_ps)


def estimate_papr_fs(y_fs, floor_power=0.0):
    """max |y|^2 / mean |y|^2, with the mean floored at ``floor_power``."""
    p = np.asarray(y_fs, dtype=float) ** 2
    mean = np.maximum(p.mean(axis=-1), floor_power)
    if np.any(mean <= 0):
        raise ValueError("PAPR undefined for an all-zero branch signal")
    return p.max(axis=-1) / mean


def estimate_both(signals: BranchSignals, params: ReceiverParams, rho_fs: float):
    """(PAPR_PS, PAPR_FS) with the FS floor applied as in the detection chain."""
    papr_ps = estimate_papr_ps(signals.y_ps)
    floor = params.fs_floor_coef(rho_fs) * np.mean(np.asarray(signals.y_ps) ** 2, axis=-1)
    return papr_ps, estimate_papr_fs(signals.y_fs, floor)


def decide_symbol(papr_ps, papr_fs, q_total: int):
    """Decode the tone count from PAPR_ID = max(PAPR_PS, PAPR_FS).

    Symbol N owns the interval [2N - 1, 2N + 1); the end symbols absorb
    everything below 3 and at or above 2Q - 1.
    """
    if q_total < 1:
        raise ValueError("q_total must be >= 1")
    papr_id = np.maximum(papr_ps, papr_fs)
    n_hat = np.clip(np.floor((papr_id + 1.0) / 2.0), 1, q_total).astype(int)
    return int(n_hat) if n_hat.ndim == 0 else n_hat
