"""Parameter bundle tying transmitter, HPA, receiver and channel together."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .channel import P_REF_DEFAULT, ChannelParams, path_gain
from .hpa import HpaParams, amplify
from .receiver import ReceiverParams, envelope_detect, fs_filter
from .units import dbm_to_watt
from .waveform import ComplexWaveform, SignalConfig, TimeGrid, default_grid, synthesize

MULTI_TONE = "multi"
SINGLE_TONE = "single"
MODES = (MULTI_TONE, SINGLE_TONE)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to map (rho, N, |h|) to noiseless branch signals.

    ``ideal_hpa=True`` replaces the SSPA by a linear amplifier with the same
    small-signal gain (the "linear regime" of the exactness checks).
    """

    p_dr: float = float(dbm_to_watt(-10.0))
    q_total: int = 16
    delta_f: float = 10e3
    rho_fs: float = 1.0 - 1e-4
    hpa: HpaParams = field(default_factory=HpaParams.from_db)
    ideal_hpa: bool = False
    receiver: ReceiverParams = field(default_factory=ReceiverParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    p_ref: float = P_REF_DEFAULT
    oversampling: int = 16

    def __post_init__(self):
        if self.q_total < 1:
            raise ValueError("q_total must be >= 1")
        if self.oversampling < 4:
            raise ValueError("oversampling must be >= 4")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def rho_of(self, mode: str) -> float:
        if mode == MULTI_TONE:
            return 0.0
        if mode == SINGLE_TONE:
            return self.rho_fs
        raise ValueError(f"unknown mode {mode!r}")

    def signal(self, rho: float, n_active: int) -> SignalConfig:
        return SignalConfig(
            rho=rho, n_active=n_active, q_total=self.q_total, p_dr=self.p_dr, delta_f=self.delta_f, rho_fs=self.rho_fs
        )

    @property
    def grid(self) -> TimeGrid:
        return default_grid(self.signal(0.0, 1), self.oversampling)

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.delta_f

    @property
    def path_gain(self) -> float:
        return path_gain(self.channel)

    def transmit(self, rho: float, n_active: int) -> ComplexWaveform:
        """HPA output envelope for symbol N under allocation rho."""
        w = synthesize(self.signal(rho, n_active), None, self.grid)
        if self.ideal_hpa:
            return ComplexWaveform(self.hpa.gain_v * w.samples, w.grid)
        return amplify(w, self.hpa)

    def branch_profiles(self, rho: float, n_active: int) -> tuple[np.ndarray, np.ndarray]:
        """Noiseless (PS, FS) branch signals at |h| = 1 (read-only arrays)."""
        return _profiles(self, float(rho), int(n_active))

    def tx_power(self, rho: float, n_active: int) -> float:
        """Passband average HPA output power (watts)."""
        return 0.5 * self.transmit(rho, n_active).mean_power()


@lru_cache(maxsize=512)
def _profiles(sc: Scenario, rho: float, n: int):
    env = envelope_detect(sc.transmit(rho, n), 1.0, sc.path_gain)
    r = sc.receiver
    ps = np.sqrt(r.rho_r) * env
    fs = np.sqrt(1.0 - r.rho_r) * fs_filter(env, r, sc.grid.duration)
    ps.setflags(write=False)
    fs.setflags(write=False)
    return ps, fs
