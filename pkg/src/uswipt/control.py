"""Mixed-timescale mode switching: per-block (rho, Q) selection under energy
causality, threshold labelling, baseline controllers and episode simulation.

Power bookkeeping
-----------------
The device reports the pilot power P_r = |h|^2 pg P_ref. A data block in mode
m with modulation index Q is transmitted at the HPA output power P_tx(m, Q),
so the rectifier sees P_r * P_tx(m, Q) / P_ref * (1 - rho_r).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import analysis
from .channel import gauss_markov
from .harvest import P_C_DEFAULT, EhCurve, harvested_power, pce_crossover
from .scenario import MULTI_TONE, SINGLE_TONE, Scenario
from .units import dbm_to_watt, watt_to_dbm

ALLOWED_Q = (4, 8, 16)
SER_TAG_DEFAULT = 0.01
TABLE_STEP_DB = 0.5
TABLE_RANGE_DBM = (-70.0, 20.0)
THRESHOLD_GRID_DBM = np.linspace(-40.0, 0.0, 41)
WINDOW_DEFAULT = 20
# blocks per batch when estimating the standard error of a block-mean rate
SE_BATCH = 100


@dataclass(frozen=True)
class ModeDecision:
    rho: float
    q: int
    feasible: bool
    rate: float = 0.0
    ser_cond: float = float("nan")
    p_eh: float = 0.0


@dataclass
class EnergyLedger:
    p_c: float = P_C_DEFAULT
    harvested: list = field(default_factory=list)

    def __post_init__(self):
        if not self.p_c > 0:
            raise ValueError("p_c must be positive")

    def record(self, p_eh: float):
        self.harvested.append(float(p_eh))


@dataclass(frozen=True)
class OutageTable:
    """Conditional SER per (mode, Q) on a quantized received-power grid.

    ``p_out`` is the outage indicator SER(rho, Q | |h|) > ``ser_tag`` with |h|
    recovered from P_r; lookups snap to the nearest grid point.
    """

    p_r_grid_dbm: np.ndarray
    ser: dict
    tx_power: dict
    ser_tag: float
    rho_r: float
    p_ref: float
    rho_fs: float
    symbol_period: float
    q_allowed: tuple = ALLOWED_Q

    def __post_init__(self):
        for v in self.ser.values():
            if np.any((v < 0) | (v > 1)):
                raise ValueError("table probabilities must lie in [0, 1]")

    def _index(self, p_r):
        g = self.p_r_grid_dbm
        with np.errstate(divide="ignore"):
            x = watt_to_dbm(np.maximum(np.asarray(p_r, dtype=float), 0.0))
        i = np.rint((x - g[0]) / (g[1] - g[0]))
        return np.clip(np.nan_to_num(i, neginf=0.0), 0, g.size - 1).astype(int)

    def ser_at(self, mode: str, q: int, p_r):
        return self.ser[(mode, q)][self._index(p_r)]

    def p_out(self, mode: str, q: int, p_r):
        return (self.ser_at(mode, q, p_r) > self.ser_tag).astype(float)

    def eh_input(self, mode: str, q: int, p_r):
        return np.asarray(p_r, dtype=float) * (self.tx_power[(mode, q)] / self.p_ref) * (1.0 - self.rho_r)

    def rho(self, mode: str) -> float:
        return self.rho_fs if mode == SINGLE_TONE else 0.0


def build_outage_table(
    sc: Scenario,
    ser_tag: float = SER_TAG_DEFAULT,
    q_allowed=ALLOWED_Q,
    step_db: float = TABLE_STEP_DB,
    p_range_dbm=TABLE_RANGE_DBM,
) -> OutageTable:
    grid = np.arange(p_range_dbm[0], p_range_dbm[1] + 0.5 * step_db, step_db)
    h_mag = np.sqrt(dbm_to_watt(grid) / (sc.path_gain * sc.p_ref))
    ser, tx = {}, {}
    for mode in (MULTI_TONE, SINGLE_TONE):
        rho = sc.rho_of(mode)
        for q in q_allowed:
            sq = sc.with_(q_total=q)
            s = analysis.conditional_ser_trajectory(rho, q, sq, h_mag)
            s.setflags(write=False)
            ser[(mode, q)] = s
            tx[(mode, q)] = float(np.mean([sq.tx_power(rho, n) for n in range(1, q + 1)]))
    grid.setflags(write=False)
    return OutageTable(grid, ser, tx, ser_tag, sc.receiver.rho_r, sc.p_ref, sc.rho_fs, sc.symbol_period, tuple(q_allowed))


def _curve(curves: dict, mode: str, q: int) -> EhCurve:
    return curves[1 if mode == SINGLE_TONE else q]


def short_term_decide(p_r: float, p_th: float, table: OutageTable, curves: dict, ledger: EnergyLedger) -> ModeDecision:
    """Solve the per-block problem by enumeration over the allowed Q set."""
    mode = SINGLE_TONE if p_r >= p_th else MULTI_TONE
    best = None
    for q in sorted(table.q_allowed):
        p_eh = float(harvested_power(_curve(curves, mode, q), table.eh_input(mode, q, p_r)))
        if p_eh < ledger.p_c:
            continue
        rate = analysis.achievable_rate(float(table.p_out(mode, q, p_r)), q, table.symbol_period)
        if best is None or rate > best[0]:
            best = (rate, q, p_eh)
    rho = table.rho(mode)
    if best is None:
        q0 = min(table.q_allowed)
        return ModeDecision(rho, q0, False, 0.0, float(table.ser_at(mode, q0, p_r)), 0.0)
    rate, q, p_eh = best
    ledger.record(p_eh)
    return ModeDecision(rho, q, True, rate, float(table.ser_at(mode, q, p_r)), p_eh)


@dataclass(frozen=True)
class ModeOptions:
    """Best short-term outcome per block for each mode (threshold-free)."""

    rate: dict
    q: dict
    feasible: dict
    ser: dict
    p_eh: dict


def mode_options(p_r, table: OutageTable, curves: dict, p_c: float = P_C_DEFAULT) -> ModeOptions:
    """Vectorized ``short_term_decide`` for both modes at once."""
    p_r = np.asarray(p_r, dtype=float)
    qs = sorted(table.q_allowed)
    rate, qsel, feas, ser, peh = {}, {}, {}, {}, {}
    for mode in (MULTI_TONE, SINGLE_TONE):
        eh = np.stack([harvested_power(_curve(curves, mode, q), table.eh_input(mode, q, p_r)) for q in qs])
        ok = eh >= p_c
        r = np.stack([(1.0 - table.p_out(mode, q, p_r)) * np.log2(q) / table.symbol_period for q in qs])
        score = np.where(ok, r, -1.0)
        k = np.argmax(score, axis=0)
        cols = np.arange(p_r.size)
        feas[mode] = ok.any(axis=0)
        rate[mode] = np.where(feas[mode], r[k, cols], 0.0)
        k = np.where(feas[mode], k, 0)
        qsel[mode] = np.asarray(qs)[k]
        ser[mode] = np.stack([table.ser_at(mode, q, p_r) for q in qs])[k, cols]
        peh[mode] = np.where(feas[mode], eh[k, cols], 0.0)
    return ModeOptions(rate, qsel, feas, ser, peh)


def threshold_rates(p_r, rate_multi, rate_single, grid_w) -> np.ndarray:
    """Per-block rate under every candidate threshold; shape (len(grid), blocks)."""
    single = np.asarray(p_r)[None, :] >= np.asarray(grid_w)[:, None]
    return np.where(single, np.asarray(rate_single)[None, :], np.asarray(rate_multi)[None, :])


def label_threshold(p_r, rate_multi, rate_single, grid_w) -> float:
    """Rate-maximizing threshold over a history window (smallest on ties)."""
    grid_w = np.asarray(grid_w, dtype=float)
    if np.any(np.diff(grid_w) <= 0):
        raise ValueError("threshold grid must be strictly increasing")
    mean = threshold_rates(p_r, rate_multi, rate_single, grid_w).mean(axis=1)
    return float(grid_w[int(np.argmax(mean))])


def sliding_labels(p_r, rate_multi, rate_single, grid_w, window: int) -> np.ndarray:
    """``label_threshold`` over the window ending at (and including) each block.

    The first blocks use the shorter window available so far.
    """
    grid_w = np.asarray(grid_w, dtype=float)
    r = threshold_rates(p_r, rate_multi, rate_single, grid_w)
    c = np.concatenate([np.zeros((grid_w.size, 1)), np.cumsum(r, axis=1)], axis=1)
    v = np.arange(r.shape[1])
    lo = np.maximum(v + 1 - window, 0)
    sums = c[:, v + 1] - c[:, lo]
    return grid_w[np.argmax(sums, axis=0)]


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------


class ThresholdModel(Protocol):
    def predict_threshold_dbm(self, window: np.ndarray) -> float: ...


@dataclass
class ControlState:
    """Last W records of (rho, q, p_r_dbm, p_th_dbm); q = 0 marks a block
    that delivered no data."""

    w: int = WINDOW_DEFAULT
    records: deque = field(default_factory=deque)

    def push(self, rho: float, q: int, p_r_dbm: float, p_th_dbm: float):
        self.records.append((rho, q, p_r_dbm, p_th_dbm))
        if len(self.records) > self.w:
            self.records.popleft()

    @property
    def warmed_up(self) -> bool:
        return len(self.records) == self.w

    def window(self) -> np.ndarray:
        """(n, 4) array of the records held so far, oldest first."""
        return np.asarray(self.records, dtype=float).reshape(-1, 4)


@dataclass(frozen=True)
class FixedController:
    p_th: float
    name: str = "fixed"


@dataclass(frozen=True)
class ExhaustiveController:
    grid_dbm: np.ndarray = field(default_factory=lambda: THRESHOLD_GRID_DBM.copy())
    window: int = WINDOW_DEFAULT
    name: str = "exhaustive"


@dataclass(frozen=True)
class LearnedController:
    model: ThresholdModel
    initial_p_th: float
    window: int = WINDOW_DEFAULT
    update_period: int = 1
    name: str = "tcn"


@dataclass(frozen=True)
class ExplorationController:
    """Random piecewise-constant thresholds, used to generate training features."""

    grid_dbm: np.ndarray = field(default_factory=lambda: THRESHOLD_GRID_DBM.copy())
    hold: int = 200
    name: str = "explore"


def fixed_threshold_for(sc: Scenario, table: OutageTable, curves: dict, q_ref: int | None = None) -> float:
    """PCE crossover (rectifier input) mapped to the received-power domain.

    The mapping uses the single-tone transmit power.
    """
    q_ref = q_ref or max(table.q_allowed)
    x = pce_crossover(curves[1], curves[q_ref])
    return x * table.p_ref / (table.tx_power[(SINGLE_TONE, q_ref)] * (1.0 - table.rho_r))


@dataclass
class EpisodeResult:
    controller: str
    h: np.ndarray
    p_r: np.ndarray
    p_th: np.ndarray
    rho: np.ndarray
    q: np.ndarray
    feasible: np.ndarray
    ser_cond: np.ndarray
    rate: np.ndarray
    p_eh: np.ndarray

    @property
    def mean_rate(self) -> float:
        return float(np.mean(self.rate))

    @property
    def stderr(self) -> float:
        return batch_means_se(self.rate)

    def rows(self):
        """Trajectory log rows in the documented column order."""
        for v in range(self.h.size):
            yield (
                v,
                float(self.h[v].real),
                float(self.h[v].imag),
                float(watt_to_dbm(self.p_r[v])),
                float(watt_to_dbm(self.p_th[v])),
                float(self.rho[v]),
                int(self.q[v]),
                int(self.feasible[v]),
                float(self.ser_cond[v]),
                float(self.rate[v]),
            )


LOG_COLUMNS = ("v", "re_h", "im_h", "p_r_dbm", "p_th_dbm", "rho", "q", "feasible", "ser_cond", "rate")


def batch_means_se(x, batch: int = SE_BATCH) -> float:
    """Standard error of the mean of an autocorrelated series via batch means."""
    x = np.asarray(x, dtype=float)
    nb = x.size // batch
    if nb < 2:
        return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    means = x[: nb * batch].reshape(nb, batch).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(nb))


def _realize(name, h, p_r, p_th, opts: ModeOptions, table: OutageTable) -> EpisodeResult:
    single = p_r >= p_th

    def pick(d):
        return np.where(single, d[SINGLE_TONE], d[MULTI_TONE])

    return EpisodeResult(
        name,
        h,
        p_r,
        p_th,
        np.where(single, table.rho_fs, 0.0),
        pick(opts.q),
        pick(opts.feasible),
        pick(opts.ser),
        pick(opts.rate),
        pick(opts.p_eh),
    )


def run_episode(
    sc: Scenario,
    controller,
    blocks: int,
    rng: np.random.Generator,
    table: OutageTable | None = None,
    curves: dict | None = None,
    p_c: float = P_C_DEFAULT,
    h: np.ndarray | None = None,
) -> EpisodeResult:
    """Simulate ``blocks`` fading blocks under one controller.

    Pass the same ``h`` (or the same seed) to compare controllers on matched
    channel realizations.
    """
    if table is None:
        table = build_outage_table(sc)
    if curves is None:
        from .harvest import fit_curves, load_dataset

        curves = fit_curves(load_dataset())
    if h is None:
        h = gauss_markov(sc.channel, blocks, rng)
    h = np.asarray(h)[:blocks]
    p_r = np.abs(h) ** 2 * sc.path_gain * sc.p_ref
    opts = mode_options(p_r, table, curves, p_c)

    if isinstance(controller, FixedController):
        p_th = np.full(blocks, float(controller.p_th))
    elif isinstance(controller, ExhaustiveController):
        p_th = sliding_labels(
            p_r, opts.rate[MULTI_TONE], opts.rate[SINGLE_TONE], dbm_to_watt(controller.grid_dbm), controller.window
        )
    elif isinstance(controller, ExplorationController):
        n_hold = -(-blocks // controller.hold)
        picks = rng.choice(dbm_to_watt(controller.grid_dbm), size=n_hold)
        p_th = np.repeat(picks, controller.hold)[:blocks]
    elif isinstance(controller, LearnedController):
        p_th = _run_learned(controller, p_r, opts, table)
    else:
        raise TypeError(f"unknown controller {controller!r}")
    return _realize(controller.name, h, p_r, p_th, opts, table)


def _run_learned(ctl: LearnedController, p_r, opts: ModeOptions, table: OutageTable) -> np.ndarray:
    state = ControlState(ctl.window)
    p_th = np.empty(p_r.size)
    p_r_dbm = watt_to_dbm(p_r)
    current = float(ctl.initial_p_th)
    for v in range(p_r.size):
        if v > 0 and v % ctl.update_period == 0:
            current = float(dbm_to_watt(ctl.model.predict_threshold_dbm(state.window())))
        p_th[v] = current
        mode = SINGLE_TONE if p_r[v] >= current else MULTI_TONE
        q_eff = int(opts.q[mode][v]) if opts.rate[mode][v] > 0 else 0
        state.push(table.rho(mode), q_eff, float(p_r_dbm[v]), float(watt_to_dbm(current)))
    return p_th


def features(res: EpisodeResult) -> np.ndarray:
    """Per-block feature rows (rho, q_eff, p_r_dbm, p_th_dbm) of a trajectory.

    q_eff is the chosen Q when the block delivered data, else 0 (infeasible or
    in outage).
    """
    q_eff = np.where(res.rate > 0, res.q, 0)
    return np.column_stack([res.rho, q_eff, watt_to_dbm(res.p_r), watt_to_dbm(res.p_th)])


def audit_energy(res: EpisodeResult, table: OutageTable, curves: dict, p_c: float = P_C_DEFAULT) -> int:
    """Recompute harvested power for every feasible block of a log and count
    energy-causality violations (expected: 0)."""
    bad = 0
    for v in np.flatnonzero(res.feasible):
        mode = SINGLE_TONE if res.rho[v] > 0 else MULTI_TONE
        q = int(res.q[v])
        p_in = res.p_r[v] * table.tx_power[(mode, q)] / table.p_ref * (1.0 - table.rho_r)
        if harvested_power(_curve(curves, mode, q), p_in) < p_c:
            bad += 1
    return bad


def make_training_set(
    sc: Scenario,
    table: OutageTable,
    curves: dict,
    blocks: int,
    n_windows: int,
    rng: np.random.Generator,
    window: int = WINDOW_DEFAULT,
    grid_dbm=THRESHOLD_GRID_DBM,
    hold: int = 200,
    p_c: float = P_C_DEFAULT,
):
    """Feature windows and exhaustive-search labels from one exploration episode.

    Returns ``(windows, labels_dbm)`` with windows shaped (n, W, 4). Window n
    holds blocks v-W..v-1 and is labelled with the threshold the exhaustive
    search picks at block v, so the network learns to forecast it.
    """
    explore = ExplorationController(np.asarray(grid_dbm, dtype=float), hold)
    res = run_episode(sc, explore, blocks, rng, table, curves, p_c)
    f = features(res)
    opts = mode_options(res.p_r, table, curves, p_c)
    labels = sliding_labels(res.p_r, opts.rate[MULTI_TONE], opts.rate[SINGLE_TONE], dbm_to_watt(grid_dbm), window)
    ends = np.arange(window, blocks)
    if n_windows < ends.size:
        ends = np.sort(rng.choice(ends, size=n_windows, replace=False))
    windows = np.stack([f[v - window : v] for v in ends])
    return windows, watt_to_dbm(labels[ends])
