"""Experiment kinds, presets and the seeded sweep executor.

Every random stream is derived from ``SeedSequence(seed, spawn_key=(point, slot))``
so a sweep point's output does not depend on which worker ran it or in what
order points completed.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .. import analysis, control, harvest, neuralnet
from ..channel import ChannelParams, gauss_markov
from ..hpa import HpaParams
from ..receiver import ReceiverParams
from ..scenario import MULTI_TONE, SINGLE_TONE, Scenario
from ..units import dbm_to_watt, watt_to_dbm
from .config import ConfigError, ExperimentConfig, parse_text, validate

PRESETS = (
    "fig8_cdf_ps",
    "fig9_cdf_fs",
    "fig10_ser_single",
    "fig11_ser_modes",
    "fig12_outage",
    "fig13_training",
    "fig14_rate",
    "unit_scale",
)

# spawn-key slots within a sweep point
_SLOT_MC = 0
_SLOT_TRAIN_DATA = 1
_SLOT_EVAL = 2
# pseudo point index for the model-training stream
_TRAIN_POINT = 10_000


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _preset_text(name: str) -> str:
    res = resources.files("uswipt").joinpath(f"presets/{name}.cfg")
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; see list-presets")
    return res.read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_text(_preset_text(name), f"presets/{name}.cfg", name)


def list_presets() -> list[tuple[str, str]]:
    """(name, one-line description) for every bundled preset."""
    return [(name, load_preset(name).get("experiment", "description")) for name in PRESETS]


def resolve(target: str) -> ExperimentConfig:
    """A config file path, or the name of a bundled preset."""
    p = Path(target)
    if p.suffix == ".cfg" and p.is_file():
        from .config import parse_file

        return parse_file(p)
    stem = p.stem if p.suffix == ".cfg" else target
    if stem in PRESETS:
        return load_preset(stem)
    if p.suffix == ".cfg":
        raise ConfigError("config file not found", str(p))
    raise ConfigError(f"unknown preset {target!r}; see list-presets")


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def seed_rng(cfg: ExperimentConfig, point: int, slot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(point, slot)))


def build_scenario(cfg: ExperimentConfig, p_dr_dbm: float, q_total: int | None = None) -> Scenario:
    g = cfg.get
    try:
        hpa = HpaParams.from_db(g("hpa", "gain_db"), g("hpa", "a_sat_sq_dbm"), g("hpa", "beta"))
        receiver = ReceiverParams(
            rho_r=g("receiver", "rho_r"),
            sigma_ps_sq=float(dbm_to_watt(g("receiver", "sigma_ps_dbm"))),
            sigma_fs_sq=float(dbm_to_watt(g("receiver", "sigma_fs_dbm"))),
            cutoff_hz=g("receiver", "cutoff_hz"),
            fs_mode=g("receiver", "fs_mode"),
            fs_floor=g("receiver", "fs_floor"),
        )
        gain = g("channel", "antenna_gain_dbi")
        channel = ChannelParams(
            zeta=g("channel", "zeta"),
            sigma_h_sq=g("channel", "sigma_h_sq"),
            path_exponent=g("channel", "path_exponent"),
            distance_m=g("channel", "distance_m"),
            antenna_gain_dbi_tx=gain,
            antenna_gain_dbi_rx=gain,
            carrier_hz=g("channel", "carrier_hz"),
        )
        rho_fs = g("signal", "rho_fs")
        if not 0.0 < rho_fs < 1.0:
            raise ValueError("rho_fs must lie in (0, 1)")
        return Scenario(
            p_dr=float(dbm_to_watt(p_dr_dbm)),
            q_total=q_total or g("signal", "q_total"),
            delta_f=g("signal", "delta_f_hz"),
            rho_fs=rho_fs,
            hpa=hpa,
            ideal_hpa=g("hpa", "model") == "ideal",
            receiver=receiver,
            channel=channel,
            p_ref=float(dbm_to_watt(g("channel", "p_ref_dbm"))),
            oversampling=g("signal", "oversampling"),
        )
    except ValueError as exc:
        raise ConfigError(f"infeasible scenario parameters: {exc}", cfg.path) from None


def load_curves(cfg: ExperimentConfig) -> dict:
    src = cfg.get("control", "eh_data") or None
    try:
        curves = harvest.fit_curves(harvest.load_dataset(src), cfg.get("control", "eh_segments"))
    except (OSError, ValueError) as exc:
        cfg.fail("control", "eh_data", f"cannot build EH curves: {exc}")
    missing = {1, *cfg.get("signal", "q_values")} - set(curves)
    if missing:
        cfg.fail("control", "eh_data", f"no EH curve for q = {sorted(missing)}")
    return curves


def threshold_grid_dbm(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(
        cfg.get("control", "threshold_min_dbm"),
        cfg.get("control", "threshold_max_dbm"),
        cfg.get("control", "threshold_points"),
    )


def gamma_grid(cfg: ExperimentConfig) -> np.ndarray:
    top, k = cfg.get("signal", "gamma_max"), cfg.get("signal", "gamma_points")
    return np.linspace(top / k, top, k)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


@dataclass
class Series:
    name: str
    header: tuple
    rows: list


def _map(fn, args: list, workers: int) -> list:
    """Ordered map, optionally over a process pool."""
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
        return list(pool.map(fn, *zip(*args)))


def _digest(cfg: ExperimentConfig, p_dr: float, text: str):
    print(f"[{cfg.name}] p_dr={p_dr:+.2f} dBm  {text}", flush=True)


# ---------------------------------------------------------------------------
# PAPR CDF
# ---------------------------------------------------------------------------


def _cdf_point(cfg: ExperimentConfig, i: int, p_dr: float):
    sc = build_scenario(cfg, p_dr)
    rng = seed_rng(cfg, i, _SLOT_MC)
    gammas = gamma_grid(cfg)
    trials = cfg.get("experiment", "trials")
    rows, summary = [], []
    for mode in cfg.get("signal", "modes"):
        rho = sc.rho_of(mode)
        for n in cfg.get("signal", "n_values"):
            samples = dict(zip(("PS", "FS"), analysis.papr_samples(sc, rho, n, trials, rng)))
            for branch in cfg.get("signal", "branches"):
                ana = analysis.papr_cdf_rayleigh_curve(sc, rho, n, branch, gammas)
                emp = np.searchsorted(np.sort(samples[branch]), gammas, side="right") / trials
                rows += [(p_dr, branch, mode, n, g, a, e) for g, a, e in zip(gammas, ana, emp)]
                summary.append((p_dr, branch, mode, n, float(np.max(np.abs(ana - emp))), float(np.median(samples[branch]))))
    return rows, summary


def run_cdf(cfg: ExperimentConfig) -> list[Series]:
    results = _map(_cdf_point, [(cfg, i, p) for i, p in enumerate(cfg.sweep)], cfg.get("experiment", "workers"))
    rows, summary = [], []
    for p, (r, s) in zip(cfg.sweep, results):
        rows += r
        summary += s
        _digest(cfg, p, f"max sup-distance {max(x[4] for x in s):.4f} over {len(s)} curves")
    return [
        Series("cdf", ("p_dr_dbm", "branch", "mode", "n", "gamma", "cdf_analytic", "cdf_mc"), rows),
        Series("summary", ("p_dr_dbm", "branch", "mode", "n", "sup_distance", "median_papr_mc"), summary),
    ]


# ---------------------------------------------------------------------------
# SER and outage
# ---------------------------------------------------------------------------


def _ser_point(cfg: ExperimentConfig, i: int, p_dr: float):
    sc = build_scenario(cfg, p_dr)
    rng = seed_rng(cfg, i, _SLOT_MC)
    rows = []
    for mode in cfg.get("signal", "modes"):
        for q in cfg.get("signal", "q_values"):
            sq = sc.with_(q_total=q)
            rho = sq.rho_of(mode)
            ser_mc, hw = analysis.ser_monte_carlo(rho, q, sq, cfg.get("experiment", "trials"), rng)
            rows.append((p_dr, mode, q, ser_mc, analysis.ser_analytical(rho, q, sq), hw))
    return rows


def run_ser(cfg: ExperimentConfig) -> list[Series]:
    results = _map(_ser_point, [(cfg, i, p) for i, p in enumerate(cfg.sweep)], cfg.get("experiment", "workers"))
    rows = []
    for p, r in zip(cfg.sweep, results):
        rows += r
        _digest(cfg, p, "  ".join(f"{m[0]}Q{q}={s:.4g}" for _, m, q, s, _, _ in r))
    return [Series("ser", ("p_dr_dbm", "mode", "q", "ser_mc", "ser_analytic", "ci_halfwidth"), rows)]


def _outage_point(cfg: ExperimentConfig, i: int, p_dr: float):
    sc = build_scenario(cfg, p_dr)
    rng = seed_rng(cfg, i, _SLOT_MC)
    h = np.abs(gauss_markov(sc.channel, cfg.get("experiment", "blocks"), rng))
    tag = cfg.get("control", "ser_tag")
    rows = []
    for mode in cfg.get("signal", "modes"):
        for q in cfg.get("signal", "q_values"):
            sq = sc.with_(q_total=q)
            # common fading across (mode, Q) for a sharper comparison
            p_out = float(np.mean(analysis.conditional_ser_trajectory(sq.rho_of(mode), q, sq, h) > tag))
            rows.append((p_dr, mode, q, p_out, analysis.achievable_rate(p_out, q, sq.symbol_period)))
    return rows


def run_outage(cfg: ExperimentConfig) -> list[Series]:
    results = _map(_outage_point, [(cfg, i, p) for i, p in enumerate(cfg.sweep)], cfg.get("experiment", "workers"))
    rows = []
    for p, r in zip(cfg.sweep, results):
        rows += r
        _digest(cfg, p, "  ".join(f"{m[0]}Q{q}={po:.3f}" for _, m, q, po, _ in r))
    return [Series("outage", ("p_dr_dbm", "mode", "q", "p_out", "rate"), rows)]


# ---------------------------------------------------------------------------
# control: tables, TCN training, episodes
# ---------------------------------------------------------------------------


def tcn_config(cfg: ExperimentConfig) -> neuralnet.TcnConfig:
    g = cfg.get
    try:
        return neuralnet.TcnConfig(
            channels=g("tcn", "channels"),
            kernel_size=g("tcn", "kernel_size"),
            dilations=tuple(g("tcn", "dilations")),
            window=g("control", "window"),
            lr=g("tcn", "lr"),
            momentum=g("tcn", "momentum"),
            epochs=g("tcn", "epochs"),
            batch_size=g("tcn", "batch_size"),
        )
    except ValueError as exc:
        raise ConfigError(f"infeasible TCN parameters: {exc}", cfg.path) from None


@dataclass
class ControlSetup:
    scenarios: list
    tables: list
    curves: dict


def control_setup(cfg: ExperimentConfig) -> ControlSetup:
    curves = load_curves(cfg)
    qs = tuple(cfg.get("signal", "q_values"))
    scenarios, tables = [], []
    for p in cfg.sweep:
        sc = build_scenario(cfg, p, max(qs))
        scenarios.append(sc)
        tables.append(control.build_outage_table(sc, cfg.get("control", "ser_tag"), qs))
    return ControlSetup(scenarios, tables, curves)


def _p_c(cfg: ExperimentConfig) -> float:
    return cfg.get("control", "p_c_uw") * 1e-6


def _train_data_point(cfg: ExperimentConfig, i: int, sc: Scenario, table, curves):
    rng = seed_rng(cfg, i, _SLOT_TRAIN_DATA)
    n_win = max(1, cfg.get("control", "train_windows") // len(cfg.sweep))
    window = cfg.get("control", "window")
    blocks = max(cfg.get("control", "train_blocks"), 2 * n_win + window)
    return control.make_training_set(
        sc,
        table,
        curves,
        blocks,
        n_win,
        rng,
        window,
        threshold_grid_dbm(cfg),
        cfg.get("control", "explore_hold"),
        _p_c(cfg),
    )


def train_threshold_model(cfg: ExperimentConfig, setup: ControlSetup):
    """One TCN shared by all drive powers, trained on exploration episodes."""
    args = [(cfg, i, sc, t, setup.curves) for i, (sc, t) in enumerate(zip(setup.scenarios, setup.tables))]
    parts = _map(_train_data_point, args, cfg.get("experiment", "workers"))
    windows = np.concatenate([w for w, _ in parts])
    labels = np.concatenate([y for _, y in parts])
    tcfg = tcn_config(cfg)
    x_stats = neuralnet.Standardizer.fit(windows.reshape(-1, tcfg.n_features))
    y_stats = neuralnet.Standardizer.fit(labels)
    model = neuralnet.TcnModel.init(tcfg, seed_rng(cfg, _TRAIN_POINT, 0))
    predictor = neuralnet.TcnPredictor(model, x_stats, y_stats)
    result = neuralnet.train(
        model, predictor.standardize_windows(windows), y_stats.apply(labels), tcfg, seed_rng(cfg, _TRAIN_POINT, 1)
    )
    return predictor, result.history


_CONTROLLERS = ("exhaustive", "tcn", "fixed", "single_only", "multi_only")


def _mean_threshold_dbm(p_th) -> float:
    """Mean threshold in dBm (nan for the always-on/always-off baselines)."""
    p_th = np.asarray(p_th, dtype=float)
    if not np.all(np.isfinite(p_th)) or np.any(p_th <= 0):
        return float("nan")
    return float(np.mean(watt_to_dbm(p_th)))


def _episodes_point(cfg: ExperimentConfig, i: int, sc: Scenario, table, curves, predictor):
    blocks = cfg.get("experiment", "blocks")
    h = gauss_markov(sc.channel, blocks, seed_rng(cfg, i, _SLOT_EVAL))
    p_fixed = control.fixed_threshold_for(sc, table, curves)
    window = cfg.get("control", "window")
    ctls = {
        "exhaustive": control.ExhaustiveController(threshold_grid_dbm(cfg), window),
        "fixed": control.FixedController(p_fixed),
        "single_only": control.FixedController(0.0, "single_only"),
        "multi_only": control.FixedController(np.inf, "multi_only"),
    }
    if predictor is not None:
        ctls["tcn"] = control.LearnedController(predictor, p_fixed, window)
    out = {}
    for name, ctl in ctls.items():
        res = control.run_episode(sc, ctl, blocks, None, table, curves, _p_c(cfg), h=h)
        out[name] = (res.mean_rate, res.stderr, _mean_threshold_dbm(res.p_th))
    return out, float(watt_to_dbm(p_fixed))


def _episodes(cfg: ExperimentConfig, setup: ControlSetup, predictor):
    args = [
        (cfg, i, sc, t, setup.curves, predictor) for i, (sc, t) in enumerate(zip(setup.scenarios, setup.tables))
    ]
    return _map(_episodes_point, args, cfg.get("experiment", "workers"))


def run_training(cfg: ExperimentConfig, out_dir: Path | None = None) -> list[Series]:
    setup = control_setup(cfg)
    t0 = time.perf_counter()
    predictor, history = train_threshold_model(cfg, setup)
    print(f"[{cfg.name}] trained TCN in {time.perf_counter() - t0:.1f} s, final loss {history[-1]:.4f}", flush=True)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        predictor.save(out_dir / f"{cfg.name}_tcn.npz")
    rows = []
    for p, (res, fixed_dbm) in zip(cfg.sweep, _episodes(cfg, setup, predictor)):
        label = res["exhaustive"][2]
        tcn = res["tcn"][2]
        rows.append((p, label, tcn, fixed_dbm))
        _digest(cfg, p, f"label {label:.2f} dBm  tcn {tcn:.2f} dBm  fixed {fixed_dbm:.2f} dBm")
    return [
        Series("loss", ("epoch", "loss"), [(e + 1, v) for e, v in enumerate(history)]),
        Series("thresholds", ("p_dr_dbm", "label_mean_dbm", "tcn_mean_dbm", "fixed_dbm"), rows),
    ]


def run_rate(cfg: ExperimentConfig, out_dir: Path | None = None) -> list[Series]:
    setup = control_setup(cfg)
    predictor, history = train_threshold_model(cfg, setup)
    print(f"[{cfg.name}] trained TCN, final loss {history[-1]:.4f}", flush=True)
    header = ["p_dr_dbm"]
    for c in _CONTROLLERS:
        header += [c, f"{c}_se"]
    rows = []
    for p, (res, _) in zip(cfg.sweep, _episodes(cfg, setup, predictor)):
        row = [p]
        for c in _CONTROLLERS:
            row += [res[c][0], res[c][1]]
        rows.append(tuple(row))
        _digest(cfg, p, "  ".join(f"{c}={res[c][0]:.0f}" for c in _CONTROLLERS))
    return [Series("rate", tuple(header), rows)]


# ---------------------------------------------------------------------------
# smoke
# ---------------------------------------------------------------------------


def run_smoke(cfg: ExperimentConfig) -> list[Series]:
    """A few cheap end-to-end checks at the first sweep point."""
    p = cfg.sweep[0]
    trials = cfg.get("experiment", "trials")
    sc = build_scenario(cfg, p)
    rng = seed_rng(cfg, 0, _SLOT_MC)
    rows = []
    n = max(cfg.get("signal", "n_values"))
    ps, fs = analysis.papr_samples(sc, 0.0, n, trials, rng)
    for branch, s in (("PS", ps), ("FS", fs)):
        ana = analysis.papr_cdf_rayleigh_curve(sc, 0.0, n, branch, gamma_grid(cfg))
        emp = np.searchsorted(np.sort(s), gamma_grid(cfg), side="right") / trials
        rows.append((p, f"cdf_sup_distance_{branch}", float(np.max(np.abs(ana - emp)))))
    q = min(cfg.get("signal", "q_values"))
    sq = sc.with_(q_total=q)
    ser, hw = analysis.ser_monte_carlo(0.0, q, sq, trials, rng)
    rows += [(p, "ser_mc", ser), (p, "ser_ci_halfwidth", hw), (p, "ser_analytic", analysis.ser_analytical(0.0, q, sq))]
    curves = load_curves(cfg)
    qs = tuple(cfg.get("signal", "q_values"))
    sc = sc.with_(q_total=max(qs))
    table = control.build_outage_table(sc, cfg.get("control", "ser_tag"), qs, step_db=1.0)
    blocks = cfg.get("experiment", "blocks")
    h = gauss_markov(sc.channel, blocks, seed_rng(cfg, 0, _SLOT_EVAL))
    for ctl in (
        control.ExhaustiveController(threshold_grid_dbm(cfg), cfg.get("control", "window")),
        control.FixedController(control.fixed_threshold_for(sc, table, curves)),
    ):
        res = control.run_episode(sc, ctl, blocks, None, table, curves, _p_c(cfg), h=h)
        rows.append((p, f"rate_{ctl.name}", res.mean_rate))
        rows.append((p, f"energy_violations_{ctl.name}", control.audit_energy(res, table, curves, _p_c(cfg))))
    _digest(cfg, p, "  ".join(f"{k}={v:.4g}" for _, k, v in rows))
    return [Series("smoke", ("p_dr_dbm", "quantity", "value"), rows)]


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def run(cfg: ExperimentConfig, out_dir: str | Path = "results") -> list[Path]:
    """Execute ``cfg`` and write one CSV per series as ``<name>_<series>.csv``."""
    validate(cfg, require_seed=True)
    out = Path(out_dir)
    kind = cfg.kind
    if kind == "cdf":
        series = run_cdf(cfg)
    elif kind == "ser":
        series = run_ser(cfg)
    elif kind == "outage":
        series = run_outage(cfg)
    elif kind == "training":
        series = run_training(cfg, out)
    elif kind == "rate":
        series = run_rate(cfg, out)
    else:
        series = run_smoke(cfg)
    return [write_csv(out / f"{cfg.name}_{s.name}.csv", s.header, s.rows) for s in series]
