"""``uswipt`` command line: run presets or config files, fit EH curves,
train the threshold TCN, check gradients."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .. import harvest, neuralnet
from ..units import watt_to_dbm
from . import experiments
from .config import ConfigError, ExperimentConfig


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("blocks", "blocks"), ("workers", "workers")):
        value = getattr(args, flag, None)
        if value is not None:
            cfg.override("experiment", key, value)
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(experiments.resolve(args.config), args)
    for path in experiments.run(cfg, args.out_dir):
        print(f"wrote {path}")
    return 0


def _cmd_list(args) -> int:
    for name, desc in experiments.list_presets():
        print(f"{name:<18} {desc}")
    return 0


def _cmd_fit_eh(args) -> int:
    try:
        data = harvest.load_dataset(args.datafile)
        curves = harvest.fit_curves(data, args.segments)
    except OSError as exc:
        raise ConfigError(f"cannot read EH dataset: {exc.strerror}", args.datafile) from None
    except ValueError as exc:
        raise ConfigError(str(exc), args.datafile) from None
    print("q,p_on_dbm,p_sat_dbm,p_max_dbm,rmse_rel,self_powering_dbm")
    for q, c in curves.items():
        x, y = data[q]
        rel = harvest.fit_rmse(c, x, y) / c.p_max
        thr = harvest.self_powering_threshold(c)
        print(
            f"{q},{watt_to_dbm(c.p_on):.3f},{watt_to_dbm(c.p_sat):.3f},{watt_to_dbm(c.p_max):.3f},"
            f"{rel:.5f},{watt_to_dbm(thr):.3f}"
        )
    if 1 in curves:
        for q in sorted(curves):
            if q == 1:
                continue
            try:
                x = harvest.pce_crossover(curves[1], curves[q])
                print(f"# pce crossover q=1 vs q={q}: {watt_to_dbm(x):.2f} dBm")
            except ValueError:
                print(f"# pce crossover q=1 vs q={q}: none")
    return 0


def _cmd_train(args) -> int:
    cfg = _apply_overrides(experiments.resolve(args.config), args)
    experiments.validate(cfg, require_seed=True)
    out = Path(args.out_dir)
    series = experiments.run_training(cfg, out)
    for s in series:
        print(f"wrote {experiments.write_csv(out / f'{cfg.name}_{s.name}.csv', s.header, s.rows)}")
    print(f"wrote {out / f'{cfg.name}_tcn.npz'}")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    cfg = neuralnet.TcnConfig(channels=8)
    model = neuralnet.TcnModel.init(cfg, rng)
    x = rng.standard_normal((8, cfg.n_features, cfg.window))
    y = rng.standard_normal(8)
    err = neuralnet.gradient_check(model, x, y, n_params=200, rng=rng)
    ok = err < 1e-4
    print(f"gradient check: max relative error {err:.3e} over 200 parameters ({'ok' if ok else 'FAILED'})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uswipt", description="Unified SWIPT PAPR-modulation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config: bool = True):
        if with_config:
            sp.add_argument("config", help="config file or preset name")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", default="results")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--blocks", type=int)
        sp.add_argument("--workers", type=int)

    sp = sub.add_parser("run", help="run an experiment")
    common(sp)
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("list-presets", help="list bundled presets")
    sp.set_defaults(func=_cmd_list)

    sp = sub.add_parser("fit-eh", help="fit piecewise-linear EH curves to a dataset")
    sp.add_argument("datafile")
    sp.add_argument("--segments", type=int, default=12)
    sp.set_defaults(func=_cmd_fit_eh)

    sp = sub.add_parser("train-tcn", help="train the threshold TCN and save a checkpoint")
    common(sp)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("gradcheck", help="finite-difference check of TCN backprop")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
