import hashlib
import subprocess
import sys
import time

import numpy as np
import pytest

from uswipt.runner import ConfigError, PRESETS, list_presets, load_preset, parse_file, parse_text, run, validate
from uswipt.runner.cli import main
from uswipt.runner.experiments import gamma_grid, seed_rng, threshold_grid_dbm, write_csv

BASE = "[experiment]\nkind = ser\nseed = 1\n"


@pytest.mark.parametrize(
    "text, line, msg",
    [
        (BASE + "bogus = 1\n", 4, "unknown key"),
        (BASE + "[nope]\n", 4, "unknown section"),
        (BASE + "seed = 2\n", 4, "duplicate key"),
        (BASE + "trials = many\n", 4, "bad value"),
        (BASE + "[sweep]\np_dr_dbm = -1, x\n", 5, "bad value"),
        (BASE + "no equals sign\n", 4, "expected"),
        ("kind = ser\n", 1, "outside"),
        (BASE + "trials = 0\n", 4, "must be >= 1"),
        (BASE + "[signal]\nmodes = multi, triple\n", 5, "unknown mode"),
    ],
)
def test_parse_errors_carry_line(text, line, msg):
    with pytest.raises(ConfigError, match=msg) as exc:
        parse_text(text, "x.cfg")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"x.cfg:{line}:")


def test_missing_kind_and_seed():
    with pytest.raises(ConfigError, match="kind"):
        parse_text("[experiment]\nseed = 1\n")
    cfg = parse_text("[experiment]\nkind = ser\n")
    with pytest.raises(ConfigError, match="seed"):
        validate(cfg, require_seed=True)
    with pytest.raises(ConfigError, match="seed"):
        run(cfg, "unused")


def test_defaults_filled_and_comments_ignored():
    cfg = parse_text(BASE + "# note\ntrials = 7 ; inline\n")
    assert cfg.get("experiment", "trials") == 7
    assert cfg.get("signal", "q_values") == (4, 8, 16)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_file(tmp_path / "missing.cfg")


def test_presets_listed_and_valid():
    names = [n for n, _ in list_presets()]
    assert len(names) >= 8 and set(PRESETS) <= set(names)
    for n in names:
        cfg = load_preset(n)
        validate(cfg, require_seed=True)
        assert cfg.name == n


def test_grids():
    cfg = load_preset("fig13_training")
    g = threshold_grid_dbm(cfg)
    assert g[0] == -40.0 and g[-1] == 0.0 and g.size == 41
    gam = gamma_grid(load_preset("fig8_cdf_ps"))
    assert gam[-1] == 40.0 and np.all(np.diff(gam) > 0)


def test_seed_streams_independent():
    cfg = parse_text(BASE)
    a = seed_rng(cfg, 0, 0).random(4)
    assert np.array_equal(a, seed_rng(cfg, 0, 0).random(4))
    assert not np.array_equal(a, seed_rng(cfg, 1, 0).random(4))
    assert not np.array_equal(a, seed_rng(cfg, 0, 1).random(4))


def test_csv_format(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["x", "y"], [(1, 0.5), (2, 1 / 3)])
    raw = p.read_bytes()
    assert b"\r" not in raw
    assert raw.decode("ascii").splitlines() == ["x,y", "1,0.5", "2,0.333333333333"]


def test_unit_scale_under_ten_seconds(tmp_path):
    t = time.perf_counter()
    paths = run(load_preset("unit_scale"), tmp_path)
    assert time.perf_counter() - t < 10.0
    assert paths and all(p.exists() for p in paths)
    text = paths[0].read_text()
    assert text.startswith("p_dr_dbm,quantity,value\n")


def _hashes(paths):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in paths}


SMALL_SER = BASE + "trials = 400\n[sweep]\np_dr_dbm = -10, 0\n[signal]\nq_values = 4, 16\n"
SMALL_TRAIN = (
    "[experiment]\nkind = rate\nseed = 5\nblocks = 400\n[sweep]\np_dr_dbm = -2, 2\n"
    "[control]\ntrain_windows = 200\ntrain_blocks = 300\nexplore_hold = 50\n[tcn]\nepochs = 1\nchannels = 4\n"
)


@pytest.mark.parametrize("text", [SMALL_SER, SMALL_TRAIN], ids=["ser", "rate"])
def test_deterministic_across_runs_and_workers(tmp_path, text):
    cfg = parse_text(text, name="det")
    a = _hashes(run(cfg, tmp_path / "a"))
    b = _hashes(run(parse_text(text, name="det"), tmp_path / "b"))
    cfg2 = parse_text(text, name="det")
    cfg2.override("experiment", "workers", 2)
    c = _hashes(run(cfg2, tmp_path / "c"))
    assert a == b == c


def test_seed_changes_output(tmp_path):
    a = _hashes(run(parse_text(SMALL_SER, name="s"), tmp_path / "a"))
    cfg = parse_text(SMALL_SER, name="s")
    cfg.override("experiment", "seed", 2)
    assert a != _hashes(run(cfg, tmp_path / "b"))


def test_cli_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(BASE + "trials = lots\n")
    assert main(["run", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert f"{bad}:4:" in capsys.readouterr().err


def test_cli_unknown_target(tmp_path, capsys):
    assert main(["run", "no_such_preset", "--out-dir", str(tmp_path)]) == 2


def test_cli_list_and_gradcheck(capsys):
    assert main(["list-presets"]) == 0
    assert "unit_scale" in capsys.readouterr().out
    assert main(["gradcheck", "--seed", "1"]) == 0


def test_cli_fit_eh(tmp_path, capsys):
    from importlib import resources

    data = resources.files("uswipt").joinpath("data/eh_curves.csv")
    assert main(["fit-eh", str(data)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("q,p_on_dbm") and "crossover" in out
    assert main(["fit-eh", str(tmp_path / "none.csv")]) == 2


def test_module_entry_point(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nkind = nope\n")
    res = subprocess.run([sys.executable, "-m", "uswipt", "run", str(bad)], capture_output=True, text=True)
    assert res.returncode == 2 and ":2:" in res.stderr
