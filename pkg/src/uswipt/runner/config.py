"""Flat ``[section]`` / ``key = value`` experiment configs.

A hand-rolled reader rather than configparser: every value remembers its line,
so type and range errors point at the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or invalid config; ``str()`` carries ``path:line: message``."""

    def __init__(self, message: str, path: str = "<config>", line: int | None = None):
        self.path = path
        self.line = line
        loc = f"{path}:{line}" if line is not None else path
        super().__init__(f"{loc}: {message}")


def _float_list(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _int_list(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _str_list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options):
    def conv(s):
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s

    return conv


KINDS = ("cdf", "ser", "outage", "training", "rate", "smoke")

# section -> key -> (converter, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "kind": (_choice(*KINDS), None),
        "description": (str, ""),
        "seed": (int, None),
        "trials": (int, 10_000),
        "blocks": (int, 10_000),
        "workers": (int, 1),
    },
    "sweep": {"p_dr_dbm": (_float_list, (-10.0,))},
    "signal": {
        "q_total": (int, 16),
        "q_values": (_int_list, (4, 8, 16)),
        "modes": (_str_list, ("multi", "single")),
        "n_values": (_int_list, (1, 4, 8, 16)),
        "branches": (_str_list, ("PS", "FS")),
        "rho_fs": (float, 1.0 - 1e-4),
        "delta_f_hz": (float, 10e3),
        "oversampling": (int, 16),
        "gamma_max": (float, 40.0),
        "gamma_points": (int, 400),
    },
    "hpa": {
        "model": (_choice("sspa", "ideal"), "sspa"),
        "gain_db": (float, 25.0),
        "a_sat_sq_dbm": (float, 10.0),
        "beta": (float, 2.0),
    },
    "receiver": {
        "rho_r": (float, 1e-3),
        "sigma_ps_dbm": (float, -100.0),
        "sigma_fs_dbm": (float, -100.0),
        "fs_mode": (_choice("ideal", "highpass", "literal"), "ideal"),
        "cutoff_hz": (float, 1e3),
        "fs_floor": (float, 0.1),
    },
    "channel": {
        "zeta": (float, 0.99),
        "sigma_h_sq": (float, 1.0),
        "distance_m": (float, 3.0),
        "path_exponent": (float, 2.5),
        "antenna_gain_dbi": (float, 5.0),
        "carrier_hz": (float, 2.4e9),
        "p_ref_dbm": (float, 29.0),
    },
    "control": {
        "ser_tag": (float, 0.01),
        "p_c_uw": (float, 10.0),
        "window": (int, 20),
        "threshold_min_dbm": (float, -40.0),
        "threshold_max_dbm": (float, 0.0),
        "threshold_points": (int, 41),
        "eh_segments": (int, 12),
        "eh_data": (str, ""),
        "train_windows": (int, 4_000),
        "train_blocks": (int, 2_500),
        "explore_hold": (int, 200),
    },
    "tcn": {
        "channels": (int, 16),
        "kernel_size": (int, 2),
        "dilations": (_int_list, (1, 2, 4, 8)),
        "lr": (float, 1e-2),
        "momentum": (float, 0.0),
        "epochs": (int, 15),
        "batch_size": (int, 64),
    },
}


@dataclass
class ExperimentConfig:
    """Parsed config: typed values (defaults filled in) plus provenance lines."""

    name: str
    path: str
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]):
        return self.values[key]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    def override(self, section: str, key: str, value):
        self.values[(section, key)] = value
        self.lines[(section, key)] = None

    @property
    def kind(self) -> str:
        return self.values[("experiment", "kind")]

    @property
    def seed(self) -> int:
        return self.values[("experiment", "seed")]

    @property
    def sweep(self) -> tuple:
        return self.values[("sweep", "p_dr_dbm")]

    def fail(self, section: str, key: str, message: str):
        raise ConfigError(f"[{section}] {key}: {message}", self.path, self.lines.get((section, key)))


def parse_text(text: str, path: str = "<config>", name: str | None = None) -> ExperimentConfig:
    values: dict = {}
    lines: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", path, lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", path, lineno)
        if (section, key) in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[(section, key)]})", path, lineno)
        conv = SCHEMA[section][key][0]
        try:
            values[(section, key)] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", path, lineno) from None
        lines[(section, key)] = lineno

    for sec, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            values.setdefault((sec, key), default)
    if values[("experiment", "kind")] is None:
        raise ConfigError("missing required key [experiment] kind", path)
    cfg = ExperimentConfig(name or Path(path).stem, path, values, lines)
    validate(cfg, require_seed=False)
    return cfg


def parse_file(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    return parse_text(text, str(p))


def validate(cfg: ExperimentConfig, require_seed: bool = True):
    """Range checks that do not need a scenario to be built."""
    if require_seed and cfg.seed is None:
        raise ConfigError("a seed is required ([experiment] seed or --seed)", cfg.path)
    positive = [
        ("experiment", "trials"),
        ("experiment", "blocks"),
        ("experiment", "workers"),
        ("signal", "oversampling"),
        ("signal", "gamma_points"),
        ("control", "window"),
        ("control", "threshold_points"),
        ("control", "train_windows"),
        ("control", "train_blocks"),
        ("control", "explore_hold"),
        ("tcn", "epochs"),
        ("tcn", "batch_size"),
        ("tcn", "channels"),
    ]
    for sec, key in positive:
        if cfg.get(sec, key) < 1:
            cfg.fail(sec, key, "must be >= 1")
    if not cfg.sweep:
        cfg.fail("sweep", "p_dr_dbm", "needs at least one drive power")
    for m in cfg.get("signal", "modes"):
        if m not in ("multi", "single"):
            cfg.fail("signal", "modes", f"unknown mode {m!r}")
    for b in cfg.get("signal", "branches"):
        if b not in ("PS", "FS"):
            cfg.fail("signal", "branches", f"unknown branch {b!r}")
    if any(q < 2 for q in cfg.get("signal", "q_values")):
        cfg.fail("signal", "q_values", "every Q must be >= 2")
    q_total = cfg.get("signal", "q_total")
    if any(not 1 <= n <= q_total for n in cfg.get("signal", "n_values")):
        cfg.fail("signal", "n_values", f"tone counts must lie in 1..{q_total}")
    if not 0.0 < cfg.get("control", "ser_tag") < 1.0:
        cfg.fail("control", "ser_tag", "must lie in (0, 1)")
    if cfg.get("control", "threshold_min_dbm") >= cfg.get("control", "threshold_max_dbm"):
        cfg.fail("control", "threshold_min_dbm", "must be below threshold_max_dbm")
    if cfg.get("control", "p_c_uw") <= 0:
        cfg.fail("control", "p_c_uw", "must be positive")
