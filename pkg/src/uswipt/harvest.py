"""Piecewise-linear nonlinear energy-harvesting model.

One curve per tone count q. Single-tone mode uses the q = 1 curve, multi-tone
mode with modulation index Q uses the q = Q curve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import lsq_linear

from .units import dbm_to_watt, watt_to_dbm

# fraction of the maximum harvested power that counts as "flat"
SATURATION_TOL = 0.02
# receiver circuit consumption P_C (10 uW)
P_C_DEFAULT = 10e-6


@dataclass(frozen=True)
class EhCurve:
    """Supporting points (x_k, y_k) in watts; x_0 is turn-on, x_K saturation."""

    q: int
    x_points: np.ndarray
    y_points: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_points, dtype=float)
        y = np.asarray(self.y_points, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("need at least two supporting points of equal count")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x_points must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("y_points must be non-decreasing")
        if x[0] < 0 or y[0] < 0:
            raise ValueError("powers must be nonnegative")
        if np.any(y > x * (1 + 1e-12)):
            raise ValueError("harvested power cannot exceed input power")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x_points", x)
        object.__setattr__(self, "y_points", y)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.y_points) / np.diff(self.x_points)

    @property
    def p_on(self) -> float:
        return float(self.x_points[0])

    @property
    def p_sat(self) -> float:
        return float(self.x_points[-1])

    @property
    def p_max(self) -> float:
        return float(self.y_points[-1])


def harvested_power(c: EhCurve, p_in):
    """P_EH(x): zero below turn-on, linear between knots, flat above saturation."""
    p = np.asarray(p_in, dtype=float)
    if np.any(p < 0):
        raise ValueError("input power must be nonnegative")
    out = np.where(p < c.x_points[0], 0.0, np.interp(p, c.x_points, c.y_points))
    return float(out) if out.ndim == 0 else out


def pce(c: EhCurve, p_in):
    """RF-to-DC efficiency P_EH / P_in."""
    p = np.asarray(p_in, dtype=float)
    if np.any(p <= 0):
        raise ValueError("pce needs positive input power")
    out = np.asarray(harvested_power(c, p)) / p
    return float(out) if out.ndim == 0 else out


def self_powering_threshold(c: EhCurve, p_c: float = P_C_DEFAULT) -> float:
    """Smallest input power with P_EH >= p_c (inf if never reached)."""
    if p_c <= 0:
        raise ValueError("p_c must be positive")
    if c.p_max < p_c:
        return float("inf")
    x, y = c.x_points, c.y_points
    if y[0] >= p_c:
        return float(x[0])
    k = int(np.searchsorted(y, p_c, side="left"))
    # y[k-1] < p_c <= y[k]
    return float(x[k - 1] + (p_c - y[k - 1]) * (x[k] - x[k - 1]) / (y[k] - y[k - 1]))


def _saturation_index(y: np.ndarray) -> int:
    y_max = y.max()
    return int(np.argmax(y >= (1.0 - SATURATION_TOL) * y_max))


def fit_piecewise(p_in, p_eh, k_segments: int, q: int = 0) -> EhCurve:
    """Least-squares continuous piecewise-linear fit with monotone ordinates.

    Turn-on x_0 is the last input with zero harvest (or the first input when
    none is zero) and carries y_0 = 0. Saturation x_K is the smallest input
    whose harvest is within 2% of the maximum. Interior knots sit on a quantile
    grid of the inputs in [x_0, x_K]; only those inputs enter the fit.
    """
    x = np.asarray(p_in, dtype=float)
    y = np.asarray(p_eh, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("p_in and p_eh must be 1-D arrays of equal length")
    if k_segments < 1:
        raise ValueError("k_segments must be >= 1")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if np.any(np.diff(x) <= 0):
        raise ValueError("input powers must be distinct")
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)) or np.any(y < 0):
        raise ValueError("powers must be finite and nonnegative")
    pos = np.flatnonzero(y > 0)
    if pos.size == 0:
        raise ValueError("no positive harvested power in data")
    # anchor at the last zero-harvest input so y_0 = 0 matches the data
    i0 = max(int(pos[0]) - 1, 0)
    iK = _saturation_index(y)
    xs, ys = x[i0 : iK + 1], y[i0 : iK + 1]
    if xs.size < k_segments + 1:
        raise ValueError(f"need at least {k_segments + 1} points between turn-on and saturation, got {xs.size}")

    knots = np.quantile(xs, np.linspace(0.0, 1.0, k_segments + 1), method="nearest")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("degenerate knot grid (repeated inputs)")

    # hat-function design matrix on the knots, reparametrized as y = L @ delta
    # with y_0 = 0 (continuous at turn-on) and delta_k = y_k - y_{k-1} >= 0
    basis = np.empty((xs.size, k_segments + 1))
    eye = np.eye(k_segments + 1)
    for j in range(k_segments + 1):
        basis[:, j] = np.interp(xs, knots, eye[j])
    cum = np.tril(np.ones((k_segments + 1, k_segments + 1)))[:, 1:]
    scale = max(ys.max(), np.finfo(float).tiny)
    res = lsq_linear(basis @ cum, ys / scale, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
    y_knots = np.minimum(np.concatenate(([0.0], np.cumsum(res.x))) * scale, knots)
    y_knots = np.maximum.accumulate(y_knots)
    return EhCurve(q, knots, y_knots)


def fit_rmse(c: EhCurve, p_in, p_eh) -> float:
    return float(np.sqrt(np.mean((harvested_power(c, p_in) - np.asarray(p_eh)) ** 2)))


def pce_crossover(single: EhCurve, multi: EhCurve, resolution_db: float = 0.1) -> float:
    """Smallest input power (watts) where pce(multi) - pce(single) turns from
    positive to negative, located to ``resolution_db``."""
    lo = min(single.p_on, multi.p_on)
    hi = max(single.p_sat, multi.p_sat)
    grid_dbm = np.arange(float(watt_to_dbm(lo)), float(watt_to_dbm(hi)) + resolution_db, resolution_db)

    def diff(p_dbm):
        p = dbm_to_watt(p_dbm)
        return pce(multi, p) - pce(single, p)

    d = diff(grid_dbm)
    seen_positive = False
    for i in range(1, d.size):
        seen_positive |= d[i - 1] > 0
        if seen_positive and d[i] < 0:
            a, b = grid_dbm[i - 1], grid_dbm[i]
            # walk back to the last strictly positive sample
            j = i - 1
            while d[j] <= 0:
                j -= 1
            a = grid_dbm[j]
            while b - a > 0.5 * resolution_db:
                m = 0.5 * (a + b)
                if diff(m) > 0:
                    a = m
                else:
                    b = m
            return float(dbm_to_watt(0.5 * (a + b)))
    raise ValueError("PCE curves have no positive-to-negative crossover")


def load_dataset(path: str | Path | None = None) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Read ``q,p_in_dbm,p_eh_dbm`` rows; returns q -> (p_in, p_eh) in watts.

    ``-inf`` dBm encodes zero harvested power. Defaults to the bundled file.
    """
    if path is None:
        text = resources.files("uswipt").joinpath("data/eh_curves.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = list(csv.reader(line for line in text.splitlines() if line.strip()))
    if not rows or [h.strip() for h in rows[0]] != ["q", "p_in_dbm", "p_eh_dbm"]:
        raise ValueError("EH dataset needs header q,p_in_dbm,p_eh_dbm")
    data: dict[int, list[tuple[float, float]]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            q, x, y = int(row[0]), float(row[1]), float(row[2])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        data.setdefault(q, []).append((x, y))
    out = {}
    for q, pts in sorted(data.items()):
        arr = np.array(sorted(pts))
        out[q] = (dbm_to_watt(arr[:, 0]), dbm_to_watt(arr[:, 1]))
    return out


def fit_curves(data: dict[int, tuple[np.ndarray, np.ndarray]], k_segments: int = 12) -> dict[int, EhCurve]:
    return {q: fit_piecewise(x, y, k_segments, q) for q, (x, y) in data.items()}


def curve_for(curves: dict[int, EhCurve], single_tone: bool, q_total: int) -> EhCurve:
    """Mode -> curve mapping: q = 1 for single tone, q = Q for multi-tone."""
    key = 1 if single_tone else q_total
    if key not in curves:
        raise KeyError(f"no EH curve for q={key}")
    return curves[key]
