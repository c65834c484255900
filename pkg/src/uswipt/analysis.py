"""Analytical PAPR CDFs and SER, plus Monte-Carlo estimators for SER, outage
and achievable rate.

Conventions
-----------
For branch i the noiseless signal at |h| = 1 is Y_i(t) (see
``Scenario.branch_profiles``); at fading magnitude z it is z Y_i(t). With
sigma_i^2 the estimator noise power and P_i(z) = z^2 mean(Y_i^2) + sigma_i^2,

    PAPR_FS < gamma  <=>  max_t y_FS^2 < gamma P_FS
    PAPR_PS < gamma  <=>  max_t y_PS^2 < gamma P_PS / 2

so nu_FS = gamma P_FS / sigma^2 and nu_PS = gamma P_PS / (2 sigma^2). The FS
power is floored exactly as the receiver floors it (see ``ReceiverParams``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc

from . import _accel
from .channel import cscg, gauss_markov
from .receiver import decide_symbol
from .scenario import Scenario

PS = "PS"
FS = "FS"
_BRANCHES = (PS, FS)
# Monte-Carlo trials per vectorized chunk (bounds the noise matrices)
_MC_CHUNK = 4096
# blocks per chunk when evaluating conditional SER along a trajectory
_SER_CHUNK = 512


def marcum_q_half(a, b):
    """Q_{1/2}(a, b) = P(|Z + a| > b), Z ~ N(0, 1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marcum_q_half needs a, b >= 0")
    r = 0.5 * erfc((b - a) / np.sqrt(2.0)) + 0.5 * erfc((b + a) / np.sqrt(2.0))
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class CdfQuery:
    """One point of F_i(gamma, N). ``rho=None`` picks the branch's natural mode
    (multi-tone for PS, single-tone for FS)."""

    gamma: float
    n_active: int
    branch: str
    scenario: Scenario
    rho: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.branch not in _BRANCHES:
            raise ValueError(f"branch must be one of {_BRANCHES}")
        if not 1 <= self.n_active <= self.scenario.q_total:
            raise ValueError("n_active out of range")

    @property
    def rho_value(self) -> float:
        if self.rho is not None:
            return self.rho
        return 0.0 if self.branch == PS else self.scenario.rho_fs


@dataclass(frozen=True)
class RateResult:
    p_out: float
    rate: float
    q: int

    def __post_init__(self):
        if not 0.0 <= self.p_out <= 1.0:
            raise ValueError("p_out must lie in [0, 1]")


def _sigma_sq(sc: Scenario, branch: str) -> float:
    s = sc.receiver.sigma_ps_sq if branch == PS else sc.receiver.sigma_fs_sq
    if s <= 0:
        raise ValueError("analytical CDFs need positive estimator noise power")
    return s


def _log_cdf_branch(sc: Scenario, rho: float, n: int, branch: str, gammas, h_mag):
    """log F_i(gamma, N | z) on the broadcast of ``gammas`` and ``h_mag``."""
    gammas, h_mag = np.broadcast_arrays(np.asarray(gammas, dtype=float), np.asarray(h_mag, dtype=float))
    ps, fs = sc.branch_profiles(rho, n)
    y = ps if branch == PS else fs
    s2 = _sigma_sq(sc, branch)
    z = np.abs(h_mag.ravel())
    p_branch = z**2 * np.mean(y**2) + s2
    if branch == FS:
        coef = sc.receiver.fs_floor_coef(sc.rho_fs)
        p_ps = z**2 * np.mean(ps**2) + sc.receiver.sigma_ps_sq
        p_branch = np.maximum(p_branch, coef * p_ps)
    c = 0.5 if branch == PS else 1.0
    b = np.sqrt(c * gammas.ravel() * p_branch / s2)
    out = _accel.log_max_cdf(y / np.sqrt(s2), z, b)
    return out.reshape(gammas.shape)


def papr_cdf_conditional(q: CdfQuery, h_mag):
    """F_i(gamma, N | |h|) as a product over the symbol grid."""
    r = np.exp(_log_cdf_branch(q.scenario, q.rho_value, q.n_active, q.branch, q.gamma, h_mag))
    return float(r) if r.ndim == 0 else r


def rayleigh_pdf(z, sigma_h_sq: float):
    """Density of |h| for h ~ CN(0, sigma_h^2)."""
    z = np.asarray(z, dtype=float)
    return 2.0 * z / sigma_h_sq * np.exp(-(z**2) / sigma_h_sq)


def _rayleigh_average(fn, sigma_h_sq: float, epsabs: float = 1e-6):
    """E_|h|[fn(|h|)] over [0, 6 sigma_h]; fn may return an array.

    The neglected tail has mass exp(-36) < 3e-16 and fn is bounded by 1, so the
    truncation error sits far below ``epsabs``.
    """
    sigma_h = np.sqrt(sigma_h_sq)
    val, err = integrate.quad_vec(
        lambda z: rayleigh_pdf(z, sigma_h_sq) * fn(z),
        0.0,
        6.0 * sigma_h,
        epsabs=epsabs,
        epsrel=0.0,
        limit=400,
    )
    if not np.all(np.isfinite(val)) or np.max(err) > 10 * epsabs:
        raise RuntimeError(f"Rayleigh quadrature did not converge: err={np.max(err):.3e}, value={val}")
    return val


def papr_cdf_rayleigh(q: CdfQuery, density=None):
    """F_i(gamma, N) averaged over Rayleigh fading.

    The expectation is taken over the whole product (one |h| per symbol).
    ``density`` replaces the fading law by a discrete one given as
    ``(points, weights)``; a single point mass reproduces the conditional CDF.
    """
    sc = q.scenario

    def f(z):
        return np.exp(_log_cdf_branch(sc, q.rho_value, q.n_active, q.branch, q.gamma, z))

    if density is not None:
        pts, wts = (np.atleast_1d(np.asarray(v, dtype=float)) for v in density)
        return float(np.sum(wts * f(pts)))
    return float(np.clip(_rayleigh_average(f, sc.channel.sigma_h_sq), 0.0, 1.0))


def papr_cdf_rayleigh_curve(sc: Scenario, rho: float, n: int, branch: str, gammas) -> np.ndarray:
    """Vectorized ``papr_cdf_rayleigh`` over a gamma grid (one quadrature)."""
    gammas = np.asarray(gammas, dtype=float)

    def f(z):
        return np.exp(_log_cdf_branch(sc, rho, n, branch, gammas, z))

    return np.clip(_rayleigh_average(f, sc.channel.sigma_h_sq), 0.0, 1.0)


def _log_cdf_id(sc: Scenario, rho: float, n: int, gammas, h_mag):
    return _log_cdf_branch(sc, rho, n, PS, gammas, h_mag) + _log_cdf_branch(sc, rho, n, FS, gammas, h_mag)


def symbol_error_probs(rho: float, q_total: int, sc: Scenario, h_mag) -> np.ndarray:
    """p(N | |h|) for N = 1..Q; shape ``(len(h_mag), Q)``.

    p(N) = 1 - F_ID(2N + 1, N) + F_ID(2N - 1, N), with the F_ID(1, 1) term
    dropped for N = 1 and the upper term dropped for N = Q.
    """
    if q_total < 2:
        raise ValueError("SER needs Q >= 2")
    sc = sc if sc.q_total == q_total else sc.with_(q_total=q_total)
    z = np.atleast_1d(np.asarray(h_mag, dtype=float))
    out = np.empty((z.size, q_total))
    for n in range(1, q_total + 1):
        p = np.zeros(z.size)
        if n < q_total:
            p += -np.expm1(_log_cdf_id(sc, rho, n, np.full(z.size, 2.0 * n + 1.0), z))
        if n > 1:
            p += np.exp(_log_cdf_id(sc, rho, n, np.full(z.size, 2.0 * n - 1.0), z))
        out[:, n - 1] = p
    return np.clip(out, 0.0, 1.0)


def ser_conditional(rho: float, q_total: int, sc: Scenario, h_mag):
    """Symbol error probability given the fading magnitude.

    With any estimator noise the SER is positive; values that underflow are
    clamped to the smallest normal double so ``SER > 0`` stays true.
    """
    r = np.maximum(symbol_error_probs(rho, q_total, sc, h_mag).mean(axis=1), np.finfo(float).tiny)
    return float(r[0]) if np.ndim(h_mag) == 0 else r


def ser_analytical(rho: float, q_total: int, sc: Scenario) -> float:
    """Rayleigh-averaged SER E_|h|[SER(rho, Q | |h|)]."""
    if q_total < 2:
        raise ValueError("SER needs Q >= 2")
    val = _rayleigh_average(lambda z: ser_conditional(rho, q_total, sc, float(z)), sc.channel.sigma_h_sq)
    return float(np.clip(val, 0.0, 1.0))


def _draw_h_mag(sc: Scenario, rng, size: int, h_mag):
    if h_mag is None:
        return np.abs(cscg(rng, sc.channel.sigma_h_sq, size=size))
    return np.full(size, float(h_mag))


def papr_samples(sc: Scenario, rho: float, n: int, trials: int, rng: np.random.Generator, h_mag=None):
    """Monte-Carlo (PAPR_PS, PAPR_FS) for symbol N.

    Each trial draws its own Rayleigh magnitude unless ``h_mag`` is fixed.
    """
    ps, fs = sc.branch_profiles(rho, n)
    r = sc.receiver
    m = ps.size
    out_ps = np.empty(trials)
    out_fs = np.empty(trials)
    for lo in range(0, trials, _MC_CHUNK):
        k = min(_MC_CHUNK, trials - lo)
        z = _draw_h_mag(sc, rng, k, h_mag)
        n_ps = np.sqrt(r.sigma_ps_sq) * rng.standard_normal((k, m))
        n_fs = np.sqrt(r.sigma_fs_sq) * rng.standard_normal((k, m))
        out_ps[lo : lo + k], out_fs[lo : lo + k] = _accel.branch_papr(
            ps, fs, z, n_ps, n_fs, r.fs_floor_coef(sc.rho_fs)
        )
    return out_ps, out_fs


def ser_monte_carlo(rho: float, q_total: int, sc: Scenario, trials: int, rng: np.random.Generator, h_mag=None):
    """Empirical SER with uniform symbols and its 95% normal-approximation
    binomial half-width. Returns ``(ser, half_width)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sc = sc if sc.q_total == q_total else sc.with_(q_total=q_total)
    symbols = rng.integers(1, q_total + 1, size=trials)
    errors = 0
    for n in range(1, q_total + 1):
        k = int(np.count_nonzero(symbols == n))
        if k == 0:
            continue
        p_ps, p_fs = papr_samples(sc, rho, n, k, rng, h_mag)
        errors += int(np.count_nonzero(decide_symbol(p_ps, p_fs, q_total) != n))
    ser = errors / trials
    return ser, binomial_halfwidth(ser, trials)


def binomial_halfwidth(p: float, n: int, z: float = 1.959963984540054) -> float:
    return float(z * np.sqrt(max(p * (1.0 - p), 0.0) / n))


def conditional_ser_trajectory(rho: float, q_total: int, sc: Scenario, h_mag) -> np.ndarray:
    """``ser_conditional`` over many blocks, chunked to bound memory."""
    z = np.atleast_1d(np.asarray(h_mag, dtype=float))
    out = np.empty(z.size)
    for lo in range(0, z.size, _SER_CHUNK):
        out[lo : lo + _SER_CHUNK] = ser_conditional(rho, q_total, sc, z[lo : lo + _SER_CHUNK])
    return out


def outage_probability(rho: float, q_total: int, sc: Scenario, ser_tag: float, blocks: int, rng: np.random.Generator) -> float:
    """Fraction of Gauss-Markov fading blocks whose conditional SER exceeds ``ser_tag``."""
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    h = gauss_markov(sc.channel, blocks, rng)
    ser = conditional_ser_trajectory(rho, q_total, sc, np.abs(h))
    return float(np.mean(ser > ser_tag))


def achievable_rate(p_out: float, q_total: int, symbol_period: float) -> float:
    """R = (1 - p_out) log2(Q) / T."""
    if not 0.0 <= p_out <= 1.0:
        raise ValueError("p_out must lie in [0, 1]")
    if symbol_period <= 0 or q_total < 1:
        raise ValueError("need T > 0 and Q >= 1")
    return (1.0 - p_out) * np.log2(q_total) / symbol_period


def rate_result(p_out: float, q_total: int, symbol_period: float) -> RateResult:
    return RateResult(p_out, achievable_rate(p_out, q_total, symbol_period), q_total)
