"""Hot kernels, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``USWIPT_NUMBA`` is not set to
``0``/``false``/``off``. Both paths are always importable as
``<kernel>_numpy`` / ``<kernel>_numba`` so tests and the benchmark can compare
them directly.
"""

import math
import os

import numpy as np
from scipy.special import erfc

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("USWIPT_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)

_SQRT1_2 = 1.0 / math.sqrt(2.0)
# rows per chunk for the numpy fallback of log_max_cdf (bounds temporaries)
_CHUNK = 2048


def _jit(fn):
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


# ---------------------------------------------------------------------------
# PAPR of both receiver branches for a batch of Monte-Carlo trials
# ---------------------------------------------------------------------------


def branch_papr_numpy(ps_profile, fs_profile, scales, noise_ps, noise_fs, fs_floor_coef=0.0):
    y_ps = scales[:, None] * ps_profile[None, :] + noise_ps
    y_fs = scales[:, None] * fs_profile[None, :] + noise_fs
    p_ps = y_ps * y_ps
    p_fs = y_fs * y_fs
    mean_ps = p_ps.mean(axis=1)
    papr_ps = 2.0 * p_ps.max(axis=1) / mean_ps
    papr_fs = p_fs.max(axis=1) / np.maximum(p_fs.mean(axis=1), fs_floor_coef * mean_ps)
    return papr_ps, papr_fs


def _branch_papr_loop(ps_profile, fs_profile, scales, noise_ps, noise_fs, fs_floor_coef):
    n_trials, m = noise_ps.shape
    papr_ps = np.empty(n_trials)
    papr_fs = np.empty(n_trials)
    for i in range(n_trials):
        s = scales[i]
        pk_ps = 0.0
        acc_ps = 0.0
        pk_fs = 0.0
        acc_fs = 0.0
        for t in range(m):
            a = s * ps_profile[t] + noise_ps[i, t]
            a *= a
            acc_ps += a
            if a > pk_ps:
                pk_ps = a
            b = s * fs_profile[t] + noise_fs[i, t]
            b *= b
            acc_fs += b
            if b > pk_fs:
                pk_fs = b
        papr_ps[i] = 2.0 * pk_ps * m / acc_ps
        papr_fs[i] = pk_fs * m / max(acc_fs, fs_floor_coef * acc_ps)
    return papr_ps, papr_fs


branch_papr_numba = _jit(_branch_papr_loop)


def branch_papr(ps_profile, fs_profile, scales, noise_ps, noise_fs, fs_floor_coef=0.0):
    """PAPR estimates of the PS and FS branches for a batch of trials.

    Trial ``i`` observes ``scales[i] * profile + noise[i]`` on each branch.
    Returns ``(papr_ps, papr_fs)``; the PS value carries the factor 2 that puts
    both estimators on the passband PAPR scale. The FS mean power is floored
    at ``fs_floor_coef`` times the PS mean power.
    """
    args = (
        np.ascontiguousarray(ps_profile, dtype=float),
        np.ascontiguousarray(fs_profile, dtype=float),
        np.ascontiguousarray(scales, dtype=float),
        np.ascontiguousarray(noise_ps, dtype=float),
        np.ascontiguousarray(noise_fs, dtype=float),
    )
    if USE_NUMBA:
        return branch_papr_numba(*args, float(fs_floor_coef))
    return branch_papr_numpy(*args, float(fs_floor_coef))


# ---------------------------------------------------------------------------
# log of the largest-order-statistic CDF:  sum_t log P(|Z + a_t| < b)
# ---------------------------------------------------------------------------


def log_max_cdf_numpy(u, scales, b):
    u = np.abs(u)
    out = np.empty(scales.shape[0])
    for lo in range(0, scales.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, scales.shape[0])
        a = scales[lo:hi, None] * u[None, :]
        bb = b[lo:hi, None]
        q = 0.5 * (erfc((bb - a) * _SQRT1_2) + erfc((bb + a) * _SQRT1_2))
        with np.errstate(divide="ignore", invalid="ignore"):
            inside_far = 0.5 * (erfc((a - bb) * _SQRT1_2) - erfc((a + bb) * _SQRT1_2))
            terms = np.where(q < 0.5, np.log1p(-np.minimum(q, 0.5)), np.log(inside_far))
        out[lo:hi] = terms.sum(axis=1)
    return out


def _log_max_cdf_loop(u, scales, b):
    n = scales.shape[0]
    m = u.shape[0]
    out = np.empty(n)
    for k in range(n):
        bk = b[k]
        acc = 0.0
        for t in range(m):
            a = scales[k] * abs(u[t])
            q = 0.5 * (math.erfc((bk - a) * _SQRT1_2) + math.erfc((bk + a) * _SQRT1_2))
            if q < 0.5:
                acc += math.log1p(-q)
            else:
                p = 0.5 * (math.erfc((a - bk) * _SQRT1_2) - math.erfc((a + bk) * _SQRT1_2))
                if p <= 0.0:
                    acc = -math.inf
                    break
                acc += math.log(p)
        out[k] = acc
    return out


log_max_cdf_numba = _jit(_log_max_cdf_loop)


def log_max_cdf(u, scales, b):
    """``out[k] = sum_t log P(|Z + scales[k] * u[t]| < b[k])`` with Z ~ N(0, 1).

    Each term is ``1 - Q_{1/2}(a, b)`` evaluated without cancellation on either
    tail. Rows with any zero-probability term give ``-inf``.
    """
    u = np.ascontiguousarray(u, dtype=float)
    scales = np.ascontiguousarray(np.atleast_1d(scales), dtype=float)
    b = np.ascontiguousarray(np.broadcast_to(b, scales.shape), dtype=float)
    if USE_NUMBA:
        return log_max_cdf_numba(u, scales, b)
    return log_max_cdf_numpy(u, scales, b)


# ---------------------------------------------------------------------------
# dilated causal 1-D convolution, forward and backward
#   out[b, o, t] = bias[o] + sum_{i, j} w[o, i, j] * x[b, i, t - d*j]
# ---------------------------------------------------------------------------


def causal_conv_forward_numpy(x, w, bias, d):
    batch, _, length = x.shape
    c_out, _, k = w.shape
    out = np.broadcast_to(bias[None, :, None], (batch, c_out, length)).copy()
    for j in range(k):
        s = d * j
        if s >= length:
            break
        out[:, :, s:] += np.einsum("oi,bit->bot", w[:, :, j], x[:, :, : length - s])
    return out


def causal_conv_backward_numpy(x, w, d, grad_out):
    length = x.shape[2]
    k = w.shape[2]
    grad_x = np.zeros_like(x)
    grad_w = np.zeros_like(w)
    for j in range(k):
        s = d * j
        if s >= length:
            break
        grad_w[:, :, j] = np.einsum("bot,bit->oi", grad_out[:, :, s:], x[:, :, : length - s])
        grad_x[:, :, : length - s] += np.einsum("oi,bot->bit", w[:, :, j], grad_out[:, :, s:])
    grad_b = grad_out.sum(axis=(0, 2))
    return grad_x, grad_w, grad_b


def _conv_forward_loop(x, w, bias, d):
    batch, c_in, length = x.shape
    c_out, _, k = w.shape
    out = np.empty((batch, c_out, length))
    for bb in range(batch):
        for o in range(c_out):
            for t in range(length):
                acc = bias[o]
                for j in range(k):
                    src = t - d * j
                    if src < 0:
                        break
                    for i in range(c_in):
                        acc += w[o, i, j] * x[bb, i, src]
                out[bb, o, t] = acc
    return out


def _conv_backward_loop(x, w, d, grad_out):
    batch, c_in, length = x.shape
    c_out, _, k = w.shape
    grad_x = np.zeros((batch, c_in, length))
    grad_w = np.zeros((c_out, c_in, k))
    grad_b = np.zeros(c_out)
    for bb in range(batch):
        for o in range(c_out):
            for t in range(length):
                g = grad_out[bb, o, t]
                grad_b[o] += g
                for j in range(k):
                    src = t - d * j
                    if src < 0:
                        break
                    for i in range(c_in):
                        grad_w[o, i, j] += g * x[bb, i, src]
                        grad_x[bb, i, src] += g * w[o, i, j]
    return grad_x, grad_w, grad_b


causal_conv_forward_numba = _jit(_conv_forward_loop)
causal_conv_backward_numba = _jit(_conv_backward_loop)


def causal_conv_forward(x, w, bias, d):
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    bias = np.ascontiguousarray(bias, dtype=float)
    if USE_NUMBA:
        return causal_conv_forward_numba(x, w, bias, int(d))
    return causal_conv_forward_numpy(x, w, bias, int(d))


def causal_conv_backward(x, w, d, grad_out):
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    grad_out = np.ascontiguousarray(grad_out, dtype=float)
    if USE_NUMBA:
        return causal_conv_backward_numba(x, w, int(d), grad_out)
    return causal_conv_backward_numpy(x, w, int(d), grad_out)
