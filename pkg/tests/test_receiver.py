import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uswipt.hpa import HpaParams
from uswipt.receiver import (
    ReceiverParams,
    decide_symbol,
    envelope_detect,
    estimate_both,
    estimate_papr_fs,
    estimate_papr_ps,
    fs_filter,
    receive,
    split_fs,
    split_ps,
)
from uswipt.scenario import Scenario
from uswipt.units import dbm_to_watt
from uswipt.waveform import ComplexWaveform, SignalConfig, TimeGrid, synthesize

NOISELESS = ReceiverParams(sigma_ps_sq=0.0, sigma_fs_sq=0.0)
GRID = TimeGrid(1e-4, 256)


def _linear_symbol(rho, n, p_dr=1e-3):
    return synthesize(SignalConfig(rho=rho, n_active=n, p_dr=p_dr, q_total=16))


def test_envelope_of_cw():
    w = ComplexWaveform(np.full(256, 0.3 + 0j), GRID)
    assert np.allclose(envelope_detect(w, 1.0, 1.0), 0.3)


@given(st.floats(-np.pi, np.pi))
def test_envelope_ignores_channel_phase(phi):
    w = _linear_symbol(0.0, 6)
    assert np.allclose(envelope_detect(w, np.exp(1j * phi)), envelope_detect(w, 1.0))


def test_envelope_matches_re_im():
    w = _linear_symbol(0.3, 9)
    y = envelope_detect(w, 0.7, 0.5)
    ref = 0.7 * np.sqrt(0.5) * np.sqrt(w.samples.real**2 + w.samples.imag**2)
    assert np.allclose(y, ref, rtol=1e-12)


def test_split_ps_examples(rng):
    y = np.abs(_linear_symbol(0.0, 4).samples)
    assert np.allclose(split_ps(y, ReceiverParams(rho_r=1.0, sigma_ps_sq=0.0)), y)
    assert np.allclose(split_ps(y, NOISELESS), np.sqrt(1e-3) * y)
    noise = split_ps(np.zeros(100_000), ReceiverParams(sigma_ps_sq=2e-3), rng)
    assert np.var(noise) == pytest.approx(2e-3, rel=0.03)


def test_split_fs_examples():
    assert np.allclose(split_fs(np.full(256, 0.2), NOISELESS), 0.0)
    t = GRID.times
    sine = 0.1 * np.cos(2 * np.pi * 1e4 * t)
    assert np.allclose(split_fs(0.5 + sine, NOISELESS), np.sqrt(1 - 1e-3) * sine, atol=1e-15)
    out = split_fs(np.abs(_linear_symbol(0.0, 5).samples), NOISELESS)
    assert abs(out.mean()) < 1e-15


def test_highpass_mode_blocks_dc_and_passes_tones():
    p = ReceiverParams(sigma_ps_sq=0.0, sigma_fs_sq=0.0, fs_mode="highpass", cutoff_hz=10.0)
    t = GRID.times
    sine = np.cos(2 * np.pi * 1e4 * t)
    out = fs_filter(3.0 + sine, p, GRID.duration)
    assert abs(out.mean()) < 1e-12
    assert np.allclose(out, sine, atol=2e-3)
    with pytest.raises(ValueError):
        fs_filter(sine, p)


def test_literal_mode_runs():
    p = ReceiverParams(fs_mode="literal")
    out = fs_filter(np.abs(_linear_symbol(0.0, 4).samples), p, GRID.duration)
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("n", [1, 2, 5, 16])
def test_papr_ps_multi_tone_is_2n(n):
    y = split_ps(envelope_detect(_linear_symbol(0.0, n), 1.0), NOISELESS)
    assert estimate_papr_ps(y) == pytest.approx(2 * n, rel=1e-12)


def test_papr_ps_flat_envelope():
    y = split_ps(envelope_detect(_linear_symbol(1.0, 3), 1.0), NOISELESS)
    assert estimate_papr_ps(y) == pytest.approx(2.0)


@given(st.floats(0.0, 1.0), st.integers(1, 16))
def test_papr_ps_closed_form(rho, n):
    p = 1e-3
    y = split_ps(envelope_detect(_linear_symbol(rho, n, p), 1.0), NOISELESS)
    closed = 2 * (np.sqrt(2 * rho * p) + np.sqrt(2 * (1 - rho) * n * p)) ** 2 / (2 * p)
    assert estimate_papr_ps(y) == pytest.approx(closed, rel=1e-9)
    # (sqrt(rho) + sqrt((1 - rho) N))^2 <= N + 1 by Cauchy-Schwarz; 2N is reached at rho = 0
    assert estimate_papr_ps(y) <= 2 * (n + 1) * (1 + 1e-12)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_papr_fs_single_tone_mode(n):
    # within 1% needs rho_FS close enough to 1 that the carrier-tone cross term dominates
    y = split_fs(envelope_detect(_linear_symbol(1 - 1e-6, n), 1.0), NOISELESS)
    assert estimate_papr_fs(y) == pytest.approx(2 * n, rel=0.01)


def test_papr_fs_sinusoid():
    y = np.sin(2 * np.pi * GRID.times / GRID.duration)
    assert estimate_papr_fs(y) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("n", range(3, 17))
def test_papr_fs_multi_tone_reduced(n):
    y = split_fs(envelope_detect(_linear_symbol(0.0, n), 1.0), NOISELESS)
    assert estimate_papr_fs(y) < 2 * n


def test_papr_fs_two_tone_exception():
    # |1 + e^{jwt}| = 2|cos(wt/2)|: after DC removal the peak-to-mean is 4.278 > 4
    y = split_fs(envelope_detect(_linear_symbol(0.0, 2), 1.0), NOISELESS)
    assert estimate_papr_fs(y) == pytest.approx(4.2784, abs=1e-3)


def test_fs_floor_only_bites_without_ac():
    p = ReceiverParams()
    w = _linear_symbol(0.0, 1)
    sig = receive(w, 1.0, 1.0, ReceiverParams(sigma_ps_sq=0.0, sigma_fs_sq=1e-20), np.random.default_rng(0))
    _, fs = estimate_both(sig, p, 1 - 1e-4)
    assert fs < 2.0
    sig = receive(_linear_symbol(1 - 1e-4, 4), 1.0, 1.0, NOISELESS)
    _, fs = estimate_both(sig, p, 1 - 1e-4)
    assert fs == pytest.approx(estimate_papr_fs(sig.y_fs))


@pytest.mark.parametrize(
    "papr_id, expected", [(7.3, 4), (100.0, 16), (1.0, 1), (2.999, 1), (3.0, 2), (30.999, 15), (31.0, 16)]
)
def test_decide_symbol(papr_id, expected):
    assert decide_symbol(papr_id, 0.0, 16) == expected
    assert decide_symbol(0.0, papr_id, 16) == expected


@given(st.floats(0.0, 200.0), st.floats(0.0, 200.0), st.integers(1, 32))
def test_decide_symbol_range(a, b, q):
    assert 1 <= decide_symbol(a, b, q) <= q


@pytest.mark.parametrize("mode_rho", [0.0, 1 - 1e-4])
def test_noiseless_loopback(mode_rho):
    sc = Scenario(p_dr=float(dbm_to_watt(-30.0)), ideal_hpa=True, receiver=NOISELESS)
    for n in range(1, 17):
        sig = receive(sc.transmit(mode_rho, n), 1.0, sc.path_gain, sc.receiver)
        ps, fs = estimate_both(sig, sc.receiver, sc.rho_fs)
        assert decide_symbol(ps, fs, 16) == n
        if n > 2:
            assert (ps >= fs) if mode_rho == 0.0 else (fs >= ps)


@given(st.floats(1e-6, 1e6))
def test_estimates_scale_invariant(c):
    y = np.abs(_linear_symbol(0.2, 7).samples)
    assert estimate_papr_ps(c * y) == pytest.approx(estimate_papr_ps(y), rel=1e-9)
    ac = y - y.mean()
    assert estimate_papr_fs(c * ac) == pytest.approx(estimate_papr_fs(ac), rel=1e-9)


def test_all_zero_branch_rejected():
    with pytest.raises(ValueError):
        estimate_papr_ps(np.zeros(8))
    with pytest.raises(ValueError):
        estimate_papr_fs(np.zeros(8))


@pytest.mark.parametrize(
    "kwargs", [dict(rho_r=0.0), dict(rho_r=1.5), dict(sigma_ps_sq=-1.0), dict(fs_mode="bogus"), dict(cutoff_hz=0.0)]
)
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        ReceiverParams(**kwargs)


def test_hpa_compression_lowers_ps_papr():
    sc = Scenario(p_dr=float(dbm_to_watt(0.0)), hpa=HpaParams.from_db(), receiver=NOISELESS)
    sig = receive(sc.transmit(0.0, 16), 1.0, 1.0, NOISELESS)
    assert estimate_papr_ps(sig.y_ps) < 32
