import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uswipt.hpa import HpaParams, amam, amplify, average_output_power
from uswipt.units import dbm_to_watt
from uswipt.waveform import ComplexWaveform, SignalConfig, TimeGrid, default_grid, synthesize

P = HpaParams.from_db(25.0, 10.0, 2.0)


def test_from_db_values():
    assert P.gain_v == pytest.approx(10 ** 1.25)
    assert P.a_sat == pytest.approx(np.sqrt(1e-2))


def test_amam_examples():
    assert amam(0.0, P) == 0.0
    assert amam(P.a_sat, P) == pytest.approx(P.gain_v * P.a_sat / 2**0.25, rel=1e-12)
    assert amam(10 * P.a_sat, P) == pytest.approx(P.gain_v * P.a_sat, rel=5e-3)


def test_amam_negative_rejected():
    with pytest.raises(ValueError):
        amam(-1.0, P)


@pytest.mark.parametrize("kwargs", [dict(gain_v=0.0, a_sat=1.0), dict(gain_v=1.0, a_sat=-1.0), dict(gain_v=1, a_sat=1, beta=0.5)])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        HpaParams(**kwargs)


@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0), st.floats(1.0, 64.0))
def test_amam_monotone_and_bounded(a, b, beta):
    p = HpaParams(3.0, 0.7, beta)
    lo, hi = sorted((a, b))
    assert amam(lo, p) <= amam(hi, p) * (1 + 1e-12)
    assert amam(hi, p) <= p.gain_v * p.a_sat * (1 + 1e-12)


def test_amam_strictly_increasing():
    a = np.linspace(0, 20 * P.a_sat, 2001)
    assert np.all(np.diff(amam(a, P)) > 0)


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_limiter_limit(k):
    p = HpaParams(2.0, 1.0, 64.0)
    limit = min(2.0 * k, 2.0)
    assert abs(amam(k, p) - limit) < 0.01 * limit


def test_amplify_constant_envelope_keeps_phase():
    grid = TimeGrid(1e-4, 64)
    phase = np.linspace(-3, 3, 64)
    w = ComplexWaveform(0.05 * np.exp(1j * phase), grid)
    out = amplify(w, P)
    assert np.allclose(np.abs(out.samples), amam(0.05, P))
    assert np.allclose(np.angle(out.samples), phase)


def test_amplify_small_signal_taylor_bound():
    w = synthesize(SignalConfig(n_active=16, p_dr=float(dbm_to_watt(-40.0))))
    out = amplify(w, P)
    dev = np.max(np.abs(out.samples / (P.gain_v * w.samples) - 1.0))
    ratio = np.max(w.magnitude) / P.a_sat
    assert dev < ratio ** (2 * P.beta) / (2 * P.beta)


@given(st.floats(-np.pi, np.pi))
def test_amplify_phase_transparent(theta):
    w = synthesize(SignalConfig(n_active=5, p_dr=1e-2))
    rot = ComplexWaveform(w.samples * np.exp(1j * theta), w.grid)
    assert np.allclose(amplify(rot, P).samples, amplify(w, P).samples * np.exp(1j * theta))


def test_average_power_linear_regime():
    cfg = SignalConfig(n_active=16, p_dr=float(dbm_to_watt(-40.0)))
    assert average_output_power(cfg, None, P) == pytest.approx(P.gain_v**2 * cfg.p_dr, rel=0.01)


def test_average_power_cw_at_saturation():
    # envelope amplitude a_sat means passband drive a_sat^2 / 2
    cfg = SignalConfig(rho=1.0, p_dr=P.a_sat**2 / 2)
    assert average_output_power(cfg, None, P) == pytest.approx(P.gain_v**2 * P.a_sat**2 / (2 * np.sqrt(2)), rel=1e-12)


def test_average_power_compressed_vs_fine_grid():
    cfg = SignalConfig(n_active=16, p_dr=float(dbm_to_watt(0.0)))
    coarse = average_output_power(cfg, None, P)
    fine = average_output_power(cfg, None, P, TimeGrid(1e-4, 100 * default_grid(cfg).samples_per_symbol))
    assert coarse < P.gain_v**2 * cfg.p_dr
    assert coarse == pytest.approx(fine, rel=1e-3)


def test_compression_non_increasing_in_n():
    p_dr = float(dbm_to_watt(0.0))
    powers = [average_output_power(SignalConfig(n_active=n, p_dr=p_dr), None, P) for n in range(1, 17)]
    assert np.all(np.diff(powers) <= 1e-15)


def test_output_bounded_by_saturation():
    out = amplify(synthesize(SignalConfig(n_active=16, p_dr=1.0)), P)
    assert np.all(np.abs(out.samples) <= P.gain_v * P.a_sat * (1 + 1e-12))
