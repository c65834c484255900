import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uswipt import control
from uswipt.control import (
    LOG_COLUMNS,
    MULTI_TONE,
    SINGLE_TONE,
    ControlState,
    EnergyLedger,
    ExhaustiveController,
    ExplorationController,
    FixedController,
    LearnedController,
    OutageTable,
    audit_energy,
    batch_means_se,
    build_outage_table,
    features,
    fixed_threshold_for,
    label_threshold,
    make_training_set,
    mode_options,
    run_episode,
    short_term_decide,
    sliding_labels,
)
from uswipt.harvest import EhCurve, fit_curves, load_dataset
from uswipt.scenario import Scenario
from uswipt.units import dbm_to_watt, watt_to_dbm

SC = Scenario(p_dr=float(dbm_to_watt(0.0)))
GRID_W = dbm_to_watt(np.linspace(-40.0, 0.0, 41))


@pytest.fixture(scope="module")
def curves():
    return fit_curves(load_dataset())


@pytest.fixture(scope="module")
def table():
    return build_outage_table(SC)


def _ideal_table(ser_value=0.0):
    grid = np.arange(-70.0, 20.5, 0.5)
    keys = [(m, q) for m in (MULTI_TONE, SINGLE_TONE) for q in (4, 8, 16)]
    ser = {k: np.full(grid.size, ser_value) for k in keys}
    tx = {k: SC.p_ref for k in keys}
    return OutageTable(grid, ser, tx, 0.01, 1e-3, SC.p_ref, SC.rho_fs, 1e-4)


def _always_on_curves():
    c = lambda q: EhCurve(q, np.array([1e-15, 1.0]), np.array([1e-15, 0.5]))  # noqa: E731
    return {q: c(q) for q in (1, 4, 8, 16)}


def test_decision_examples(table, curves):
    ledger = EnergyLedger()
    d = short_term_decide(1e-3, 1e-4, table, curves, ledger)
    assert d.rho == SC.rho_fs
    d = short_term_decide(1e-3, 1e-2, table, curves, ledger)
    assert d.rho == 0.0
    d = short_term_decide(1e-12, 0.0, table, curves, ledger)
    assert not d.feasible and d.rate == 0.0
    d = short_term_decide(1e-3, 0.0, _ideal_table(), _always_on_curves(), ledger)
    assert d.feasible and d.q == 16 and d.rate == pytest.approx(4 / 1e-4)


def test_energy_ledger_validation():
    with pytest.raises(ValueError):
        EnergyLedger(p_c=0.0)


def test_table_probabilities_validated():
    t = _ideal_table()
    bad = dict(t.ser)
    bad[(MULTI_TONE, 4)] = np.full(t.p_r_grid_dbm.size, 1.5)
    with pytest.raises(ValueError):
        OutageTable(t.p_r_grid_dbm, bad, t.tx_power, 0.01, 1e-3, 1.0, 0.9, 1e-4)


def test_table_lookup_and_range(table):
    assert table.p_r_grid_dbm[1] - table.p_r_grid_dbm[0] == 0.5
    for v in table.ser.values():
        assert np.all((v >= 0) & (v <= 1))
    p = table.p_out(MULTI_TONE, 4, np.array([0.0, 1e-20, 1e3]))
    assert set(np.unique(p)) <= {0.0, 1.0}


@given(st.floats(-60.0, 10.0), st.floats(-40.0, 0.0), st.floats(0.0, 20.0))
def test_mode_monotone_in_threshold(p_r_dbm, th_dbm, raise_db):
    t = _ideal_table()
    c = _always_on_curves()
    lo = short_term_decide(dbm_to_watt(p_r_dbm), dbm_to_watt(th_dbm), t, c, EnergyLedger())
    hi = short_term_decide(dbm_to_watt(p_r_dbm), dbm_to_watt(th_dbm + raise_db), t, c, EnergyLedger())
    assert not (lo.rho == 0.0 and hi.rho > 0.0)


@given(st.lists(st.floats(-70.0, 15.0), min_size=1, max_size=30))
def test_vectorized_options_match_scalar(table, curves, p_r_dbm):
    p_r = dbm_to_watt(np.array(p_r_dbm))
    opts = mode_options(p_r, table, curves)
    for i, p in enumerate(p_r):
        for mode, th in ((SINGLE_TONE, 0.0), (MULTI_TONE, np.inf)):
            d = short_term_decide(float(p), th, table, curves, EnergyLedger())
            assert d.feasible == bool(opts.feasible[mode][i])
            assert d.q == int(opts.q[mode][i])
            assert d.rate == pytest.approx(float(opts.rate[mode][i]))


def test_label_extremes():
    p_r = dbm_to_watt(np.linspace(-45, -1, 50))
    ones, zeros = np.ones(50), np.zeros(50)
    assert label_threshold(p_r, zeros, ones, GRID_W) == GRID_W[0]
    assert label_threshold(p_r, ones, zeros, GRID_W) == GRID_W[-1]


def test_label_planted_optimum(rng):
    p_dbm = rng.uniform(-40.0, 0.0, 500)
    single = (p_dbm >= -20.0).astype(float)
    lab = watt_to_dbm(label_threshold(dbm_to_watt(p_dbm), 1 - single, single, GRID_W))
    assert abs(lab - -20.0) <= 1.0


def test_label_grid_must_increase():
    with pytest.raises(ValueError):
        label_threshold([1e-3], [0.0], [1.0], GRID_W[::-1])


def test_sliding_labels_match_direct(rng):
    p_r = dbm_to_watt(rng.uniform(-40, 0, 60))
    rm, rs = rng.uniform(0, 1, 60), rng.uniform(0, 1, 60)
    lab = sliding_labels(p_r, rm, rs, GRID_W, 20)
    for v in (0, 5, 19, 20, 59):
        lo = max(0, v + 1 - 20)
        assert lab[v] == label_threshold(p_r[lo : v + 1], rm[lo : v + 1], rs[lo : v + 1], GRID_W)


def test_control_state_window():
    s = ControlState(3)
    assert not s.warmed_up and s.window().shape == (0, 4)
    for i in range(5):
        s.push(0.0, 4, float(i), -10.0)
    assert s.warmed_up
    assert np.array_equal(s.window()[:, 2], [2.0, 3.0, 4.0])


def test_fixed_zero_threshold_ideal_rate():
    res = run_episode(SC, FixedController(0.0), 500, np.random.default_rng(1), _ideal_table(), _always_on_curves(), p_c=1e-30)
    assert res.mean_rate == pytest.approx(np.log2(16) / SC.symbol_period)


def test_exhaustive_dominates_fixed(table, curves):
    h = control.gauss_markov(SC.channel, 5000, np.random.default_rng(4))
    ex = run_episode(SC, ExhaustiveController(), 5000, None, table, curves, h=h)
    fx = run_episode(SC, FixedController(fixed_threshold_for(SC, table, curves)), 5000, None, table, curves, h=h)
    assert ex.mean_rate >= fx.mean_rate


def test_episode_energy_audit(table, curves):
    h = control.gauss_markov(SC.channel, 3000, np.random.default_rng(5))
    for ctl in (ExhaustiveController(), FixedController(1e-6), ExplorationController(hold=50)):
        res = run_episode(SC, ctl, 3000, np.random.default_rng(6), table, curves, h=h)
        assert audit_energy(res, table, curves) == 0
        assert np.all(res.p_eh[res.feasible.astype(bool)] >= control.P_C_DEFAULT)


def test_episode_deterministic(table, curves):
    a = run_episode(SC, ExhaustiveController(), 800, np.random.default_rng(2), table, curves)
    b = run_episode(SC, ExhaustiveController(), 800, np.random.default_rng(2), table, curves)
    assert np.array_equal(a.rate, b.rate) and np.array_equal(a.h, b.h)


def test_trajectory_log_rows(table, curves):
    res = run_episode(SC, FixedController(1e-5), 10, np.random.default_rng(0), table, curves)
    rows = list(res.rows())
    assert len(rows) == 10 and all(len(r) == len(LOG_COLUMNS) for r in rows)
    assert rows[3][0] == 3


class _ConstModel:
    def __init__(self, value):
        self.value = value
        self.calls = 0

    def predict_threshold_dbm(self, window):
        self.calls += 1
        assert window.shape[1] == 4 and window.shape[0] <= 20
        return self.value


def test_learned_controller_uses_model(table, curves):
    m = _ConstModel(-25.0)
    res = run_episode(SC, LearnedController(m, 1e-3), 200, np.random.default_rng(0), table, curves)
    assert m.calls == 199
    assert res.p_th[0] == pytest.approx(1e-3)
    assert np.allclose(watt_to_dbm(res.p_th[1:]), -25.0)


def test_learned_controller_update_period(table, curves):
    m = _ConstModel(-25.0)
    run_episode(SC, LearnedController(m, 1e-3, update_period=10), 100, np.random.default_rng(0), table, curves)
    assert m.calls == 9


def test_unknown_controller_rejected(table, curves):
    with pytest.raises(TypeError):
        run_episode(SC, object(), 10, np.random.default_rng(0), table, curves)


def test_features_mark_dead_blocks(table, curves):
    res = run_episode(SC, FixedController(1e-3), 500, np.random.default_rng(3), table, curves)
    f = features(res)
    assert f.shape == (500, 4)
    assert np.all(f[res.rate == 0, 1] == 0)
    assert np.all(f[res.rate > 0, 1] == res.q[res.rate > 0])


def test_training_set_shapes(table, curves):
    w, y = make_training_set(SC, table, curves, 600, 100, np.random.default_rng(0), window=20, hold=50)
    assert w.shape == (100, 20, 4) and y.shape == (100,)
    assert np.all((y >= -40.0 - 1e-9) & (y <= 0.0 + 1e-9))


def test_batch_means_se():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(10_000)
    assert batch_means_se(x) == pytest.approx(0.01, rel=0.2)
    assert batch_means_se([1.0]) == 0.0
    assert batch_means_se(np.ones(50)) == 0.0


def test_fixed_threshold_is_crossover_mapping(table, curves):
    from uswipt.harvest import pce_crossover

    p = fixed_threshold_for(SC, table, curves)
    x = pce_crossover(curves[1], curves[16])
    assert table.eh_input(SINGLE_TONE, 16, p) == pytest.approx(x)
