import math

import numpy as np
import pytest

from shipems.plant import (
    Aging,
    BatteryParams,
    CalibrationError,
    CalibrationTargets,
    DomainError,
    FuelCellParams,
    InfeasiblePowerError,
    StateSpaceModel,
    SystemState,
    battery_current,
    calibrate_fc_params,
    fc_current_from_power,
    fc_max_net_power,
    fc_net_power,
    fc_power_peak_current,
    fc_voltage,
    fc_voltage_lagged,
    implied_battery_power,
    step_state,
)

FC = FuelCellParams()
BAT = BatteryParams()


def test_voltage_at_exchange_current_is_purely_ohmic():
    i = FC.N_s_fc * FC.I_0
    assert fc_voltage(i, FC) == pytest.approx(FC.E_oc_fc - FC.R_i_fc_bol * i, abs=1e-12)


def test_eol_voltage_shift_is_ohmic():
    for i in (100.0, 2500.0, 9000.0):
        shift = fc_voltage(i, FC, "bol") - fc_voltage(i, FC, "eol")
        assert shift == pytest.approx((0.0280 - 0.0232) * i, rel=1e-12)


def test_voltage_strictly_decreasing():
    v = np.array([fc_voltage(i, FC) for i in np.linspace(1.0, FC.i_rated, 2000)])
    assert np.all(np.diff(v) < 0)


def test_voltage_rejects_nonpositive_current():
    with pytest.raises(DomainError):
        fc_voltage(0.0, FC)


def test_lagged_voltage_converges_to_steady_state():
    act, v = 0.0, None
    for _ in range(50):
        v, act = fc_voltage_lagged(4000.0, FC, Aging.BOL, act, 0.5)
    assert v == pytest.approx(fc_voltage(4000.0, FC), abs=1e-9)


def test_net_power_vanishes_at_zero_current():
    assert abs(fc_net_power(1e-9, FC)) < 1e-6


@pytest.mark.parametrize("aging,target", [("bol", 4150.0), ("eol", 3735.0)])
def test_max_net_power(aging, target):
    grid = np.linspace(1.0, FC.i_rated, 20001)
    scanned = max(fc_net_power(i, FC, aging) for i in grid)
    assert fc_max_net_power(FC, aging) == pytest.approx(target, rel=5e-3)
    assert scanned == pytest.approx(fc_max_net_power(FC, aging), rel=1e-6)


@pytest.mark.parametrize("aging", ["bol", "eol"])
def test_current_from_power_round_trip(aging):
    rng = np.random.default_rng(3)
    top = fc_max_net_power(FC, aging)
    for p in rng.uniform(1.0, top, 100):
        i = fc_current_from_power(p, FC, aging)
        assert fc_net_power(i, FC, aging) == pytest.approx(p, rel=1e-6)


def test_current_from_power_boundaries():
    assert fc_current_from_power(0.0, FC) == 0.0
    assert fc_current_from_power(1e-6, FC) < 1e-2
    top_i = min(FC.i_rated, fc_power_peak_current(FC))
    assert fc_current_from_power(fc_max_net_power(FC), FC) == pytest.approx(top_i, rel=1e-6)
    with pytest.raises(InfeasiblePowerError):
        fc_current_from_power(4200.0, FC)
    with pytest.raises(DomainError):
        fc_current_from_power(-1.0, FC)


def test_calibration_hits_targets():
    params, report = calibrate_fc_params(CalibrationTargets(4150.0, 3735.0, 0.615))
    assert all(abs(e) < 5e-3 for e in report["relative_error"].values())
    v_cell = fc_voltage(params.i_rated, params, "eol") / params.N_s_fc
    assert v_cell == pytest.approx(0.615, rel=5e-3)


def test_calibration_is_a_fixed_point():
    once, _ = calibrate_fc_params()
    twice, _ = calibrate_fc_params(base=once)
    for name in ("E_oc_fc", "alpha_aux", "i_rated"):
        assert abs(getattr(once, name) - getattr(twice, name)) < 1e-9 * max(1.0, abs(getattr(once, name)))


def test_calibration_rejects_inverted_targets():
    with pytest.raises(CalibrationError):
        calibrate_fc_params(CalibrationTargets(3735.0, 4150.0, 0.615))


def test_battery_current_modes():
    assert battery_current(0.0, BAT) == 0.0
    assert battery_current(0.0, BAT, "linear") == 0.0
    assert battery_current(400.0, BAT, "linear") == pytest.approx(1000.0)
    with pytest.raises(ValueError):
        battery_current(1.0, BAT, "cubic")
    with pytest.raises(InfeasiblePowerError):
        battery_current(BAT.E_oc**2 / (4 * BAT.R_i_bat) / 1000.0 * 1.01, BAT)


def test_linear_current_within_one_percent_under_small_drop():
    # grid scan over the region where the ohmic drop is at most 1% of E_oc
    i_cap = 0.01 * BAT.E_oc / BAT.R_i_bat
    for p in np.linspace(-0.99 * i_cap * BAT.E_oc / 1000, 0.99 * i_cap * BAT.E_oc / 1000, 401):
        if p == 0:
            continue
        exact = battery_current(p, BAT)
        if abs(exact) * BAT.R_i_bat > 0.01 * BAT.E_oc:
            continue
        assert abs(exact - battery_current(p, BAT, "linear")) / abs(exact) <= 0.01


def test_step_state_balanced_is_stationary():
    m = StateSpaceModel.from_battery(BAT, 1.0)
    x = SystemState(1300.0, 0.5)
    assert step_state(x, 0.0, 1300.0, m) == x


def test_step_state_discharge_matches_hand_value():
    m = StateSpaceModel.from_battery(BAT, 5.0)
    x = SystemState(1000.0, 0.5)
    nxt = step_state(x, 0.0, 1800.0, m)
    expect = 800.0 * 5.0 / (BAT.E_oc * BAT.C_bat * 3600.0) * 1000.0
    assert x.xi - nxt.xi == pytest.approx(expect, rel=1e-12)
    assert nxt.p_fc == 1000.0


def test_energy_bookkeeping_telescopes():
    T = 1.0
    m = StateSpaceModel.from_battery(BAT, T)
    rng = np.random.default_rng(0)
    x = SystemState(1500.0, 0.5)
    start, energy = x.xi, 0.0
    for _ in range(500):
        u = float(rng.uniform(-20, 20))
        d = float(rng.uniform(500, 3000))
        energy += implied_battery_power(x, u, d, T) * T / 3600.0
        x = step_state(x, u, d, m)
    assert energy == pytest.approx(BAT.energy_kwh * (start - x.xi), abs=1e-9)


def test_parameter_validation():
    with pytest.raises(ValueError):
        FuelCellParams(R_i_fc_eol=0.01)
    with pytest.raises(ValueError):
        BatteryParams(C_bat=0.0)
    assert math.isclose(BAT.energy_kwh, 1250.0)


def test_state_space_entries_match_closed_form():
    T = 5.0
    m = StateSpaceModel.from_battery(BAT, T)
    kappa = 1000.0 * T / (BAT.E_oc * BAT.C_bat * 3600.0)
    assert np.array_equal(m.A, np.array([[1.0, 0.0], [kappa, 1.0]]))
    assert np.array_equal(m.B, np.array([T, kappa * T / 2.0]))
    assert np.array_equal(m.B_d, np.array([0.0, -kappa]))
    x = SystemState(900.0, 0.4)
    nxt = step_state(x, 3.0, 1500.0, m)
    # next SoC from the implied midpoint battery power
    assert nxt.xi == pytest.approx(x.xi - kappa * implied_battery_power(x, 3.0, 1500.0, T), rel=1e-14)
