import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drumtherm.analysis import (CalibrationResult, analyze_frames, asymmetry_from_frames,
                                asymmetry_thermometry, calibrate_power_sweep, correct_backaction,
                                raw_population)
from drumtherm.analysis.fitting import FitResult
from drumtherm.bath import BathParams
from drumtherm.constants import TWO_PI
from drumtherm.errors import ConfigError, SelfOscillationError
from drumtherm.optomech import (NoiseBudget, PumpConfig, Scheme, aalto_drum, bose_occupation,
                                gamma_opt, sideband_observables)
from drumtherm.spectral_sim import Scenario, Schedule, simulate_frames, simulate_pair, \
    simulate_power_sweep

SYS = aalto_drum()
BARE = NoiseBudget(amplifier_background=100.0, backaction_floor=False)


def _fit(area, width_hz, err=0.0):
    return FitResult(area, width_hz, 0.0, 100.0, err, err, 0.0, 0.0, True, 0.0)


# ---------------------------------------------------------------------------
# calibration

def test_calibration_round_trip(fitted_calibration, noise):
    c = fitted_calibration
    assert c.g0_est == pytest.approx(SYS.g0, rel=0.05)
    assert c.gamma_m_est == pytest.approx(SYS.gamma_m_floor, rel=0.05)
    assert c.tech_coeff == pytest.approx(noise.tech_heating_coeff, rel=0.30)
    assert c.n_th_est == pytest.approx(bose_occupation(0.1, SYS.omega_m0), rel=0.05)
    assert not c.single_scheme and "slope-mismatch" not in c.flags


def test_calibration_width_slopes_opposite(fitted_calibration):
    sb, _ = fitted_calibration.scheme_slopes["blue"]
    sr, _ = fitted_calibration.scheme_slopes["red"]
    assert sb < 0 < sr
    assert abs(sb) == pytest.approx(sr, rel=0.05)


def test_red_only_calibration(sweep):
    red = {k: v for k, v in sweep.items() if k[0] is Scheme.RED}
    c = calibrate_power_sweep(red, SYS)
    assert c.single_scheme and "single-scheme" in c.flags
    assert c.g0_est == pytest.approx(SYS.g0, rel=0.05)


def test_calibration_needs_three_powers(sweep):
    two = {k: v for k, v in sweep.items() if k[1] in (50.0, 100.0)}
    with pytest.raises(ConfigError):
        calibrate_power_sweep(two, SYS)


def test_calibration_fixed_exponent(sweep, noise):
    c = calibrate_power_sweep(sweep, SYS, fix_exponent=noise.tech_heating_exponent)
    assert c.tech_exponent == noise.tech_heating_exponent and c.tech_exponent_err == 0.0
    assert c.tech_coeff == pytest.approx(noise.tech_heating_coeff, rel=0.30)


def test_calibration_without_heating():
    sw = simulate_power_sweep(SYS, BathParams(), BARE, 0.1, (50, 100, 200, 400, 800), seed=2)
    c = calibrate_power_sweep(sw, SYS, fix_exponent=1.0, backaction_floor=False)
    assert abs(c.tech_coeff) < 3 * c.tech_coeff_err + 0.05


# ---------------------------------------------------------------------------
# back-action correction

@pytest.mark.parametrize("scheme", ["blue", "red"])
@given(n=st.floats(0.0, 500.0), n_cav=st.floats(1.0, 800.0))
def test_correction_inverts_forward_model(scheme, n, n_cav):
    calib = CalibrationResult.from_truth(SYS, BARE)
    pump = PumpConfig(scheme, n_cav=n_cav)
    area, width, _ = sideband_observables(n, pump, SYS, BARE, SYS.gamma_m_floor)
    for source in ("calibration", "measured"):
        got, _ = correct_backaction(area, width / TWO_PI, calib, scheme, n_cav, source)
        assert got == pytest.approx(n, abs=1e-9 * max(1.0, n))


def test_correction_removes_heating_photons(noise):
    calib = CalibrationResult.from_truth(SYS, noise)
    n = 2.0
    for scheme in ("blue", "red"):
        pump = PumpConfig(scheme, n_cav=600)
        area, width, _ = sideband_observables(n, pump, SYS, noise, SYS.gamma_m_floor)
        got, _ = correct_backaction(area, width / TWO_PI, calib, scheme, 600)
        assert got == pytest.approx(n, rel=1e-9)


def test_weak_drive_blue_limit():
    # Gopt -> 0: A / Gopt = n + 1 and the correction reduces to A / Gopt - 1
    calib = CalibrationResult.from_truth(SYS, BARE)
    n_cav = 1e-6
    go = float(calib.gamma_opt(n_cav))
    got, _ = correct_backaction(go * 1.0, SYS.gamma_m_floor / TWO_PI, calib, "blue", n_cav,
                                "calibration")
    assert got == pytest.approx(0.0, abs=1e-6)
    assert raw_population(go, go, "blue") == 0.0
    assert raw_population(go, go, "red") == 1.0


def test_correction_may_be_negative():
    calib = CalibrationResult.from_truth(SYS, BARE)
    got, _ = correct_backaction(0.0, 300.0, calib, "red", 300, "calibration")
    assert got == 0.0
    got, _ = correct_backaction(0.0, 300.0, calib, "blue", 300, "calibration")
    assert got < 0


def test_correction_error_propagation():
    calib = CalibrationResult.from_truth(SYS, BARE)
    go = float(calib.gamma_opt(300))
    gm = SYS.gamma_m_floor
    _, err = correct_backaction(1e5, (gm - go) / TWO_PI, calib, "blue", 300, "calibration",
                                area_err=100.0)
    assert err == pytest.approx(100.0 * (gm - go) / (go * gm))


def test_correction_above_threshold_raises():
    calib = CalibrationResult.from_truth(SYS, BARE)
    n_thr = SYS.gamma_m_floor / float(calib.slope)
    with pytest.raises(SelfOscillationError):
        correct_backaction(1e5, 10.0, calib, "blue", 1.1 * n_thr, "calibration")


# ---------------------------------------------------------------------------
# asymmetry

def test_asymmetry_half_bound_is_one_quantum():
    calib = CalibrationResult.from_truth(SYS, BARE)
    go = float(calib.gamma_opt(300))
    gm = SYS.gamma_m_floor
    bound = (gm - go) / (gm + go)
    res = asymmetry_thermometry(_fit(1.0e5, 1.0, 10.0), _fit(0.5 * bound * 1.0e5, 1.0, 10.0),
                                calib, 300, SYS.omega_m0)
    assert res.n == pytest.approx(1.0, rel=1e-12)
    assert res.bound == pytest.approx(bound)
    assert res.T == pytest.approx(1.0 / math.log(2.0) * 1.0545718176461565e-34 * SYS.omega_m0
                                  / 1.380649e-23, rel=1e-12)


@given(n=st.floats(1e-3, 300.0))
def test_asymmetry_inverts_forward_model(n):
    calib = CalibrationResult.from_truth(SYS, BARE)
    gm = SYS.gamma_m_floor
    A_b, W_b, _ = sideband_observables(n, PumpConfig("blue", n_cav=300), SYS, BARE, gm)
    A_r, W_r, _ = sideband_observables(n, PumpConfig("red", n_cav=300), SYS, BARE, gm)
    res = asymmetry_thermometry(_fit(A_b, W_b / TWO_PI), _fit(A_r, W_r / TWO_PI), calib, 300,
                                SYS.omega_m0)
    assert res.n == pytest.approx(n, rel=1e-8)
    res2 = asymmetry_thermometry(_fit(A_b, W_b / TWO_PI), _fit(A_r, W_r / TWO_PI), calib, 300,
                                 SYS.omega_m0, use_measured_widths=True)
    assert res2.n == pytest.approx(n, rel=1e-6)


def test_asymmetry_at_or_above_bound_raises():
    calib = CalibrationResult.from_truth(SYS, BARE)
    go = float(calib.gamma_opt(300))
    bound = (SYS.gamma_m_floor - go) / (SYS.gamma_m_floor + go)
    with pytest.raises(ValueError, match="bound"):
        asymmetry_thermometry(_fit(1.0, 1.0), _fit(bound, 1.0), calib, 300, SYS.omega_m0)
    with pytest.raises(ValueError):
        asymmetry_thermometry(_fit(1.0, 1.0), _fit(-0.1, 1.0), calib, 300, SYS.omega_m0)


def test_asymmetry_needs_converged_fits():
    calib = CalibrationResult.from_truth(SYS, BARE)
    bad = FitResult(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False, 0.0)
    with pytest.raises(ValueError):
        asymmetry_thermometry(bad, _fit(0.1, 1.0), calib, 300, SYS.omega_m0)


def test_asymmetry_from_quiet_frames(noise):
    # interleaved acquisitions, no bath noise: recovers T closely
    sc = Scenario(3600.0, 10.0, Schedule.constant(1e-3), PumpConfig("blue", n_cav=300), SYS,
                  bath=BathParams().quiet(), noise=noise, n_averages=100_000, seed=4)
    pair = simulate_pair(sc)
    calib = CalibrationResult.from_truth(SYS, noise)
    res, fits = asymmetry_from_frames(pair[Scheme.BLUE], pair[Scheme.RED], calib,
                                      track_window=600.0, shared_drift=True, tie_widths=True)
    assert fits[1].width == pytest.approx(fits[0].width + 2 * gamma_opt(300, SYS) / TWO_PI)
    assert res.T == pytest.approx(1e-3, rel=0.05)


# ---------------------------------------------------------------------------
# pipeline

@pytest.mark.parametrize("scheme", ["blue", "red"])
def test_quiet_pipeline_recovers_population(scheme, noise):
    T = 0.01
    sc = Scenario(3600.0, 1.0, Schedule.constant(T), PumpConfig(scheme, n_cav=300), SYS,
                  bath=BathParams().quiet(), noise=noise, n_averages=1000, seed=1)
    calib = CalibrationResult.from_truth(SYS, noise)
    ts = analyze_frames(simulate_frames(sc), calib, 600.0, stride=60.0)
    assert ts.converged.all()
    n = bose_occupation(T, SYS.omega_m0)
    assert np.mean(ts.n_corrected) == pytest.approx(n, rel=0.02)
    assert np.all(ts.T_mode > 0)
    assert ts.window == 600.0 and ts.stride == 60.0
    rec = ts[0]
    assert rec.flags == "" and rec.n_corrected == ts.n_corrected[0]


def test_pipeline_columns(noise):
    sc = Scenario(600.0, 1.0, Schedule.constant(0.01), PumpConfig("red", n_cav=300), SYS,
                  noise=noise, n_averages=1000, seed=2)
    ts = analyze_frames(simulate_frames(sc), CalibrationResult.from_truth(SYS, noise), 300.0,
                        stride=100.0)
    cols = ts.columns()
    assert list(cols)[:3] == ["t", "area", "area_err"]
    assert all(v.shape == ts.t.shape for v in cols.values())
