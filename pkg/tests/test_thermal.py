import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracle import FROZEN

from drumtherm.thermal import (BUDGET_COLUMNS, MaterialProps, ThermalStack, bulk_mfp,
                               confined_conductivity, debye_cp, dominant_wavelength,
                               electron_temperature, heat_leak_power, kapitza_conductance,
                               membrane_heat_capacity, series_conductance, temperature_gradient,
                               thermal_budget, thermalization_time, torus_conductance)

STACK = ThermalStack()
MAT = MaterialProps()


# ---------------------------------------------------------------------------
# derived values against the frozen oracle

@pytest.mark.parametrize("key, value", [
    ("cp_1K", lambda: debye_cp(1.0)),
    ("bulk_mfp", lambda: bulk_mfp()),
    ("k_nano_1K", lambda: confined_conductivity(1.0, 100e-9)),
    ("K_torus_1K", lambda: torus_conductance(1.0)),
    ("C_1K", lambda: membrane_heat_capacity(1.0)),
    ("tau_th", lambda: thermalization_time()),
    ("K_kapitza_1K", lambda: kapitza_conductance(1.0)),
    ("T_e_1fW", lambda: electron_temperature(1e-15, 1e-3)),
    ("T_e_1aW", lambda: electron_temperature(1e-18, 1e-3)),
    ("lambda_1K", lambda: dominant_wavelength(1.0)),
    ("p_leak", lambda: heat_leak_power()),
    ("T1_600uK", lambda: temperature_gradient(600e-6, heat_leak_power()).T1),
    ("T1_1mK", lambda: temperature_gradient(1e-3, heat_leak_power()).T1),
])
def test_matches_oracle(key, value):
    assert value() == pytest.approx(FROZEN[key], rel=1e-9)


# ---------------------------------------------------------------------------
# published values

def test_published_debye_cp():
    assert debye_cp(1.0) == pytest.approx(0.41, rel=0.03)


def test_published_bulk_mfp_is_temperature_independent():
    assert bulk_mfp() == pytest.approx(2.5e-2, rel=0.05)
    half = MaterialProps(k_bulk_coeff=MAT.k_bulk_coeff / 2)
    assert bulk_mfp(half) == pytest.approx(bulk_mfp() / 2)


def test_published_confined_conductivity():
    # published value rounds to 1e-4 T^3
    assert confined_conductivity(1.0, 100e-9) == pytest.approx(9.2e-5, rel=0.01)
    assert confined_conductivity(1.0, 200e-9) == pytest.approx(2 * confined_conductivity(1.0, 1e-7))


def test_published_torus_conductance():
    assert torus_conductance(1.0) == pytest.approx(1.6e-10, rel=0.1)
    thick = ThermalStack(e_p=200e-9, lambda_conf=100e-9)
    assert torus_conductance(1.0, thick) == pytest.approx(2 * torus_conductance(1.0))


def test_published_heat_capacity_and_time():
    assert membrane_heat_capacity(1.0) == pytest.approx(6.3e-18, rel=0.01)
    assert thermalization_time() == pytest.approx(3.9e-8, rel=0.01)
    assert thermalization_time() == pytest.approx(4e-8, rel=0.05)
    # C and K both scale with e_p at fixed mean free path
    thin = ThermalStack(e_p=50e-9, lambda_conf=100e-9)
    assert thermalization_time(thin) == pytest.approx(thermalization_time())


def test_published_kapitza():
    assert STACK.torus_area / 1e-4 == pytest.approx(1.6e-6, rel=0.01)
    assert kapitza_conductance(1.0) == pytest.approx(1.6e-7, rel=0.01)
    assert kapitza_conductance(1.0) / torus_conductance(1.0) == pytest.approx(1e3, rel=0.05)


def test_published_gradient_at_600uK():
    g = temperature_gradient(600e-6, heat_leak_power())
    assert 50e-6 < g.delta < 150e-6
    assert g.delta_naive > g.delta > 0


def test_published_gradient_negligible_above_1mK():
    g = temperature_gradient(1e-3, heat_leak_power())
    assert g.delta / 1e-3 < 0.05


def test_published_electron_temperatures():
    assert electron_temperature(1e-15, 1e-3) == pytest.approx(44e-3, rel=0.01)
    assert electron_temperature(1e-18, 1e-3) == pytest.approx(10e-3, rel=0.15)


def test_published_dominant_wavelength():
    assert dominant_wavelength(1.0) == pytest.approx(1.14e-7, rel=0.01)
    assert dominant_wavelength(1.0) == pytest.approx(STACK.e_p, rel=0.2)


# ---------------------------------------------------------------------------
# scaling properties

T3_FUNCS = [debye_cp, membrane_heat_capacity, torus_conductance, kapitza_conductance,
            series_conductance, lambda T: confined_conductivity(T, 1e-7)]


@pytest.mark.parametrize("func", T3_FUNCS)
@given(T=st.floats(1e-5, 10.0))
def test_cubic_scaling(func, T):
    assert func(2 * T) == pytest.approx(8 * func(T), rel=1e-12)


@given(T=st.floats(1e-5, 10.0), v=st.floats(100.0, 1e4))
def test_debye_cp_sound_speed_scaling(T, v):
    a, b = MaterialProps(v_s=v), MaterialProps(v_s=2 * v)
    assert debye_cp(T, b) == pytest.approx(debye_cp(T, a) / 8, rel=1e-12)


@given(T=st.floats(1e-4, 10.0))
def test_time_and_mfp_are_temperature_independent(T):
    assert membrane_heat_capacity(T) / torus_conductance(T) == pytest.approx(
        thermalization_time(), rel=1e-12)


@given(T=st.floats(1e-4, 10.0), v=st.floats(100.0, 1e4))
def test_dominant_wavelength_scaling(T, v):
    mat = MaterialProps(v_s=v)
    assert dominant_wavelength(2 * T, mat) == pytest.approx(dominant_wavelength(T, mat) / 2)
    assert dominant_wavelength(T, MaterialProps(v_s=2 * v)) == pytest.approx(
        2 * dominant_wavelength(T, mat))


def test_heat_capacity_scales_with_r1_squared():
    a = membrane_heat_capacity(1.0, ThermalStack(r1=5e-6, r2=10e-6))
    b = membrane_heat_capacity(1.0, ThermalStack(r1=2.5e-6, r2=10e-6))
    assert a == pytest.approx(4 * b)


def test_kapitza_scales_with_area():
    a = ThermalStack(r1=7e-6, r2=10e-6)
    b = ThermalStack(r1=7e-6, r2=math.sqrt(2 * 10e-6 ** 2 - 7e-6 ** 2))
    assert kapitza_conductance(1.0, b) == pytest.approx(2 * kapitza_conductance(1.0, a))


def test_series_chain_is_within_two_permille_of_torus():
    T = np.geomspace(1e-4, 1.0, 9)
    rel = 1 - series_conductance(T) / torus_conductance(T)
    assert np.all((rel > 0) & (rel < 2e-3))


def test_narrow_torus_warns():
    with pytest.warns(RuntimeWarning, match="diverges"):
        torus_conductance(1.0, ThermalStack(r1=7e-6, r2=7.001e-6))


def test_debye_warns_near_theta_d():
    with pytest.warns(RuntimeWarning):
        debye_cp(50.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        debye_cp(40.0)


# ---------------------------------------------------------------------------
# gradient solver

def test_gradient_zero_power_is_identity():
    g = temperature_gradient(5e-4, 0.0)
    assert g.T1 == g.T0 == 5e-4 and g.iterations == 0


@given(T0=st.floats(1e-4, 1.0), p=st.floats(1e-30, 1e-9))
def test_gradient_solves_midpoint_equation(T0, p):
    g = temperature_gradient(T0, p)
    assert g.T1 >= T0 and g.iterations < 50
    K = torus_conductance(0.5 * (T0 + g.T1))
    assert (g.T1 - T0) * K == pytest.approx(p, rel=1e-6)


@given(T0=st.floats(1e-4, 1.0), p=st.floats(1e-30, 1e-10), k=st.floats(1.01, 100.0))
def test_gradient_monotone_in_power(T0, p, k):
    assert temperature_gradient(T0, k * p).T1 >= temperature_gradient(T0, p).T1


def test_gradient_vanishes_with_power():
    d = [temperature_gradient(1e-3, p).delta for p in (1e-20, 1e-22, 1e-24, 1e-26)]
    assert np.all(np.diff(d) < 0) and d[-1] < 1e-7


def test_gradient_from_zero_bath():
    g = temperature_gradient(0.0, 1e-20)
    assert g.T1 > 0 and math.isinf(g.T1_naive)


def test_gradient_errors():
    with pytest.raises(ValueError):
        temperature_gradient(1e-3, -1.0)
    with pytest.raises(ValueError):
        temperature_gradient(-1e-3, 1.0)


# ---------------------------------------------------------------------------
# electrons

@given(T=st.just(0.0) | st.floats(1e-6, 1.0))
def test_electron_temperature_zero_power(T):
    assert electron_temperature(0.0, T) == pytest.approx(T, rel=1e-12)


@given(T=st.just(0.0) | st.floats(1e-6, 0.1), p=st.floats(0.0, 1e-12))
def test_electron_temperature_inverts_power_law(T, p):
    Te = electron_temperature(p, T)
    assert Te >= T * (1 - 1e-15)
    vg = STACK.volume * MAT.g_eph
    # the difference of fifth powers cancels to within rounding of vg T^5
    assert vg * (Te ** 5 - T ** 5) == pytest.approx(p, rel=1e-6, abs=1e-12 * vg * T ** 5 + 1e-300)


def test_electron_temperature_rejects_negative_power():
    with pytest.raises(ValueError):
        electron_temperature(-1e-15, 1e-3)


# ---------------------------------------------------------------------------
# validation and budget table

def test_parameter_validation():
    with pytest.raises(ValueError):
        MaterialProps(v_s=0.0)
    with pytest.raises(ValueError):
        ThermalStack(r1=10e-6, r2=7e-6)
    with pytest.raises(ValueError):
        ThermalStack(e_p=0.0)
    with pytest.raises(ValueError):
        confined_conductivity(1.0, 0.0)
    with pytest.raises(ValueError):
        dominant_wavelength(0.0)


def test_mass_override():
    heavy = ThermalStack(mass=5e-14)
    assert heat_leak_power(heavy) == pytest.approx(0.1e-9 * 5e-14)
    assert STACK.disk_mass(MAT) == pytest.approx(4.2e-14, rel=0.02)


def test_budget_table():
    T = [1e-4, 6e-4, 1e-3, 0.1]
    tab = thermal_budget(T)
    assert tuple(tab) == BUDGET_COLUMNS
    assert all(v.shape == (4,) for v in tab.values())
    assert tab["K_torus"][1] == pytest.approx(torus_conductance(6e-4))
    assert tab["T1"][1] == pytest.approx(FROZEN["T1_600uK"], rel=1e-9)
    assert np.all(tab["dT"] <= tab["dT_naive"])
    with pytest.raises(ValueError):
        thermal_budget([0.0, 1.0])
