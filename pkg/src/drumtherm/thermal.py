"""
Phonon thermal budget of a suspended aluminium drum and its electron bath.

The suspended disk (radius ``r1``, thickness ``e_p``) is treated as
isothermal; heat flows out radially through a thin annulus ("torus", from
``r1`` to ``r2``) into the substrate. All quantities use the low-temperature
Debye/kinetic picture, so every conductance and heat capacity scales as T^3.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, KB

CM2 = 1e-4  # m^2 per cm^2
# x = hbar omega / kB T maximising the T^3-weighted Planck spectrum
DOMINANT_X = 2.23


@dataclass(frozen=True)
class MaterialProps:
    """Low-temperature material constants (defaults: aluminium).

    ``c_p_coeff`` and ``k_bulk_coeff`` are the T^3 prefactors of the
    volumetric specific heat [J/m^3/K^4] and of the bulk thermal
    conductivity [W/m/K^4]; ``g_eph`` is the electron-phonon coupling
    [W/K^5/m^3].
    """

    v_s: float = 6700.0
    theta_D: float = 468.0
    rho: float = 2700.0
    c_p_coeff: float = 0.41
    k_bulk_coeff: float = 23.4
    g_eph: float = 0.4e9

    def __post_init__(self):
        for name in ("v_s", "theta_D", "rho", "c_p_coeff", "k_bulk_coeff", "g_eph"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ThermalStack:
    """Drum geometry and thermal boundary data.

    ``kapitza_coeff`` is in W/cm^2/K^4 (converted internally);
    ``heat_leak_specific`` in W/kg. ``lambda_conf`` is the confined phonon
    mean free path in the torus, ``e_p`` when omitted. ``mass`` overrides
    the ``rho * V`` mass of the suspended disk.
    """

    e_p: float = 100e-9
    r1: float = 7e-6
    r2: float = 10e-6
    kapitza_coeff: float = 0.1
    heat_leak_specific: float = 0.1e-9
    lambda_conf: float | None = None
    mass: float | None = None

    def __post_init__(self):
        if not self.e_p > 0:
            raise ValueError("e_p must be > 0")
        if not (self.r2 > self.r1 > 0):
            raise ValueError("need r2 > r1 > 0")
        if self.lambda_conf is not None and not self.lambda_conf > 0:
            raise ValueError("lambda_conf must be > 0")

    @property
    def mfp(self):
        return self.e_p if self.lambda_conf is None else self.lambda_conf

    @property
    def volume(self):
        """Suspended disk volume ``e_p pi r1^2`` [m^3]."""
        return self.e_p * math.pi * self.r1 ** 2

    @property
    def torus_area(self):
        """Contact area of the annulus ``pi (r2^2 - r1^2)`` [m^2]."""
        return math.pi * (self.r2 ** 2 - self.r1 ** 2)

    def disk_mass(self, mat):
        return self.mass if self.mass is not None else mat.rho * self.volume


def _T(T):
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ValueError("temperature must be >= 0")
    return T


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def debye_cp(T, mat=MaterialProps()):
    """Debye phonon specific heat ``(2 pi^2 / 5) kB^4 T^3 / (hbar v_s)^3`` [J/m^3/K]."""
    T = _T(T)
    if np.any(T > mat.theta_D / 10):
        warnings.warn("Debye T^3 law used above theta_D / 10", RuntimeWarning)
    return _out(2.0 * math.pi ** 2 / 5.0 * KB ** 4 / (HBAR * mat.v_s) ** 3 * T ** 3)


def bulk_mfp(mat=MaterialProps()):
    """Bulk phonon mean free path ``3 k / (c_p v_s)`` [m], T-independent."""
    return 3.0 * mat.k_bulk_coeff / (mat.c_p_coeff * mat.v_s)


def confined_conductivity(T, lambda_conf, mat=MaterialProps()):
    """Boundary-limited conductivity ``c_p Lambda v_s / 3`` [W/m/K]."""
    if not lambda_conf > 0:
        raise ValueError("lambda_conf must be > 0")
    return _out(mat.c_p_coeff * _T(T) ** 3 * lambda_conf * mat.v_s / 3.0)


def torus_conductance(T, stack=ThermalStack(), mat=MaterialProps()):
    """Radial 2D conductance of the annulus ``2 pi e_p k / ln(r2 / r1)`` [W/K]."""
    ratio = math.log(stack.r2 / stack.r1)
    if ratio < 1e-3:
        warnings.warn("r2 close to r1: conductance diverges logarithmically", RuntimeWarning)
    k = confined_conductivity(T, stack.mfp, mat)
    return _out(2.0 * math.pi * stack.e_p * np.asarray(k) / ratio)


def membrane_heat_capacity(T, stack=ThermalStack(), mat=MaterialProps()):
    """``c_p e_p pi r1^2`` [J/K]."""
    return _out(mat.c_p_coeff * _T(T) ** 3 * stack.volume)


def thermalization_time(stack=ThermalStack(), mat=MaterialProps()):
    """``C / K`` [s]; both scale as T^3 so the ratio is T-independent."""
    return membrane_heat_capacity(1.0, stack, mat) / torus_conductance(1.0, stack, mat)


def kapitza_conductance(T, stack=ThermalStack()):
    """Acoustic-mismatch boundary conductance over the torus area [W/K]."""
    return _out(stack.kapitza_coeff / CM2 * stack.torus_area * _T(T) ** 3)


def series_conductance(T, stack=ThermalStack(), mat=MaterialProps()):
    """Torus and Kapitza conductances in series [W/K]."""
    kt = np.asarray(torus_conductance(T, stack, mat))
    kk = np.asarray(kapitza_conductance(T, stack))
    return _out(1.0 / (1.0 / kt + 1.0 / kk))


def heat_leak_power(stack=ThermalStack(), mat=MaterialProps()):
    """Specific heat leak times the disk mass [W]."""
    return stack.heat_leak_specific * stack.disk_mass(mat)


@dataclass
class GradientResult:
    """Drum temperature under a steady heat load.

    ``T1`` uses the conductance at the midpoint temperature; ``T1_naive``
    the conductance at the bath temperature ``T0``.
    """

    T0: float
    p_heat: float
    T1: float
    T1_naive: float
    iterations: int

    @property
    def delta(self):
        return self.T1 - self.T0

    @property
    def delta_naive(self):
        return self.T1_naive - self.T0


def temperature_gradient(T0, p_heat, stack=ThermalStack(), mat=MaterialProps(),
                         tol=1e-9, max_iter=100):
    """Solve ``(T1 - T0) K((T0 + T1) / 2) = P`` for the drum temperature.

    Newton iteration on the cubic, started from the naive ``P / K(T0)``
    estimate (clipped to keep the start above the root).

    Raises
    ------
    ValueError
        ``p_heat < 0`` or ``T0 < 0``.
    RuntimeError
        No convergence within ``max_iter`` steps.
    """
    if p_heat < 0:
        raise ValueError("p_heat must be >= 0")
    if T0 < 0:
        raise ValueError("T0 must be >= 0")
    if p_heat == 0:
        return GradientResult(T0, 0.0, T0, T0, 0)
    K1 = torus_conductance(1.0, stack, mat)
    naive = T0 + p_heat / (K1 * T0 ** 3) if T0 > 0 else math.inf

    def f(T1):
        return (T1 - T0) * K1 * (0.5 * (T0 + T1)) ** 3 - p_heat

    def df(T1):
        m = 0.5 * (T0 + T1)
        return K1 * (m ** 3 + 1.5 * (T1 - T0) * m ** 2)

    # f is increasing and convex on T1 > T0, so Newton from above converges monotonically
    x = min(naive, T0 + (16.0 * p_heat / K1) ** 0.25)
    for it in range(1, max_iter + 1):
        step = f(x) / df(x)
        x_new = max(x - step, T0)
        if abs(x_new - x) < tol:
            return GradientResult(T0, p_heat, x_new, naive, it)
        x = x_new
    raise RuntimeError("temperature_gradient did not converge")


def electron_temperature(p_e, T_ph, stack=ThermalStack(), mat=MaterialProps()):
    """Electron temperature from ``P = V g (Te^5 - Tph^5)`` [K]."""
    p_e = np.asarray(p_e, dtype=float)
    if np.any(p_e < 0):
        raise ValueError("p_e must be >= 0")
    return _out((_T(T_ph) ** 5 + p_e / (stack.volume * mat.g_eph)) ** 0.2)


def dominant_wavelength(T, mat=MaterialProps()):
    """Dominant thermal phonon wavelength ``2.23 hbar v_s / (kB T)`` [m]."""
    T = _T(T)
    if np.any(T == 0):
        raise ValueError("T must be > 0")
    return _out(DOMINANT_X * HBAR * mat.v_s / (KB * T))


BUDGET_COLUMNS = ("T", "c_p", "k_nano", "K_torus", "K_kapitza", "kapitza_ratio", "C_membrane",
                  "tau_th", "p_leak", "T1", "dT", "dT_naive", "T_e_fW", "T_e_aW", "lambda_dom")


def thermal_budget(T_grid, stack=ThermalStack(), mat=MaterialProps(), p_electron=(1e-15, 1e-18)):
    """One row per temperature with every budget quantity.

    Returns
    -------
    dict
        Column name -> ndarray, in :data:`BUDGET_COLUMNS` order. The two
        electron columns use ``p_electron`` (default 1 fW and 1 aW).
    """
    T = np.atleast_1d(np.asarray(T_grid, dtype=float))
    if np.any(T <= 0):
        raise ValueError("temperatures must be > 0")
    leak = heat_leak_power(stack, mat)
    grads = [temperature_gradient(t, leak, stack, mat) for t in T]
    kt = np.asarray(torus_conductance(T, stack, mat))
    kk = np.asarray(kapitza_conductance(T, stack))
    return {
        "T": T,
        "c_p": mat.c_p_coeff * T ** 3,
        "k_nano": np.asarray(confined_conductivity(T, stack.mfp, mat)),
        "K_torus": kt,
        "K_kapitza": kk,
        "kapitza_ratio": kk / kt,
        "C_membrane": np.asarray(membrane_heat_capacity(T, stack, mat)),
        "tau_th": np.full(T.shape, thermalization_time(stack, mat)),
        "p_leak": np.full(T.shape, leak),
        "T1": np.array([g.T1 for g in grads]),
        "dT": np.array([g.delta for g in grads]),
        "dT_naive": np.array([g.delta_naive for g in grads]),
        "T_e_fW": np.asarray(electron_temperature(p_electron[0], T, stack, mat)),
        "T_e_aW": np.asarray(electron_temperature(p_electron[1], T, stack, mat)),
        "lambda_dom": np.asarray(dominant_wavelength(T, mat)),
    }
