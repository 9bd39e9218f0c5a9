"""
Closed-form single-tone optomechanics in the resolved-sideband limit.

Converts pump power and mode temperature into sideband observables (peak
area and linewidth) and back. All rates and frequencies are angular
(rad/s); conversion to ordinary Hz happens only at the file/CLI boundary.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .constants import HBAR, KB, TWO_PI
from .errors import SelfOscillationError


class Scheme(str, enum.Enum):
    """Pump placement: one mechanical frequency above or below the cavity."""

    RED = "red"
    BLUE = "blue"

    @property
    def sign(self):
        """+1 for red (damping), -1 for blue (anti-damping)."""
        return 1.0 if self is Scheme.RED else -1.0

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for alias, scheme in (("red", cls.RED), ("reddetuned", cls.RED),
                              ("blue", cls.BLUE), ("bluedetuned", cls.BLUE)):
            if key.replace("-", "").replace("_", "") == alias:
                return scheme
        raise ValueError(f"unknown pump scheme {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Static device and cavity constants.

    Attributes
    ----------
    omega_c : float
        Cavity angular frequency [rad/s].
    omega_m0 : float
        High-temperature mechanical angular frequency [rad/s]; the pump is
        detuned by exactly this amount.
    kappa_tot, kappa_ext : float
        Total and external cavity decay rates [rad/s].
    g0 : float
        Single-photon optomechanical coupling [rad/s].
    gamma_m_floor : float
        Low-temperature (clamping-limited) mechanical damping [rad/s].
    duffing_beta : float
        Duffing coefficient [Hz/nm^2].
    mass : float
        Mode mass [kg].
    """

    omega_c: float
    omega_m0: float
    kappa_tot: float
    kappa_ext: float
    g0: float
    gamma_m_floor: float
    duffing_beta: float = 20.0
    mass: float = 5e-14

    def __post_init__(self):
        for name in ("omega_c", "omega_m0", "kappa_tot", "kappa_ext", "g0",
                     "gamma_m_floor", "mass"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if self.kappa_ext > self.kappa_tot:
            raise ValueError("kappa_ext cannot exceed kappa_tot")
        if not np.isfinite(self.duffing_beta):
            raise ValueError("duffing_beta must be finite")
        if self.omega_m0 <= 10.0 * self.kappa_tot:
            warnings.warn("omega_m0 <= 10 kappa_tot: outside the resolved-sideband regime "
                          "assumed by the closed-form expressions", stacklevel=3)

    @property
    def resolved_sideband(self):
        return self.omega_m0 > 10.0 * self.kappa_tot

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class NoiseBudget:
    """Extra photon populations seen by the mode and by the detector.

    Attributes
    ----------
    n_cav_noise : float
        Thermal photon population of the cavity (N_cav) [photons].
    tech_heating_coeff : float
        Out-of-equilibrium photons at the reference pump power [photons].
    tech_heating_exponent : float
        Power-law exponent of the technical heating in pump power. The
        default 1.0 (photon leakage proportional to pump power, as expected
        for source phase noise) is a modelling choice; the measured value is
        not published.
    amplifier_background : float
        Detection noise floor referred to the amplifier input [photons],
        i.e. a flat flux density in photons/s/Hz.
    tech_heating_ref_ncav : float
        Intracavity photon number defining the reference power.
    backaction_floor : bool
        Include the (kappa_tot / 4 omega_m)^2 quantum back-action term in the
        red-detuned noise population.
    """

    n_cav_noise: float = 0.0
    tech_heating_coeff: float = 0.0
    tech_heating_exponent: float = 1.0
    amplifier_background: float = 100.0
    tech_heating_ref_ncav: float = 300.0
    backaction_floor: bool = True

    def __post_init__(self):
        for name in ("n_cav_noise", "tech_heating_coeff", "tech_heating_exponent",
                     "amplifier_background"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.tech_heating_ref_ncav <= 0:
            raise ValueError("tech_heating_ref_ncav must be > 0")


@dataclass(frozen=True)
class PumpConfig:
    """Single-tone pump.

    Exactly one of ``n_cav`` or ``p_in`` has to be given; the other one is
    derived with :func:`n_cav_from_power` / :func:`power_from_n_cav` through
    :meth:`resolve`.

    The pump sits at ``omega_c + (omega_m0 + detuning_error)`` for the blue
    scheme and at ``omega_c - (omega_m0 + detuning_error)`` for the red one,
    so a positive ``detuning_error`` always moves the pump away from the
    cavity.
    """

    scheme: Scheme
    n_cav: float | None = None
    p_in: float | None = None
    detuning_error: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if self.n_cav is None and self.p_in is None:
            raise ValueError("PumpConfig needs n_cav or p_in")
        if self.n_cav is not None and self.n_cav < 0:
            raise ValueError("n_cav must be >= 0")
        if self.p_in is not None and self.p_in < 0:
            raise ValueError("p_in must be >= 0")

    def resolve(self, sys):
        """Return a copy with both ``n_cav`` and ``p_in`` filled in."""
        if self.n_cav is not None and self.p_in is not None:
            return self
        if self.n_cav is None:
            return replace(self, n_cav=n_cav_from_power(self.p_in, sys))
        return replace(self, p_in=power_from_n_cav(self.n_cav, sys))

    def photons(self, sys):
        return self.n_cav if self.n_cav is not None else n_cav_from_power(self.p_in, sys)

    def power(self, sys):
        return self.p_in if self.p_in is not None else power_from_n_cav(self.n_cav, sys)


def aalto_drum():
    """Device constants of the 15.1 MHz aluminium drum on a 5.7 GHz cavity."""
    return SystemParams(
        omega_c=TWO_PI * 5.7e9,
        omega_m0=TWO_PI * 15.1e6,
        kappa_tot=TWO_PI * 500e3,
        kappa_ext=TWO_PI * 240e3,
        g0=TWO_PI * 230.0,
        gamma_m_floor=TWO_PI * 420.0,
        duffing_beta=20.0,
        mass=5e-14,
    )


def default_noise():
    """Noise budget matching the published drive conditions.

    About one out-of-equilibrium photon at the 300-photon drive and a
    100-photon amplifier background.
    """
    return NoiseBudget(n_cav_noise=0.0, tech_heating_coeff=1.0, tech_heating_exponent=1.0,
                       amplifier_background=100.0, tech_heating_ref_ncav=300.0)


# ---------------------------------------------------------------------------
# drive strength

def n_cav_from_power(p_in, sys):
    """Intracavity photon number for a sideband-detuned pump.

    ``n_cav = P_in kappa_ext / (hbar omega_c omega_m^2)``, valid for
    ``omega_m >> kappa_tot``.
    """
    p_in = np.asarray(p_in, dtype=float)
    if np.any(p_in < 0):
        raise ValueError("pump power must be >= 0")
    out = p_in * sys.kappa_ext / (HBAR * sys.omega_c * sys.omega_m0 ** 2)
    return out if out.ndim else float(out)


def power_from_n_cav(n_cav, sys):
    """Inverse of :func:`n_cav_from_power`."""
    n_cav = np.asarray(n_cav, dtype=float)
    if np.any(n_cav < 0):
        raise ValueError("n_cav must be >= 0")
    out = n_cav * (HBAR * sys.omega_c * sys.omega_m0 ** 2) / sys.kappa_ext
    return out if out.ndim else float(out)


def gamma_opt(n_cav, sys):
    """Optical (anti-)damping rate ``4 g0^2 n_cav / kappa_tot`` [rad/s]."""
    n_cav = np.asarray(n_cav, dtype=float)
    if np.any(n_cav < 0):
        raise ValueError("n_cav must be >= 0")
    out = 4.0 * sys.g0 ** 2 * n_cav / sys.kappa_tot
    return out if out.ndim else float(out)


def self_oscillation_threshold(sys, gamma_m):
    """Blue-detuned photon number at which the total linewidth vanishes."""
    if gamma_m <= 0:
        raise ValueError("gamma_m must be > 0")
    return gamma_m * sys.kappa_tot / (4.0 * sys.g0 ** 2)


# ---------------------------------------------------------------------------
# populations

def bose_occupation(T, omega):
    """Bose-Einstein occupation ``1 / (exp(hbar omega / kB T) - 1)``.

    Vectorised over ``T``. Raises for non-positive temperature; use
    :func:`bose_occupation_limit` for the explicit T -> 0 value.
    """
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0) or omega <= 0:
        raise ValueError("bose_occupation needs T > 0 and omega > 0")
    x = HBAR * omega / (KB * T)
    with np.errstate(over="ignore"):
        out = 1.0 / np.expm1(x)
    return out if out.ndim else float(out)


def bose_occupation_limit(T, omega):
    """Like :func:`bose_occupation` but returns 0 for ``T == 0``."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ValueError("negative temperature")
    out = np.zeros_like(T)
    pos = T > 0
    out[pos] = bose_occupation(T[pos], omega)
    return out if out.ndim else float(out)


def temperature_from_occupation(n, omega):
    """Invert the Bose law: ``T = hbar omega / (kB ln(1 + 1/n))``; NaN for n <= 0."""
    n = np.asarray(n, dtype=float)
    out = np.full(n.shape, np.nan)
    pos = n > 0
    out[pos] = HBAR * omega / (KB * np.log1p(1.0 / n[pos]))
    return out if out.ndim else float(out)


def backaction_floor_population(sys):
    """Quantum limit of red-detuned cooling, ``(kappa_tot / 4 omega_m)^2``."""
    return (sys.kappa_tot / (4.0 * sys.omega_m0)) ** 2


def technical_heating_photons(p_in, noise, p_ref):
    """Out-of-equilibrium cavity photons ``coeff * (p_in / p_ref)^a``.

    Independent of scheme and temperature. ``p_ref`` is the pump power at
    which the budget holds ``noise.tech_heating_coeff`` photons.
    """
    p_in = np.asarray(p_in, dtype=float)
    if np.any(p_in < 0):
        raise ValueError("pump power must be >= 0")
    if p_ref <= 0:
        raise ValueError("reference power must be > 0")
    out = noise.tech_heating_coeff * (p_in / p_ref) ** noise.tech_heating_exponent
    return out if out.ndim else float(out)


def noise_population(scheme, noise, sys, p_in=None):
    """N_noise entering the effective population.

    Cavity photons plus technical-heating photons, plus the zero-point
    ``+1`` for the blue scheme or the quantum back-action floor for the red
    one (when enabled).
    """
    scheme = Scheme.parse(scheme)
    n = noise.n_cav_noise
    if p_in is not None and noise.tech_heating_coeff > 0:
        p_ref = power_from_n_cav(noise.tech_heating_ref_ncav, sys)
        n = n + technical_heating_photons(p_in, noise, p_ref)
    if scheme is Scheme.BLUE:
        return n + 1.0
    if noise.backaction_floor:
        n = n + backaction_floor_population(sys)
    return n


def _check_below_threshold(scheme, gamma_m, g_opt):
    if scheme is Scheme.BLUE:
        if np.any(np.asarray(gamma_m) - np.asarray(g_opt) <= 0):
            raise SelfOscillationError(
                "blue-detuned drive at or above the self-oscillation threshold "
                "(gamma_opt >= gamma_m)")
    elif np.any(np.asarray(gamma_m) + np.asarray(g_opt) <= 0):
        raise ValueError("red scheme requires gamma_m + gamma_opt > 0")


def effective_population(n_th, n_noise, scheme, gamma_m, g_opt):
    """Pumped mode population ``(n_th Gm + N_noise Gopt) / (Gm -+ Gopt)``.

    Parameters
    ----------
    n_th : float or ndarray
        Bath (Bose) occupation.
    n_noise : float
        N_noise as returned by :func:`noise_population` (already contains the
        blue-scheme ``+1``).
    scheme : Scheme
    gamma_m, g_opt : float or ndarray
        Intrinsic and optical damping [rad/s].
    """
    scheme = Scheme.parse(scheme)
    _check_below_threshold(scheme, gamma_m, g_opt)
    return (n_th * gamma_m + n_noise * g_opt) / (gamma_m + scheme.sign * g_opt)


def sideband_area_width(scheme, n_eff, gamma_m, g_opt):
    """Sideband area [photons/s] and linewidth [rad/s].

    Area is ``Gopt n_eff`` (red, anti-Stokes) or ``Gopt (n_eff + 1)`` (blue,
    Stokes); the width is ``Gm + Gopt`` or ``Gm - Gopt``.
    """
    scheme = Scheme.parse(scheme)
    _check_below_threshold(scheme, gamma_m, g_opt)
    if scheme is Scheme.RED:
        area = g_opt * n_eff
    else:
        area = g_opt * (n_eff + 1.0)
    return area, gamma_m + scheme.sign * g_opt


def sideband_observables(n_th, pump, sys, noise, gamma_m):
    """Chain the pieces above for a given pump: returns (area, width, n_eff)."""
    n_cav = pump.photons(sys)
    g = gamma_opt(n_cav, sys)
    n_noise = noise_population(pump.scheme, noise, sys, p_in=pump.power(sys))
    n_eff = effective_population(n_th, n_noise, pump.scheme, gamma_m, g)
    area, width = sideband_area_width(pump.scheme, n_eff, gamma_m, g)
    return area, width, n_eff


def effective_temperatures(area, g_opt, sys, scheme):
    """Effective mode temperature of one sideband.

    The area is first converted to a population (``A/Gopt`` for red,
    ``A/Gopt - 1`` for blue), then ``T_red = n hbar wm / kB`` and
    ``T_blue = (n + 1) hbar wm / kB``.
    """
    scheme = Scheme.parse(scheme)
    if g_opt <= 0:
        raise ValueError("gamma_opt must be > 0 to convert an area")
    if np.any(np.asarray(area) < 0):
        raise ValueError("area must be >= 0")
    quantum = HBAR * sys.omega_m0 / KB
    # A/Gopt is n for red and n + 1 for blue: both temperatures are that ratio in quanta
    out = np.asarray(area, dtype=float) / g_opt * quantum
    return out if out.ndim else float(out)


def asymmetry_bound(gamma_m, g_opt):
    """High-temperature limit of the anti-Stokes/Stokes area ratio."""
    return (gamma_m - g_opt) / (gamma_m + g_opt)


def asymmetry_ratio(T, n_cav, sys, gamma_m=None):
    """Anti-Stokes over Stokes area ratio at equal drive, without extra noise.

    ``[n / (n + 1)] (Gm - Gopt) / (Gm + Gopt)``. ``T = np.inf`` returns the
    bound itself.
    """
    gamma_m = sys.gamma_m_floor if gamma_m is None else gamma_m
    g = gamma_opt(n_cav, sys)
    if g >= gamma_m:
        raise SelfOscillationError("drive at or above the self-oscillation threshold")
    T = np.asarray(T, dtype=float)
    frac = np.ones(T.shape)
    finite = np.isfinite(T)
    n = bose_occupation(T[finite], sys.omega_m0)
    frac[finite] = n / (n + 1.0)
    out = frac * asymmetry_bound(gamma_m, g)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# frequency pulling and large-amplitude regime

def optical_spring_shift(pump, sys):
    """Mechanical frequency shift from the optical spring [rad/s].

    Standard two-Lorentzian expression for detuning ``Delta`` of the pump
    from the cavity::

        g^2 [ (D + wm) / ((D + wm)^2 + k^2/4) + (D - wm) / ((D - wm)^2 + k^2/4) ]

    with ``g^2 = g0^2 n_cav``.
    """
    n_cav = pump.photons(sys)
    wm = sys.omega_m0
    offset = wm + pump.detuning_error
    delta = offset if pump.scheme is Scheme.BLUE else -offset
    quarter_k2 = sys.kappa_tot ** 2 / 4.0
    g2 = sys.g0 ** 2 * n_cav
    return g2 * ((delta + wm) / ((delta + wm) ** 2 + quarter_k2)
                 + (delta - wm) / ((delta - wm) ** 2 + quarter_k2))


def duffing_amplitude(freq_shift, sys):
    """Self-oscillation amplitude [nm] from the Duffing frequency pull [Hz]."""
    if freq_shift == 0:
        return 0.0
    if freq_shift * sys.duffing_beta <= 0:
        raise ValueError("frequency shift and Duffing coefficient must share their sign")
    return math.sqrt(freq_shift / sys.duffing_beta)
