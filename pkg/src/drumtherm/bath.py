"""
Bath models for the drum mode.

Deterministic laws (TLS frequency shift, damping vs temperature) plus the
stochastic pieces: an Ornstein-Uhlenbeck process for the phonon occupation
and non-stationary random walks for frequency and damping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .constants import HBAR, KB, TWO_PI
from .optomech import bose_occupation
from .special import digamma

PSI_HALF = -0.5772156649015329 - 2.0 * math.log(2.0)
TEN_HOURS = 36000.0


@dataclass(frozen=True)
class BathParams:
    """Parameters of the TLS/phonon environment.

    Attributes
    ----------
    tls_log_slope : float
        Slope of the logarithmic frequency shift [rad/s per decade of T].
        The preset value is read off the published frequency-vs-temperature
        plot, not quoted from text.
    damping_linear_slope : float
        Damping increase above ``damping_knee`` [rad/s per K].
    damping_knee : float
        Temperature below which the damping is clamped at its floor [K].
    t_c : float
        Cutoff time of the population fluctuations [s]: their spectrum is a
        Lorentzian whose corner sits at the frequency ``1/t_c`` (in Hz). The
        underlying OU correlation time is ``t_c / 2 pi``.
    sigma_ph_prefactor : float
        Population noise ``sigma_ph = prefactor * sqrt(n)``.
    sigma_f_amp, sigma_f_exponent : float
        Frequency-noise law ``sigma_f(T) = amp * T**-exponent`` [Hz], quoted
        as the standard deviation over a ``reference_acquisition`` record.
    sigma_gamma_amp, sigma_gamma_exponent : float
        Same for the damping noise [Hz].
    freq_damp_correlation : float
        Correlation coefficient between frequency and damping increments.
    reference_acquisition : float
        Record length the sigma_f / sigma_gamma amplitudes refer to [s].
    rng_seed : int
    """

    tls_log_slope: float = TWO_PI * 150.0
    damping_linear_slope: float = TWO_PI * 4000.0
    damping_knee: float = 0.1
    t_c: float = 5.0 * 3600.0
    sigma_ph_prefactor: float = 0.5
    sigma_f_amp: float = 0.5
    sigma_f_exponent: float = 0.5
    sigma_gamma_amp: float = 0.2
    sigma_gamma_exponent: float = 0.5
    freq_damp_correlation: float = 0.0
    reference_acquisition: float = TEN_HOURS
    rng_seed: int = 0

    def __post_init__(self):
        if not self.t_c > 0:
            raise ValueError("t_c must be > 0")
        if not self.sigma_ph_prefactor >= 0:
            raise ValueError("sigma_ph_prefactor must be >= 0")
        for name in ("tls_log_slope", "damping_linear_slope", "damping_knee"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not -1.0 <= self.freq_damp_correlation <= 1.0:
            raise ValueError("freq_damp_correlation must lie in [-1, 1]")
        if self.sigma_f_amp < 0 or self.sigma_gamma_amp < 0:
            raise ValueError("noise amplitudes must be >= 0")
        if not self.reference_acquisition > 0:
            raise ValueError("reference_acquisition must be > 0")

    @property
    def correlation_time(self):
        """OU correlation time ``t_c / 2 pi`` [s]."""
        return self.t_c / TWO_PI

    def quiet(self):
        """Copy with every stochastic amplitude set to zero."""
        return replace(self, sigma_ph_prefactor=0.0, sigma_f_amp=0.0, sigma_gamma_amp=0.0)


@dataclass(frozen=True)
class BathState:
    """Instantaneous mode parameters.

    ``ou``, ``freq_walk`` and ``damp_walk`` carry the hidden noise states
    (unit-variance OU value, accumulated frequency and damping walks in
    rad/s) so that the process can be continued step by step.
    """

    t: float
    n_inst: float
    omega_m_inst: float
    gamma_m_inst: float
    ou: float = 0.0
    freq_walk: float = 0.0
    damp_walk: float = 0.0


@dataclass
class BathStreams:
    """Independent random streams for the three noise sources."""

    ou: np.random.Generator
    freq: np.random.Generator
    damp: np.random.Generator

    @classmethod
    def from_seed(cls, seed):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(s) for s in ss.spawn(3)))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# deterministic laws

def tls_bracket(T, omega0):
    """``Re psi(1/2 + hbar w0 / (2 pi i kB T)) - ln(hbar w0 / kB T)``."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be > 0")
    x = HBAR * omega0 / (KB * T)
    out = digamma(0.5 - 1j * x / TWO_PI).real - np.log(x)
    return out if out.ndim else float(out)


def tls_frequency_shift(T, omega0, bath):
    """Resonant-TLS frequency shift ``w_m(T) - w0`` [rad/s]."""
    return bath.tls_log_slope / math.log(10.0) * tls_bracket(T, omega0)


def tls_frequency_shift_log(T, omega0, bath):
    """High-temperature asymptote of :func:`tls_frequency_shift` (pure log law)."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be > 0")
    out = bath.tls_log_slope / math.log(10.0) * (np.log(KB * T / (HBAR * omega0)) + PSI_HALF)
    return out if out.ndim else float(out)


def mechanical_damping_mean(T, sys, bath):
    """Clamping floor below the knee, linear growth above it [rad/s]."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be > 0")
    out = np.maximum(sys.gamma_m_floor,
                     sys.gamma_m_floor + bath.damping_linear_slope * (T - bath.damping_knee))
    return out if out.ndim else float(out)


def population_noise_std(T, sys, bath):
    """``sigma_ph = prefactor * sqrt(n(T))``."""
    return bath.sigma_ph_prefactor * np.sqrt(bose_occupation(T, sys.omega_m0))


def frequency_noise_std(T, bath):
    """Frequency standard deviation over the reference record [Hz]."""
    return bath.sigma_f_amp * np.asarray(T, dtype=float) ** (-bath.sigma_f_exponent)


def damping_noise_std(T, bath):
    """Damping standard deviation over the reference record [Hz]."""
    return bath.sigma_gamma_amp * np.asarray(T, dtype=float) ** (-bath.sigma_gamma_exponent)


def walk_step_sigma(std_hz, dt, reference):
    """Per-step angular increment giving ``std_hz`` over a ``reference`` record.

    The mean-removed variance of a Brownian path over a record ``D`` is
    ``sigma_B^2 D / 6``.
    """
    return TWO_PI * np.asarray(std_hz) * np.sqrt(6.0 * dt / reference)


# ---------------------------------------------------------------------------
# stochastic generators

def ou_path(sigma, t_corr, dt, n_steps, seed=None):
    """Stationary zero-mean Ornstein-Uhlenbeck path.

    Exact discretisation ``x[k+1] = x[k] e^{-dt/t_corr} + sigma sqrt(1 -
    e^{-2 dt/t_corr}) xi[k]`` started from the stationary law, so the
    autocovariance is ``sigma^2 exp(-|tau| / t_corr)``.

    Parameters
    ----------
    sigma : float
        Stationary standard deviation.
    t_corr : float
        Correlation time [s].
    dt : float
        Sampling step [s].
    n_steps : int
        Number of samples returned.
    seed : int, Generator or None
    """
    if dt <= 0 or t_corr <= 0:
        raise ValueError("dt and t_corr must be > 0")
    rng = _rng(seed)
    xi = rng.standard_normal(n_steps)
    if n_steps == 0:
        return xi
    a = math.exp(-dt / t_corr)
    b = math.sqrt(-math.expm1(-2.0 * dt / t_corr))
    x0 = xi[0]
    rest = lfilter([b], [1.0, -a], xi[1:], zi=[a * x0])[0]
    return sigma * np.concatenate(([x0], rest))


def ou_spectrum_model(f, sigma, t_corr):
    """One-sided OU spectrum ``4 sigma^2 t / (1 + (2 pi f t)^2)``; integrates to sigma^2."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequencies must be >= 0")
    return 4.0 * sigma ** 2 * t_corr / (1.0 + (TWO_PI * f * t_corr) ** 2)


def random_walk_path(step_sigma, dt, n_steps, seed=None):
    """Gaussian random walk: element ``k`` is the sum of the first ``k+1`` increments."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    rng = _rng(seed)
    return np.cumsum(step_sigma * rng.standard_normal(n_steps))


# ---------------------------------------------------------------------------
# composed generative model

def _assemble(t, T, ou, freq_walk, damp_walk, sys, bath):
    n_th = bose_occupation(T, sys.omega_m0)
    n_inst = np.maximum(0.0, n_th + bath.sigma_ph_prefactor * np.sqrt(n_th) * ou)
    omega = sys.omega_m0 + tls_frequency_shift(T, sys.omega_m0, bath) + freq_walk
    gamma = np.maximum(sys.gamma_m_floor / 10.0,
                       mechanical_damping_mean(T, sys, bath) + damp_walk)
    return n_inst, omega, gamma


def initial_bath_state(T, sys, bath, streams, t=0.0):
    """Stationary starting state (OU drawn from its stationary law, walks at 0)."""
    ou = float(streams.ou.standard_normal())
    n_inst, omega, gamma = _assemble(t, T, ou, 0.0, 0.0, sys, bath)
    return BathState(t, float(n_inst), float(omega), float(gamma), ou, 0.0, 0.0)


def _walk_increments(T, dt, bath, eta_f, eta_d):
    rho = bath.freq_damp_correlation
    eta_d = rho * eta_f + math.sqrt(1.0 - rho * rho) * eta_d
    df = walk_step_sigma(frequency_noise_std(T, bath), dt, bath.reference_acquisition) * eta_f
    dd = walk_step_sigma(damping_noise_std(T, bath), dt, bath.reference_acquisition) * eta_d
    return df, dd


def evolve_bath(T, dt, state, sys, bath, streams):
    """Advance the bath by one step of length ``dt`` at temperature ``T``.

    One draw is taken from each of the three streams, in the same order as
    :func:`bath_trajectory`, so stepping and the vectorised path agree.
    """
    a = math.exp(-dt / bath.correlation_time)
    b = math.sqrt(-math.expm1(-2.0 * dt / bath.correlation_time))
    ou = b * float(streams.ou.standard_normal()) + a * state.ou
    df, dd = _walk_increments(T, dt, bath, float(streams.freq.standard_normal()),
                              float(streams.damp.standard_normal()))
    fw = state.freq_walk + float(df)
    dw = state.damp_walk + float(dd)
    t = state.t + dt
    n_inst, omega, gamma = _assemble(t, T, ou, fw, dw, sys, bath)
    return BathState(t, float(n_inst), float(omega), float(gamma), ou, fw, dw)


@dataclass
class BathTrajectory:
    """Vectorised bath history (one entry per step)."""

    t: np.ndarray
    T: np.ndarray
    n_th: np.ndarray
    n_inst: np.ndarray
    omega_m: np.ndarray
    gamma_m: np.ndarray


def bath_trajectory(T, dt, sys, bath, streams, t0=0.0):
    """Whole bath history for a temperature sequence ``T`` sampled every ``dt``.

    Entry 0 is :func:`initial_bath_state`; entry ``k`` equals ``k``
    successive :func:`evolve_bath` calls.
    """
    T = np.asarray(T, dtype=float)
    n = T.size
    t = t0 + dt * np.arange(n)
    xi = streams.ou.standard_normal(n)
    a = math.exp(-dt / bath.correlation_time)
    b = math.sqrt(-math.expm1(-2.0 * dt / bath.correlation_time))
    ou = np.concatenate(([xi[0]], lfilter([b], [1.0, -a], xi[1:], zi=[a * xi[0]])[0]))
    eta_f = streams.freq.standard_normal(n - 1)
    eta_d = streams.damp.standard_normal(n - 1)
    df, dd = _walk_increments(T[1:], dt, bath, eta_f, eta_d)
    fw = np.concatenate(([0.0], np.cumsum(df)))
    dw = np.concatenate(([0.0], np.cumsum(dd)))

    # deterministic laws evaluated once per distinct temperature
    uniq, inv = np.unique(T, return_inverse=True)
    n_th = bose_occupation(uniq, sys.omega_m0)[inv]
    shift = np.atleast_1d(tls_frequency_shift(uniq, sys.omega_m0, bath))[inv]
    gmean = np.atleast_1d(mechanical_damping_mean(uniq, sys, bath))[inv]
    n_th = np.atleast_1d(n_th)
    n_inst = np.maximum(0.0, n_th + bath.sigma_ph_prefactor * np.sqrt(n_th) * ou)
    omega = sys.omega_m0 + shift + fw
    gamma = np.maximum(sys.gamma_m_floor / 10.0, gmean + dw)
    return BathTrajectory(t, T, n_th, n_inst, omega, gamma)
