"""
From fitted sideband areas to mode populations and temperatures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..constants import HBAR, KB, TWO_PI
from ..errors import SelfOscillationError
from ..optomech import Scheme, temperature_from_occupation


def raw_population(area, g_opt, scheme):
    """``A / Gopt`` for red, ``A / Gopt - 1`` for blue (no back-action correction)."""
    scheme = Scheme.parse(scheme)
    n = np.asarray(area, dtype=float) / g_opt
    return n - 1.0 if scheme is Scheme.BLUE else n


def correct_backaction(area, width_hz, calib, scheme, n_cav, gamma_m_source="measured",
                       area_err=None, width_err=None):
    """Bath occupation from one sideband, undoing the optical back-action.

    Removes the zero-point offset (blue), the optical (anti-)damping gain
    and the cavity plus technical-heating photons::

        blue: n = A (Gm - Go) / (Go Gm) - 1 - N Go / Gm
        red:  n = A (Gm + Go) / (Go Gm) - N_red Go / Gm

    Parameters
    ----------
    area : float or ndarray
        Fitted area [photons/s].
    width_hz : float or ndarray
        Fitted FWHM [Hz]; used when ``gamma_m_source == "measured"``.
    calib : CalibrationResult
    scheme : Scheme
    n_cav : float
    gamma_m_source : {"measured", "calibration"}
        ``"measured"`` takes ``Gm = 2 pi W -+ Go`` from each fit, following
        slow damping drifts; ``"calibration"`` uses the calibrated ``Gm``.
    area_err, width_err : optional
        Fit uncertainties to propagate.

    Returns
    -------
    n : ndarray or float
        May be negative.
    n_err : ndarray or float
        Propagated uncertainty (NaN when no errors are given).
    """
    scheme = Scheme.parse(scheme)
    go = float(calib.gamma_opt(n_cav))
    if go <= 0:
        raise ValueError("correction needs n_cav > 0")
    area = np.asarray(area, dtype=float)
    if gamma_m_source == "measured":
        gm = TWO_PI * np.asarray(width_hz, dtype=float) - scheme.sign * go
    elif gamma_m_source == "calibration":
        gm = np.full(area.shape, calib.gamma_m_est)
    else:
        raise ValueError("gamma_m_source must be 'measured' or 'calibration'")
    N = float(calib.noise_photons(n_cav))
    if scheme is Scheme.BLUE:
        if np.any(gm <= go):
            raise SelfOscillationError("blue correction with Gopt >= Gm")
        gain = (gm - go) / (go * gm)
        n = area * gain - 1.0 - N * go / gm
    else:
        N = N + calib.backaction_floor
        gain = (gm + go) / (go * gm)
        n = area * gain - N * go / gm
    n_err = np.full(n.shape, np.nan)
    if area_err is not None:
        var = (np.asarray(area_err) * gain) ** 2
        if width_err is not None and gamma_m_source == "measured":
            # dn/dGm at fixed A
            if scheme is Scheme.BLUE:
                dn = area / gm ** 2 + N * go / gm ** 2
            else:
                dn = -area / gm ** 2 + N * go / gm ** 2
            var = var + (dn * TWO_PI * np.asarray(width_err)) ** 2
        n_err = np.sqrt(var)
    if n.ndim == 0:
        return float(n), float(n_err)
    return n, n_err


@dataclass
class AsymmetryResult:
    """Primary thermometry from a Stokes / anti-Stokes pair."""

    ratio: float
    ratio_err: float
    bound: float
    n: float
    n_err: float
    T: float
    T_err: float
    at_bound: bool = False


def asymmetry_thermometry(stokes_fit, antistokes_fit, calib, n_cav, omega_m,
                          use_measured_widths=False):
    """Temperature from the anti-Stokes/Stokes area ratio at equal drive.

    With ``r = R (Gm + Go) / (Gm - Go)`` the population is::

        n = [r Gm - (1 - r) N Go - N_floor Go] / ((1 - r) Gm)

    which reduces to ``r / (1 - r)`` without extra photons; then
    ``T = hbar wm / (kB ln(1 + 1/n))``.

    Parameters
    ----------
    stokes_fit, antistokes_fit : FitResult
        Blue-pumped and red-pumped fits at the same ``n_cav``.
    calib : CalibrationResult
    n_cav : float
    omega_m : float
        Mechanical angular frequency.
    use_measured_widths : bool
        Take ``Gm`` and ``Go`` from the two fitted widths (half sum and half
        difference) instead of the calibration.

    Raises
    ------
    ValueError
        Fits not converged, or the ratio outside ``(0, bound)``.
    """
    if not (stokes_fit.converged and antistokes_fit.converged):
        raise ValueError("both sideband fits must be converged")
    if use_measured_widths:
        wb, wr = TWO_PI * stokes_fit.width, TWO_PI * antistokes_fit.width
        gm, go = 0.5 * (wr + wb), 0.5 * (wr - wb)
    else:
        gm, go = calib.gamma_m_est, float(calib.gamma_opt(n_cav))
    if go >= gm:
        raise SelfOscillationError("drive at or above the self-oscillation threshold")
    bound = (gm - go) / (gm + go)
    R = antistokes_fit.area / stokes_fit.area
    R_err = abs(R) * math.hypot(antistokes_fit.area_err / antistokes_fit.area,
                                stokes_fit.area_err / stokes_fit.area)
    N = float(calib.noise_photons(n_cav))
    floor = calib.backaction_floor
    r = R / bound
    # lowest admissible ratio: n = 0
    r_min = (N + floor) * go / (gm + N * go)
    if not (r > r_min and r < 1.0):
        raise ValueError(f"area ratio {R:.4g} outside the invertible range "
                         f"({r_min * bound:.4g}, {bound:.4g}) (bound = {bound:.4g})")
    n = (r * gm - (1.0 - r) * N * go - floor * go) / ((1.0 - r) * gm)
    dn_dr = (gm + N * go - floor * go) / ((1.0 - r) ** 2 * gm)
    n_err = abs(dn_dr) * R_err / bound
    T = float(temperature_from_occupation(n, omega_m))
    x = math.log1p(1.0 / n)
    T_err = HBAR * omega_m / KB / x ** 2 / (n * (n + 1.0)) * n_err
    at_bound = (1.0 - r) < 1e-6
    return AsymmetryResult(R, R_err, bound, n, n_err, T, T_err, at_bound)
