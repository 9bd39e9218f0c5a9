"""
Power-sweep calibration: coupling, intrinsic damping and technical heating.

Widths fall on two lines ``W = Gm +- s n_cav`` with ``s = 4 g0^2 / kappa``.
Areas are normalised to ``A W / (s n_cav) = n_base Gm + N(n_cav) s n_cav``,
which is flat in the small-drive limit; the growth at large drive measures
the out-of-equilibrium photons ``N(n_cav) = c (n_cav / n_ref)^a``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from ..constants import TWO_PI
from ..errors import ConfigError, NumericalError
from ..optomech import Scheme, backaction_floor_population
from ..spectral_sim import SpectrumFrame
from .fitting import FitResult, fit_lorentzian

MIN_POWERS = 3
SLOPE_MISMATCH = 0.20


@dataclass
class CalibrationResult:
    """Outcome of :func:`calibrate_power_sweep`.

    Rates are angular (rad/s). ``slope`` is ``Gopt / n_cav``.
    ``normalized_areas`` maps a scheme name to ``(n_cav, y, y_err)`` with
    ``y = A W / Gopt`` [1/s].
    """

    g0_est: float
    g0_err: float
    gamma_m_est: float
    gamma_m_err: float
    slope: float
    slope_err: float
    tech_coeff: float
    tech_coeff_err: float
    tech_exponent: float
    tech_exponent_err: float
    n_th_est: float
    n_th_err: float
    kappa_tot: float
    ref_ncav: float = 300.0
    n_cav_noise: float = 0.0
    backaction_floor: float = 0.0
    scheme_slopes: dict = field(default_factory=dict)
    normalized_areas: dict = field(default_factory=dict)
    single_scheme: bool = False
    flags: list = field(default_factory=list)

    def gamma_opt(self, n_cav):
        return self.slope * np.asarray(n_cav, dtype=float)

    def noise_photons(self, n_cav):
        """Cavity plus technical-heating photons at drive ``n_cav`` (no ``+1``)."""
        n_cav = np.asarray(n_cav, dtype=float)
        return self.n_cav_noise + self.tech_coeff * (n_cav / self.ref_ncav) ** self.tech_exponent

    @classmethod
    def from_truth(cls, sys, noise, n_ref=None):
        """Exact calibration for a known system (no fitting)."""
        slope = 4.0 * sys.g0 ** 2 / sys.kappa_tot
        return cls(sys.g0, 0.0, sys.gamma_m_floor, 0.0, slope, 0.0,
                   noise.tech_heating_coeff, 0.0, noise.tech_heating_exponent, 0.0,
                   float("nan"), float("nan"), sys.kappa_tot,
                   noise.tech_heating_ref_ncav if n_ref is None else n_ref,
                   noise.n_cav_noise,
                   backaction_floor_population(sys) if noise.backaction_floor else 0.0)


def _as_fit(obj):
    if isinstance(obj, FitResult):
        return obj
    if isinstance(obj, SpectrumFrame):
        return fit_lorentzian(obj)
    raise TypeError(f"expected FitResult or SpectrumFrame, got {type(obj).__name__}")


def _linfit(X, y, err):
    w = 1.0 / err
    coef, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    resid = (y - X @ coef) * w
    dof = max(len(y) - X.shape[1], 1)
    cov = np.linalg.inv((X * w[:, None]).T @ (X * w[:, None]))
    # scale by the reduced chi-square unless it is below one
    cov *= max(1.0, float(resid @ resid) / dof)
    return coef, np.sqrt(np.diag(cov))


def calibrate_power_sweep(sweeps, sys, ref_ncav=300.0, fix_exponent=None, n_cav_noise=0.0,
                          backaction_floor=True):
    """Extract ``g0``, ``Gm`` and the technical-heating law from power sweeps.

    Parameters
    ----------
    sweeps : dict
        ``{(scheme, n_cav): FitResult or SpectrumFrame}``.
    sys : SystemParams
        Supplies ``kappa_tot`` (to turn the width slope into ``g0``) and the
        red-scheme back-action floor.
    ref_ncav : float
        Drive at which the technical-heating coefficient is quoted.
    fix_exponent : float, optional
        Hold the heating exponent fixed instead of fitting it.
    n_cav_noise : float
        Known thermal cavity population.

    Raises
    ------
    ConfigError
        Fewer than three powers for a scheme.
    NumericalError
        A point failed to fit.
    """
    by_scheme = {}
    for (scheme, n_cav), obj in sweeps.items():
        by_scheme.setdefault(Scheme.parse(scheme), []).append((float(n_cav), _as_fit(obj)))
    if not by_scheme:
        raise ConfigError("empty power sweep")
    for scheme, pts in by_scheme.items():
        if len({n for n, _ in pts}) < MIN_POWERS:
            raise ConfigError(f"{scheme.value} sweep needs at least {MIN_POWERS} distinct powers")
        bad = [n for n, fit in pts if not fit.converged]
        if bad:
            raise NumericalError(f"{scheme.value} sweep: fit did not converge at n_cav = {bad}")
    flags = []
    single = len(by_scheme) == 1
    if single:
        flags.append("single-scheme")

    # widths: common intercept, slope +-s; separate fits for the consistency check
    rows, W, We = [], [], []
    scheme_slopes = {}
    for scheme, pts in by_scheme.items():
        n = np.array([p[0] for p in pts])
        w = TWO_PI * np.array([p[1].width for p in pts])
        we = TWO_PI * np.array([max(p[1].width_err, 1e-12 * p[1].width) for p in pts])
        coef, err = _linfit(np.column_stack([np.ones_like(n), n]), w, we)
        scheme_slopes[scheme.value] = (float(coef[1]), float(err[1]))
        for ni, wi, ei in zip(n, w, we):
            rows.append([1.0, scheme.sign * ni])
            W.append(wi)
            We.append(ei)
    coef, err = _linfit(np.array(rows), np.array(W), np.array(We))
    gamma_m, slope = float(coef[0]), float(coef[1])
    gamma_m_err, slope_err = float(err[0]), float(err[1])
    if slope <= 0:
        raise NumericalError("non-positive optical damping slope")
    if not single:
        sb, sr = abs(scheme_slopes["blue"][0]), abs(scheme_slopes["red"][0])
        if abs(sb - sr) / (0.5 * (sb + sr)) > SLOPE_MISMATCH:
            msg = f"blue/red width slopes differ by more than {SLOPE_MISMATCH:.0%}"
            flags.append("slope-mismatch")
            warnings.warn(msg, RuntimeWarning)
    g0 = math.sqrt(slope * sys.kappa_tot / 4.0)
    g0_err = 0.5 * g0 * slope_err / slope

    # normalised areas: y - offset = n_th Gm + N(n) Gopt. Fitting the product
    # n_th Gm keeps the width-intercept error out of the heating estimate.
    floor = backaction_floor_population(sys) if backaction_floor else 0.0
    n_all, z_all, ze_all, g_all, norm = [], [], [], [], {}
    for scheme, pts in by_scheme.items():
        n = np.array([p[0] for p in pts])
        A = np.array([p[1].area for p in pts])
        Ae = np.array([p[1].area_err for p in pts])
        w = TWO_PI * np.array([p[1].width for p in pts])
        we = TWO_PI * np.array([p[1].width_err for p in pts])
        g = slope * n
        y = A * w / g
        ye = np.abs(y) * np.hypot(Ae / A, we / w)
        norm[scheme.value] = (n, y, ye)
        extra = n_cav_noise + (0.0 if scheme is Scheme.BLUE else floor)
        offset = (gamma_m if scheme is Scheme.BLUE else 0.0) + extra * g
        n_all.append(n)
        g_all.append(g)
        z_all.append(y - offset)
        ze_all.append(ye)
    n_all, z_all, ze_all, g_all = map(np.concatenate, (n_all, z_all, ze_all, g_all))

    if fix_exponent is not None:
        a = float(fix_exponent)
        X = np.column_stack([np.ones_like(n_all), (n_all / ref_ncav) ** a * g_all])
        coef, err = _linfit(X, z_all, ze_all)
        P, c = float(coef[0]), float(coef[1])
        P_err, c_err, a_err = float(err[0]), float(err[1]), 0.0
    else:
        def resid(p):
            return (p[0] + p[1] * (n_all / ref_ncav) ** p[2] * g_all - z_all) / ze_all

        a0 = 1.0
        X = np.column_stack([np.ones_like(n_all), (n_all / ref_ncav) ** a0 * g_all])
        start, _ = _linfit(X, z_all, ze_all)
        sol = least_squares(resid, [start[0], start[1], a0],
                            bounds=([-np.inf, -np.inf, 0.0], [np.inf, np.inf, 6.0]))
        if not sol.success:
            raise NumericalError(f"technical-heating fit failed: {sol.message}")
        P, c, a = map(float, sol.x)
        dof = max(n_all.size - 3, 1)
        try:
            cov = np.linalg.inv(sol.jac.T @ sol.jac) * max(1.0, 2 * sol.cost / dof)
            P_err, c_err, a_err = map(float, np.sqrt(np.abs(np.diag(cov))))
        except np.linalg.LinAlgError:
            P_err = c_err = a_err = float("nan")
            flags.append("heating-covariance-singular")
    n_th = P / gamma_m
    n_th_err = abs(n_th) * math.hypot(P_err / P if P else 0.0, gamma_m_err / gamma_m)
    return CalibrationResult(
        g0_est=g0, g0_err=g0_err, gamma_m_est=gamma_m, gamma_m_err=gamma_m_err,
        slope=slope, slope_err=slope_err, tech_coeff=c, tech_coeff_err=c_err,
        tech_exponent=a, tech_exponent_err=a_err, n_th_est=n_th, n_th_err=n_th_err,
        kappa_tot=sys.kappa_tot, ref_ncav=ref_ncav, n_cav_noise=n_cav_noise,
        backaction_floor=floor, scheme_slopes=scheme_slopes, normalized_areas=norm,
        single_scheme=single, flags=flags)
