"""
Frames -> windowed fits -> populations -> fluctuation statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..constants import TWO_PI
from ..optomech import Scheme, temperature_from_occupation
from .fitting import FitBatch, FitResult, aligned_average, fit_frames, sliding_average, track_centers
from .fluctuations import (DeviationCurves, HistogramStats, SpectrumResult, deviation_curves,
                           fluctuation_spectrum, histogram_stats, MIN_HISTOGRAM_POINTS,
                           MIN_SPECTRUM_POINTS)
from .thermometry import asymmetry_thermometry, correct_backaction, raw_population

DEFAULT_WINDOW = 1200.0


@dataclass
class TimeSeriesRecord:
    """One analysed window."""

    t: float
    fit: FitResult
    n_raw: float
    n_corrected: float
    n_err: float
    T_mode: float
    flags: str = ""


@dataclass
class TimeSeries:
    """Per-window analysis output (arrays aligned with ``t``)."""

    t: np.ndarray
    fits: FitBatch
    n_raw: np.ndarray
    n_corrected: np.ndarray
    n_err: np.ndarray
    T_mode: np.ndarray
    gamma_m: np.ndarray
    scheme: Scheme
    n_cav: float
    window: float
    stride: float
    T_cryo: np.ndarray | None = None

    def __len__(self):
        return self.t.size

    @property
    def converged(self):
        return self.fits.converged

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if len(self) > 1 else float("nan")

    def flags(self, k):
        out = []
        if not self.fits.converged[k]:
            out.append("nofit")
        if self.n_corrected[k] < 0:
            out.append("negative")
        return ",".join(out)

    def __getitem__(self, k):
        return TimeSeriesRecord(float(self.t[k]), self.fits[k], float(self.n_raw[k]),
                                float(self.n_corrected[k]), float(self.n_err[k]),
                                float(self.T_mode[k]), self.flags(k))

    def records(self):
        for k in range(len(self)):
            yield self[k]

    def columns(self):
        """Ordered columns for the per-window table."""
        return {
            "t": self.t, "area": self.fits.area, "area_err": self.fits.area_err,
            "width": self.fits.width, "width_err": self.fits.width_err,
            "center": self.fits.center, "center_err": self.fits.center_err,
            "background": self.fits.background, "n_raw": self.n_raw,
            "n_corrected": self.n_corrected, "n_err": self.n_err, "T_mode": self.T_mode,
            "converged": self.fits.converged.astype(int),
        }


def analyze_frames(frames, calib, window=DEFAULT_WINDOW, stride=None, omega_m0=None,
                   scheme=None, n_cav=None, gamma_m_source="calibration"):
    """Sliding-window fits and back-action-corrected populations.

    Parameters
    ----------
    frames : FrameSet
    calib : CalibrationResult
    window : float
        Averaging window [s].
    stride : float, optional
        Spacing of the analysed windows [s]; default one frame interval.
    omega_m0 : float, optional
        Reference mechanical frequency [rad/s] the grid is measured from;
        read from ``frames.meta`` when omitted.
    scheme, n_cav : optional
        Override the pump description stored in ``frames.meta``.
    gamma_m_source : {"calibration", "measured"}
        Intrinsic damping used in the back-action gain. ``"measured"``
        follows slow damping drifts through each fitted width but divides by
        a noisy quantity, which gives heavy tails at low SNR.
    """
    meta = frames.meta
    scheme = Scheme.parse(scheme if scheme is not None else meta["scheme"])
    n_cav = float(n_cav if n_cav is not None else meta["n_cav"])
    omega_m0 = float(omega_m0 if omega_m0 is not None else meta["omega_m0"])
    avg = sliding_average(frames, window, stride)
    fits = fit_frames(avg)
    go = float(calib.gamma_opt(n_cav))
    n_raw = raw_population(fits.area, go, scheme)
    with np.errstate(invalid="ignore", divide="ignore"):
        width = np.where(fits.converged, fits.width, np.nan)
        gm = TWO_PI * width - scheme.sign * go
        usable = fits.converged & (gm > (go if scheme is Scheme.BLUE else -go))
        n_corr = np.full(len(fits), np.nan)
        n_err = np.full(len(fits), np.nan)
        if usable.any():
            n_corr[usable], n_err[usable] = correct_backaction(
                fits.area[usable], fits.width[usable], calib, scheme, n_cav, gamma_m_source,
                fits.area_err[usable], fits.width_err[usable])
        omega = omega_m0 + TWO_PI * fits.center
        T_mode = np.full(len(fits), np.nan)
        pos = n_corr > 0
        T_mode[pos] = [temperature_from_occupation(n, w) for n, w in zip(n_corr[pos], omega[pos])]
    step = avg.t[1] - avg.t[0] if len(avg) > 1 else float(window)
    return TimeSeries(avg.t, fits, n_raw, n_corr, n_err, T_mode, gm, scheme, n_cav,
                      float(avg.meta.get("window", window)), float(step), avg.T)


def asymmetry_from_frames(stokes, antistokes, calib, n_cav=None, omega_m=None,
                          track_window=DEFAULT_WINDOW, align=True, shared_drift=False,
                          tie_widths=False, **kwargs):
    """Sideband-asymmetry temperature from two whole acquisitions.

    Each acquisition is collapsed to one spectrum; with ``align`` the slow
    frequency drift is removed first (centers tracked over ``track_window``)
    so the long average keeps the true line shape. With ``shared_drift``
    (interleaved acquisitions of one bath) the drift tracked on the
    stronger Stokes line is applied to both. With ``tie_widths`` the
    anti-Stokes width is held at ``W_stokes + 2 Gopt / 2 pi`` (both lines
    share ``Gm``), which tightens the weak anti-Stokes area.

    Returns
    -------
    AsymmetryResult, (FitResult, FitResult)
    """
    n_cav = float(n_cav if n_cav is not None else stokes.meta["n_cav"])
    omega_m = float(omega_m if omega_m is not None else stokes.meta["omega_m0"])
    fits = []
    shared = track_centers(stokes, track_window) if align and shared_drift else None
    for fs in (stokes, antistokes):
        if align:
            if shared is not None and not np.array_equal(fs.t, stokes.t):
                raise ValueError("shared drift needs identical frame times")
            c = shared if shared is not None else track_centers(fs, track_window)
            avg = aligned_average(fs, c)
        else:
            avg = sliding_average(fs, len(fs) * fs.frame_dt)
        fixed = None
        if tie_widths and fits:
            fixed = fits[0].width + 2.0 * float(calib.gamma_opt(n_cav)) / TWO_PI
        fits.append(fit_frames(avg, fixed_width=fixed)[0])
    return asymmetry_thermometry(fits[0], fits[1], calib, n_cav, omega_m, **kwargs), tuple(fits)


def analyze_windows(frames, calib, windows, stride=None, **kwargs):
    """:func:`analyze_frames` for several averaging windows, ``{window: TimeSeries}``."""
    return {float(w): analyze_frames(frames, calib, w, stride, **kwargs) for w in windows}


@dataclass
class FluctuationStats:
    """Summary statistics of a population series.

    ``sigma_ph`` is the sample deviation of the windowed series;
    ``sigma_ph_model`` the unfiltered OU deviation from the spectral fit.
    ``standard_error`` uses ``N_eff = duration / t_c``.
    """

    mean_n: float
    sigma_ph: float
    sigma_ph_model: float
    t_c_est: float
    t_corr_est: float
    standard_error: float
    n_eff: float
    n_used: int
    spectrum: SpectrumResult | None
    histogram: HistogramStats | None
    deviations: DeviationCurves | None
    sigma_f: float = float("nan")
    sigma_gamma: float = float("nan")
    flags: list = field(default_factory=list)


def fluctuation_stats(ts, t_c=None, acquisition_lengths=None, window_series=None):
    """Fluctuation statistics of ``ts.n_corrected``.

    Parameters
    ----------
    ts : TimeSeries
    t_c : float, optional
        Cutoff time used for the effective sample count; the spectral
        estimate is used when omitted.
    acquisition_lengths : sequence, optional
        Record lengths for the deviation table (default: log-spaced up to the
        record).
    window_series : dict, optional
        ``{window: TimeSeries}`` for the deviation-versus-window table.
    """
    flags = []
    ok = ts.converged & np.isfinite(ts.n_corrected)
    if not ok.all():
        flags.append(f"{int((~ok).sum())} windows without a usable fit")
    n = ts.n_corrected[ok]
    dt = ts.stride
    duration = (ts.t[-1] - ts.t[0]) + ts.window if len(ts) else 0.0
    mean_n = float(np.mean(n)) if n.size else float("nan")
    sigma = float(np.std(n)) if n.size else float("nan")
    spec = None
    if n.size >= MIN_SPECTRUM_POINTS:
        # gaps from failed fits are bridged by the series mean
        x = np.where(ok, ts.n_corrected, mean_n)
        spec = fluctuation_spectrum(x, dt, detrend=True, window=ts.window)
        if not spec.fit.ok:
            flags.append(spec.fit.message)
    else:
        flags.append(f"spectrum needs {MIN_SPECTRUM_POINTS} windows, have {n.size}")
    t_c_est = spec.t_c_est if spec is not None else float("nan")
    tc_for_se = t_c if t_c is not None else t_c_est
    n_eff = max(duration / tc_for_se, 1.0) if np.isfinite(tc_for_se) and tc_for_se > 0 else float(n.size)
    se = sigma / math.sqrt(n_eff) if n.size else float("nan")
    hist = histogram_stats(n) if n.size >= MIN_HISTOGRAM_POINTS else None
    dev = None
    if n.size >= 4:
        if acquisition_lengths is None:
            acquisition_lengths = np.geomspace(max(4 * dt, ts.window), duration, 12)
        src = n if window_series is None else {
            w: s.n_corrected[s.converged & np.isfinite(s.n_corrected)]
            for w, s in window_series.items()}
        dev = deviation_curves(src, dt, acquisition_lengths,
                               reference_window=ts.window if window_series else None)
    good_f = ts.converged
    sigma_f = float(np.std(ts.fits.center[good_f])) if good_f.any() else float("nan")
    sigma_g = float(np.std(ts.gamma_m[good_f]) / TWO_PI) if good_f.any() else float("nan")
    return FluctuationStats(
        mean_n=mean_n, sigma_ph=sigma,
        sigma_ph_model=spec.fit.sigma if spec is not None else float("nan"),
        t_c_est=t_c_est, t_corr_est=spec.fit.t_corr if spec is not None else float("nan"),
        standard_error=se, n_eff=n_eff, n_used=int(n.size), spectrum=spec, histogram=hist,
        deviations=dev, sigma_f=sigma_f, sigma_gamma=sigma_g, flags=flags)
