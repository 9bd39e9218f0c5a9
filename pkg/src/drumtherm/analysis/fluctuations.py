"""
Statistics of population, frequency and damping time series.

Spectra (Wiener-Khinchin), OU model fits, Gaussian histograms, standard
deviation versus acquisition time and averaging window, Allan deviations
and the sqrt(n) law of the population noise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import curve_fit, minimize

from ..constants import TWO_PI

MIN_SPECTRUM_POINTS = 1000
MIN_HISTOGRAM_POINTS = 100
PLATEAU_SLOPE = 0.25
MAX_WHITE_RATIO = 100.0  # white-to-OU variance ratio above which the OU fit is flagged


# ---------------------------------------------------------------------------
# spectra

def autocorrelation(x):
    """Biased autocorrelation ``r[k] = (1/N) sum x[i] x[i+k]``, k = 0..N-1."""
    x = np.asarray(x, dtype=float)
    n = x.size
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    X = np.fft.rfft(x, nfft)
    return np.fft.irfft(X * X.conj(), nfft)[:n] / n


def wiener_khinchin_psd(x, dt):
    """One-sided PSD as the Fourier transform of the biased autocorrelation.

    Evaluated on the ``2N``-point grid ``f = k / (2 N dt)``; every second
    point coincides with the Fourier frequencies of the plain periodogram.
    """
    r = autocorrelation(x)
    n = r.size
    sym = np.concatenate([r, [0.0], r[:0:-1]])
    S = dt * np.fft.rfft(sym).real
    f = np.fft.rfftfreq(2 * n, dt)
    S[1:-1] *= 2.0
    return f, np.maximum(S, 0.0)


def periodogram(x, dt):
    """Direct one-sided periodogram ``2 dt |X|^2 / N`` on the Fourier frequencies."""
    x = np.asarray(x, dtype=float)
    n = x.size
    X = np.fft.rfft(x)
    P = dt * np.abs(X) ** 2 / n
    P[1:] *= 2.0
    if n % 2 == 0:
        P[-1] /= 2.0
    return np.fft.rfftfreq(n, dt), P


def _phi(y):
    """``y - 1 + exp(-y)`` without cancellation at small ``y``."""
    y = np.asarray(y, dtype=float)
    out = y + np.expm1(-y)
    small = y < 1e-2
    if np.any(small):
        ys = y[small] if y.ndim else y
        series = ys * ys * (0.5 - ys * (1 / 6 - ys * (1 / 24 - ys * (1 / 120 - ys / 720))))
        if y.ndim:
            out[small] = series
        else:
            out = series
    return out


def boxcar_ou_covariance(lag, sigma, tau, window):
    """Autocovariance of an OU process after a boxcar average of length ``window``."""
    lag = np.asarray(lag, dtype=float)
    if window <= 1e-9 * tau:
        # the average changes the covariance by less than window / (3 tau)
        return sigma ** 2 * np.exp(-np.abs(lag) / tau)
    # second antiderivative of exp(-|s|/tau), less its linear part
    def g(s):
        return _phi(np.abs(s) / tau)

    return sigma ** 2 * tau ** 2 / window ** 2 * (g(lag + window) + g(lag - window) - 2.0 * g(lag))


def boxcar_std_ratio(window, tau):
    """Standard deviation of a boxcar-averaged OU relative to the raw OU."""
    x = window / tau
    if x < 1e-2:
        return math.sqrt(1.0 - x / 3 + x * x / 12 - x ** 3 / 60 + x ** 4 / 360)
    return math.sqrt(2.0 * float(_phi(x)) / (x * x))


def _taper_weights(n):
    # Hann taper and its normalised autocorrelation
    h = np.hanning(n + 2)[1:-1]
    return h, autocorrelation(h) / np.mean(h * h)


def tapered_periodogram(x, dt, h=None):
    """One-sided periodogram of ``h * x`` normalised by ``sum h^2``."""
    x = np.asarray(x, dtype=float)
    h = np.hanning(x.size + 2)[1:-1] if h is None else h
    X = np.fft.rfft(h * x)
    P = dt * np.abs(X) ** 2 / np.sum(h * h)
    P[1:] *= 2.0
    if x.size % 2 == 0:
        P[-1] /= 2.0
    return P


def _expected_periodogram(cov, dt, lag_weights=None):
    # debiased Whittle: E[I_j] = dt (2 Re FFT[a_k c_k] - a_0 c_0), one-sided
    n = cov.size
    a = (1.0 - np.arange(n) / n) if lag_weights is None else lag_weights
    w = cov * a
    E = dt * (2.0 * np.fft.rfft(w).real - w[0])
    E[1:] *= 2.0
    if n % 2 == 0:
        E[-1] /= 2.0
    return np.maximum(E, 1e-300)


@dataclass
class OUFit:
    """OU parameters fitted to a (possibly boxcar-filtered) series."""

    sigma: float
    t_corr: float
    white: float
    ok: bool
    message: str = ""

    @property
    def t_c(self):
        """Cutoff time ``2 pi t_corr`` (Lorentzian corner at ``1/t_c`` Hz)."""
        return TWO_PI * self.t_corr


def fit_ou_whittle(x, dt, window=0.0, white=True, f_max=math.inf):
    """Debiased-Whittle fit of ``OU(sigma, t_corr)`` plus white noise.

    The model covariance includes the boxcar average of length ``window``
    applied before sampling (sliding-window analysis) and a white term with
    the matching triangular covariance. The overall variance is profiled
    out analytically; the correlation time and the white-to-OU ratio are
    located on a log grid and then refined. With the white term on, the
    correlation time is held above ``window``: after the boxcar a shorter
    OU is indistinguishable from white noise. A fit whose white term
    exceeds ``MAX_WHITE_RATIO`` times the OU variance has not resolved the
    OU component and is flagged.

    Only periodogram bins at or below ``f_max`` [Hz] enter the likelihood.
    """
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    h, a = _taper_weights(n)
    band = np.fft.rfftfreq(n, dt)[1:] <= f_max
    if band.sum() < 8:
        raise ValueError("fewer than 8 periodogram bins below f_max")
    I = tapered_periodogram(x, dt, h)[1:][band]
    lags = dt * np.arange(n)
    delta = (lags == 0).astype(float)
    tri = np.clip(1.0 - lags / window, 0.0, None) if window > dt else None

    tc_min = max(dt, window) if white else dt
    n_par = 2 if white else 1

    def profile(q):
        q = np.asarray(q, dtype=float)
        if q[0] < math.log(tc_min) or np.any(q[1:] > math.log(10 * MAX_WHITE_RATIO)):
            return math.inf, math.nan
        cov = boxcar_ou_covariance(lags, 1.0, math.exp(q[0]), window)
        if n_par > 1:
            cov = cov + math.exp(q[1]) * (delta if tri is None else tri)
        E = _expected_periodogram(cov, dt, a)[1:][band]
        s2 = float(np.mean(I / E))
        return float(np.sum(np.log(s2 * E))) + I.size, s2

    record = n * dt
    axes = [np.log(np.geomspace(tc_min, 10.0 * record, 40))]
    axes += [np.log(np.geomspace(1e-6, MAX_WHITE_RATIO, 17))] * (n_par - 1)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n_par)
    vals = [profile(q)[0] for q in grid]
    q0 = grid[int(np.argmin(vals))]
    res = minimize(lambda q: profile(q)[0], q0, method="Nelder-Mead",
                   options={"xatol": 1e-5, "fatol": 1e-8, "maxiter": 4000})
    q = res.x if res.fun <= min(vals) else q0
    s2 = profile(q)[1]
    tc = math.exp(q[0])
    ratios = np.exp(q[1:])
    wvar = float(ratios.sum() * s2)
    ok, msg = True, ""
    if not tc_min * (1 + 1e-6) < tc < 5.0 * record:
        ok, msg = False, f"correlation time {tc:.3g} s at the edge of the resolvable range"
    elif np.any(ratios > MAX_WHITE_RATIO):
        ok, msg = False, "white noise swamps the OU component"
    return OUFit(math.sqrt(s2), float(tc), wvar, ok, msg)


@dataclass
class SpectrumResult:
    f: np.ndarray
    psd: np.ndarray
    fit: OUFit | None

    @property
    def t_c_est(self):
        return self.fit.t_c if self.fit is not None else float("nan")


def fluctuation_spectrum(series, dt, detrend=True, window=0.0, fit=True):
    """Spectrum of a time series and an OU fit to it.

    Parameters
    ----------
    series : array_like
        At least 1000 samples.
    dt : float
        Sample spacing [s].
    detrend : bool
        Remove the mean before transforming.
    window : float
        Length of any boxcar average already applied to ``series`` [s]; the
        OU fit accounts for it.
    fit : bool

    Returns
    -------
    SpectrumResult
        ``f`` and one-sided ``psd`` from the Wiener-Khinchin estimator,
        ``fit`` with ``sigma``, ``t_corr`` and ``t_c = 2 pi t_corr``. A
        failed fit is flagged, never raised.
    """
    x = np.asarray(series, dtype=float)
    if x.size < MIN_SPECTRUM_POINTS:
        raise ValueError(f"need at least {MIN_SPECTRUM_POINTS} samples, got {x.size}")
    if detrend:
        x = x - x.mean()
    f, S = wiener_khinchin_psd(x, dt)
    ou = None
    if fit:
        try:
            ou = fit_ou_whittle(x, dt, window)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            ou = OUFit(float("nan"), float("nan"), float("nan"), False, str(exc))
    return SpectrumResult(f, S, ou)


# ---------------------------------------------------------------------------
# histograms

def _gauss(x, a, mu, s):
    return a * np.exp(-0.5 * ((x - mu) / s) ** 2)


@dataclass
class HistogramStats:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    sigma: float
    amplitude: float
    degenerate: bool = False
    fit_ok: bool = True


def histogram_stats(series, bins="fd"):
    """Histogram (Freedman-Diaconis bins by default) and its Gaussian fit.

    Negative values are kept as they are.
    """
    x = np.asarray(series, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < MIN_HISTOGRAM_POINTS:
        raise ValueError(f"need at least {MIN_HISTOGRAM_POINTS} samples, got {x.size}")
    if np.ptp(x) == 0:
        v = float(x[0])
        return HistogramStats(np.array([v - 0.5, v + 0.5]), np.array([x.size]), v, 0.0,
                              float(x.size), degenerate=True, fit_ok=False)
    counts, edges = np.histogram(x, bins=bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    p0 = [counts.max(), x.mean(), x.std()]
    try:
        popt, _ = curve_fit(_gauss, centers, counts, p0=p0, maxfev=10000)
        a, mu, s = popt
        ok = bool(np.all(np.isfinite(popt)))
    except RuntimeError:
        a, mu, s = p0
        ok = False
    return HistogramStats(edges, counts, float(mu), float(abs(s)), float(a), False, ok)


# ---------------------------------------------------------------------------
# deviations

def boxcar(x, m):
    """Trailing moving average of ``m`` samples (full windows only)."""
    x = np.asarray(x, dtype=float)
    if m <= 1:
        return x.copy()
    c = np.concatenate(([0.0], np.cumsum(x)))
    return (c[m:] - c[:-m]) / m


def segment_std(x, m):
    """RMS over non-overlapping ``m``-sample segments of the within-segment std."""
    x = np.asarray(x, dtype=float)
    k = x.size // m
    if k < 1:
        return float("nan"), 0
    seg = x[: k * m].reshape(k, m)
    return float(np.sqrt(np.mean(seg.var(axis=1)))), k


def log_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    good = (x > 0) & (y > 0) & np.isfinite(y)
    if good.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[good]), np.log(y[good]), 1)[0])


@dataclass
class DeviationCurves:
    """Standard deviation tables.

    ``acquisition``: (length [s], sigma, n_segments). ``windows``: (window
    [s], sigma). ``sigma_zero`` is the linear extrapolation to zero window.
    """

    acquisition: np.ndarray
    sigma_acq: np.ndarray
    n_segments: np.ndarray
    plateau: bool
    tail_slope: float
    windows: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma_win: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma_zero: float = float("nan")
    window_slope: float = float("nan")
    flags: list = field(default_factory=list)

    def deficit(self, window):
        """Relative loss ``1 - sigma(window) / sigma_zero`` at a tabulated window."""
        k = int(np.argmin(np.abs(self.windows - window)))
        return 1.0 - self.sigma_win[k] / self.sigma_zero


def deviation_curves(series, dt, acquisition_lengths, windows=None, reference_window=None):
    """Standard deviation versus acquisition time and versus averaging window.

    Parameters
    ----------
    series : ndarray or dict
        Samples spaced ``dt``. A dict ``{window: series}`` supplies series
        already processed with each averaging window (the first one is used
        for the acquisition table, or ``reference_window`` if given); a plain
        array is boxcar-smoothed internally for each requested window.
    dt : float
    acquisition_lengths : sequence of float
        Record lengths [s]. Lengths beyond the record are kept with NaN and
        flagged.
    windows : sequence of float, optional
        Averaging windows [s] for the window table (array input only).

    Returns
    -------
    DeviationCurves
    """
    flags = []
    if isinstance(series, dict):
        win_series = {float(k): np.asarray(v, dtype=float) for k, v in sorted(series.items())}
        key = reference_window if reference_window is not None else next(iter(win_series))
        base = win_series[float(key)]
    else:
        base = np.asarray(series, dtype=float)
        win_series = {}
        for w in windows or ():
            m = max(1, int(round(w / dt)))
            win_series[float(w)] = boxcar(base, m)
    lengths = np.asarray(sorted(acquisition_lengths), dtype=float)
    sig, nseg = [], []
    for L in lengths:
        m = int(round(L / dt))
        if m < 2 or m > base.size:
            flags.append(f"acquisition {L:g} s outside the {base.size * dt:g} s record")
            sig.append(np.nan)
            nseg.append(0)
            continue
        s, k = segment_std(base, m)
        sig.append(s)
        nseg.append(k)
    sig = np.array(sig)
    valid = np.isfinite(sig)
    tail = lengths[valid][len(lengths[valid]) // 2:]
    slope = log_slope(tail, sig[valid][len(lengths[valid]) // 2:]) if tail.size >= 2 else float("nan")
    plateau = bool(np.isfinite(slope) and slope < PLATEAU_SLOPE)
    out = DeviationCurves(lengths, sig, np.array(nseg), plateau, slope, flags=flags)
    if win_series:
        ws = np.array(list(win_series))
        sw = np.array([np.std(v) for v in win_series.values()])
        out.windows, out.sigma_win = ws, sw
        if ws.size >= 2:
            b, a = np.polyfit(ws, sw, 1)
            out.sigma_zero, out.window_slope = float(a), float(b)
        else:
            flags.append("need two windows for the zero-window extrapolation")
    return out


# ---------------------------------------------------------------------------
# Allan deviation

def allan_deviation(series, dt, tau, overlapping=False):
    """Two-sample (Allan) deviation of ``series`` at averaging time ``tau``.

    ``overlapping=False`` uses adjacent non-overlapping blocks; ``True``
    uses every start index.
    """
    x = np.asarray(series, dtype=float)
    m = int(round(tau / dt))
    if m < 2:
        raise ValueError("tau must be at least two samples")
    if x.size < 2 * m:
        raise ValueError(f"need at least {2 * m} samples for tau = {tau:g} s")
    if overlapping:
        means = boxcar(x, m)
        d = means[m:] - means[:-m]
    else:
        k = x.size // m
        means = x[: k * m].reshape(k, m).mean(axis=1)
        d = np.diff(means)
    return float(np.sqrt(0.5 * np.mean(d * d)))


@dataclass
class AllanTable:
    tau: np.ndarray
    adev: np.ndarray
    adev_overlapping: np.ndarray
    windowed_std: np.ndarray


def allan_table(series, dt, taus):
    """Allan deviations (both variants) next to the windowed standard deviation."""
    taus = np.asarray(taus, dtype=float)
    a, ao, ws = [], [], []
    for t in taus:
        a.append(allan_deviation(series, dt, t))
        ao.append(allan_deviation(series, dt, t, overlapping=True))
        ws.append(segment_std(series, int(round(t / dt)))[0])
    return AllanTable(taus, np.array(a), np.array(ao), np.array(ws))


# ---------------------------------------------------------------------------
# sqrt(n) law

@dataclass
class SigmaLaw:
    prefactor: float
    ci_low: float
    ci_high: float
    free_slope: float
    free_slope_err: float
    residuals: np.ndarray
    residual_trend: float


def sigma_vs_n(n_mean, sigma, confidence=0.95):
    """Fit ``sigma = c sqrt(n)`` in log-log space.

    Returns the prefactor with a Student-t confidence interval, the free
    log-log slope as a check, and the slope of the residuals against
    ``log n`` (a crossover would show up as a trend).
    """
    n = np.asarray(n_mean, dtype=float)
    s = np.asarray(sigma, dtype=float)
    if n.size < 3:
        raise ValueError("need at least three temperatures")
    if np.any(n <= 0) or np.any(s <= 0):
        raise ValueError("populations and deviations must be positive for a log-log fit")
    if not (n.min() < 1.0 < n.max()):
        warnings.warn("populations do not bracket n = 1", RuntimeWarning)
    ln, ls = np.log(n), np.log(s)
    d = ls - 0.5 * ln
    logc = float(d.mean())
    resid = d - logc
    k = n.size
    se = float(d.std(ddof=1)) / math.sqrt(k) if k > 1 else float("nan")
    q = stats.t.ppf(0.5 + confidence / 2.0, k - 1)
    coef, cov = np.polyfit(ln, ls, 1, cov=True) if k > 3 else (np.polyfit(ln, ls, 1), None)
    slope_err = float(math.sqrt(cov[0, 0])) if cov is not None else float("nan")
    trend = float(np.polyfit(ln, resid, 1)[0])
    return SigmaLaw(math.exp(logc), math.exp(logc - q * se), math.exp(logc + q * se),
                    float(coef[0]), slope_err, resid, trend)
