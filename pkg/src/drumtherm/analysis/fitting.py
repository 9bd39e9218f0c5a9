"""
Sliding-window averaging and batched Lorentzian least squares.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..spectral_sim import FrameSet, SpectrumFrame

PARAMS = ("area", "width", "center", "background")


def sliding_average(frames, window, stride=None):
    """Trailing boxcar average of the PSDs, weighted by ``n_averages``.

    Parameters
    ----------
    frames : FrameSet
    window : float
        Averaging window [s]; must be at least one frame interval.
    stride : float, optional
        Spacing of the emitted windows [s]. Default one frame interval
        (fully overlapping windows).

    Returns
    -------
    FrameSet
        One frame per full window, time-stamped at the window's last frame,
        with ``n_averages`` summed over the window.
    """
    n = len(frames)
    dt = frames.frame_dt if n > 1 else window
    if not window >= dt * (1 - 1e-9):
        raise ValueError("window must be >= frame_dt")
    m = int(round(window / dt))
    if m > n:
        raise ValueError(f"window of {m} frames exceeds the {n}-frame acquisition")
    step = 1 if stride is None else max(1, int(round(stride / dt)))
    ends = np.arange(m - 1, n, step)
    T = None
    if m == 1:
        psd = frames.psd[ends].copy()
        navg = frames.n_averages[ends].copy()
        if frames.T is not None:
            T = frames.T[ends].copy()
    else:
        w = frames.n_averages.astype(float)
        csum = np.zeros((n + 1, frames.n_bins))
        np.cumsum(frames.psd * w[:, None], axis=0, out=csum[1:])
        wsum = np.concatenate(([0.0], np.cumsum(w)))
        tot = wsum[ends + 1] - wsum[ends + 1 - m]
        psd = (csum[ends + 1] - csum[ends + 1 - m]) / tot[:, None]
        np.maximum(psd, 0.0, out=psd)  # cumsum round-off
        icum = np.concatenate(([0], np.cumsum(frames.n_averages)))
        navg = icum[ends + 1] - icum[ends + 1 - m]
        if frames.T is not None:
            tc = np.concatenate(([0.0], np.cumsum(frames.T)))
            T = (tc[ends + 1] - tc[ends + 1 - m]) / m
    meta = dict(frames.meta, window=float(m * dt))
    return FrameSet(frames.t[ends], psd, navg, frames.f_start, frames.f_step, meta, T)


@dataclass
class FitResult:
    """Background + Lorentzian fit of one frame.

    ``width`` is the FWHM and ``center`` the peak position, both in Hz;
    ``area`` is in photons/s and ``background`` in photons/s/Hz.
    """

    area: float
    width: float
    center: float
    background: float
    area_err: float
    width_err: float
    center_err: float
    background_err: float
    converged: bool
    residual_rms: float
    chi2_red: float = float("nan")
    n_iter: int = 0


@dataclass
class FitBatch:
    """Vectorised :class:`FitResult` (one entry per frame)."""

    area: np.ndarray
    width: np.ndarray
    center: np.ndarray
    background: np.ndarray
    area_err: np.ndarray
    width_err: np.ndarray
    center_err: np.ndarray
    background_err: np.ndarray
    converged: np.ndarray
    residual_rms: np.ndarray
    chi2_red: np.ndarray
    n_iter: np.ndarray

    def __len__(self):
        return self.area.size

    def __getitem__(self, k):
        return FitResult(*(getattr(self, f.name)[k].item() for f in fields(self)))

    @classmethod
    def concat(cls, batches):
        return cls(*(np.concatenate([getattr(b, f.name) for b in batches]) for f in fields(cls)))


def lorentzian_model(f, p):
    """Model and Jacobian for parameter rows ``p = (area, fwhm, center, bg)``."""
    A, w, c, b = (p[:, i:i + 1] for i in range(4))
    h = 0.5 * w
    u = f[None, :] - c
    D = u * u + h * h
    model = b + A / np.pi * h / D
    J = np.empty(model.shape + (4,))
    J[..., 0] = h / (np.pi * D)
    J[..., 1] = A / (2.0 * np.pi) * (u * u - h * h) / (D * D)
    J[..., 2] = A / np.pi * 2.0 * h * u / (D * D)
    J[..., 3] = 1.0
    return model, J


def initial_guess(f, psd, smooth=5):
    """Moment-based starting point for each row of ``psd``.

    Edge median -> background, maximum of a ``smooth``-bin running mean ->
    center (lowest frequency on ties), bins above half maximum -> width,
    sum -> area.
    """
    df = f[1] - f[0]
    nb = f.size
    sm = _running_mean(psd, smooth)
    edge = max(4, nb // 10)
    bg = np.median(np.concatenate([psd[:, :edge], psd[:, -edge:]], axis=1), axis=1)
    k = np.argmax(sm, axis=1)
    center = f[k]
    height = sm[np.arange(psd.shape[0]), k] - bg
    above = (sm - bg[:, None]) >= 0.5 * height[:, None]
    width = np.clip(above.sum(axis=1), 2, nb // 2) * df
    area = (psd - bg[:, None]).sum(axis=1) * df
    fallback = 0.5 * np.pi * height * width
    area = np.where(area > 0, area, np.maximum(fallback, 0.0))
    return np.column_stack([area, width, center, bg])


def _running_mean(x, k):
    c = np.cumsum(np.pad(x, ((0, 0), (k // 2 + 1, k // 2)), mode="edge"), axis=1)
    return (c[:, k:] - c[:, :-k]) / k


def _pin(H, g, fixed):
    """Freeze the width (column 1) of the rows flagged in ``fixed``."""
    if fixed is None or not fixed.any():
        return H, g
    H, g = H.copy(), g.copy()
    H[fixed, 1, :] = 0.0
    H[fixed, :, 1] = 0.0
    H[fixed, 1, 1] = 1.0
    g[fixed, 1] = 0.0
    return H, g


def _lm(f, y, sigma, p, width_bounds, max_iter, tol, fixed=None):
    n, nb = y.shape
    lam = np.full(n, 1e-3)
    active = np.ones(n, bool)
    converged = np.zeros(n, bool)
    n_iter = np.zeros(n, int)
    with np.errstate(over="ignore", invalid="ignore"):
        model, J = lorentzian_model(f, p)
    r = (y - model) / sigma
    chi2 = np.einsum("ij,ij->i", r, r)
    scale = np.column_stack([np.maximum(np.abs(p[:, 0]), 1e-300), np.full(n, f[1] - f[0]),
                             np.full(n, f[1] - f[0]), np.maximum(np.abs(p[:, 3]), 1e-300)])
    for it in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Jw = J[idx] / sigma[idx, :, None]
        H = np.matmul(Jw.transpose(0, 2, 1), Jw)
        g = np.matmul(Jw.transpose(0, 2, 1), r[idx][..., None])[..., 0]
        H, g = _pin(H, g, None if fixed is None else fixed[idx])
        diag = np.einsum("kii->ki", H)
        A = H + (lam[idx, None] * np.maximum(diag, 1e-300))[:, :, None] * np.eye(4)
        try:
            step = np.linalg.solve(A, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(a, b, rcond=None)[0] for a, b in zip(A, g)])
        p_new = p[idx] + step
        p_new[:, 1] = np.clip(p_new[:, 1], *width_bounds)
        with np.errstate(over="ignore", invalid="ignore"):
            # wild trial steps are rejected below
            m_new, J_new = lorentzian_model(f, p_new)
        r_new = (y[idx] - m_new) / sigma[idx]
        chi2_new = np.einsum("ij,ij->i", r_new, r_new)
        ok = np.isfinite(chi2_new) & (chi2_new <= chi2[idx])
        acc = idx[ok]
        real_step = p_new[ok] - p[acc]
        p[acc] = p_new[ok]
        J[acc] = J_new[ok]
        r[acc] = r_new[ok]
        chi2[acc] = chi2_new[ok]
        lam[acc] = np.maximum(lam[acc] / 10.0, 1e-12)
        lam[idx[~ok]] *= 10.0
        n_iter[idx] += 1
        rel = np.max(np.abs(real_step) / np.maximum(np.abs(p[acc]), scale[acc]), axis=1)
        done = rel < tol
        converged[acc[done]] = True
        active[acc[done]] = False
        # no decrease possible any more: treat as converged at a minimum
        stuck = idx[~ok][lam[idx[~ok]] > 1e12]
        converged[stuck] = True
        active[stuck] = False
    return p, J, r, chi2, converged, n_iter


def fit_lorentzians(f_grid, psd, n_averages=None, weighting="gamma", max_iter=200,
                    tol=1e-8, p0=None, chunk=1024, fixed_width=None) -> FitBatch:
    """Fit background + Lorentzian to every row of ``psd``.

    Levenberg-Marquardt with an analytic Jacobian, vectorised over rows.
    The first pass uses uniform weights; with ``weighting="gamma"`` the fit
    is repeated once with per-bin ``sigma = model / sqrt(n_averages)``.
    Uncertainties come from the unscaled covariance for the gamma weights
    and from the covariance scaled by the reduced chi-square otherwise.

    A fit is flagged non-converged when it hits ``max_iter``, ends with the
    width pinned at one of its bounds ``[f_step / 10, span]`` or puts the
    center outside the band.

    ``fixed_width`` (scalar or one value per row, NaN = free) holds the FWHM
    at the given value [Hz]; its reported uncertainty is then zero.
    """
    f = np.asarray(f_grid, dtype=float)
    psd = np.atleast_2d(np.asarray(psd, dtype=float))
    n = psd.shape[0]
    navg = np.ones(n) if n_averages is None else np.broadcast_to(
        np.asarray(n_averages, dtype=float), (n,))
    if weighting not in ("gamma", "uniform"):
        raise ValueError("weighting must be 'gamma' or 'uniform'")
    fw = np.full(n, np.nan) if fixed_width is None else np.broadcast_to(
        np.asarray(fixed_width, dtype=float), (n,))
    out = []
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        start = None if p0 is None else np.atleast_2d(p0)[lo:hi]
        out.append(_fit_block(f, psd[lo:hi], navg[lo:hi], weighting, max_iter, tol, start,
                              fw[lo:hi]))
    return FitBatch.concat(out)


def _fit_block(f, y, navg, weighting, max_iter, tol, p0, fixed_width):
    n, nb = y.shape
    df = f[1] - f[0]
    bounds = (0.1 * df, f[-1] - f[0] + df)
    p = initial_guess(f, y) if p0 is None else np.array(p0, dtype=float, copy=True)
    fixed = np.isfinite(fixed_width)
    p[fixed, 1] = fixed_width[fixed]
    p[:, 1] = np.clip(p[:, 1], *bounds)
    sigma = np.ones_like(y)
    p, J, r, chi2, conv, n_iter = _lm(f, y, sigma, p, bounds, max_iter, tol, fixed)
    if weighting == "gamma":
        with np.errstate(over="ignore", invalid="ignore"):
            model, _ = lorentzian_model(f, p)
        sigma = np.maximum(model, 1e-300) / np.sqrt(navg)[:, None]
        p, J, r, chi2, conv2, it2 = _lm(f, y, sigma, p, bounds, max_iter, tol, fixed)
        conv, n_iter = conv2, n_iter + it2
    with np.errstate(over="ignore", invalid="ignore"):
        Jw = J / sigma[..., None]
    H = np.matmul(Jw.transpose(0, 2, 1), Jw)
    H, _ = _pin(H, np.zeros((n, 4)), fixed)
    dof = np.maximum(nb - 4 + fixed.astype(int), 1)
    chi2_red = chi2 / dof
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = np.full(H.shape, np.nan)
        good = np.isfinite(H).all(axis=(1, 2)) & (np.abs(np.linalg.det(H)) > 0)
        if good.any():
            cov[good] = np.linalg.inv(H[good])
        err = np.sqrt(np.abs(np.einsum("kii->ki", cov)))
    if weighting == "uniform":
        err = err * np.sqrt(chi2_red)[:, None]
    err[fixed, 1] = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        # runaway rows end up non-finite and are flagged below
        model, _ = lorentzian_model(f, p)
    resid_rms = np.sqrt(np.mean((y - model) ** 2, axis=1))
    pinned = ((p[:, 1] <= bounds[0] * (1 + 1e-12)) | (p[:, 1] >= bounds[1] * (1 - 1e-12))) & ~fixed
    in_band = (p[:, 2] >= f[0]) & (p[:, 2] <= f[-1])
    conv = conv & ~pinned & in_band & np.isfinite(err).all(axis=1) & (p[:, 1] > 0)
    return FitBatch(p[:, 0], p[:, 1], p[:, 2], p[:, 3], err[:, 0], err[:, 1], err[:, 2],
                    err[:, 3], conv, resid_rms, chi2_red, n_iter)


def track_centers(frames, window):
    """Peak position at every frame time from sliding-window fits [Hz].

    Each window's fitted center is assigned to the window midpoint and
    linearly interpolated (held at the ends) onto the frame times. Windows
    whose fit did not converge, lies off the grid or has a center
    uncertainty above a quarter linewidth are skipped.
    """
    avg = sliding_average(frames, window)
    fits = fit_frames(avg)
    f = frames.f_grid
    with np.errstate(invalid="ignore"):
        ok = (fits.converged & (fits.center > f[0]) & (fits.center < f[-1])
              & (fits.center_err < 0.25 * fits.width))
    if not ok.any():
        raise ValueError("no window could be fitted for center tracking")
    dt = frames.frame_dt if len(frames) > 1 else 0.0
    t_mid = avg.t - 0.5 * (avg.meta["window"] - dt)
    return np.interp(frames.t, t_mid[ok], fits.center[ok])


def aligned_average(frames, centers, reference=None):
    """Average of all frames after shifting each peak onto ``reference``.

    Shifts are whole bins so no interpolation smoothing enters the bin
    statistics; bins pushed past an edge repeat the edge value.

    Parameters
    ----------
    frames : FrameSet
    centers : array_like
        Peak position of each frame [Hz], e.g. from :func:`track_centers`.
    reference : float, optional
        Target position; defaults to the ``n_averages``-weighted mean center.

    Returns
    -------
    FrameSet
        A single frame stamped at the last frame time.
    """
    centers = np.asarray(centers, dtype=float)
    if centers.shape != (len(frames),):
        raise ValueError("need one center per frame")
    w = frames.n_averages.astype(float)
    if reference is None:
        reference = float(np.sum(w * centers) / np.sum(w))
    shift = np.rint((centers - reference) / frames.f_step).astype(int)
    j = np.clip(np.arange(frames.n_bins)[None, :] + shift[:, None], 0, frames.n_bins - 1)
    psd = np.take_along_axis(frames.psd, j, axis=1)
    mean = (w[:, None] * psd).sum(axis=0) / w.sum()
    T = None if frames.T is None else np.array([np.mean(frames.T)])
    meta = dict(frames.meta, window=float(len(frames) * (frames.frame_dt if len(frames) > 1 else 1.0)),
                aligned_to=reference)
    return FrameSet(frames.t[-1:], mean[None, :], np.array([frames.n_averages.sum()]),
                    frames.f_start, frames.f_step, meta, T)


def fit_lorentzian(frame, **kwargs) -> FitResult:
    """Fit one :class:`SpectrumFrame`; see :func:`fit_lorentzians`."""
    return fit_lorentzians(frame.f_grid, frame.psd[None, :], [frame.n_averages], **kwargs)[0]


def fit_frames(frames, **kwargs) -> FitBatch:
    """Fit every frame of a :class:`FrameSet`."""
    if isinstance(frames, SpectrumFrame):
        frames = FrameSet.from_frames([frames])
    return fit_lorentzians(frames.f_grid, frames.psd, frames.n_averages, **kwargs)
