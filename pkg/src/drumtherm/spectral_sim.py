"""
Forward measurement model: bath state -> averaged sideband power spectra.

Frequencies on the spectrum grid are in Hz, measured from the high-temperature
mechanical frequency ``omega_m0 / 2 pi`` (the demodulated band). PSDs are
photon-flux densities in photons/s/Hz.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .bath import (BathParams, BathState, BathStreams, bath_trajectory,
                   mechanical_damping_mean, tls_frequency_shift)
from .constants import TWO_PI
from .errors import ConfigError
from .optomech import (NoiseBudget, PumpConfig, Scheme, SystemParams, bose_occupation,
                       gamma_opt, optical_spring_shift, sideband_observables)

MIN_BINS = 64


@dataclass
class SpectrumFrame:
    """One time-stamped averaged power spectrum."""

    t: float
    f_start: float
    f_step: float
    psd: np.ndarray
    n_averages: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.psd = np.asarray(self.psd, dtype=float)
        if self.psd.ndim != 1 or self.psd.size < MIN_BINS:
            raise ValueError(f"a frame needs at least {MIN_BINS} bins")
        if not self.f_step > 0:
            raise ValueError("f_step must be > 0")
        if self.n_averages < 1:
            raise ValueError("n_averages must be >= 1")
        if np.any(self.psd < 0):
            raise ValueError("psd must be non-negative")

    @property
    def n_bins(self):
        return self.psd.size

    @property
    def f_grid(self):
        return self.f_start + self.f_step * np.arange(self.n_bins)


@dataclass
class FrameSet:
    """A stack of frames sharing one grid, stored as arrays.

    Attributes
    ----------
    t : ndarray, shape (n_frames,)
    psd : ndarray, shape (n_frames, n_bins)
    n_averages : ndarray of int, shape (n_frames,)
    f_start, f_step : float
        Grid in Hz.
    meta : dict
        Scheme, n_cav and any other run metadata.
    T : ndarray or None
        Cryostat temperature at each frame, when known.
    """

    t: np.ndarray
    psd: np.ndarray
    n_averages: np.ndarray
    f_start: float
    f_step: float
    meta: dict = field(default_factory=dict)
    T: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.psd = np.atleast_2d(np.asarray(self.psd, dtype=float))
        self.n_averages = np.asarray(self.n_averages, dtype=np.int64).reshape(-1)
        if self.psd.shape[0] != self.t.size or self.n_averages.size != self.t.size:
            raise ValueError("t, psd and n_averages disagree on the number of frames")
        if self.psd.shape[1] < MIN_BINS:
            raise ValueError(f"frames need at least {MIN_BINS} bins")

    def __len__(self):
        return self.t.size

    def __iter__(self) -> Iterator[SpectrumFrame]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k):
        meta = dict(self.meta)
        if self.T is not None:
            meta["T_cryo"] = float(self.T[k])
        return SpectrumFrame(float(self.t[k]), self.f_start, self.f_step, self.psd[k],
                             int(self.n_averages[k]), meta)

    @property
    def n_bins(self):
        return self.psd.shape[1]

    @property
    def f_grid(self):
        return self.f_start + self.f_step * np.arange(self.n_bins)

    @property
    def frame_dt(self):
        if len(self) < 2:
            return float("nan")
        return float(self.t[1] - self.t[0])

    @classmethod
    def from_frames(cls, frames, meta=None):
        frames = list(frames)
        if not frames:
            raise ValueError("no frames")
        f0 = frames[0]
        for fr in frames:
            if fr.n_bins != f0.n_bins or fr.f_start != f0.f_start or fr.f_step != f0.f_step:
                raise ValueError("frames do not share a grid")
        return cls(np.array([f.t for f in frames]), np.stack([f.psd for f in frames]),
                   np.array([f.n_averages for f in frames]), f0.f_start, f0.f_step,
                   dict(f0.meta if meta is None else meta))


# ---------------------------------------------------------------------------
# schedule and grid

@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear cryostat temperature ``T(t)`` through ``(t, T)`` knots."""

    knots: tuple

    def __post_init__(self):
        knots = tuple((float(t), float(T)) for t, T in self.knots)
        if not knots:
            raise ConfigError("temperature schedule is empty")
        ts = [k[0] for k in knots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("schedule times must be strictly increasing")
        if any(not T > 0 for _, T in knots):
            raise ConfigError("schedule temperatures must be > 0")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, T, duration=float("inf")):
        if math.isinf(duration):
            return cls(((0.0, T), (float("inf"), T)))
        return cls(((0.0, T), (duration, T)))

    @classmethod
    def parse(cls, text):
        """Parse ``"t0:T0, t1:T1, ..."`` (seconds, kelvin)."""
        knots = []
        for item in str(text).replace(";", ",").split(","):
            item = item.strip()
            if not item:
                continue
            try:
                t, T = item.split(":")
                knots.append((float(t), float(T)))
            except ValueError as exc:
                raise ConfigError(f"bad schedule knot {item!r}; expected t:T") from exc
        return cls(tuple(knots))

    def format(self):
        return ", ".join(f"{t!r}:{T!r}" for t, T in self.knots)

    def check_covers(self, duration):
        t_first, t_last = self.knots[0][0], self.knots[-1][0]
        if t_first > 0 or t_last < duration:
            raise ConfigError(
                f"schedule covers [{t_first}, {t_last}] s but the run needs [0, {duration}] s")

    def __call__(self, t):
        ts = np.array([k[0] for k in self.knots])
        Ts = np.array([k[1] for k in self.knots])
        t = np.asarray(t, dtype=float)
        if np.any(t < ts[0]) or np.any(t > ts[-1]):
            raise ConfigError("time outside the temperature schedule")
        finite = np.isfinite(ts)
        # np.interp holds the last value past a trailing infinite knot
        out = np.interp(t, ts[finite], Ts[finite])
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class GridSpec:
    """Demodulated frequency band.

    Either ``span`` [Hz] or ``span_linewidths`` (total span in units of the
    intrinsic linewidth ``Gm / 2 pi``) sets the width; ``center`` [Hz]
    defaults to the nominal peak position. The default of 512 bins over
    +-20 linewidths keeps more than ten bins across the narrowest peak.
    """

    n_bins: int = 512
    span_linewidths: float = 40.0
    span: float | None = None
    center: float | None = None

    def __post_init__(self):
        if self.n_bins < MIN_BINS:
            raise ConfigError(f"n_bins must be >= {MIN_BINS}")
        if self.span is not None and not self.span > 0:
            raise ConfigError("span must be > 0")
        if not self.span_linewidths > 0:
            raise ConfigError("span_linewidths must be > 0")

    def resolve(self, center_hz, gamma_m):
        """Return ``(f_start, f_step)`` in Hz."""
        span = self.span if self.span is not None else self.span_linewidths * gamma_m / TWO_PI
        center = self.center if self.center is not None else center_hz
        step = span / self.n_bins
        return center - 0.5 * span, step


def nominal_center(T, pump, sys, bath):
    """Expected peak position [Hz from omega_m0/2pi] without drift."""
    return (tls_frequency_shift(T, sys.omega_m0, bath) + optical_spring_shift(pump, sys)) / TWO_PI


# ---------------------------------------------------------------------------
# frames

def lorentzian_psd(f, area, fwhm, center, background):
    """``bg + (A/pi) (w/2) / ((f - c)^2 + (w/2)^2)``, broadcasting over leading axes."""
    hw = 0.5 * np.asarray(fwhm)[..., None]
    return (np.asarray(background)[..., None]
            + np.asarray(area)[..., None] / np.pi * hw / ((f - np.asarray(center)[..., None]) ** 2 + hw ** 2))


def frame_expectation(state, pump, sys, noise, f_grid):
    """Mean PSD of one frame for the bath ``state``.

    Background plus a Lorentzian whose area and FWHM follow the sideband
    relations, centered at the drifting mechanical frequency plus the
    optical spring. Vectorised when ``state`` fields are arrays.
    """
    f_grid = np.asarray(f_grid, dtype=float)
    n_cav = pump.photons(sys)
    if n_cav == 0:
        shape = np.shape(state.n_inst) + f_grid.shape
        return np.full(shape, float(noise.amplifier_background))
    area, width, _ = sideband_observables(state.n_inst, pump, sys, noise, state.gamma_m_inst)
    center = (np.asarray(state.omega_m_inst) - sys.omega_m0 + optical_spring_shift(pump, sys)) / TWO_PI
    bg = np.full(np.shape(area), float(noise.amplifier_background))
    out = lorentzian_psd(f_grid, area, np.asarray(width) / TWO_PI, center, bg)
    return out


def sample_psd(mean_psd, n_averages, rng):
    """Averaged-periodogram noise: Gamma(shape=n_averages, mean=mean_psd) per bin."""
    mean_psd = np.asarray(mean_psd, dtype=float)
    if n_averages < 1:
        raise ValueError("n_averages must be >= 1")
    return rng.standard_gamma(float(n_averages), size=mean_psd.shape) * (mean_psd / n_averages)


def sample_frame(mean_psd, n_averages, seed=None, t=0.0, f_start=0.0, f_step=1.0, meta=None):
    """Draw one noisy frame around ``mean_psd``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    psd = sample_psd(mean_psd, n_averages, rng)
    return SpectrumFrame(t, f_start, f_step, psd, int(n_averages), dict(meta or {}))


# ---------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class Scenario:
    """A complete simulated acquisition."""

    duration: float
    frame_dt: float
    schedule: Schedule
    pump: PumpConfig
    sys: SystemParams
    bath: BathParams = BathParams()
    noise: NoiseBudget = NoiseBudget()
    grid: GridSpec = GridSpec()
    n_averages: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.frame_dt > 0:
            raise ConfigError("frame_dt must be > 0")
        if self.duration < self.frame_dt:
            raise ConfigError("duration must be >= frame_dt")
        if self.n_averages < 1:
            raise ConfigError("n_averages must be >= 1")
        self.schedule.check_covers(self.duration)

    @property
    def n_frames(self):
        return int(round(self.duration / self.frame_dt))

    def with_(self, **changes):
        return replace(self, **changes)


def _streams(seed):
    bath_ss, sample_ss = np.random.SeedSequence(seed).spawn(2)
    return BathStreams.from_seed(bath_ss), np.random.default_rng(sample_ss)


def scenario_grid(sc):
    T0 = sc.schedule(0.0)
    gm = mechanical_damping_mean(T0, sc.sys, sc.bath)
    f_start, f_step = sc.grid.resolve(nominal_center(T0, sc.pump, sc.sys, sc.bath), gm)
    return f_start, f_step, f_start + f_step * np.arange(sc.grid.n_bins)


def _check_drift(center_hz, f_grid):
    span = f_grid[-1] - f_grid[0]
    mid = 0.5 * (f_grid[-1] + f_grid[0])
    drift = np.max(np.abs(np.asarray(center_hz) - mid))
    if drift > 0.25 * span:
        warnings.warn(f"peak drifted {drift:.1f} Hz from the grid center "
                      f"(more than 25% of the {span:.1f} Hz span)", RuntimeWarning)


def run_scenario(sc, chunk=1024) -> Iterator[SpectrumFrame]:
    """Stream the frames of a scenario in time order.

    Bath evolution is sequential; bin sampling is done ``chunk`` frames at a
    time, drawing from one dedicated stream so the output does not depend
    on ``chunk``.
    """
    for block in _blocks(sc, chunk):
        yield from block


def simulate_blocks(sc, chunk=1024, truth=None) -> Iterator[FrameSet]:
    """Stream a scenario as :class:`FrameSet` blocks of up to ``chunk`` frames.

    When ``truth`` is a dict, the bath trajectory is stored under
    ``truth["trajectory"]`` before the first block is produced.
    """
    yield from _blocks(sc, chunk, truth)


def simulate_frames(sc, chunk=1024, with_truth=False):
    """Whole scenario as a :class:`FrameSet`.

    With ``with_truth=True`` also returns the underlying
    :class:`~drumtherm.bath.BathTrajectory`.
    """
    truth = {}
    fs = _collect(list(_blocks(sc, chunk, truth)))
    return (fs, truth["trajectory"]) if with_truth else fs


def scenario_meta(sc):
    return {"scheme": sc.pump.scheme.value, "n_cav": float(sc.pump.photons(sc.sys)),
            "omega_m0": float(sc.sys.omega_m0), "frame_dt": float(sc.frame_dt),
            "seed": int(sc.seed)}


def _trajectory(sc, bath_streams):
    t = sc.frame_dt * np.arange(sc.n_frames)
    T = np.asarray(sc.schedule(t), dtype=float)
    return bath_trajectory(T, sc.frame_dt, sc.sys, sc.bath, bath_streams)


def _blocks(sc, chunk, truth=None, traj=None, sample_rng=None):
    bath_streams, rng = _streams(sc.seed)
    sample_rng = rng if sample_rng is None else sample_rng
    if traj is None:
        traj = _trajectory(sc, bath_streams)
    if truth is not None:
        truth["trajectory"] = traj
    n = sc.n_frames
    t, T = traj.t, traj.T
    f_start, f_step, f_grid = scenario_grid(sc)
    spring = optical_spring_shift(sc.pump, sc.sys)
    _check_drift((traj.omega_m - sc.sys.omega_m0 + spring) / TWO_PI, f_grid)
    meta = scenario_meta(sc)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        state = BathState(traj.t[lo:hi], traj.n_inst[lo:hi], traj.omega_m[lo:hi],
                          traj.gamma_m[lo:hi])
        mean = frame_expectation(state, sc.pump, sc.sys, sc.noise, f_grid)
        mean = np.broadcast_to(mean, (hi - lo, f_grid.size))
        psd = sample_psd(mean, sc.n_averages, sample_rng)
        yield FrameSet(t[lo:hi], psd, np.full(hi - lo, sc.n_averages), f_start, f_step,
                       dict(meta), T[lo:hi])


def _collect(blocks):
    return FrameSet(np.concatenate([b.t for b in blocks]), np.concatenate([b.psd for b in blocks]),
                    np.concatenate([b.n_averages for b in blocks]), blocks[0].f_start,
                    blocks[0].f_step, dict(blocks[0].meta),
                    np.concatenate([b.T for b in blocks]))


def simulate_pair(sc, schemes=(Scheme.BLUE, Scheme.RED), chunk=1024, with_truth=False):
    """Both sidebands of one bath realisation.

    Models a pump alternated between the sidebands faster than the bath
    evolves: every scheme sees the same trajectory, with independent
    detection noise. ``sc.pump`` supplies the drive; its scheme is replaced.

    Returns
    -------
    dict
        ``{Scheme: FrameSet}``, plus the trajectory when ``with_truth``.
    """
    bath_streams, _ = _streams(sc.seed)
    traj = _trajectory(sc, bath_streams)
    schemes = [Scheme.parse(x) for x in schemes]
    rngs = [np.random.default_rng(ss) for ss in
            np.random.SeedSequence([sc.seed, 1]).spawn(len(schemes))]
    out = {}
    for scheme, rng in zip(schemes, rngs):
        sub = sc.with_(pump=replace(sc.pump, scheme=scheme))
        out[scheme] = _collect(list(_blocks(sub, chunk, traj=traj, sample_rng=rng)))
    return (out, traj) if with_truth else out


def static_state(T, sys, bath, t=0.0):
    """Noise-free bath state at temperature ``T``."""
    return BathState(t, bose_occupation(T, sys.omega_m0),
                     sys.omega_m0 + tls_frequency_shift(T, sys.omega_m0, bath),
                     mechanical_damping_mean(T, sys, bath))


def simulate_power_sweep(sys, bath, noise, T, n_cavs, schemes=(Scheme.BLUE, Scheme.RED),
                         n_averages=100_000_000, seed=0, grid=None):
    """Long-averaged frames at a static bath for each (scheme, n_cav).

    Returns ``{(scheme, n_cav): SpectrumFrame}``. The default grid spans 20
    intrinsic linewidths or 12 loaded linewidths, whichever is wider.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    state = static_state(T, sys, bath)
    out = {}
    for scheme in schemes:
        scheme = Scheme.parse(scheme)
        for n_cav in n_cavs:
            pump = PumpConfig(scheme, n_cav=float(n_cav))
            width = state.gamma_m_inst + scheme.sign * gamma_opt(n_cav, sys)
            g = grid or GridSpec(span=max(20.0 * state.gamma_m_inst, 12.0 * width) / TWO_PI)
            center = nominal_center(T, pump, sys, bath)
            f_start, f_step = g.resolve(center, state.gamma_m_inst)
            f_grid = f_start + f_step * np.arange(g.n_bins)
            mean = frame_expectation(state, pump, sys, noise, f_grid)
            meta = {"scheme": scheme.value, "n_cav": float(n_cav), "T_cryo": float(T)}
            out[(scheme, float(n_cav))] = sample_frame(mean, n_averages, rng, 0.0, f_start,
                                                       f_step, meta)
    return out
