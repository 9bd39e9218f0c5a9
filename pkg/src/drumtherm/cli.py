"""
Command-line interface: ``drumtherm simulate|calibrate|analyze|thermal|report``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.
Every output is a deterministic function of (inputs, config, seed).
"""
from __future__ import annotations

import argparse
import glob
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .analysis import (CalibrationResult, analyze_frames, asymmetry_from_frames,
                       calibrate_power_sweep, fit_frames, fluctuation_stats, sliding_average)
from .bath import mechanical_damping_mean, tls_frequency_shift
from .config import PRESETS, RunConfig, load_config, parse_config
from .constants import TWO_PI
from .errors import ConfigError, DataError, NumericalError, SelfOscillationError
from .io import (FrameWriter, load_calibration, read_frames, read_json, read_table,
                 save_calibration, write_json, write_table)
from .optomech import Scheme, bose_occupation
from .spectral_sim import scenario_grid, simulate_blocks, simulate_pair, simulate_power_sweep
from .thermal import BUDGET_COLUMNS, thermal_budget

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

MANIFEST = "manifest.ini"
CALIBRATION = "calibration.json"
SUMMARY = "summary.json"
TRUTH = "truth.txt"
BUDGET = "thermal_budget.txt"


def _say(msg):
    print(msg, flush=True)


def _container(out, scheme):
    return os.path.join(out, f"frames_{Scheme.parse(scheme).value}.sbth")


def _write_manifest(out, cfg: RunConfig, name=MANIFEST):
    from .io import atomic_open

    with atomic_open(os.path.join(out, name), "w") as fh:
        fh.write(cfg.to_text())


def _truth_columns(traj, omega_m0):
    return {"t": traj.t, "T": traj.T, "n_th": traj.n_th, "n_inst": traj.n_inst,
            "f_shift": (traj.omega_m - omega_m0) / TWO_PI, "gamma_m": traj.gamma_m / TWO_PI}


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(cfg: RunConfig, out):
    """Simulate the configured acquisition(s) into SBTH containers.

    One scheme streams straight to disk; several schemes share one bath
    realisation (interleaved pumping).
    """
    cfg.require_seed()
    schemes = cfg.schemes()
    sc = cfg.scenario(schemes[0])
    f_start, f_step, _ = scenario_grid(sc)
    sched = cfg["scenario"]["schedule"]
    paths = []
    if len(schemes) == 1:
        truth = {}
        meta = None
        writer = None
        for block in simulate_blocks(sc, truth=truth):
            if writer is None:
                meta = dict(block.meta, schedule=sched)
                writer = FrameWriter(_container(out, schemes[0]), block.n_bins, f_start, f_step,
                                     meta).__enter__()
            writer.write(block)
        writer.__exit__(None, None, None)
        paths.append(writer.path)
        traj = truth["trajectory"]
    else:
        pair, traj = simulate_pair(sc, schemes, with_truth=True)
        for scheme, fs in pair.items():
            path = _container(out, scheme)
            with FrameWriter(path, fs.n_bins, fs.f_start, fs.f_step,
                             dict(fs.meta, schedule=sched, interleaved=True)) as w:
                w.write(fs)
            paths.append(path)
    write_table(os.path.join(out, TRUTH), _truth_columns(traj, sc.sys.omega_m0),
                comments=[f"bath trajectory, seed {cfg.seed}; f_shift and gamma_m in Hz"])
    _write_manifest(out, cfg)
    for p in paths:
        _say(f"wrote {p} ({sc.n_frames} frames x {sc.grid.n_bins} bins)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate

def cmd_calibrate(cfg: RunConfig, out):
    """Simulate the configured power sweep, fit it and store the calibration."""
    seed = cfg.require_seed()
    sw = cfg["sweep"]
    n_cavs = sorted(set(sw["n_cavs"]))
    if len(n_cavs) < 3:
        raise ConfigError(f"[sweep] n_cavs needs at least 3 distinct powers, got {len(n_cavs)}")
    schemes = cfg.schemes("sweep")
    sys_ = cfg.system()
    noise = cfg.noise()
    frames = simulate_power_sweep(sys_, cfg.bath(), noise, sw["temperature"], n_cavs,
                                  schemes=schemes, n_averages=sw["n_averages"], seed=seed)
    fits = {key: fit_frames(fr)[0] for key, fr in frames.items()}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        calib = calibrate_power_sweep(fits, sys_, ref_ncav=sw["ref_ncav"],
                                      fix_exponent=sw["fix_exponent"],
                                      n_cav_noise=noise.n_cav_noise,
                                      backaction_floor=noise.backaction_floor)
    for w in caught:
        _say(f"warning: {w.message}")
    keys = sorted(fits, key=lambda k: (k[0].value, k[1]))
    cols = {"scheme": [k[0].value for k in keys], "n_cav": [k[1] for k in keys]}
    for name in ("area", "area_err", "width", "width_err", "center", "background", "converged"):
        cols[name] = [getattr(fits[k], name) for k in keys]
    write_table(os.path.join(out, "sweep.txt"), cols,
                comments=[f"power sweep at T = {sw['temperature']!r} K; width/center in Hz"])
    save_calibration(os.path.join(out, CALIBRATION), calib)
    _write_manifest(out, cfg, "calibration_manifest.ini")
    _say(f"g0 = 2pi x {calib.g0_est / TWO_PI:.2f} +- {calib.g0_err / TWO_PI:.2f} Hz")
    _say(f"Gm = 2pi x {calib.gamma_m_est / TWO_PI:.2f} +- {calib.gamma_m_err / TWO_PI:.2f} Hz")
    _say(f"technical heating: {calib.tech_coeff:.3f} +- {calib.tech_coeff_err:.3f} photons "
         f"at {calib.ref_ncav:g}, exponent {calib.tech_exponent:.3f}")
    if calib.flags:
        _say("flags: " + ", ".join(calib.flags))
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze

def _stats_summary(ts, stats, omega_m0):
    T_cryo = float(np.mean(ts.T_cryo)) if ts.T_cryo is not None else float("nan")
    d = {
        "n_windows": len(ts), "n_used": stats.n_used, "mean_n": stats.mean_n,
        "sigma_ph": stats.sigma_ph, "sigma_ph_model": stats.sigma_ph_model,
        "t_c_est": stats.t_c_est, "standard_error": stats.standard_error, "n_eff": stats.n_eff,
        "sigma_f": stats.sigma_f, "sigma_gamma": stats.sigma_gamma, "flags": stats.flags,
        "T_cryo_mean": T_cryo,
        "T_mode_mean": float(np.nanmean(ts.T_mode)) if np.isfinite(ts.T_mode).any() else None,
    }
    if np.isfinite(T_cryo):
        omega = omega_m0 + TWO_PI * float(np.mean(ts.fits.center[ts.converged]))
        n_exp = float(bose_occupation(T_cryo, omega))
        d["n_expected"] = n_exp
        d["z"] = (stats.mean_n - n_exp) / stats.standard_error
    if stats.deviations is not None:
        d["plateau"] = bool(stats.deviations.plateau)
    return d


def cmd_analyze(cfg: RunConfig, out, frames_paths=None, calib_path=None):
    """Windowed fits, populations and fluctuation statistics per container."""
    if not frames_paths:
        frames_paths = sorted(glob.glob(os.path.join(out, "frames_*.sbth")))
    if not frames_paths:
        raise DataError(f"no frames_*.sbth containers in {out}")
    an = cfg["analysis"]
    if an["gamma_m_source"] not in ("measured", "calibration"):
        raise ConfigError("[analysis] gamma_m_source must be 'measured' or 'calibration'")
    if calib_path is None and os.path.exists(os.path.join(out, CALIBRATION)):
        calib_path = os.path.join(out, CALIBRATION)
    summary = {"calibration": calib_path or "exact (from configuration)"}
    calib = load_calibration(calib_path) if calib_path else \
        CalibrationResult.from_truth(cfg.system(), cfg.noise())
    loaded = {}
    for path in frames_paths:
        fs = read_frames(path)
        if "scheme" not in fs.meta:
            raise DataError(f"{path}: no scheme in the metadata sidecar")
        scheme = Scheme.parse(fs.meta["scheme"])
        loaded[scheme] = fs
        ts = analyze_frames(fs, calib, an["window"], an["stride"],
                            gamma_m_source=an["gamma_m_source"])
        stats = fluctuation_stats(ts, t_c=an["t_c"])
        tag = scheme.value
        cols = ts.columns()
        cols["flags"] = [ts.flags(k) for k in range(len(ts))]
        write_table(os.path.join(out, f"windows_{tag}.txt"), cols,
                    comments=[f"{tag}, n_cav = {ts.n_cav!r}, window = {ts.window!r} s"])
        if stats.spectrum is not None:
            sp = stats.spectrum
            write_table(os.path.join(out, f"spectrum_{tag}.txt"), {"f": sp.f, "psd": sp.psd},
                        comments=[f"population fluctuation spectrum; t_c = {sp.t_c_est!r} s"])
        if stats.histogram is not None:
            h = stats.histogram
            write_table(os.path.join(out, f"histogram_{tag}.txt"),
                        {"lo": h.edges[:-1], "hi": h.edges[1:], "count": h.counts},
                        comments=[f"mean = {h.mean!r}, sigma = {h.sigma!r}"])
        if stats.deviations is not None:
            dv = stats.deviations
            write_table(os.path.join(out, f"deviations_{tag}.txt"),
                        {"acquisition": dv.acquisition, "sigma": dv.sigma_acq,
                         "n_segments": dv.n_segments},
                        comments=[f"plateau = {dv.plateau}, tail slope = {dv.tail_slope!r}"])
        summary[tag] = _stats_summary(ts, stats, float(fs.meta["omega_m0"]))
        _say(f"{tag}: mean n = {stats.mean_n:.4g} +- {stats.standard_error:.2g} "
             f"(sigma_ph = {stats.sigma_ph:.3g}, t_c = {stats.t_c_est:.3g} s)")
    if Scheme.BLUE in loaded and Scheme.RED in loaded:
        b, r = loaded[Scheme.BLUE], loaded[Scheme.RED]
        if b.meta.get("n_cav") != r.meta.get("n_cav"):
            summary["asymmetry"] = {"error": "blue and red drives differ"}
        else:
            shared = bool(b.meta.get("interleaved")) and np.array_equal(b.t, r.t)
            try:
                res, _ = asymmetry_from_frames(b, r, calib, track_window=an["track_window"],
                                               shared_drift=shared, tie_widths=an["tie_widths"])
                summary["asymmetry"] = {"ratio": res.ratio, "ratio_err": res.ratio_err,
                                        "bound": res.bound, "n": res.n, "n_err": res.n_err,
                                        "T": res.T, "T_err": res.T_err, "at_bound": res.at_bound}
                _say(f"asymmetry: T = {res.T * 1e3:.4g} +- {res.T_err * 1e3:.2g} mK")
            except (ValueError, SelfOscillationError) as exc:
                summary["asymmetry"] = {"error": str(exc)}
                _say(f"asymmetry: {exc}")
    write_json(os.path.join(out, SUMMARY), summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# thermal

def cmd_thermal(cfg: RunConfig, out):
    th = cfg["thermal"]
    table = thermal_budget(th["temperatures"], cfg.stack(), cfg.material())
    write_table(os.path.join(out, BUDGET), {k: table[k] for k in BUDGET_COLUMNS},
                comments=["SI units; T^3 quantities evaluated at T"])
    _say(f"tau_th = {table['tau_th'][0] * 1e9:.3g} ns, Kapitza/torus = "
         f"{table['kapitza_ratio'][0]:.3g}, T_e(1 fW) = {table['T_e_fW'][0] * 1e3:.3g} mK")
    for T, dT in zip(table["T"], table["dT"]):
        _say(f"  T0 = {T * 1e3:8.4g} mK: heat-leak gradient {dT * 1e6:.3g} uK")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report

def _fmt(x, spec=".4g"):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "n/a"
    return format(x, spec) if isinstance(x, (int, float)) else str(x)


def cmd_report(cfg: RunConfig, run_dir):
    """Summarise a run directory into ``report.md`` plus plot-data tables.

    Missing artefacts produce explicit "missing" sections; a corrupted
    container is a data error.
    """
    if not os.path.isdir(run_dir):
        raise DataError(f"run directory {run_dir} does not exist")
    p = lambda name: os.path.join(run_dir, name)  # noqa: E731
    lines = ["# Run report", ""]
    manifest = p(MANIFEST)
    if os.path.exists(manifest):
        cfg = load_config(manifest)
        lines += ["## Configuration", "", f"Resolved manifest: `{MANIFEST}` "
                  f"(base preset {cfg.preset}, seed {cfg.seed}).", ""]
    else:
        lines += ["## Configuration", "", "missing (no manifest; defaults used below)", ""]

    lines += ["## Frames", ""]
    containers = sorted(glob.glob(p("frames_*.sbth")))
    if not containers:
        lines += ["missing", ""]
    for path in containers:
        fs = read_frames(path)
        lines.append(f"- `{os.path.basename(path)}`: {len(fs)} frames, {fs.n_bins} bins, "
                     f"scheme {fs.meta.get('scheme', '?')}, n_cav {_fmt(fs.meta.get('n_cav'))}")
        avg = sliding_average(fs, len(fs) * (fs.frame_dt if len(fs) > 1 else 1.0))
        fit = fit_frames(avg)[0]
        f = fs.f_grid
        from .analysis.fitting import lorentzian_model

        model, _ = lorentzian_model(f, np.array([[fit.area, fit.width, fit.center,
                                                  fit.background]]))
        tag = os.path.basename(path)[len("frames_"):-len(".sbth")]
        write_table(p(f"plot_mean_spectrum_{tag}.txt"),
                    {"f": f, "psd": avg.psd[0], "fit": model[0]},
                    comments=["whole-run mean spectrum and Lorentzian fit (Hz, photons/s/Hz)"])
    lines.append("")

    lines += ["## Calibration", ""]
    if os.path.exists(p(CALIBRATION)):
        c = load_calibration(p(CALIBRATION))
        lines += [f"- g0 = 2pi x {_fmt(c.g0_est / TWO_PI)} +- {_fmt(c.g0_err / TWO_PI, '.2g')} Hz",
                  f"- Gm = 2pi x {_fmt(c.gamma_m_est / TWO_PI)} +- "
                  f"{_fmt(c.gamma_m_err / TWO_PI, '.2g')} Hz",
                  f"- technical heating {_fmt(c.tech_coeff)} +- {_fmt(c.tech_coeff_err, '.2g')} "
                  f"photons at n_cav = {_fmt(c.ref_ncav)}, exponent {_fmt(c.tech_exponent)}",
                  f"- flags: {', '.join(c.flags) or 'none'}", ""]
    else:
        lines += ["missing", ""]

    lines += ["## Thermometry and fluctuations", ""]
    if os.path.exists(p(SUMMARY)):
        s = read_json(p(SUMMARY))
        for tag in ("blue", "red"):
            if tag not in s:
                continue
            d = s[tag]
            lines.append(f"- {tag}: mean n = {_fmt(d.get('mean_n'))} +- "
                         f"{_fmt(d.get('standard_error'), '.2g')} (expected "
                         f"{_fmt(d.get('n_expected'))}, z = {_fmt(d.get('z'), '.2f')}); "
                         f"sigma_ph = {_fmt(d.get('sigma_ph'))}; t_c = {_fmt(d.get('t_c_est'))} s; "
                         f"plateau = {d.get('plateau', 'n/a')}")
        a = s.get("asymmetry")
        if a is None:
            lines.append("- asymmetry: missing (needs blue and red containers)")
        elif "error" in a:
            lines.append(f"- asymmetry: not invertible ({a['error']})")
        else:
            lines.append(f"- asymmetry: T = {_fmt(a['T'] * 1e3)} +- {_fmt(a['T_err'] * 1e3, '.2g')} "
                         f"mK (ratio {_fmt(a['ratio'])}, bound {_fmt(a['bound'])})")
        lines.append("")
    else:
        lines += ["missing", ""]

    lines += ["## Thermal budget", ""]
    if os.path.exists(p(BUDGET)):
        tb = read_table(p(BUDGET))
        lines += [f"- tau_th = {_fmt(tb['tau_th'][0] * 1e9)} ns; Kapitza/torus = "
                  f"{_fmt(tb['kapitza_ratio'][0])}",
                  f"- T_e(1 fW) = {_fmt(tb['T_e_fW'][0] * 1e3)} mK; "
                  f"T_e(1 aW) = {_fmt(tb['T_e_aW'][0] * 1e3)} mK", ""]
    else:
        lines += ["missing", ""]

    # bath laws behind the frequency / damping versus temperature plot
    T = np.geomspace(3e-4, 0.3, 60)
    sys_, bath = cfg.system(), cfg.bath()
    write_table(p("plot_bath_laws.txt"),
                {"T": T, "f_shift": np.asarray(tls_frequency_shift(T, sys_.omega_m0, bath)) / TWO_PI,
                 "gamma_m": np.asarray(mechanical_damping_mean(T, sys_, bath)) / TWO_PI},
                comments=["model frequency shift and damping versus temperature (Hz)"])
    lines += ["## Plot data", "", "- `plot_bath_laws.txt`"]
    lines += [f"- `{os.path.basename(f)}`" for f in sorted(glob.glob(p("plot_mean_spectrum_*.txt")))]
    lines += [f"- `{os.path.basename(f)}`" for f in sorted(glob.glob(p("windows_*.txt")))]
    from .io import atomic_open

    with atomic_open(p("report.md"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _say(f"wrote {p('report.md')}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (key = value with [sections])")
    common.add_argument("--out", default=".", help="output / run directory (default: .)")
    common.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    common.add_argument("--preset", choices=sorted(PRESETS), help="base preset")
    ap = argparse.ArgumentParser(prog="drumtherm", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate spectra into containers")
    sub.add_parser("calibrate", parents=[common], help="simulate and fit a power sweep")
    a = sub.add_parser("analyze", parents=[common], help="windowed thermometry and statistics")
    a.add_argument("--frames", nargs="+", help="containers (default: OUT/frames_*.sbth)")
    a.add_argument("--calib", help="calibration file (default: OUT/calibration.json)")
    sub.add_parser("thermal", parents=[common], help="phonon thermal budget table")
    r = sub.add_parser("report", parents=[common], help="summarise a run directory")
    r.add_argument("run_dir", nargs="?", help="run directory (default: --out)")
    sub.add_parser("show-config", parents=[common], help="print the resolved configuration")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset, args.seed)
        out = args.out
        if args.command != "report":
            os.makedirs(out, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, out)
        if args.command == "analyze":
            return cmd_analyze(cfg, out, args.frames, args.calib)
        if args.command == "thermal":
            return cmd_thermal(cfg, out)
        if args.command == "report":
            return cmd_report(cfg, args.run_dir or out)
        if args.command == "show-config":
            sys.stdout.write(cfg.to_text())
            return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, SelfOscillationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_CONFIG


__all__ = ["main", "build_parser", "cmd_simulate", "cmd_calibrate", "cmd_analyze",
           "cmd_thermal", "cmd_report", "parse_config"]
