"""
Run configuration: flat ``key = value`` text with ``[section]`` headers.

Frequencies are in Hz, times in s, temperatures in K, powers in W. Values
carrying a unit suffix are rejected. Each section is either filled from a
preset (``preset = NAME`` as its only key) or given explicitly; explicit
keys override the run-wide preset (``[run] preset`` or ``--preset``),
which itself defaults to ``aalto-drum``.

The resolved configuration serialises back to the same format
(:meth:`RunConfig.to_text`), so a run manifest can be re-fed as input.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .bath import BathParams
from .constants import TWO_PI
from .errors import ConfigError
from .optomech import NoiseBudget, PumpConfig, Scheme, SystemParams
from .spectral_sim import GridSpec, Scenario, Schedule
from .thermal import MaterialProps, ThermalStack

_UNIT = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\s*[A-Za-zµ°%]+\S*$")

# (type, default); "floats"/"strs" are comma-separated lists, "ofloat" accepts "none"
SCHEMA = {
    "run": {
        "seed": ("oint", None),
    },
    "system": {
        "f_c": ("float", 5.7e9),
        "f_m0": ("float", 15.1e6),
        "kappa_tot": ("float", 500e3),
        "kappa_ext": ("float", 240e3),
        "g0": ("float", 230.0),
        "gamma_m": ("float", 420.0),
        "duffing_beta": ("float", 20.0),
        "mass": ("float", 5e-14),
    },
    "bath": {
        "tls_log_slope": ("float", 150.0),
        "damping_linear_slope": ("float", 4000.0),
        "damping_knee": ("float", 0.1),
        "t_c": ("float", 18000.0),
        "sigma_ph_prefactor": ("float", 0.5),
        "sigma_f_amp": ("float", 0.5),
        "sigma_f_exponent": ("float", 0.5),
        "sigma_gamma_amp": ("float", 0.2),
        "sigma_gamma_exponent": ("float", 0.5),
        "freq_damp_correlation": ("float", 0.0),
        "reference_acquisition": ("float", 36000.0),
    },
    "noise": {
        "n_cav_noise": ("float", 0.0),
        "tech_heating_coeff": ("float", 1.0),
        "tech_heating_exponent": ("float", 1.0),
        "amplifier_background": ("float", 100.0),
        "tech_heating_ref_ncav": ("float", 300.0),
        "backaction_floor": ("bool", True),
    },
    "scenario": {
        "duration": ("float", 36000.0),
        "frame_dt": ("float", 1.0),
        "schedule": ("str", "0:0.01, inf:0.01"),
        "schemes": ("strs", ("blue",)),
        "n_cav": ("ofloat", 600.0),
        "p_in": ("ofloat", None),
        "detuning_error": ("float", 0.0),
        "n_averages": ("int", 10),
        "n_bins": ("int", 512),
        "span_linewidths": ("float", 40.0),
        "span": ("ofloat", None),
    },
    "sweep": {
        "temperature": ("float", 0.1),
        "n_cavs": ("floats", (50.0, 100.0, 200.0, 400.0, 800.0)),
        "schemes": ("strs", ("blue", "red")),
        "n_averages": ("int", 100_000_000),
        "ref_ncav": ("float", 300.0),
        "fix_exponent": ("ofloat", None),
    },
    "analysis": {
        "window": ("float", 1200.0),
        "stride": ("ofloat", None),
        "gamma_m_source": ("str", "calibration"),
        "t_c": ("ofloat", None),
        "track_window": ("float", 1200.0),
        "tie_widths": ("bool", True),
    },
    "thermal": {
        "temperatures": ("floats", (5e-4, 1e-3, 1e-2, 0.1)),
        "e_p": ("float", 100e-9),
        "r1": ("float", 7e-6),
        "r2": ("float", 10e-6),
        "kapitza_coeff": ("float", 0.1),
        "heat_leak_specific": ("float", 0.1e-9),
        "lambda_conf": ("ofloat", None),
        "mass": ("ofloat", None),
        "v_s": ("float", 6700.0),
        "theta_D": ("float", 468.0),
        "rho": ("float", 2700.0),
        "c_p_coeff": ("float", 0.41),
        "k_bulk_coeff": ("float", 23.4),
        "g_eph": ("float", 0.4e9),
    },
}

_QUIET = {"sigma_ph_prefactor": 0.0, "sigma_f_amp": 0.0, "sigma_gamma_amp": 0.0}

PRESETS = {
    "aalto-drum": {},
    "quiet-bath": {"bath": dict(_QUIET)},
    "asymmetry-500uK": {
        "scenario": {"duration": 4 * 86400.0, "frame_dt": 600.0, "schedule": "0:0.0005, inf:0.0005",
                     "schemes": ("blue", "red"), "n_cav": 300.0, "n_averages": 6000},
        "analysis": {"track_window": 7200.0},
    },
}


def _parse(kind, key, text):
    text = text.strip()
    if kind in ("ofloat", "oint") and text.lower() == "none":
        return None
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if kind == "str":
        return text
    if kind == "strs":
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if kind == "floats":
        return tuple(_number(float, key, s) for s in text.split(",") if s.strip())
    if kind in ("int", "oint"):
        return _number(int, key, text)
    return _number(float, key, text)


def _number(cast, key, text):
    text = text.strip()
    try:
        return cast(text)
    except ValueError:
        pass
    if _UNIT.match(text):
        raise ConfigError(f"{key} = {text!r}: unit suffixes are not accepted "
                          "(Hz, s, K and W are implied)")
    raise ConfigError(f"{key}: expected a number, got {text!r}")


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]


def _section_from_preset(name, section):
    values = {k: d for k, (_, d) in SCHEMA[section].items()}
    values.update(_preset(name).get(section, {}))
    return values


@dataclass
class RunConfig:
    """Fully resolved configuration (every key of :data:`SCHEMA` present)."""

    preset: str = "aalto-drum"
    values: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def require_seed(self):
        if self.seed is None:
            raise ConfigError("a seed is required: give --seed N or 'seed = N' under [run]")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        return self.seed

    # builders -----------------------------------------------------------

    def system(self):
        s = self["system"]
        try:
            return SystemParams(
                omega_c=TWO_PI * s["f_c"], omega_m0=TWO_PI * s["f_m0"],
                kappa_tot=TWO_PI * s["kappa_tot"], kappa_ext=TWO_PI * s["kappa_ext"],
                g0=TWO_PI * s["g0"], gamma_m_floor=TWO_PI * s["gamma_m"],
                duffing_beta=s["duffing_beta"], mass=s["mass"])
        except ValueError as exc:
            raise ConfigError(f"[system] {exc}") from exc

    def bath(self):
        b = dict(self["bath"])
        b["tls_log_slope"] *= TWO_PI
        b["damping_linear_slope"] *= TWO_PI
        try:
            return BathParams(**b)
        except ValueError as exc:
            raise ConfigError(f"[bath] {exc}") from exc

    def noise(self):
        try:
            return NoiseBudget(**self["noise"])
        except ValueError as exc:
            raise ConfigError(f"[noise] {exc}") from exc

    def schemes(self, section="scenario"):
        try:
            out = tuple(Scheme.parse(s) for s in self[section]["schemes"])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
        if not out or len(set(out)) != len(out):
            raise ConfigError(f"[{section}] schemes must be distinct and non-empty")
        return out

    def scenario(self, scheme=None):
        """Scenario for one scheme (first listed by default)."""
        s = self["scenario"]
        scheme = self.schemes()[0] if scheme is None else Scheme.parse(scheme)
        if (s["n_cav"] is None) == (s["p_in"] is None):
            raise ConfigError("[scenario] give exactly one of n_cav or p_in (the other = none)")
        try:
            pump = PumpConfig(scheme, n_cav=s["n_cav"], p_in=s["p_in"],
                              detuning_error=TWO_PI * s["detuning_error"])
            grid = GridSpec(n_bins=s["n_bins"], span_linewidths=s["span_linewidths"],
                            span=s["span"])
            return Scenario(duration=s["duration"], frame_dt=s["frame_dt"],
                            schedule=Schedule.parse(s["schedule"]), pump=pump, sys=self.system(),
                            bath=self.bath(), noise=self.noise(), grid=grid,
                            n_averages=s["n_averages"], seed=self.require_seed())
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[scenario] {exc}") from exc

    def stack(self):
        t = self["thermal"]
        try:
            return ThermalStack(e_p=t["e_p"], r1=t["r1"], r2=t["r2"],
                                kapitza_coeff=t["kapitza_coeff"],
                                heat_leak_specific=t["heat_leak_specific"],
                                lambda_conf=t["lambda_conf"], mass=t["mass"])
        except ValueError as exc:
            raise ConfigError(f"[thermal] {exc}") from exc

    def material(self):
        t = self["thermal"]
        try:
            return MaterialProps(v_s=t["v_s"], theta_D=t["theta_D"], rho=t["rho"],
                                 c_p_coeff=t["c_p_coeff"], k_bulk_coeff=t["k_bulk_coeff"],
                                 g_eph=t["g_eph"])
        except ValueError as exc:
            raise ConfigError(f"[thermal] {exc}") from exc

    # serialisation ------------------------------------------------------

    def to_text(self):
        """Manifest: every resolved key, explicit, in schema order."""
        lines = [f"# resolved configuration (base preset {self.preset})"]
        lines += ["[run]", f"preset = {self.preset}"]
        for section, keys in SCHEMA.items():
            if section != "run":
                lines += ["", f"[{section}]"]
            for key in keys:
                lines.append(f"{key} = {_format(self.values[section][key])}")
        return "\n".join(lines) + "\n"


def parse_config(text="", preset=None, seed=None, source="<config>"):
    """Resolve configuration text (plus CLI overrides) into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        Syntax errors, unknown sections or keys, unit suffixes, a section
        mixing ``preset`` with explicit keys, or unknown presets.
    """
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                   empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    unknown = [s for s in cp.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}; known: {', '.join(SCHEMA)}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    base = preset or run.pop("preset", None) or "aalto-drum"
    if preset:
        run.pop("preset", None)
    _preset(base)
    values = {}
    for section, keys in SCHEMA.items():
        given = dict(cp[section]) if cp.has_section(section) else {}
        if section == "run":
            given = {k: v for k, v in run.items()}
        if "preset" in given and section != "run":
            if len(given) > 1:
                raise ConfigError(f"[{section}] uses a preset: no other keys allowed")
            values[section] = _section_from_preset(given["preset"].strip(), section)
            continue
        resolved = _section_from_preset(base, section)
        for key, text_value in given.items():
            if key not in keys:
                raise ConfigError(f"[{section}] unknown key {key!r}; known: {', '.join(keys)}")
            resolved[key] = _parse(keys[key][0], f"[{section}] {key}", text_value)
        values[section] = resolved
    if seed is not None:
        values["run"]["seed"] = int(seed)
    return RunConfig(base, values)


def load_config(path=None, preset=None, seed=None):
    """:func:`parse_config` on a file (or defaults when ``path`` is None)."""
    if path is None:
        return parse_config("", preset, seed)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, preset, seed, source=str(path))
