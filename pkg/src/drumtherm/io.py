"""
Persistence: the SBTH frame container, columnar text tables and
calibration files. Every writer is atomic (temp file in the target
directory, then ``os.replace``).

Container layout (little-endian)::

    b"SBTH"  u32 version  u32 n_bins  f64 f_start  f64 f_step
    per frame:  f64 t  u32 n_averages  n_bins x f64 psd

Run metadata (scheme, drive, cadence, schedule) lives in a JSON sidecar
``<container>.json`` so the binary layout stays fixed.
"""
from __future__ import annotations

import contextlib
import json
import os
import struct
import tempfile
from dataclasses import asdict, fields

import numpy as np

from .errors import DataError
from .spectral_sim import FrameSet, Schedule

MAGIC = b"SBTH"
VERSION = 1
HEADER = struct.Struct("<4sIIdd")


def frame_dtype(n_bins):
    """Packed per-frame record."""
    return np.dtype([("t", "<f8"), ("n_averages", "<u4"), ("psd", "<f8", (n_bins,))])


@contextlib.contextmanager
def atomic_open(path, mode="wb"):
    """Open a temp file next to ``path``; rename over it on success only."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.chmod(tmp, 0o644)  # mkstemp creates 0600
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def sidecar_path(path):
    return os.fspath(path) + ".json"


class FrameWriter:
    """Incremental container writer; use as a context manager.

    Frames are appended in blocks (:class:`FrameSet`); timestamps must
    increase across the whole file and the grid must not change.
    """

    def __init__(self, path, n_bins, f_start, f_step, meta=None):
        self.path = os.fspath(path)
        self.n_bins = int(n_bins)
        self.f_start = float(f_start)
        self.f_step = float(f_step)
        self.meta = dict(meta or {})
        self.n_frames = 0
        self._last_t = -np.inf
        self._ctx = None
        self._fh = None

    def __enter__(self):
        self._ctx = atomic_open(self.path)
        self._fh = self._ctx.__enter__()
        self._fh.write(HEADER.pack(MAGIC, VERSION, self.n_bins, self.f_start, self.f_step))
        return self

    def write(self, frames):
        if frames.n_bins != self.n_bins or frames.f_start != self.f_start \
                or frames.f_step != self.f_step:
            raise ValueError("frame grid differs from the container grid")
        t = frames.t
        if t.size and (t[0] <= self._last_t or np.any(np.diff(t) <= 0)):
            raise ValueError("frame timestamps must be strictly increasing")
        if np.any(frames.n_averages < 0) or np.any(frames.n_averages > np.iinfo(np.uint32).max):
            raise ValueError("n_averages does not fit in u32")
        rec = np.empty(len(frames), frame_dtype(self.n_bins))
        rec["t"] = t
        rec["n_averages"] = frames.n_averages
        rec["psd"] = frames.psd
        self._fh.write(rec.tobytes())
        self.n_frames += len(frames)
        if t.size:
            self._last_t = t[-1]

    def __exit__(self, exc_type, exc, tb):
        ok = self._ctx.__exit__(exc_type, exc, tb)
        if exc_type is None:
            meta = dict(self.meta, n_frames=self.n_frames)
            write_json(sidecar_path(self.path), meta)
        return ok


def write_frames(path, frames, meta=None):
    """Write a whole :class:`FrameSet` (metadata defaults to ``frames.meta``)."""
    with FrameWriter(path, frames.n_bins, frames.f_start, frames.f_step,
                     frames.meta if meta is None else meta) as w:
        w.write(frames)


def read_frames(path, meta=None):
    """Load and validate a container.

    The sidecar, when present, restores ``meta`` and the cryostat
    temperature (from its ``schedule`` entry).

    Raises
    ------
    DataError
        Bad magic/version/header, truncated frame, non-increasing timestamps
        or invalid PSD values; the message carries the byte offset.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    if len(raw) < HEADER.size:
        raise DataError(f"{path}: file shorter than the header", offset=len(raw))
    magic, version, n_bins, f_start, f_step = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}", offset=4)
    if n_bins < 1:
        raise DataError(f"{path}: n_bins = 0", offset=8)
    if not (np.isfinite(f_start) and np.isfinite(f_step) and f_step > 0):
        raise DataError(f"{path}: invalid frequency grid", offset=12)
    dt = frame_dtype(n_bins)
    body = len(raw) - HEADER.size
    n = body // dt.itemsize
    if body % dt.itemsize:
        raise DataError(f"{path}: truncated frame {n}", offset=HEADER.size + n * dt.itemsize)
    rec = np.frombuffer(raw, dtype=dt, count=n, offset=HEADER.size)
    t = rec["t"].astype(float)

    def where(k):
        return HEADER.size + int(k) * dt.itemsize

    bad_t = np.flatnonzero(~np.isfinite(t))
    if bad_t.size:
        raise DataError(f"{path}: non-finite timestamp in frame {bad_t[0]}", offset=where(bad_t[0]))
    back = np.flatnonzero(np.diff(t) <= 0)
    if back.size:
        k = back[0] + 1
        raise DataError(f"{path}: timestamps not increasing at frame {k}", offset=where(k))
    psd = rec["psd"].astype(float)
    bad = np.flatnonzero(~(np.isfinite(psd) & (psd >= 0)).all(axis=1))
    if bad.size:
        k = bad[0]
        j = int(np.flatnonzero(~(np.isfinite(psd[k]) & (psd[k] >= 0)))[0])
        raise DataError(f"{path}: invalid PSD value in frame {k}, bin {j}",
                        offset=where(k) + 12 + 8 * j)
    if n == 0:
        raise DataError(f"{path}: container holds no frames", offset=HEADER.size)
    if meta is None:
        side = sidecar_path(path)
        meta = read_json(side) if os.path.exists(side) else {}
    T = None
    if meta.get("schedule") and n:
        T = np.asarray(Schedule.parse(meta["schedule"])(t), dtype=float)
    meta = {k: v for k, v in meta.items() if k != "n_frames"}
    return FrameSet(t, psd, rec["n_averages"].astype(np.int64), f_start, f_step, meta, T)


def export_text(frames, path):
    """Lossless text dump: one row per frame, ``t n_averages psd...`` (``%.17g``)."""
    header = (f"f_start = {frames.f_start!r}\nf_step = {frames.f_step!r}\n"
              f"n_bins = {frames.n_bins}\ncolumns: t n_averages psd[0..n_bins-1]")
    data = np.column_stack([frames.t, frames.n_averages, frames.psd])
    fmt = ["%.17g", "%d"] + ["%.17g"] * frames.n_bins
    with atomic_open(path, "w") as fh:
        np.savetxt(fh, data, fmt=fmt, header=header)


def import_text(path, meta=None):
    """Inverse of :func:`export_text`."""
    grid = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition("=")
            if value:
                grid[key.strip()] = value.strip()
    data = np.loadtxt(path, ndmin=2)
    return FrameSet(data[:, 0], data[:, 2:], data[:, 1].astype(np.int64),
                    float(grid["f_start"]), float(grid["f_step"]), dict(meta or {}))


# ---------------------------------------------------------------------------
# tables and JSON

def write_table(path, columns, comments=()):
    """Whitespace-separated columns with a ``#`` header line of names.

    Floats use ``%.17g`` so a table round-trips exactly; non-numeric
    columns (flags) are written verbatim with ``-`` for empty cells and
    must not contain whitespace.
    """
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("table columns differ in length")
    with atomic_open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write("# " + " ".join(names) + "\n")
        for i in range(n):
            fh.write(" ".join(_cell(c[i]) for c in cols) + "\n")


def _cell(x):
    if isinstance(x, (str, np.str_)):
        if not x:
            return "-"
        if x == "-" or len(str(x).split()) != 1:
            raise ValueError(f"table cell {x!r} would not round-trip")
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def read_table(path):
    """Read a :func:`write_table` file back into ``{name: ndarray}``."""
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                header = line[1:].split()
            elif line.strip():
                rows.append(line.split())
    if header is None:
        raise DataError(f"{path}: no column header")
    out = {}
    for j, name in enumerate(header):
        cells = [r[j] for r in rows]
        try:
            out[name] = np.array([float(c) for c in cells])
        except ValueError:
            out[name] = np.array([("" if c == "-" else c) for c in cells])
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def write_json(path, obj):
    with atomic_open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}", offset=exc.pos) from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


def save_calibration(path, calib):
    write_json(path, asdict(calib))


def load_calibration(path):
    from .analysis import CalibrationResult

    data = read_json(path)
    names = {f.name for f in fields(CalibrationResult)}
    missing = names - set(data) - {"scheme_slopes", "normalized_areas", "single_scheme", "flags",
                                   "ref_ncav", "n_cav_noise", "backaction_floor"}
    if missing:
        raise DataError(f"{path}: calibration lacks {sorted(missing)}")
    data = {k: v for k, v in data.items() if k in names}
    data["scheme_slopes"] = {k: tuple(v) for k, v in data.get("scheme_slopes", {}).items()}
    data["normalized_areas"] = {k: tuple(np.asarray(a) for a in v)
                                for k, v in data.get("normalized_areas", {}).items()}
    return CalibrationResult(**data)
