"""Reading and writing event data, covariate series, station metadata and run manifests."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import sys
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigurationError, IngestionError
from .events import EventSequence, StepFunction

log = logging.getLogger(__name__)

HOUR = 3600.0


def load_config(path):
    """Parse a YAML run configuration into a dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"configuration file not found: {path}")
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: expected a mapping at the top level")
    return cfg


def to_timestamp(value, timezone):
    """Timezone-aware timestamp; naive values are read as wall-clock in ``timezone``."""
    ts = pd.Timestamp(value)
    return ts.tz_localize(timezone) if ts.tzinfo is None else ts.tz_convert(timezone)


def _parse_times(raw, timezone):
    """Seconds since the epoch for each string; ``nan`` where unparseable."""
    raw = pd.Series(raw, dtype="string").str.strip()
    numeric = pd.to_numeric(raw, errors="coerce")
    out = np.full(raw.size, np.nan)
    is_num = numeric.notna().to_numpy()
    # exact decimal-to-binary conversion, so written times read back bit-identically
    out[is_num] = np.array(raw[is_num].tolist(), dtype=float)
    text = numeric.isna() & raw.notna() & (raw != "")
    if text.any():
        parsed = pd.to_datetime(raw[text], errors="coerce", format="ISO8601")
        if parsed.dt.tz is None:
            parsed = parsed.dt.tz_localize(timezone, ambiguous="NaT", nonexistent="NaT")
        secs = (parsed - pd.Timestamp(0, tz="UTC")).dt.total_seconds()
        out[text.to_numpy()] = secs.to_numpy(dtype=float, na_value=np.nan)
    return out


def _sorted_labels(labels):
    labels = sorted(set(labels))
    try:
        return sorted(labels, key=lambda v: (float(v), v))
    except ValueError:
        return labels


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_kept: int = 0
    dropped_window: int = 0
    errors: list = field(default_factory=list)
    tie_count: int = 0
    origin: str | None = None

    def to_dict(self):
        return {"rows_read": self.rows_read, "rows_kept": self.rows_kept,
                "dropped_window": self.dropped_window, "error_rows": len(self.errors),
                "errors": self.errors[:50], "tie_count": self.tie_count, "origin": self.origin}


@dataclass
class IngestedEvents:
    sequence: EventSequence
    report: IngestReport


def read_events(path, time_column="start_time", sender_column="start_station",
                receiver_column="end_station", start=None, end=None, timezone="UTC",
                stations=None, max_error_fraction=0.01):
    """Read an events CSV into an :class:`EventSequence`.

    Times may be ISO-8601 strings (naive ones are wall-clock in ``timezone``)
    or epoch seconds.  With a window ``(start, end]`` times become seconds
    since ``start``, rows outside are dropped and counted, and the horizon is
    the window length.  Without a window, numeric times are used as they are.

    Parameters
    ----------
    stations : iterable of str, optional
        Extra station labels (e.g. from a distance matrix) added to the node
        universe.
    max_error_fraction : float
        Abort when more than this share of rows fails to parse.

    Returns
    -------
    IngestedEvents
        The sequence (labels = sorted station ids) and an :class:`IngestReport`
        whose ``errors`` hold ``(line, message)`` pairs (line 1 is the header).

    Raises
    ------
    IngestionError
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    missing = {time_column, sender_column, receiver_column} - set(df.columns)
    if missing:
        raise IngestionError(f"{path}: missing column(s) {sorted(missing)}")
    report = IngestReport(rows_read=len(df))
    secs = _parse_times(df[time_column], timezone)
    snd = df[sender_column].str.strip()
    rcv = df[receiver_column].str.strip()
    lines = np.arange(len(df)) + 2
    bad_time = ~np.isfinite(secs)
    bad_station = ((snd == "") | (rcv == "")).to_numpy()
    for i in np.flatnonzero(bad_time | bad_station):
        what = "unparseable time" if bad_time[i] else "missing station"
        fields = df.iloc[i][[time_column, sender_column, receiver_column]].tolist()
        report.errors.append((int(lines[i]), f"{what}: {fields}"))
    if report.rows_read and len(report.errors) / report.rows_read > max_error_fraction:
        raise IngestionError(
            f"{path}: {len(report.errors)} of {report.rows_read} rows invalid "
            f"(limit {max_error_fraction:.2%}); first at line {report.errors[0][0]}",
            [e[0] for e in report.errors])
    for line, msg in report.errors[:10]:
        log.warning("%s line %d: %s", path.name, line, msg)
    ok = ~(bad_time | bad_station)
    secs, snd, rcv = secs[ok], snd[ok].to_numpy(), rcv[ok].to_numpy()

    horizon = None
    if start is not None:
        t0 = to_timestamp(start, timezone)
        origin = t0.timestamp()
        report.origin = t0.isoformat()
        secs = secs - origin
        if end is not None:
            horizon = to_timestamp(end, timezone).timestamp() - origin
            if not horizon > 0:
                raise ConfigurationError("window end must follow its start")
        inside = (secs > 0) & (secs <= (horizon if horizon is not None else np.inf))
        report.dropped_window = int((~inside).sum())
        secs, snd, rcv = secs[inside], snd[inside], rcv[inside]
    if secs.size == 0:
        raise IngestionError(f"{path}: no events left after validation and windowing")

    labels = _sorted_labels(list(snd) + list(rcv) + list(stations or []))
    ids = {lab: i for i, lab in enumerate(labels)}
    s_ids = np.array([ids[v] for v in snd], dtype=np.int64)
    r_ids = np.array([ids[v] for v in rcv], dtype=np.int64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        seq = EventSequence(secs, s_ids, r_ids, len(labels), horizon=horizon, labels=labels)
    report.tie_count = seq.tie_count
    report.rows_kept = len(seq)
    if seq.tie_count:
        log.info("%d tied event time(s) nudged apart", seq.tie_count)
    return IngestedEvents(seq, report)


def write_events(seq, path, time_column="start_time", sender_column="start_station",
                 receiver_column="end_station"):
    """Write events with full-precision times; :func:`read_events` reads them back exactly."""
    labels = seq.labels or [str(i) for i in range(seq.node_count)]
    df = pd.DataFrame({
        time_column: [repr(float(t)) for t in seq.times],
        sender_column: [labels[s] for s in seq.senders],
        receiver_column: [labels[r] for r in seq.receivers],
    })
    df.to_csv(path, index=False)


TRANSFORMS = {"identity": lambda v: v, "log1p": np.log1p, "log": np.log}


def read_global_series(path, name=None, transform="identity", start=None, end=None,
                       timezone="UTC", time_column="timestamp", value_column="value",
                       gap_limit_hours=3.0):
    """Read a timestamped series as a left-continuous step function of model time.

    A value stamped at ``tau_k`` holds on ``(tau_k, tau_{k+1}]``, so a query
    exactly at a stamp returns the previous stamp's value.  Missing stamps
    (relative to the median spacing) are forward-filled up to
    ``gap_limit_hours``; longer gaps, or a first stamp more than that after
    the window start, raise.

    Returns
    -------
    StepFunction
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    value_column = value_column if value_column in df.columns else (name or value_column)
    for col in (time_column, value_column):
        if col not in df.columns:
            raise IngestionError(f"{path}: missing column {col!r}")
    if transform not in TRANSFORMS:
        raise ConfigurationError(f"unknown transform {transform!r}")
    secs = _parse_times(df[time_column], timezone)
    vals = pd.to_numeric(df[value_column], errors="coerce").to_numpy(dtype=float, na_value=np.nan)
    bad = ~(np.isfinite(secs) & np.isfinite(vals))
    if bad.any():
        rows = (np.flatnonzero(bad) + 2).tolist()
        raise IngestionError(f"{path}: unparseable row(s) at line(s) {rows[:10]}", rows)
    origin = to_timestamp(start, timezone).timestamp() if start is not None else 0.0
    order = np.argsort(secs, kind="stable")
    t = secs[order] - origin
    v = TRANSFORMS[transform](vals[order])
    if np.any(np.diff(t) == 0):
        raise IngestionError(f"{path}: duplicate timestamps")
    limit = gap_limit_hours * HOUR
    if t[0] > limit:
        raise IngestionError(f"{path}: no value between window start and t={t[0]:g}s (gap exceeds limit)")
    gaps = np.diff(t)
    step = float(np.median(gaps)) if gaps.size else HOUR
    too_long = np.flatnonzero(gaps > limit + step)
    if too_long.size:
        k = too_long[0]
        raise IngestionError(
            f"{path}: gap from t={t[k]:g}s to t={t[k + 1]:g}s exceeds {gap_limit_hours:g} hours")
    if end is not None:
        horizon = to_timestamp(end, timezone).timestamp() - origin
        if horizon - t[-1] > limit + step:
            raise IngestionError(f"{path}: series ends at t={t[-1]:g}s, before the window end")
    filled = np.flatnonzero(gaps > 1.5 * step)
    if filled.size:
        log.info("%s: forward-filled %d gap(s)", path.name, filled.size)
    return StepFunction(t, v)


class TimeOfDay:
    """Local clock time in hours, ``[0, 24)``, of model time ``t`` (seconds).

    No daylight-saving handling: the offset at the origin is used throughout.
    """

    def __init__(self, origin="1970-01-01T00:00:00", timezone="UTC"):
        ts = to_timestamp(origin, timezone)
        midnight = ts.normalize()
        self.offset_hours = (ts - midnight).total_seconds() / HOUR
        self.origin = ts.isoformat()

    def __call__(self, t):
        return np.mod(self.offset_hours + np.asarray(t, dtype=float) / HOUR, 24.0)

    def __repr__(self):
        return f"TimeOfDay(origin={self.origin})"


def derive_time_of_day(t, origin, timezone="UTC"):
    return TimeOfDay(origin, timezone)(t)


def read_distance_matrix(path, labels=None, from_column="station_id_from",
                         to_column="station_id_to", value_column="minutes"):
    """Travel-time matrix from long-format rows.

    Returns
    -------
    labels : list of str
        Station labels indexing the matrix (``labels`` if given, else every
        station in the file, sorted).
    matrix : ndarray
        ``nan`` where no entry exists; the diagonal is 0.
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    for col in (from_column, to_column, value_column):
        if col not in df.columns:
            raise IngestionError(f"{path}: missing column {col!r}")
    a = df[from_column].str.strip().to_numpy()
    b = df[to_column].str.strip().to_numpy()
    m = pd.to_numeric(df[value_column], errors="coerce").to_numpy(dtype=float, na_value=np.nan)
    bad = ~np.isfinite(m) | (m < 0)
    if bad.any():
        rows = (np.flatnonzero(bad) + 2).tolist()
        raise IngestionError(f"{path}: invalid travel time at line(s) {rows[:10]}", rows)
    labels = _sorted_labels(list(a) + list(b)) if labels is None else list(labels)
    ids = {lab: i for i, lab in enumerate(labels)}
    mat = np.full((len(labels), len(labels)), np.nan)
    known = np.array([x in ids and y in ids for x, y in zip(a, b)], dtype=bool)
    ia = np.array([ids[x] for x in a[known]], dtype=np.int64)
    ib = np.array([ids[y] for y in b[known]], dtype=np.int64)
    mat[ia, ib] = m[known]
    np.fill_diagonal(mat, 0.0)
    return labels, mat


def distance_labels(path, from_column="station_id_from", to_column="station_id_to"):
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    return set(df[from_column].str.strip()) | set(df[to_column].str.strip())


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions():
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "pandas": pd.__version__, "pyyaml": yaml.__version__, "remshift": __version__}


def write_manifest(out_dir, command, config, config_path=None, seed=None, inputs=(), outputs=(), extra=None):
    """Record what is needed to re-run a command and check its outputs.

    The manifest stores the full configuration, the seed, library versions,
    and SHA-256 digests of inputs and outputs.
    """
    out_dir = Path(out_dir)
    cfg_text = json.dumps(config, sort_keys=True, default=str)
    man = {
        "command": command,
        "argv": sys.argv[1:],
        "created": datetime.now(ZoneInfo("UTC")).isoformat(),
        "config": config,
        "config_path": str(config_path) if config_path else None,
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "seed": seed,
        "versions": versions(),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    }
    if extra:
        man.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True, default=_json_default)
    return path


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
