"""Synthetic bike-share fixture with known effects.

Writes trips in the Capital Bikeshare export layout, hourly weather, a
travel-time matrix and a run configuration.  Trips are simulated from a
relational event model whose effects are stored in ``planted.json``; the
time-of-day effect is bimodal (morning and evening peaks) so a fitted
cyclic smooth can be checked against it.
"""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .endostats import DecayStat, competition_vector
from .errors import TruncationError
from .events import ALL_PAIRS, CovariateCatalog, IntensitySpec
from .ingest import TimeOfDay, read_global_series
from .simulate import TauLeapConfig, make_rng, simulate_tau_leap, spawn_seeds

DEFAULT_SEED = 20230709
START = "2023-07-09 00:00:00"
END = "2023-08-01 00:00:00"
TIMEZONE = "America/New_York"
STATIONS = 30
EVENTS = 5000

TOD_PEAKS = ((8.5, 1.25, 1.3), (17.75, 1.75, 1.0))  # (hour, width, height)
TEMP_OPTIMUM, TEMP_CURVATURE = 27.0, 0.03
PREC_SLOPE = -0.8
COMPETITION = (-0.15, -0.10)
DIST_PEAK, DIST_CURVATURE = 8.0, 0.6
DECAY_SCALE_HOURS = 4.0
DECAY_EFFECTS = (1.2, 0.8)
SPEED_KMH, DETOUR = 14.0, 1.3


def planted_time_of_day(hours):
    """Bimodal log-rate effect of clock time, uncentered."""
    h = np.asarray(hours, dtype=float)
    out = np.zeros_like(h)
    for peak, width, height in TOD_PEAKS:
        d = np.abs(np.mod(h - peak + 12.0, 24.0) - 12.0)
        out += height * np.exp(-d**2 / (2 * width**2))
    return out


def planted_temperature(x):
    return -TEMP_CURVATURE * (np.asarray(x, dtype=float) - TEMP_OPTIMUM) ** 2


def planted_precipitation(x):
    return PREC_SLOPE * np.asarray(x, dtype=float)


def planted_distance(d):
    return -DIST_CURVATURE * np.log((np.asarray(d, dtype=float) + 1.0) / DIST_PEAK) ** 2


class _Scaled:
    def __init__(self, beta):
        self.beta = beta

    def __call__(self, x):
        return self.beta * np.asarray(x, dtype=float)


CONFIG = {
    "model": "bike",
    "seed": 7,
    "nu": 1.0,
    "risk_policy": "all_pairs",
    "window": {"start": START, "end": END, "timezone": TIMEZONE},
    "events": {"path": "trips.csv", "time_column": "started_at", "sender_column": "start_station_id",
               "receiver_column": "end_station_id", "max_error_fraction": 0.01},
    "weather": {"path": "weather.csv", "time_column": "timestamp", "gap_limit_hours": 3,
                "series": {"temp": {"column": "temperature", "transform": "identity"},
                           "prec": {"column": "precipitation", "transform": "log1p"}}},
    "distances": {"path": "distances.csv"},
    "fit": {"folds": 5},
    "terms": [
        {"name": "g0", "covariate": "time", "kind": "pspline", "rank": 10},
        {"name": "temp", "covariate": "temp", "kind": "pspline", "rank": 10},
        {"name": "prec", "covariate": "prec", "kind": "pspline", "rank": 10},
        {"name": "tod", "covariate": "tod", "kind": "cyclic", "rank": 10, "period": 24},
        {"name": "comp_sender", "covariate": "sender.competition", "kind": "linear", "allow_missing": True},
        {"name": "comp_receiver", "covariate": "receiver.competition", "kind": "linear", "allow_missing": True},
        {"name": "dist", "covariate": "distance", "kind": "pspline", "rank": 10, "allow_missing": True},
        {"name": "rep", "covariate": "rep", "kind": "pspline", "rank": 20},
        {"name": "rec", "covariate": "rec", "kind": "pspline", "rank": 20},
    ],
}


def _stations(rng):
    xy = rng.uniform(0.0, 6.0, size=(STATIONS, 2))
    km = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
    minutes = np.round(DETOUR * km / SPEED_KMH * 60.0, 2)
    lat = 38.89 + xy[:, 1] / 111.0
    lng = -77.03 + xy[:, 0] / (111.0 * math.cos(math.radians(38.9)))
    ids = [str(31000 + i) for i in range(STATIONS)]
    names = [f"Station {i:02d}" for i in range(STATIONS)]
    return ids, names, lat, lng, minutes


def _weather(rng, hours):
    h = np.arange(hours)
    days = hours // 24 + 1
    day_level = np.interp(h / 24.0, np.arange(days), rng.normal(0.0, 2.5, size=days))
    temp = 26.0 + 4.5 * np.sin(2 * np.pi * (h - 9) / 24.0) + day_level + rng.normal(0.0, 0.5, size=hours)
    prec = np.zeros(hours)
    for d in range(days - 1):
        if rng.random() < 0.35:
            begin = d * 24 + int(rng.integers(0, 24))
            length = int(rng.integers(1, 5))
            prec[begin:begin + length] += rng.gamma(1.5, 2.0, size=len(prec[begin:begin + length]))
    return np.round(temp, 1), np.round(prec, 1)


def _expected_count(spec, catalog, horizon, step=60.0):
    """Expected events without endogenous effects, by Riemann sum."""
    grid = np.arange(step / 2, horizon, step)
    g = np.zeros_like(grid)
    static = 0.0
    s, r = ALL_PAIRS.candidates(catalog.node_count)
    z = np.zeros(s.size)
    for label, cov, fn in spec.components():
        kind = catalog.kind(cov)
        if kind in ("time", "global"):
            g += fn(catalog.evaluate(cov, 0, 0, grid))
        elif kind != "endogenous":
            z += fn(catalog.evaluate(cov, s, r, np.zeros(s.size)))
    static = np.exp(z).sum()
    return spec.lambda0 * static * np.exp(g).sum() * step, g, step


def generate_fixture(out_dir, seed=DEFAULT_SEED, n_events=EVENTS):
    """Write ``trips.csv``, ``weather.csv``, ``distances.csv``, ``config.yaml`` and ``planted.json``.

    Returns
    -------
    Path
        The output directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    st_seed, w_seed, sim_seed, meta_seed = spawn_seeds(seed, 4)
    ids, names, lat, lng, minutes = _stations(make_rng(st_seed))
    t0 = pd.Timestamp(START)
    horizon = (pd.Timestamp(END) - t0).total_seconds()
    hours = int(horizon // 3600)
    temp, prec = _weather(make_rng(w_seed), hours)
    stamps = [(t0 + pd.Timedelta(hours=k)).strftime("%Y-%m-%d %H:%M:%S") for k in range(hours)]
    pd.DataFrame({"timestamp": stamps, "temperature": temp, "precipitation": prec}).to_csv(
        out / "weather.csv", index=False)
    rows = [(ids[a], ids[b], minutes[a, b]) for a in range(STATIONS) for b in range(STATIONS) if a != b]
    pd.DataFrame(rows, columns=["station_id_from", "station_id_to", "minutes"]).to_csv(
        out / "distances.csv", index=False)

    w = out / "weather.csv"
    scale = DECAY_SCALE_HOURS * 3600.0
    catalog = CovariateCatalog(
        node_count=STATIONS,
        global_series={
            "temp": read_global_series(w, "temp", "identity", START, END, TIMEZONE, value_column="temperature"),
            "prec": read_global_series(w, "prec", "log1p", START, END, TIMEZONE, value_column="precipitation"),
            "tod": TimeOfDay(START, TIMEZONE),
        },
        node_attrs={"competition": competition_vector(minutes)},
        dyadic_attrs={"distance": minutes},
        endogenous={"rep": DecayStat("repetition", scale), "rec": DecayStat("reciprocity", scale)},
    )
    spec = IntensitySpec(
        lambda0=1.0,
        linear_terms=(("sender.competition", COMPETITION[0]), ("receiver.competition", COMPETITION[1])),
        smooth_terms=(("temp", planted_temperature), ("prec", planted_precipitation),
                      ("tod", planted_time_of_day), ("distance", planted_distance),
                      ("rep", _Scaled(DECAY_EFFECTS[0])), ("rec", _Scaled(DECAY_EFFECTS[1]))),
        risk_policy=ALL_PAIRS,
    )
    expected, g, step = _expected_count(spec, catalog, horizon)
    lam = n_events / expected
    cum = np.cumsum(np.exp(g)) * step
    tau = horizon / (10.0 * n_events)
    # a pilot run measures how much the endogenous terms speed the process up
    pilot = simulate_tau_leap(spec.scaled(lam), catalog, TauLeapConfig(tau, n_events), seed=sim_seed)
    reached = np.interp(pilot.times[-1], np.arange(1, cum.size + 1) * step, cum) / cum[-1]
    lam *= reached / 0.985
    for _ in range(20):
        try:
            seq = simulate_tau_leap(spec.scaled(lam), catalog,
                                    TauLeapConfig(tau, n_events, max_time=horizon), seed=sim_seed)
            break
        except TruncationError:
            lam *= 1.03
    else:
        raise RuntimeError("could not calibrate the fixture rate")

    rng = make_rng(meta_seed)
    secs = np.ceil(seq.times)
    start = [(t0 + pd.Timedelta(seconds=float(v))).strftime("%Y-%m-%d %H:%M:%S") for v in secs]
    ride = minutes[seq.senders, seq.receivers]
    ride = np.where(seq.senders == seq.receivers, rng.uniform(10, 60, size=len(seq)), ride)
    dur = np.ceil(60.0 * ride * rng.uniform(1.0, 1.4, size=len(seq)))
    end = [(t0 + pd.Timedelta(seconds=float(a + b))).strftime("%Y-%m-%d %H:%M:%S") for a, b in zip(secs, dur)]
    trips = pd.DataFrame({
        "ride_id": [f"{v:016X}" for v in rng.integers(0, 2**63, size=len(seq))],
        "rideable_type": rng.choice(["classic_bike", "electric_bike"], size=len(seq), p=[0.6, 0.4]),
        "started_at": start,
        "ended_at": end,
        "start_station_name": [names[s] for s in seq.senders],
        "start_station_id": [ids[s] for s in seq.senders],
        "end_station_name": [names[r] for r in seq.receivers],
        "end_station_id": [ids[r] for r in seq.receivers],
        "start_lat": np.round(lat[seq.senders], 6),
        "start_lng": np.round(lng[seq.senders], 6),
        "end_lat": np.round(lat[seq.receivers], 6),
        "end_lng": np.round(lng[seq.receivers], 6),
        "member_casual": rng.choice(["member", "casual"], size=len(seq), p=[0.65, 0.35]),
    })
    trips.to_csv(out / "trips.csv", index=False)
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(CONFIG, fh, sort_keys=False)
    planted = {
        "seed": seed, "lambda0": lam, "events": len(seq), "last_event_seconds": float(seq.times[-1]),
        "time_of_day_peaks": [list(p) for p in TOD_PEAKS],
        "temperature": {"optimum": TEMP_OPTIMUM, "curvature": TEMP_CURVATURE},
        "precipitation_slope": PREC_SLOPE, "competition": list(COMPETITION),
        "distance": {"peak": DIST_PEAK, "curvature": DIST_CURVATURE},
        "decay_scale_hours": DECAY_SCALE_HOURS, "decay_effects": list(DECAY_EFFECTS),
    }
    with open(out / "planted.json", "w") as fh:
        json.dump(planted, fh, indent=2)
    return out


def fixture_dir():
    """Location of the bundled fixture."""
    return Path(__file__).parent / "data" / "bike_fixture"


def main(argv=None):
    import argparse
    ap = argparse.ArgumentParser(description="Write the synthetic bike-share fixture.")
    ap.add_argument("out_dir", nargs="?", default=str(fixture_dir()))
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        print(generate_fixture(args.out_dir, args.seed))


if __name__ == "__main__":
    main()
