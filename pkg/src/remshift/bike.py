"""Bike-share pipeline: ingest trips, weather and travel times, then fit.

The model combines global smooths (time, temperature, precipitation,
time of day), station competition for sender and receiver, a smooth of
travel time between stations, and decaying repetition and reciprocity
statistics.  Everything is driven by a YAML configuration whose paths are
relative to the configuration file.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import TermSpec, assemble_difference_design
from .endostats import DecayStat, competition_vector, estimate_medians
from .errors import ConfigurationError
from .events import ALL_PAIRS, NO_SELF_LOOPS, CovariateCatalog
from .fitter import fit_degenerate_logistic, predict_smooth
from .ingest import TimeOfDay, distance_labels, read_distance_matrix, read_events, read_global_series
from .simulate import spawn_seeds
from .timeshift import draw_shifts_for, sample_case_control, shift_process

log = logging.getLogger(__name__)

POLICIES = {"all_pairs": ALL_PAIRS, "no_self_loops": NO_SELF_LOOPS}


@dataclass
class BikeData:
    sequence: object
    catalog: CovariateCatalog
    terms: list
    policy: object
    medians: dict
    report: dict
    inputs: list = field(default_factory=list)


def _resolve(base, p):
    p = Path(p)
    return p if p.is_absolute() else Path(base) / p


def load_bike_data(cfg, base_dir="."):
    """Ingest every input named in the configuration and build the catalog."""
    for key in ("window", "events", "terms"):
        if key not in cfg:
            raise ConfigurationError(f"bike configuration lacks {key!r}")
    win = cfg["window"]
    tz = win.get("timezone", "UTC")
    inputs = []
    dist_cfg = cfg.get("distances")
    stations = None
    if dist_cfg:
        dist_path = _resolve(base_dir, dist_cfg["path"])
        stations = distance_labels(dist_path)
        inputs.append(dist_path)
    ev = cfg["events"]
    ev_path = _resolve(base_dir, ev["path"])
    inputs.insert(0, ev_path)
    ing = read_events(ev_path, ev.get("time_column", "start_time"), ev.get("sender_column", "start_station"),
                      ev.get("receiver_column", "end_station"), win["start"], win["end"], tz,
                      stations=stations, max_error_fraction=ev.get("max_error_fraction", 0.01))
    seq = ing.sequence
    p = seq.node_count

    global_series = {"tod": TimeOfDay(win["start"], tz)}
    weather = cfg.get("weather")
    if weather:
        w_path = _resolve(base_dir, weather["path"])
        inputs.append(w_path)
        for name, spec in weather.get("series", {}).items():
            global_series[name] = read_global_series(
                w_path, name, spec.get("transform", "identity"), win["start"], win["end"], tz,
                time_column=weather.get("time_column", "timestamp"), value_column=spec.get("column", name),
                gap_limit_hours=weather.get("gap_limit_hours", 3.0))

    node_attrs, dyadic_attrs = {}, {}
    unknown = 0
    if dist_cfg:
        _, dist = read_distance_matrix(dist_path, labels=seq.labels)
        unknown = int(np.sum(np.all(np.isnan(np.where(np.eye(p, dtype=bool), np.nan, dist)), axis=1)))
        dyadic_attrs["distance"] = dist
        node_attrs["competition"] = competition_vector(dist)

    endogenous, medians = {}, {}
    m_rep, m_rec = estimate_medians(seq)
    medians = {"repetition": m_rep, "reciprocity": m_rec}
    if m_rep is not None:
        endogenous["rep"] = DecayStat("repetition", m_rep)
    if m_rec is not None:
        endogenous["rec"] = DecayStat("reciprocity", m_rec)
    catalog = CovariateCatalog(node_count=p, global_series=global_series, node_attrs=node_attrs,
                               dyadic_attrs=dyadic_attrs, endogenous=endogenous)
    terms = []
    for t in cfg["terms"]:
        term = TermSpec.from_dict(t)
        try:
            catalog.kind(term.covariate)
        except ConfigurationError:
            warnings.warn(f"term {term.name!r} dropped: covariate {term.covariate!r} unavailable", stacklevel=2)
            continue
        terms.append(term)
    policy = POLICIES[cfg.get("risk_policy", "all_pairs")]
    report = {**ing.report.to_dict(), "stations": p, "stations_without_travel_times": unknown,
              "medians_seconds": medians}
    return BikeData(seq, catalog, terms, policy, medians, report, inputs)


@dataclass
class BikeFit:
    data: BikeData
    fit: object
    case_control: object
    design: object

    def curves(self, points=200):
        """Fitted centered curve of every smooth on an even grid over its range."""
        out = {}
        for name, b in self.design.blocks.items():
            if b.spec.kind == "linear":
                continue
            lo, hi = (0.0, b.basis.period) if b.spec.kind == "cyclic" else (b.basis.lo, b.basis.hi)
            out[name] = predict_smooth(self.fit, name, np.linspace(lo, hi, points))
        return out


def fit_bike(cfg, base_dir=".", seed=None):
    """Shift, sample and fit the configured bike model.

    Returns
    -------
    BikeFit
    """
    data = load_bike_data(cfg, base_dir)
    seed = cfg.get("seed", 0) if seed is None else seed
    shift_seed, cc_seed, cv_seed = spawn_seeds(seed, 3)
    shifts = draw_shifts_for(data.sequence, float(cfg.get("nu", 1.0)), shift_seed, data.policy)
    ccs = sample_case_control(shift_process(data.sequence, shifts), base_risk=data.policy, seed=cc_seed)
    design = assemble_difference_design(ccs, data.catalog, data.terms)
    fit_cfg = cfg.get("fit", {})
    fit = fit_degenerate_logistic(design, folds=fit_cfg.get("folds", 10), grid=fit_cfg.get("grid"),
                                  seed=int(cv_seed.generate_state(1)[0]))
    return BikeFit(data, fit, ccs, design)
