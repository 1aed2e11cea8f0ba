"""Replication studies on the simulation scenario.

One replication simulates the scenario, shifts it, samples controls, fits
the linear effects plus a smooth global time effect, and recovers
``lambda0`` by the Breslow slope.  Replication ``r`` always draws from the
same seed, so sweeps over a setting are paired across its values; in a
sweep over the mean shift the simulated process is literally shared.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baseline import (
    anchored_lambda0, breslow_cumulative, l2_decomposition, l2_distance, lambda0_from_step, rescaled_time_effect,
)
from .design import TermSpec, assemble_difference_design
from .errors import ConfigurationError, check_keys
from .fitter import fit_degenerate_logistic
from .scenarios import DYADIC, REPETITION, SENDER, WAVE, Scenario, simulate_scenario
from .simulate import spawn_seeds
from .timeshift import draw_shifts_for, sample_case_control, shift_process

SWEEPS = ("n", "p", "nu")
TIME_TERM = "g0"


def scenario_terms(rank=10):
    return [TermSpec(SENDER, SENDER), TermSpec(DYADIC, DYADIC), TermSpec(REPETITION, REPETITION),
            TermSpec(WAVE, WAVE), TermSpec(TIME_TERM, "time", "pspline", rank=rank)]


@dataclass(frozen=True)
class StudyConfig:
    """A sweep of one setting over ``values`` with ``replications`` each."""

    sweep: str = "n"
    values: tuple = (1000, 3000, 9000)
    replications: int = 100
    scenario: Scenario = field(default_factory=Scenario)
    nu: float = 1.0
    seed: int = 0
    folds: int = 10
    rank: int = 10

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigurationError(f"sweep must be one of {SWEEPS}")
        if self.replications < 1 or not self.values:
            raise ConfigurationError("need at least one value and one replication")

    def setting(self, value):
        """``(scenario, nu)`` for one sweep value."""
        if self.sweep == "nu":
            return self.scenario, float(value)
        return replace(self.scenario, **{self.sweep: int(value)}), self.nu

    @classmethod
    def from_dict(cls, d):
        check_keys(cls, d, "study")
        d = dict(d)
        if "scenario" in d:
            d["scenario"] = Scenario.from_dict(d["scenario"])
        if "values" in d:
            d["values"] = tuple(d["values"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        d["values"] = list(self.values)
        return d


RECORD_FIELDS = ("value", "replication", SENDER, DYADIC, REPETITION, WAVE, "se_" + WAVE,
                 "l2_g0", "g0_level_error", "l2_g0_shape", "lambda0_hat", "lambda0_anchored",
                 "dropped_fraction", "structural_zero_fraction", "edf_g0", "converged", "seconds")


def fit_replication(seq, inst, nu, seed, folds=10, rank=10, baseline=True):
    """Shift, sample, fit and (optionally) run the Breslow step on one sequence."""
    shift_seed, cc_seed, cv_seed = spawn_seeds(seed, 3)
    shifts = draw_shifts_for(seq, nu, shift_seed)
    ccs = sample_case_control(shift_process(seq, shifts), seed=cc_seed)
    design = assemble_difference_design(ccs, inst.catalog, scenario_terms(rank))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_degenerate_logistic(design, folds=folds, seed=int(cv_seed.generate_state(1)[0]))
    rec = {name: fit.estimate(name)[0] if name not in fit.inestimable else math.nan
           for name in (SENDER, DYADIC, REPETITION, WAVE)}
    rec["se_" + WAVE] = fit.estimate(WAVE)[1] if WAVE not in fit.inestimable else math.nan
    rec["dropped_fraction"] = ccs.dropped_fraction
    rec["structural_zero_fraction"] = design.structural_zero_fraction(WAVE)
    rec["edf_g0"] = fit.edf[TIME_TERM]
    rec["converged"] = bool(fit.converged)
    for key in ("l2_g0", "g0_level_error", "l2_g0_shape", "lambda0_hat", "lambda0_anchored"):
        rec[key] = math.nan
    if baseline:
        step = breslow_cumulative(seq, fit, inst.catalog)
        lam, _ = lambda0_from_step(step)
        curve = rescaled_time_effect(fit, TIME_TERM, lam)
        true = lambda t: np.asarray(t) + math.log(inst.scenario.lambda0)
        rec["lambda0_hat"] = lam
        rec["lambda0_anchored"] = anchored_lambda0(fit, TIME_TERM, lam)
        rec["l2_g0"] = l2_distance(curve, true, 0.0, float(seq.times[-1]))
        rec["g0_level_error"], rec["l2_g0_shape"] = l2_decomposition(curve, true, 0.0, float(seq.times[-1]))
    return rec, fit


def run_replication(cfg, value, rep, baseline=True):
    t0 = time.perf_counter()
    sc, nu = cfg.setting(value)
    sim_seed, fit_seed = spawn_seeds(spawn_seeds(cfg.seed, cfg.replications)[rep], 2)
    seq, inst = simulate_scenario(sc, sim_seed)
    rec, _ = fit_replication(seq, inst, nu, fit_seed, cfg.folds, cfg.rank, baseline)
    rec.update(value=value, replication=rep, seconds=time.perf_counter() - t0)
    return rec


def _run_chunk(args):
    cfg, jobs, baseline = args
    return [run_replication(cfg, v, r, baseline) for v, r in jobs]


def run_study(cfg, workers=1, baseline=True):
    """All replications of a sweep; returns a list of per-replication records."""
    jobs = [(v, r) for v in cfg.values for r in range(cfg.replications)]
    if workers > 1:
        size = max(1, len(jobs) // (workers * 4))
        chunks = [(cfg, jobs[k:k + size], baseline) for k in range(0, len(jobs), size)]
        with ProcessPoolExecutor(workers) as ex:
            return [rec for part in ex.map(_run_chunk, chunks) for rec in part]
    return _run_chunk((cfg, jobs, baseline))


def summarize(records, column):
    """Per-value five-number summary plus mean and sd of one record column."""
    out = []
    for v in sorted({r["value"] for r in records}):
        x = np.array([r[column] for r in records if r["value"] == v], dtype=float)
        x = x[np.isfinite(x)]
        q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0]) if x.size else [math.nan] * 5
        out.append({"value": v, "statistic": column, "min": q[0], "q25": q[1], "median": q[2],
                    "q75": q[3], "max": q[4], "mean": float(x.mean()) if x.size else math.nan,
                    "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0, "count": int(x.size)})
    return out


def write_records(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in RECORD_FIELDS})


SUMMARY_FIELDS = ("value", "statistic", "min", "q25", "median", "q75", "max", "mean", "sd", "count")


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else r[k])
                        for k in SUMMARY_FIELDS})
