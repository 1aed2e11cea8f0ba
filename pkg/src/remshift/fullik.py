"""Piecewise-constant full likelihood and the bias-comparison harness.

The full log-likelihood of a relational event process is approximated by
freezing every hazard over each inter-event interval ``(t[i-1], t[i]]``.
With log-linear hazards this is a Poisson regression over
(interval, at-risk dyad) cells with exposure ``t[i] - t[i-1]`` and an
intercept ``log(lambda0)``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import TermSpec, assemble_difference_design
from .errors import ConfigurationError, check_keys
from .events import ALL_PAIRS, CovariateCatalog
from .fitter import fit_degenerate_logistic
from .simulate import simulate_weibull, spawn_seeds
from .timeshift import draw_shifts_for, sample_case_control, shift_process

log = logging.getLogger(__name__)

INTERCEPT = "log_lambda0"
METHODS = ("shifted-PL", "shifted-PL+Firth", "full-likelihood", "full-likelihood+Firth")


@dataclass(frozen=True)
class FullLikelihoodFit:
    names: tuple
    coefficients: np.ndarray
    standard_errors: np.ndarray
    converged: bool
    iterations: int
    excluded_intervals: int
    firth: bool = False

    def estimate(self, name):
        j = self.names.index(name)
        return float(self.coefficients[j]), float(self.standard_errors[j])


def _cells(seq, catalog, covariates, policy, endpoint):
    """Design rows, responses and log-exposures of the Poisson form."""
    times = seq.times
    prev = np.concatenate([[0.0], times[:-1]])
    at = prev if endpoint == "left" else times
    widths = times - prev
    senders, receivers = policy.candidates(seq.node_count)
    d = senders.size
    n = times.size
    S = np.tile(senders, n)
    R = np.tile(receivers, n)
    T = np.repeat(at, d)
    # endogenous values are constant on the interval: history strictly before t[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        cols = [catalog.evaluate(c, S, R, np.repeat(times, d) if catalog.kind(c) == "endogenous" else T, seq)
                for c in covariates]
    Z = np.column_stack([np.ones(n * d)] + cols)
    y = ((S == np.repeat(seq.senders, d)) & (R == np.repeat(seq.receivers, d))).astype(float)
    offset = np.log(np.repeat(widths, d))
    risk = policy.at_risk(S, R, T) if not policy.time_invariant else np.ones(n * d, dtype=bool)
    interval = np.repeat(np.arange(n), d)
    bad_cell = ~np.all(np.isfinite(Z), axis=1) | (np.repeat(widths, d) <= 0)
    bad = np.zeros(n, dtype=bool)
    np.logical_or.at(bad, interval, bad_cell & risk)
    keep = risk & ~bad[interval]
    return Z[keep], y[keep], offset[keep], int(bad.sum())


def _poisson_newton(Z, y, offset, firth=False, max_iter=100, tol=1e-10, start=None):
    if start is None:
        beta = np.zeros(Z.shape[1])
        beta[0] = math.log(max(y.sum(), 0.5)) - _logsumexp(offset)
    else:
        beta = start.copy()

    def objective(b):
        with np.errstate(over="ignore", invalid="ignore"):
            eta = offset + Z @ b
            mu = np.exp(eta)
            val = float(y @ eta - mu.sum())
            if firth and np.isfinite(val):
                sign, logdet = np.linalg.slogdet((Z * mu[:, None]).T @ Z)
                val += 0.5 * logdet if sign > 0 else -np.inf
        return val if np.isfinite(val) else -np.inf

    obj = objective(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = np.exp(offset + Z @ beta)
        info = (Z * mu[:, None]).T @ Z
        info_inv = np.linalg.inv(info)
        resid = y - mu
        if firth:
            hat = np.einsum("ij,jk,ik->i", Z, info_inv, Z) * mu
            resid = resid + hat / 2.0
        step = info_inv @ (Z.T @ resid)
        new = beta + step
        new_obj = objective(new)
        halvings = 0
        while not new_obj >= obj - 1e-12 * abs(obj) and halvings < 30:
            step *= 0.5
            new = beta + step
            new_obj = objective(new)
            halvings += 1
        beta, obj = new, max(new_obj, obj)
        if np.max(np.abs(step)) < tol * (1.0 + np.max(np.abs(beta))):
            converged = True
            break
    mu = np.exp(offset + Z @ beta)
    cov = np.linalg.inv((Z * mu[:, None]).T @ Z)
    return beta, np.sqrt(np.diag(cov)), converged, it


def _logsumexp(v):
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def fit_piecewise_full_likelihood(seq, catalog, covariates, policy=ALL_PAIRS, firth=False, endpoint="right"):
    """Maximize the piecewise-exponential approximation of the full likelihood.

    Parameters
    ----------
    seq : EventSequence
    catalog : CovariateCatalog
    covariates : sequence of str
        Linear terms (besides the intercept ``log_lambda0``).
    policy : RiskPolicy
    firth : bool
        Jeffreys-penalized (bias-reduced) Poisson fit.
    endpoint : {"right", "left"}
        Time at which time-varying global covariates are read for the whole
        interval: its end ``t[i]`` (default) or its start ``t[i-1]``.
        Endogenous covariates are constant on the interval either way.
        Intervals whose covariates are not finite there (e.g. ``log(t)`` at
        ``t = 0``) are excluded and counted.

    Returns
    -------
    FullLikelihoodFit
    """
    if endpoint not in ("left", "right"):
        raise ConfigurationError("endpoint must be 'left' or 'right'")
    if len(seq) == 0:
        raise ConfigurationError("no events")
    Z, y, offset, excluded = _cells(seq, catalog, list(covariates), policy, endpoint)
    if y.sum() == 0:
        raise ConfigurationError("every interval was excluded")
    if excluded:
        log.info("%d interval(s) excluded for undefined covariates", excluded)
    beta, se, converged, it = _poisson_newton(Z, y, offset)
    if firth:
        beta, se, converged, it = _poisson_newton(Z, y, offset, firth=True, start=beta)
    return FullLikelihoodFit((INTERCEPT, *covariates), beta, se, converged, it, excluded, firth)


LOG_TIME = "log_time"


def weibull_catalog(p):
    return CovariateCatalog(node_count=p, global_series={LOG_TIME: np.log})


@dataclass(frozen=True)
class BiasConfig:
    """Settings of the paired bias comparison on the Weibull benchmark."""

    n_grid: tuple = (100, 500, 2000)
    replications: int = 500
    methods: tuple = METHODS
    p: int = 5
    shape: float = 0.1
    nu: float = 1.0
    seed: int = 0
    endpoint: str = "right"

    def __post_init__(self):
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigurationError(f"unknown methods {sorted(bad)}")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")

    @property
    def truth(self):
        return self.shape - 1.0

    @classmethod
    def from_dict(cls, d):
        check_keys(cls, d, "comparison")
        d = dict(d)
        for k in ("n_grid", "methods"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["n_grid"], d["methods"] = list(self.n_grid), list(self.methods)
        return d


def replication_seed(cfg, n_index, rep):
    return spawn_seeds(spawn_seeds(cfg.seed, len(cfg.n_grid))[n_index], cfg.replications)[rep]


def run_replication(cfg, n_index, rep):
    """Every method on one simulated sequence; returns ``{method: (estimate, seconds)}``."""
    n = cfg.n_grid[n_index]
    sim_seed, shift_seed, cc_seed = spawn_seeds(replication_seed(cfg, n_index, rep), 3)
    seq = simulate_weibull(cfg.p, n, cfg.shape, sim_seed)
    catalog = weibull_catalog(cfg.p)
    out = {}
    design = None
    if any(m.startswith("shifted") for m in cfg.methods):
        t0 = time.perf_counter()
        shifts = draw_shifts_for(seq, cfg.nu, shift_seed, ALL_PAIRS)
        ccs = sample_case_control(shift_process(seq, shifts), base_risk=ALL_PAIRS, seed=cc_seed)
        design = assemble_difference_design(ccs, catalog, [TermSpec(LOG_TIME, LOG_TIME, allow_missing=True)])
        prep = time.perf_counter() - t0
    for m in cfg.methods:
        t0 = time.perf_counter()
        firth = m.endswith("+Firth")
        if m.startswith("shifted"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = fit_degenerate_logistic(design, smoothing=None, firth=firth)
            est = fit.estimate(LOG_TIME)[0] if not fit.separation else float("nan")
            elapsed = time.perf_counter() - t0 + prep
        else:
            fit = fit_piecewise_full_likelihood(seq, catalog, [LOG_TIME], ALL_PAIRS, firth, cfg.endpoint)
            est = fit.estimate(LOG_TIME)[0]
            elapsed = time.perf_counter() - t0
        out[m] = (est, elapsed)
    return out


def _run_cell(args):
    cfg, n_index, reps = args
    return [run_replication(cfg, n_index, r) for r in reps]


@dataclass
class BiasSummary:
    config: BiasConfig
    rows: list
    estimates: dict = field(repr=False, default_factory=dict)

    COLUMNS = ("method", "n", "mean", "q2.5", "q97.5", "sd", "mean_runtime_seconds", "replications", "failed")

    def row(self, method, n):
        for r in self.rows:
            if r["method"] == method and r["n"] == n:
                return r
        raise KeyError((method, n))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def compare_bias(cfg, workers=1):
    """Run the paired comparison; every method sees the same sequences.

    Returns
    -------
    BiasSummary
        One row per (method, n) with mean, empirical 2.5/97.5% quantiles,
        standard deviation and mean runtime.  Failed (separated) fits are
        counted and left out of the statistics.
    """
    jobs = []
    chunk = max(1, cfg.replications // max(1, workers * 4))
    for i in range(len(cfg.n_grid)):
        reps = list(range(cfg.replications))
        jobs += [(cfg, i, reps[k:k + chunk]) for k in range(0, len(reps), chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    per = {(m, n): ([], []) for m in cfg.methods for n in cfg.n_grid}
    for (c, i, _), res in zip(jobs, results):
        for rep in res:
            for m, (est, sec) in rep.items():
                per[(m, cfg.n_grid[i])][0].append(est)
                per[(m, cfg.n_grid[i])][1].append(sec)
    rows, estimates = [], {}
    for m in cfg.methods:
        for n in cfg.n_grid:
            est = np.array(per[(m, n)][0])
            ok = est[np.isfinite(est)]
            estimates[(m, n)] = est
            rows.append({
                "method": m, "n": n,
                "mean": float(ok.mean()) if ok.size else float("nan"),
                "q2.5": float(np.quantile(ok, 0.025)) if ok.size else float("nan"),
                "q97.5": float(np.quantile(ok, 0.975)) if ok.size else float("nan"),
                "sd": float(ok.std(ddof=1)) if ok.size > 1 else 0.0,
                "mean_runtime_seconds": float(np.mean(per[(m, n)][1])),
                "replications": int(est.size),
                "failed": int(est.size - ok.size),
            })
    return BiasSummary(cfg, rows, estimates)
