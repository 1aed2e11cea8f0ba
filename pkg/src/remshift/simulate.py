"""Simulation of relational event processes.

:func:`simulate_tau_leap` generates an inhomogeneous Poisson process over
dyads by freezing the total rate over leaps of width ``tau``;
:func:`simulate_weibull` draws the all-pairs Weibull benchmark process
exactly by time change.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateProcessError, ParameterError, TruncationError
from .events import EventSequence
from .rates import RateEngine

log = logging.getLogger(__name__)

# relative total-rate change tolerated across one leap
MAX_LEAP_CHANGE = math.log(1.1)
MAX_HALVINGS = 12
# consecutive empty leaps after which a rate-free process is declared dead
MAX_IDLE_LEAPS = 100_000


def make_rng(seed):
    """Counter-based generator (Philox) from an int or ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def spawn_seeds(seed, n):
    """``n`` independent child seed sequences, one per replication.

    Unlike ``SeedSequence.spawn`` this is a pure function of ``seed``.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (i,)) for i in range(n)]


@dataclass(frozen=True)
class TauLeapConfig:
    """Settings for :func:`simulate_tau_leap`.

    Parameters
    ----------
    tau : float
        Leap width; :func:`default_tau` gives the usual choice.
    target_events : int
        Number of events ``n`` to generate.
    rng_seed : int
    max_time : float, optional
        Abort with :class:`TruncationError` beyond this time.
    """

    tau: float
    target_events: int
    rng_seed: int = 0
    max_time: float | None = None

    def __post_init__(self):
        if not (self.tau and self.tau > 0):
            raise ConfigurationError("tau must be > 0")
        if self.target_events < 1:
            raise ConfigurationError("target_events must be >= 1")


def default_tau(horizon_guess, n):
    """Leap width of one tenth of the expected inter-event gap."""
    return horizon_guess / (10.0 * n)


def simulate_tau_leap(spec, catalog, cfg, seed=None):
    """Simulate ``cfg.target_events`` events of the intensity ``spec``.

    Within a leap the rate of every dyad is frozen at its value at the leap's
    left end.  An exponential waiting time is drawn against the frozen total
    rate; if it falls inside the leap the event happens and the dyad is drawn
    with probability proportional to its frozen rate, after which the rates
    are re-anchored at the event time.  Otherwise time advances by one leap.
    The leap is halved (up to ``MAX_HALVINGS`` times) while the global
    log-rate changes by more than ``log(1.1)`` across it.

    Parameters
    ----------
    spec : IntensitySpec
    catalog : CovariateCatalog
    cfg : TauLeapConfig
    seed : int or SeedSequence, optional
        Overrides ``cfg.rng_seed``.

    Returns
    -------
    EventSequence
        Horizon equal to the time of the last event.
    """
    rng = make_rng(cfg.rng_seed if seed is None else seed)
    policy = spec.risk_policy
    senders, receivers = policy.candidates(catalog.node_count)
    if senders.size == 0:
        raise DegenerateProcessError("the risk policy admits no dyad; no event can occur")
    engine = RateEngine(catalog, spec.components(), senders, receivers)
    log_lambda0 = math.log(spec.lambda0)
    n = cfg.target_events
    times = np.empty(n)
    ev_s = np.empty(n, dtype=np.int64)
    ev_r = np.empty(n, dtype=np.int64)

    t = 0.0
    k = 0
    idle = 0
    g = engine.global_log(t)
    base = engine.dyad_log_rates()
    shift = base.max()
    weights = np.exp(base - shift)
    while k < n:
        if engine.time_varying_endo or not policy.time_invariant:
            engine.refresh(t)
            base = engine.dyad_log_rates()
            shift = base.max()
            weights = np.exp(base - shift)
            if not policy.time_invariant:
                weights = weights * policy.at_risk(senders, receivers, t)
        wsum = weights.sum()
        tau = cfg.tau
        g_next = engine.global_log(t + tau)
        for _ in range(MAX_HALVINGS):
            if abs(g_next - g) <= MAX_LEAP_CHANGE:
                break
            tau *= 0.5
            g_next = engine.global_log(t + tau)
        if wsum <= 0.0:
            idle += 1
            if (policy.time_invariant and not engine.global_components) or \
                    (cfg.max_time is None and idle > MAX_IDLE_LEAPS):
                raise DegenerateProcessError(f"total rate is zero at t={t}; no event can occur")
            t, g = t + tau, g_next
            if cfg.max_time is not None and t > cfg.max_time:
                _truncate(cfg, times, ev_s, ev_r, k, catalog.node_count)
            continue
        idle = 0
        total = math.exp(log_lambda0 + g + shift) * wsum
        if not math.isfinite(total):
            raise DegenerateProcessError(f"total rate overflowed at t={t}")
        wait = rng.exponential(1.0 / total)
        if wait > tau:
            t, g = t + tau, g_next
        else:
            t_new = t + wait
            if t_new <= t:
                t_new = float(np.nextafter(t, np.inf))
            i = int(np.searchsorted(np.cumsum(weights), rng.random() * wsum, side="right"))
            i = min(i, weights.size - 1)
            s, r = int(senders[i]), int(receivers[i])
            times[k], ev_s[k], ev_r[k] = t_new, s, r
            k += 1
            t = t_new
            g = engine.global_log(t)
            engine.record(s, r, t)
            if engine.endo_components and not engine.time_varying_endo:
                base = engine.dyad_log_rates()
                shift = base.max()
                weights = np.exp(base - shift)
        if cfg.max_time is not None and t > cfg.max_time:
            _truncate(cfg, times, ev_s, ev_r, k, catalog.node_count)
    return EventSequence(times, ev_s, ev_r, catalog.node_count)


def _truncate(cfg, times, ev_s, ev_r, k, p):
    partial = EventSequence(times[:k], ev_s[:k], ev_r[:k], p, horizon=cfg.max_time) if k else None
    raise TruncationError(f"max_time {cfg.max_time} reached after {k} of {cfg.target_events} events", partial)


def simulate_weibull(p, n, shape, seed=0):
    """All-pairs process with Weibull(scale 1, shape ``shape``) hazard per dyad.

    Every one of the ``p**2`` ordered pairs (self-loops included) has hazard
    ``shape * t**(shape - 1)``, so the total cumulative hazard is
    ``p**2 * t**shape``.  Unit-rate arrival times ``E_k`` are mapped through
    its inverse and dyads are drawn uniformly.
    """
    if not shape > 0:
        raise ParameterError("Weibull shape must be > 0")
    if p < 1 or n < 1:
        raise ParameterError("p and n must be >= 1")
    rng = make_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0, size=n))
    times = np.exp((np.log(arrivals) - 2.0 * math.log(p)) / shape)
    dyads = rng.integers(0, p * p, size=n)
    s, r = np.divmod(dyads, p)
    return EventSequence(times, s, r, p)
