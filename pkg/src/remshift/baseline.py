"""Cumulative baseline hazard and the multiplicative constant ``lambda0``.

After fitting, the Breslow estimator on the original time line increments by
``1 / sum(exp(eta_d(t_i)))`` at every event, the sum running over the dyads
at risk and ``eta`` being the fitted log-rate without ``lambda0``.  When the
fitted effects are right the result is ``lambda0 * t``, so ``lambda0`` is
the slope of a least-squares line through the origin.
"""

from __future__ import annotations

import csv
import math

import numpy as np
from scipy import integrate

from .errors import ConfigurationError
from .events import NO_SELF_LOOPS, CovariateCatalog, StepFunction
from .rates import RateEngine


def breslow_cumulative(seq, fit=None, catalog=None, policy=NO_SELF_LOOPS, offset=0.0, components=None):
    """Breslow estimate of the cumulative baseline hazard at the event times.

    Parameters
    ----------
    seq : EventSequence
        The original (unshifted) process.
    fit : FitResult, optional
        Supplies the fitted log-rate terms; ``None`` means no covariates.
    catalog : CovariateCatalog
    policy : RiskPolicy
    offset : float
        Constant added to every fitted log-rate.
    components : list, optional
        Explicit ``(label, covariate, callable)`` terms instead of ``fit``.

    Returns
    -------
    StepFunction
        Knots at the event times, value after each jump.

    Raises
    ------
    ConfigurationError
        If the risk set is empty at an event time.
    """
    if len(seq) == 0:
        raise ConfigurationError("no events")
    if components is None:
        components = fit.rate_components() if fit is not None else []
    if catalog is None:
        if components:
            raise ConfigurationError("a covariate catalog is needed to evaluate fitted terms")
        catalog = CovariateCatalog(node_count=seq.node_count)
    senders, receivers = policy.candidates(seq.node_count)
    engine = RateEngine(catalog, components, senders, receivers)
    increments = np.empty(len(seq))
    for i, (t, s, r) in enumerate(zip(seq.times, seq.senders, seq.receivers)):
        engine.refresh(t)
        logs = engine.dyad_log_rates() + engine.global_log(t) + offset
        w = np.exp(logs)
        if not policy.time_invariant:
            w = w * policy.at_risk(senders, receivers, t)
        total = w.sum()
        if not total > 0:
            raise ConfigurationError(f"empty risk set at event {i} (t={t})")
        increments[i] = 1.0 / total
        engine.record(int(s), int(r), float(t))
    return StepFunction(seq.times.copy(), np.cumsum(increments))


def estimate_lambda0(times, values):
    """Least-squares slope through the origin and its standard error.

    Raises
    ------
    ConfigurationError
        With fewer than two points or when every time is equal.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 2:
        raise ConfigurationError("at least two event times are needed")
    if np.ptp(t) == 0:
        raise ConfigurationError("all event times are equal; the regression is degenerate")
    stt = float(t @ t)
    slope = float(t @ y) / stt
    resid = y - slope * t
    se = math.sqrt(float(resid @ resid) / (t.size - 1) / stt)
    return slope, se


def lambda0_from_step(step):
    return estimate_lambda0(step.knots, step.values)


def rescaled_time_effect(fit, term, lambda0_hat):
    """The fitted time smooth shifted by ``log(lambda0_hat)``.

    Returns a callable of time estimating ``g0(t) + log(lambda0)``.
    """
    shift = math.log(lambda0_hat)

    def curve(t):
        return fit.term_contribution(term, np.asarray(t, dtype=float)) + shift

    return curve


def anchored_lambda0(fit, term, slope, t0=0.0):
    """``lambda0`` identified by pinning the fitted time smooth to zero at ``t0``.

    The fitted smooth is centered, so the Breslow slope estimates
    ``lambda0 * exp(c)`` where ``-c`` is the smooth's centering shift.  If the
    true time effect satisfies ``g0(t0) = 0`` then ``slope * exp(g0_hat(t0))``
    estimates ``lambda0`` itself.
    """
    return float(slope * math.exp(float(fit.term_contribution(term, np.array([t0]))[0])))


def l2_distance(f, g, lo, hi, points=512):
    """L2 norm of ``f - g`` over ``[lo, hi]`` by the trapezoid rule."""
    grid = np.linspace(lo, hi, points)
    d = (np.asarray(f(grid)) - np.asarray(g(grid))) ** 2
    return float(np.sqrt(integrate.trapezoid(d, grid)))


def l2_decomposition(f, g, lo, hi, points=512):
    """Split the L2 distance into a level and a shape part.

    Returns ``(level, shape)`` where ``level`` is the mean of ``f - g`` over
    ``[lo, hi]`` and ``shape`` the L2 norm of ``f - g - level``, so that
    ``l2_distance**2 == level**2 * (hi - lo) + shape**2`` up to quadrature.
    """
    grid = np.linspace(lo, hi, points)
    d = np.asarray(f(grid)) - np.asarray(g(grid))
    level = float(integrate.trapezoid(d, grid) / (hi - lo))
    return level, float(np.sqrt(integrate.trapezoid((d - level) ** 2, grid)))


def write_breslow(path, step):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["event_time", "cumulative_value"])
        for t, v in zip(step.knots, step.values):
            w.writerow([repr(float(t)), repr(float(v))])
