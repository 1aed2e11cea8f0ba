"""Core data model: dyads, event sequences, covariates and intensities.

Node ids are dense integers ``0..p-1`` and a dyad ``(s, r)`` is addressed by
the flat id ``s * p + r``.  All containers are immutable after construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .errors import ConfigurationError, NumericError

TIME = "time"
SENDER_PREFIX = "sender."
RECEIVER_PREFIX = "receiver."


class Dyad(NamedTuple):
    sender: int
    receiver: int


class Event(NamedTuple):
    time: float
    dyad: Dyad


def break_ties(times):
    """Make ``times`` strictly increasing by nudging ties upward.

    Each time that does not exceed its predecessor is replaced by the next
    representable float above it, in sequence order.

    Returns
    -------
    times : ndarray
        A copy with strictly increasing values.
    n_ties : int
        Number of nudged entries.
    """
    t = np.array(times, dtype=float)
    if t.size < 2:
        return t, 0
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size == 0:
        return t, 0
    n_ties = 0
    for i in range(int(bad[0]) + 1, t.size):
        if t[i] <= t[i - 1]:
            t[i] = np.nextafter(t[i - 1], np.inf)
            n_ties += 1
    return t, n_ties


class EventSequence:
    """Ordered relational events with distinct times on ``(0, horizon]``.

    Parameters
    ----------
    times, senders, receivers : array_like
        Event times and their dyads.  Unsorted input is stably sorted.
    node_count : int
        Number of nodes ``p``; node ids must lie in ``0..p-1``.
    horizon : float, optional
        End of the observation window ``T``.  Defaults to the last event time.
    labels : sequence of str, optional
        External node labels, indexed by node id.
    """

    def __init__(self, times, senders, receivers, node_count, horizon=None, labels=None):
        times = np.asarray(times, dtype=float).ravel()
        senders = np.asarray(senders, dtype=np.int64).ravel()
        receivers = np.asarray(receivers, dtype=np.int64).ravel()
        if not (times.size == senders.size == receivers.size):
            raise ConfigurationError("times, senders and receivers differ in length")
        p = int(node_count)
        if p < 1:
            raise ConfigurationError("node_count must be positive")
        if times.size:
            if not np.all(np.isfinite(times)) or times.min() <= 0:
                raise ConfigurationError("event times must be finite and > 0")
            if min(senders.min(), receivers.min()) < 0 or max(senders.max(), receivers.max()) >= p:
                raise ConfigurationError("node id outside 0..node_count-1")
        order = np.argsort(times, kind="stable")
        raw_last = float(times[order[-1]]) if times.size else 0.0
        times, n_ties = break_ties(times[order])
        self.tie_count = n_ties
        if n_ties:
            warnings.warn(f"{n_ties} tied event time(s) nudged apart", stacklevel=2)
        self.times = times
        self.senders = senders[order]
        self.receivers = receivers[order]
        for arr in (self.times, self.senders, self.receivers):
            arr.setflags(write=False)
        self.node_count = p
        last = float(times[-1]) if times.size else 0.0
        self.horizon = last if horizon is None else float(horizon)
        if raw_last <= self.horizon < last:
            # only tie nudging crossed the horizon
            self.horizon = last
        if self.horizon < last:
            raise ConfigurationError(f"horizon {self.horizon} precedes last event {last}")
        self.labels = None if labels is None else list(labels)
        self._index = None

    def __len__(self):
        return self.times.size

    def __iter__(self) -> Iterator[Event]:
        for t, s, r in zip(self.times, self.senders, self.receivers):
            yield Event(float(t), Dyad(int(s), int(r)))

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.senders, other.senders)
            and np.array_equal(self.receivers, other.receivers)
        )

    def __repr__(self):
        return f"EventSequence(n={len(self)}, p={self.node_count}, horizon={self.horizon:g})"

    @property
    def dyad_ids(self):
        return self.senders * self.node_count + self.receivers

    def head(self, n):
        """First ``n`` events, with the horizon set to the n-th event time."""
        return EventSequence(self.times[:n], self.senders[:n], self.receivers[:n],
                             self.node_count, labels=self.labels)

    @property
    def history_index(self) -> "HistoryIndex":
        if self._index is None:
            self._index = HistoryIndex(self)
        return self._index

    def dyad_times(self, dyad):
        """Sorted occurrence times of one dyad."""
        return self.history_index.times_of(dyad[0] * self.node_count + dyad[1])

    def elapsed(self, senders, receivers, t):
        """Time since the last same / reversed event strictly before ``t``."""
        return self.history_index.elapsed(senders, receivers, t)


class HistoryIndex:
    """Per-dyad sorted occurrence times supporting vectorized prefix queries.

    Every event gets the integer key ``dyad_id * n + k`` where ``k`` is its
    rank in time order.  Counting the events of a dyad before a query time is
    then a single ``searchsorted`` on exact integers.
    """

    def __init__(self, seq: EventSequence):
        self.n = len(seq)
        self.p = seq.node_count
        self.times = seq.times
        ids = seq.dyad_ids
        keys = ids * max(self.n, 1) + np.arange(self.n)
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]

    def _segment(self, ids):
        n = max(self.n, 1)
        return np.searchsorted(self.keys, ids * n, side="left")

    def count_before(self, ids, t, inclusive=False):
        """Number of events of each dyad with time ``< t`` (``<= t`` if inclusive)."""
        ids = np.asarray(ids, dtype=np.int64)
        t = np.broadcast_to(np.asarray(t, dtype=float), ids.shape)
        if self.n == 0:
            return np.zeros(ids.shape, dtype=np.int64)
        side = "right" if inclusive else "left"
        q = np.searchsorted(self.times, t, side=side)
        pos = np.searchsorted(self.keys, ids * self.n + q, side="left")
        return pos - self._segment(ids)

    def last_before(self, ids, t):
        """Most recent time strictly before ``t`` per dyad; ``-inf`` if none."""
        ids = np.asarray(ids, dtype=np.int64)
        t = np.broadcast_to(np.asarray(t, dtype=float), ids.shape)
        out = np.full(ids.shape, -np.inf)
        if self.n == 0:
            return out
        q = np.searchsorted(self.times, t, side="left")
        pos = np.searchsorted(self.keys, ids * self.n + q, side="left")
        has = pos > self._segment(ids)
        out[has] = self.times[self.keys[pos[has] - 1] % self.n]
        return out

    def elapsed(self, senders, receivers, t):
        senders = np.asarray(senders, dtype=np.int64)
        receivers = np.asarray(receivers, dtype=np.int64)
        t = np.asarray(t, dtype=float)
        same = self.last_before(senders * self.p + receivers, t)
        rev = self.last_before(receivers * self.p + senders, t)
        return t - same, t - rev

    def times_of(self, dyad_id):
        lo = np.searchsorted(self.keys, dyad_id * max(self.n, 1), side="left")
        hi = np.searchsorted(self.keys, (dyad_id + 1) * max(self.n, 1), side="left")
        return self.times[np.sort(self.keys[lo:hi] % max(self.n, 1))]


def count_process(seq: EventSequence, dyad, t):
    """``N_sr(t)``: number of events of ``dyad`` with time ``<= t``."""
    dyad_id = dyad[0] * seq.node_count + dyad[1]
    return int(seq.history_index.count_before(np.array([dyad_id]), t, inclusive=True)[0])


class StepFunction:
    """Left-continuous step function.

    The value on ``(knots[i-1], knots[i]]`` is ``values[i-1]``; queries at or
    before the first knot return ``values[0]`` and queries past the last knot
    return ``values[-1]``.
    """

    def __init__(self, knots, values):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.knots.shape != self.values.shape or self.knots.size == 0:
            raise ConfigurationError("knots and values must be non-empty and aligned")
        if np.any(np.diff(self.knots) <= 0):
            raise ConfigurationError("step-function knots must be strictly increasing")

    def __call__(self, t):
        idx = np.searchsorted(self.knots, np.asarray(t, dtype=float), side="left") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def __repr__(self):
        return f"StepFunction({self.knots.size} steps on [{self.knots[0]:g}, {self.knots[-1]:g}])"


@dataclass(frozen=True)
class RiskPolicy:
    """Which dyads are at risk.

    ``kind`` is one of ``"no_self_loops"`` (default), ``"all_pairs"`` or
    ``"custom"``.  A custom policy supplies ``indicator(senders, receivers, t)``
    returning a boolean array; its candidate set is all ordered pairs.
    """

    kind: str = "no_self_loops"
    indicator: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("no_self_loops", "all_pairs", "custom"):
            raise ConfigurationError(f"unknown risk policy {self.kind!r}")
        if (self.kind == "custom") != (self.indicator is not None):
            raise ConfigurationError("custom policies (and only they) need an indicator")

    @property
    def time_invariant(self):
        return self.kind != "custom"

    def candidates(self, p):
        """Sender and receiver arrays of every dyad the policy can ever admit."""
        s, r = np.divmod(np.arange(p * p, dtype=np.int64), p)
        if self.kind == "no_self_loops":
            keep = s != r
            s, r = s[keep], r[keep]
        return s, r

    def at_risk(self, senders, receivers, t):
        senders = np.asarray(senders)
        receivers = np.asarray(receivers)
        if self.kind == "all_pairs":
            return np.ones(np.broadcast(senders, receivers).shape, dtype=bool)
        if self.kind == "no_self_loops":
            return senders != receivers
        return np.asarray(self.indicator(senders, receivers, t), dtype=bool)


NO_SELF_LOOPS = RiskPolicy("no_self_loops")
ALL_PAIRS = RiskPolicy("all_pairs")


@dataclass(frozen=True)
class CovariateCatalog:
    """Every covariate a model may reference, resolved by name.

    Names resolve as follows: ``"time"`` is the identity ``x(t) = t``; a key of
    ``global_series`` is a function of time shared by all dyads;
    ``"sender.<a>"`` / ``"receiver.<a>"`` read node attribute ``a`` of the
    sender or receiver; a key of ``dyadic_attrs`` indexes a ``p x p`` matrix;
    a key of ``endogenous`` is a statistic of the event history.
    """

    node_count: int
    global_series: dict = field(default_factory=dict)
    node_attrs: dict = field(default_factory=dict)
    dyadic_attrs: dict = field(default_factory=dict)
    endogenous: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.node_count
        for name, v in self.node_attrs.items():
            if np.shape(v) != (p,):
                raise ConfigurationError(f"node attribute {name!r} must have shape ({p},)")
        for name, v in self.dyadic_attrs.items():
            if np.shape(v) != (p, p):
                raise ConfigurationError(f"dyadic attribute {name!r} must have shape ({p}, {p})")
        names = [TIME, *self.global_series, *self.dyadic_attrs, *self.endogenous]
        if len(set(names)) != len(names):
            raise ConfigurationError("covariate names must be unique across kinds")

    def kind(self, name):
        """One of ``time``, ``global``, ``sender``, ``receiver``, ``dyadic``, ``endogenous``."""
        if name == TIME:
            return "time"
        if name in self.global_series:
            return "global"
        if name.startswith(SENDER_PREFIX) and name[len(SENDER_PREFIX):] in self.node_attrs:
            return "sender"
        if name.startswith(RECEIVER_PREFIX) and name[len(RECEIVER_PREFIX):] in self.node_attrs:
            return "receiver"
        if name in self.dyadic_attrs:
            return "dyadic"
        if name in self.endogenous:
            return "endogenous"
        raise ConfigurationError(f"unknown covariate {name!r}")

    def is_global(self, name):
        return self.kind(name) in ("time", "global")

    def evaluate(self, name, senders, receivers, times, history=None):
        """Covariate values for aligned arrays of dyads and times.

        ``history`` must offer ``elapsed(senders, receivers, times)`` (an
        :class:`EventSequence` or a streaming state) for endogenous names and
        is only consulted strictly before each query time.
        """
        kind = self.kind(name)
        senders = np.asarray(senders, dtype=np.int64)
        receivers = np.asarray(receivers, dtype=np.int64)
        times = np.asarray(times, dtype=float)
        shape = np.broadcast(senders, receivers, times).shape
        if kind == "time":
            return np.broadcast_to(times, shape).astype(float)
        if kind == "global":
            return np.broadcast_to(np.asarray(self.global_series[name](times), dtype=float), shape).copy()
        if kind == "sender":
            attr = np.asarray(self.node_attrs[name[len(SENDER_PREFIX):]])
            return np.broadcast_to(attr[senders], shape).astype(float)
        if kind == "receiver":
            attr = np.asarray(self.node_attrs[name[len(RECEIVER_PREFIX):]])
            return np.broadcast_to(attr[receivers], shape).astype(float)
        if kind == "dyadic":
            return np.broadcast_to(np.asarray(self.dyadic_attrs[name])[senders, receivers], shape).astype(float)
        if history is None:
            raise ConfigurationError(f"endogenous covariate {name!r} needs a history")
        s, r, t = np.broadcast_arrays(senders, receivers, times)
        dt_same, dt_rev = history.elapsed(s, r, t)
        return np.asarray(self.endogenous[name].value(dt_same, dt_rev), dtype=float)


@dataclass(frozen=True)
class IntensitySpec:
    """Log-additive intensity ``Y * lambda0 * exp{sum of terms + g0(t)}``.

    Parameters
    ----------
    lambda0 : float
        Positive multiplicative constant.
    linear_terms : tuple of (name, coefficient)
    smooth_terms : tuple of (name, callable)
        Each callable maps covariate values to their log-rate contribution.
    global_time_effect : callable, optional
        ``g0(t)``; ``None`` means zero.
    risk_policy : RiskPolicy
    """

    lambda0: float = 1.0
    linear_terms: tuple = ()
    smooth_terms: tuple = ()
    global_time_effect: Callable | None = None
    risk_policy: RiskPolicy = NO_SELF_LOOPS

    def __post_init__(self):
        if not (self.lambda0 > 0 and math.isfinite(self.lambda0)):
            raise ConfigurationError("lambda0 must be positive and finite")

    def components(self):
        """``(term label, covariate name, function)`` for every additive term."""
        comps = [(name, name, _Linear(float(beta))) for name, beta in self.linear_terms]
        comps += [(name, name, fn) for name, fn in self.smooth_terms]
        if self.global_time_effect is not None:
            comps.append(("g0", TIME, self.global_time_effect))
        return comps

    def scaled(self, c):
        """Same intensity with ``lambda0`` multiplied by ``c``."""
        return IntensitySpec(self.lambda0 * c, self.linear_terms, self.smooth_terms,
                             self.global_time_effect, self.risk_policy)


class _Linear:
    __slots__ = ("beta",)

    def __init__(self, beta):
        self.beta = beta

    def __call__(self, x):
        return self.beta * np.asarray(x, dtype=float)

    def __repr__(self):
        return f"linear({self.beta:g})"


def log_intensity_terms(spec, catalog, senders, receivers, times, history=None):
    """Per-term log-rate contributions as a dict ``label -> array``."""
    out = {}
    for label, cov, fn in spec.components():
        x = catalog.evaluate(cov, senders, receivers, times, history)
        out[label] = np.asarray(fn(x), dtype=float)
    return out


def eval_intensity(spec, catalog, dyad, t, history=None):
    """Intensity of one dyad at time ``t`` given the history strictly before ``t``.

    Returns exactly ``0.0`` for dyads outside the risk set.

    Raises
    ------
    ConfigurationError
        If a term references an unknown covariate.
    NumericError
        If a term or the total exponent is not finite.
    """
    s, r = int(dyad[0]), int(dyad[1])
    if not spec.risk_policy.at_risk(np.array([s]), np.array([r]), t)[0]:
        return 0.0
    terms = log_intensity_terms(spec, catalog, np.array([s]), np.array([r]), np.array([float(t)]), history)
    exponent = 0.0
    for label in sorted(terms):
        value = float(terms[label][0])
        if not math.isfinite(value):
            raise NumericError(f"term {label!r} is not finite at t={t}", term=label)
        exponent += value
    if not math.isfinite(exponent) or exponent > 709.0:
        raise NumericError(f"exponent {exponent} overflows", term=None)
    return spec.lambda0 * math.exp(exponent)
