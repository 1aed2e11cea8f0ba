"""Endogenous and geography-derived covariates.

Endogenous statistics are written in terms of two elapsed times per dyad
``(s, r)`` at query time ``t``: the time since the last ``s -> r`` event and
the time since the last ``r -> s`` event, both strictly before ``t`` and
``inf`` when no such event exists.  Both the batch :class:`~remshift.events.HistoryIndex`
and the streaming :class:`DyadState` produce them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

log = logging.getLogger(__name__)


class RepetitionIndicator:
    """1 iff the dyad already occurred strictly before ``t``."""

    time_varying = False

    def value(self, dt_same, dt_reverse):
        return np.isfinite(np.asarray(dt_same, dtype=float)).astype(float)

    def __repr__(self):
        return "RepetitionIndicator()"


@dataclass(frozen=True)
class DecayStat:
    """``exp{-delta / (2 m)}`` of the elapsed time since the relevant event.

    Parameters
    ----------
    kind : {"repetition", "reciprocity"}
        Whether ``delta`` counts from the same dyad or the reversed dyad.
    half_scale : float
        The normaliser ``m`` (the median elapsed time in the data).
    """

    kind: str
    half_scale: float

    time_varying = True

    def __post_init__(self):
        if self.kind not in ("repetition", "reciprocity"):
            raise ConfigurationError(f"unknown decay kind {self.kind!r}")
        if not self.half_scale > 0:
            raise ConfigurationError("half_scale must be positive")

    def value(self, dt_same, dt_reverse):
        dt = dt_same if self.kind == "repetition" else dt_reverse
        dt = np.asarray(dt, dtype=float)
        # exp(-inf) = 0 covers dyads with no relevant past event
        return np.exp(-dt / (2.0 * self.half_scale))


def decay_value(stat, dyad, t, history):
    """Decay statistic of one dyad at ``t`` from events strictly before ``t``."""
    dt_same, dt_rev = history.elapsed(np.array([dyad[0]]), np.array([dyad[1]]), np.array([float(t)]))
    return float(stat.value(dt_same, dt_rev)[0])


def repetition_indicator(dyad, t, history):
    """1 if ``dyad`` occurred strictly before ``t`` in ``history``, else 0."""
    dt_same, _ = history.elapsed(np.array([dyad[0]]), np.array([dyad[1]]), np.array([float(t)]))
    return int(np.isfinite(dt_same[0]))


def elapsed_at_events(seq):
    """Finite repetition and reciprocity gaps observed at each event.

    Returns
    -------
    rep, rec : ndarray
        ``t_k - (last same-dyad event before t_k)`` and the reversed-dyad
        analogue, restricted to finite values.
    """
    p = seq.node_count
    last = np.full(p * p, -np.inf)
    rep = np.empty(len(seq))
    rec = np.empty(len(seq))
    for k, (t, s, r) in enumerate(zip(seq.times, seq.senders, seq.receivers)):
        rep[k] = t - last[s * p + r]
        rec[k] = t - last[r * p + s]
        last[s * p + r] = t
    return rep[np.isfinite(rep)], rec[np.isfinite(rec)]


def estimate_medians(seq):
    """Medians of the finite repetition and reciprocity gaps.

    Returns ``(m_rep, m_rec)``; either is ``None`` (with a warning) when no
    finite gap of that kind exists, which disables the matching covariate.
    """
    rep, rec = elapsed_at_events(seq)
    out = []
    for label, gaps in (("repetition", rep), ("reciprocity", rec)):
        if gaps.size == 0:
            log.warning("no finite %s gap in the data; covariate disabled", label)
            out.append(None)
        else:
            out.append(float(np.median(gaps)))
    return tuple(out)


class DyadState:
    """Streaming last-occurrence times for every ordered pair.

    Feed events in time order with :meth:`update`; :meth:`elapsed` then
    answers queries for any time after the last fed event.
    """

    def __init__(self, node_count):
        self.p = int(node_count)
        self.last = np.full(self.p * self.p, -np.inf)

    def update(self, sender, receiver, t):
        self.last[sender * self.p + receiver] = t

    def elapsed(self, senders, receivers, t):
        senders = np.asarray(senders, dtype=np.int64)
        receivers = np.asarray(receivers, dtype=np.int64)
        same = self.last[senders * self.p + receivers]
        rev = self.last[receivers * self.p + senders]
        return t - same, t - rev


def competition(node, distances):
    """Travel time from ``node`` to its nearest other station.

    ``distances`` is a square matrix (minutes) with ``nan``/``inf`` for unknown
    pairs; the diagonal is ignored.  Returns ``nan`` for an isolated node.
    """
    row = np.array(distances[node], dtype=float)
    row[node] = np.inf
    row[~np.isfinite(row)] = np.inf
    best = row.min() if row.size else np.inf
    return float(best) if np.isfinite(best) else float("nan")


def competition_vector(distances):
    """:func:`competition` for every node; isolated nodes are reported and get ``nan``."""
    d = np.array(distances, dtype=float)
    out = np.array([competition(i, d) for i in range(d.shape[0])])
    isolated = np.flatnonzero(np.isnan(out))
    if isolated.size:
        log.warning("competition undefined for %d isolated node(s): %s", isolated.size, isolated[:10].tolist())
    return out
