"""Time-shifted event process and nested case-control sampling on it.

Every dyad ``d`` receives an independent non-negative shift ``h_d``; its
events move from ``t`` to ``t + h_d``.  At a shifted event time the risk set
holds the dyads whose back-shifted time lies in ``[0, T]`` and which are at
risk there under the base policy.  One control per event is drawn uniformly
from that set minus the event dyad, and stored at its back-shifted time
``t* = t + h_event - h_control``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .events import NO_SELF_LOOPS, EventSequence
from .simulate import make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ShiftAssignment:
    """Shift per dyad, stored densely over flat dyad ids (``nan`` = not drawn)."""

    node_count: int
    shifts: np.ndarray
    nu: float
    mean_event_time: float

    def of(self, senders, receivers):
        return self.shifts[np.asarray(senders) * self.node_count + np.asarray(receivers)]

    def __getitem__(self, dyad):
        return float(self.shifts[dyad[0] * self.node_count + dyad[1]])

    @property
    def max_shift(self):
        return float(np.nanmax(self.shifts))

    def drawn(self):
        """Flat ids and values of the dyads that received a shift."""
        ids = np.flatnonzero(~np.isnan(self.shifts))
        return ids, self.shifts[ids]


def draw_shifts(senders, receivers, node_count, nu, mean_event_time, seed=0):
    """Independent exponential shifts with mean ``nu * mean_event_time``.

    Raises
    ------
    ConfigurationError
        If the dyad set is empty or ``nu``/``mean_event_time`` is not positive.
    """
    senders = np.asarray(senders, dtype=np.int64)
    receivers = np.asarray(receivers, dtype=np.int64)
    if senders.size == 0:
        raise ConfigurationError("cannot draw shifts for an empty dyad set")
    if not (nu > 0 and mean_event_time > 0):
        raise ConfigurationError("nu and mean_event_time must be positive")
    rng = make_rng(seed)
    shifts = np.full(node_count * node_count, np.nan)
    shifts[senders * node_count + receivers] = rng.exponential(nu * mean_event_time, size=senders.size)
    return ShiftAssignment(node_count, shifts, float(nu), float(mean_event_time))


def draw_shifts_for(seq, nu, seed=0, policy=NO_SELF_LOOPS):
    """:func:`draw_shifts` over the policy's dyads with ``t-bar`` from ``seq``."""
    s, r = policy.candidates(seq.node_count)
    return draw_shifts(s, r, seq.node_count, nu, float(seq.times.mean()), seed)


class ShiftedSequence(EventSequence):
    """The shifted process: each event moved to ``t + h`` and re-sorted.

    ``origin[j]`` is the index in the source sequence of shifted event ``j``.
    Shifted ties are broken by the usual nudging rule and counted in
    ``tie_count``.
    """

    def __init__(self, source, shifts):
        h = shifts.of(source.senders, source.receivers)
        if np.any(np.isnan(h)):
            raise ConfigurationError("shift assignment does not cover every event dyad")
        shifted = source.times + h
        order = np.argsort(shifted, kind="stable")
        # large shifts can round nearby times together; ties here are expected
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            super().__init__(shifted[order], source.senders[order], source.receivers[order],
                             source.node_count, horizon=source.horizon + shifts.max_shift,
                             labels=source.labels)
        self.origin = order
        self.source = source
        self.shifts = shifts
        if self.tie_count:
            log.info("%d shifted-time tie(s) broken", self.tie_count)


def shift_process(seq, shifts):
    return ShiftedSequence(seq, shifts)


class _SortedShifts:
    """Drawn dyads sorted by shift so each risk set is a contiguous range."""

    def __init__(self, shifts):
        ids, h = shifts.drawn()
        order = np.argsort(h, kind="stable")
        self.ids = ids[order]
        self.h = h[order]
        self.position = np.full(shifts.shifts.size, -1, dtype=np.int64)
        self.position[self.ids] = np.arange(self.ids.size)
        self.p = shifts.node_count

    def window(self, t, horizon):
        """Index range of dyads with ``h <= t <= h + horizon``."""
        lo = np.searchsorted(self.h, np.asarray(t) - horizon, side="left")
        hi = np.searchsorted(self.h, np.asarray(t), side="right")
        return lo, hi


def shifted_risk_set(t, shifts, base_risk=NO_SELF_LOOPS, horizon=None):
    """Dyads at risk in the shifted process at shifted time ``t``.

    A dyad qualifies when ``t - h`` lies in ``[0, horizon]`` and the base
    policy has it at risk at that back-shifted time.

    Returns
    -------
    senders, receivers : ndarray
    """
    if horizon is None:
        raise ConfigurationError("horizon T is required")
    idx = _SortedShifts(shifts)
    lo, hi = idx.window(float(t), horizon)
    ids = idx.ids[lo:hi]
    s, r = np.divmod(ids, shifts.node_count)
    keep = base_risk.at_risk(s, r, t - idx.h[lo:hi])
    return s[keep], r[keep]


@dataclass(frozen=True, eq=False)
class CaseControlSet:
    """Event/control pairs at their back-shifted times.

    ``group`` holds the source-event index of each row; with one control per
    event it is unique per row.
    """

    event_time: np.ndarray
    event_sender: np.ndarray
    event_receiver: np.ndarray
    control_time: np.ndarray
    control_sender: np.ndarray
    control_receiver: np.ndarray
    group: np.ndarray
    dropped_uninformative: int
    total_events: int
    source: EventSequence | None = field(default=None, repr=False)
    shifts: ShiftAssignment | None = field(default=None, repr=False)
    controls_per_event: int = 1

    COLUMNS = ("event_time", "event_sender", "event_receiver",
               "control_time", "control_sender", "control_receiver")

    def __len__(self):
        return self.event_time.size

    @property
    def dropped_fraction(self):
        return self.dropped_uninformative / self.total_events if self.total_events else 0.0

    def swapped(self):
        """The same rows with event and control exchanged."""
        return CaseControlSet(self.control_time, self.control_sender, self.control_receiver,
                              self.event_time, self.event_sender, self.event_receiver,
                              self.group, self.dropped_uninformative, self.total_events,
                              self.source, self.shifts, self.controls_per_event)

    def subset(self, rows):
        rows = np.asarray(rows)
        return CaseControlSet(self.event_time[rows], self.event_sender[rows], self.event_receiver[rows],
                              self.control_time[rows], self.control_sender[rows], self.control_receiver[rows],
                              self.group[rows], self.dropped_uninformative, self.total_events,
                              self.source, self.shifts, self.controls_per_event)

    def to_csv(self, path, labels=None):
        lab = (lambda v: labels[v]) if labels is not None else (lambda v: int(v))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(self.event_time, self.event_sender, self.event_receiver,
                           self.control_time, self.control_sender, self.control_receiver):
                w.writerow([repr(float(row[0])), lab(row[1]), lab(row[2]),
                            repr(float(row[3])), lab(row[4]), lab(row[5])])

    @classmethod
    def from_csv(cls, path, source=None, dropped_uninformative=0, total_events=None):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = {c: np.array([r[c] for r in rows]) for c in cls.COLUMNS}
        n = len(rows)
        return cls(col["event_time"].astype(float), col["event_sender"].astype(np.int64),
                   col["event_receiver"].astype(np.int64), col["control_time"].astype(float),
                   col["control_sender"].astype(np.int64), col["control_receiver"].astype(np.int64),
                   np.arange(n), dropped_uninformative,
                   n + dropped_uninformative if total_events is None else total_events, source)


def sample_case_control(shifted, shifts=None, base_risk=NO_SELF_LOOPS, seed=0, controls_per_event=1):
    """Draw one (or more) uniform non-event per shifted event.

    Parameters
    ----------
    shifted : ShiftedSequence
    shifts : ShiftAssignment, optional
        Defaults to ``shifted.shifts``.
    base_risk : RiskPolicy
    seed : int or SeedSequence
    controls_per_event : int
        Values above 1 draw distinct controls per event and emit one row per
        control sharing the event's ``group``; the logistic fitter only
        accepts single-control sets.

    Returns
    -------
    CaseControlSet
        Events whose shifted risk set contains only themselves are dropped
        and counted in ``dropped_uninformative``.
    """
    shifts = shifted.shifts if shifts is None else shifts
    source = shifted.source
    horizon = source.horizon
    rng = make_rng(seed)
    idx = _SortedShifts(shifts)
    p = shifts.node_count

    k = shifted.origin
    t_ev = source.times[k]
    s_ev = source.senders[k]
    r_ev = source.receivers[k]
    h_ev = shifts.of(s_ev, r_ev)
    # window in shift space: h_c in [t + h_e - T, t + h_e]
    lo = np.searchsorted(idx.h, t_ev + h_ev - horizon, side="left")
    hi = np.searchsorted(idx.h, t_ev + h_ev, side="right")
    pos_ev = idx.position[s_ev * p + r_ev]

    if base_risk.time_invariant and controls_per_event == 1:
        own = (pos_ev >= lo) & (pos_ev < hi)
        m = hi - lo - own.astype(np.int64)
        keep = m > 0
        u = np.floor(rng.random(keep.sum()) * m[keep]).astype(np.int64)
        pos = lo[keep] + u
        pos += own[keep] & (pos >= pos_ev[keep])
        rows_k = np.flatnonzero(keep)
        ctrl = idx.ids[pos]
        group = rows_k
    else:
        rows, ctrls = [], []
        for j in range(len(shifted)):
            cand = np.arange(lo[j], hi[j])
            cand = cand[cand != pos_ev[j]]
            if not base_risk.time_invariant and cand.size:
                cs, cr = np.divmod(idx.ids[cand], p)
                back = t_ev[j] + (h_ev[j] - idx.h[cand])
                cand = cand[base_risk.at_risk(cs, cr, back)]
            if cand.size == 0:
                continue
            take = min(controls_per_event, cand.size)
            chosen = cand[rng.choice(cand.size, size=take, replace=False)] if take > 1 else \
                cand[[int(rng.integers(cand.size))]]
            rows.extend([j] * take)
            ctrls.extend(chosen.tolist())
        rows_k = np.array(rows, dtype=np.int64)
        ctrl = idx.ids[np.array(ctrls, dtype=np.int64)] if ctrls else np.zeros(0, dtype=np.int64)
        group = rows_k
        keep = np.zeros(len(shifted), dtype=bool)
        keep[rows_k] = True

    c_s, c_r = np.divmod(ctrl, p)
    h_c = shifts.of(c_s, c_r)
    t_ctrl = np.clip(t_ev[rows_k] + (h_ev[rows_k] - h_c), 0.0, horizon)
    dropped = int(len(shifted) - keep.sum())
    return CaseControlSet(
        event_time=t_ev[rows_k], event_sender=s_ev[rows_k], event_receiver=r_ev[rows_k],
        control_time=t_ctrl, control_sender=c_s, control_receiver=c_r,
        group=k[group], dropped_uninformative=dropped, total_events=len(shifted),
        source=source, shifts=shifts, controls_per_event=controls_per_event,
    )
