"""Spline bases and the difference design of the degenerate logistic model.

Each row of the design is ``basis(event value) - basis(control value)``
concatenated over model terms, so any constant added to a smooth cancels and
no intercept column exists.

Smooth terms use cubic B-splines with a second-order difference penalty.
For knots placed at data quantiles the differences are divided by the
spacing of the Greville abscissae, which keeps straight lines exactly
unpenalized for any knot placement.  The cyclic variant uses evenly spaced
knots over one period, periodic B-splines and a wrapped difference penalty.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigurationError, DegenerateCovariateError, IngestionError, check_keys

log = logging.getLogger(__name__)

KINDS = ("linear", "pspline", "cyclic")


@dataclass(frozen=True)
class TermSpec:
    """One additive model term.

    Parameters
    ----------
    name : str
        Label used in results.
    covariate : str
        Catalog name (``"time"`` for the global time effect).
    kind : {"linear", "pspline", "cyclic"}
    rank : int
        Number of basis functions before centering.
    period : float, optional
        Required for ``cyclic``.
    allow_missing : bool
        If true, rows where the covariate is ``nan`` for the event or the
        control get a zero entry for this term instead of raising.
    """

    name: str
    covariate: str
    kind: str = "linear"
    rank: int = 10
    period: float | None = None
    allow_missing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"term {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "cyclic" and not (self.period and self.period > 0):
            raise ConfigurationError(f"term {self.name!r}: cyclic terms need a positive period")
        if self.kind != "linear" and self.rank < 3:
            raise ConfigurationError(f"term {self.name!r}: spline rank must be >= 3")

    @classmethod
    def from_dict(cls, d):
        check_keys(cls, d, "term")
        return cls(**d)


class Basis:
    """Evaluable basis with penalty and sum-to-zero centering.

    Attributes
    ----------
    raw_penalty : ndarray
        Penalty on the uncentered coefficients.
    penalty : ndarray
        Penalty on the centered coefficients (``Z' S Z``).
    constraint : ndarray or None
        ``Z``; the centered basis is ``raw(x) @ Z``.
    """

    def __init__(self, kind, rank, knots=None, degree=3, period=None, lo=None, hi=None, center=0.0):
        self.kind = kind
        self.rank = rank
        self.knots = knots
        self.degree = degree
        self.period = period
        self.lo = lo
        self.hi = hi
        self.center = center
        self.constraint = None
        self.raw_penalty = np.zeros((1, 1)) if kind == "linear" else None
        self.penalty = np.zeros((1, 1)) if kind == "linear" else None

    def __repr__(self):
        return f"Basis({self.kind}, rank={self.rank}, columns={self.n_columns})"

    @property
    def n_columns(self):
        return 1 if self.kind == "linear" else self.constraint.shape[1]

    @property
    def null_space_dim(self):
        if self.kind == "linear":
            return 1
        eig = np.linalg.eigvalsh(self.penalty)
        return int(np.sum(eig <= 1e-9 * max(eig.max(), 1e-300)))

    def in_range(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "cyclic":
            return np.isfinite(x)
        return (x >= self.lo) & (x <= self.hi)

    def raw(self, x):
        """Uncentered basis matrix; spline arguments outside the range are clamped."""
        x = np.asarray(x, dtype=float).ravel()
        if self.kind == "linear":
            return x[:, None]
        if self.kind == "cyclic":
            k = self.rank
            u = np.mod(x, self.period)
            full = BSpline.design_matrix(u, self.knots, self.degree).toarray()
            out = full[:, :k].copy()
            out[:, : full.shape[1] - k] += full[:, k:]
            return out
        u = np.clip(x, self.lo, self.hi)
        return BSpline.design_matrix(u, self.knots, self.degree).toarray()

    def evaluate(self, x, centered=True):
        """Basis matrix; linear terms are the identity unless ``centered``."""
        if self.kind == "linear":
            x = np.asarray(x, dtype=float).ravel()
            return (x - self.center if centered else x)[:, None]
        return self.raw(x) @ self.constraint


def _greville(knots, degree, n_basis):
    return np.array([knots[j + 1: j + degree + 1].mean() for j in range(n_basis)])


def _divided_difference_penalty(g):
    """Second differences of coefficients, divided by Greville spacing."""
    n = g.size
    d1 = np.diff(np.eye(n), axis=0) / np.diff(g)[:, None]
    d2 = np.diff(d1, axis=0)
    # rescale so uniform knots give the plain P-spline penalty
    d2 *= np.mean(np.diff(g)) ** 2
    return d2.T @ d2


def _cyclic_difference_penalty(k):
    eye = np.eye(k)
    d = np.roll(eye, -1, axis=1) - 2 * eye + np.roll(eye, 1, axis=1)
    return d.T @ d


def _sum_to_zero(raw_matrix):
    """Null-space basis ``Z`` of the column-mean constraint."""
    c = raw_matrix.mean(axis=0)[:, None]
    q, _ = np.linalg.qr(c, mode="complete")
    return q[:, 1:]


def build_basis(kind, rank, data, period=None, degree=3):
    """Construct a basis on ``data`` (which also defines centering).

    Raises
    ------
    DegenerateCovariateError
        If ``data`` has zero variance.
    """
    data = np.asarray(data, dtype=float).ravel()
    data = data[np.isfinite(data)]
    if data.size == 0 or np.ptp(data) == 0:
        raise DegenerateCovariateError("covariate has zero variance; no basis can be built")
    if kind == "linear":
        return Basis("linear", 1, center=float(data.mean()), lo=float(data.min()), hi=float(data.max()))
    if kind not in ("pspline", "cyclic"):
        raise ConfigurationError(f"unknown basis kind {kind!r}")
    if rank < 3:
        raise ConfigurationError("spline rank must be >= 3")
    uniq = np.unique(data)
    if kind == "pspline" and uniq.size < rank:
        warnings.warn(f"only {uniq.size} distinct values; rank reduced from {rank}", stacklevel=2)
        rank = max(uniq.size, 3)
    deg = min(degree, rank - 1)

    if kind == "cyclic":
        if not (period and period > 0):
            raise ConfigurationError("cyclic basis needs a positive period")
        h = period / rank
        knots = np.arange(-deg, rank + deg + 1) * h
        basis = Basis("cyclic", rank, knots=knots, degree=deg, period=float(period),
                      lo=0.0, hi=float(period))
        basis.raw_penalty = _cyclic_difference_penalty(rank)
    else:
        lo, hi = float(uniq[0]), float(uniq[-1])
        n_inner = rank - deg - 1
        inner = np.quantile(uniq, np.arange(1, n_inner + 1) / (n_inner + 1)) if n_inner > 0 else np.zeros(0)
        knots = np.concatenate([np.full(deg + 1, lo), inner, np.full(deg + 1, hi)])
        basis = Basis("pspline", rank, knots=knots, degree=deg, lo=lo, hi=hi)
        basis.raw_penalty = _divided_difference_penalty(_greville(knots, deg, rank))
    raw = basis.raw(data)
    basis.constraint = _sum_to_zero(raw)
    basis.penalty = basis.constraint.T @ basis.raw_penalty @ basis.constraint
    return basis


@dataclass
class TermBlock:
    spec: TermSpec
    basis: Basis
    columns: slice
    penalty: np.ndarray | None
    is_global: bool
    missing_rows: int = 0

    @property
    def penalized(self):
        return self.penalty is not None


@dataclass
class DifferenceDesign:
    """Rows of basis differences plus per-term bookkeeping."""

    X: np.ndarray
    blocks: dict
    event_values: dict = field(default_factory=dict, repr=False)
    control_values: dict = field(default_factory=dict, repr=False)
    dropped_rows: int = 0
    total_events: int = 0

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def column_names(self):
        names = []
        for name, b in self.blocks.items():
            width = b.columns.stop - b.columns.start
            names += [name] if width == 1 else [f"{name}[{j}]" for j in range(width)]
        return names

    def penalties(self):
        return [(b.columns, b.penalty, name) for name, b in self.blocks.items() if b.penalized]

    def subset(self, rows):
        return DifferenceDesign(self.X[rows], self.blocks,
                                {k: v[rows] for k, v in self.event_values.items()},
                                {k: v[rows] for k, v in self.control_values.items()},
                                self.dropped_rows, self.total_events)

    def negated(self):
        return DifferenceDesign(-self.X, self.blocks, self.control_values, self.event_values,
                                self.dropped_rows, self.total_events)

    def structural_zero_fraction(self, name):
        b = self.blocks[name]
        return float(np.mean(np.all(self.X[:, b.columns] == 0, axis=1)))


def term_values(ccs, catalog, term, history):
    ev = catalog.evaluate(term.covariate, ccs.event_sender, ccs.event_receiver, ccs.event_time, history)
    ct = catalog.evaluate(term.covariate, ccs.control_sender, ccs.control_receiver, ccs.control_time, history)
    return ev, ct


def assemble_difference_design(ccs, catalog, terms, history=None, bases=None):
    """Build the difference design for a case-control set.

    Parameters
    ----------
    ccs : CaseControlSet
    catalog : CovariateCatalog
    terms : sequence of TermSpec
    history : EventSequence, optional
        Original process used for endogenous covariates; defaults to
        ``ccs.source``.  Queries look strictly before each row's time.
    bases : dict, optional
        Pre-built bases by term name (otherwise fitted on the union of event
        and control values).

    Raises
    ------
    IngestionError
        If a covariate is undefined (``nan``) for a row and the term does not
        allow missing values.
    """
    history = ccs.source if history is None else history
    if len(ccs) == 0:
        raise ConfigurationError(
            f"empty case-control set ({ccs.dropped_uninformative} uninformative events dropped)")
    if getattr(ccs, "controls_per_event", 1) != 1:
        raise ConfigurationError("the degenerate logistic design needs exactly one control per event")
    names = [t.name for t in terms]
    if len(set(names)) != len(names):
        raise ConfigurationError("term names must be unique")
    cols, blocks, evs, cts = [], {}, {}, {}
    start = 0
    for term in terms:
        ev, ct = term_values(ccs, catalog, term, history)
        bad = ~(np.isfinite(ev) & np.isfinite(ct))
        if bad.any() and not term.allow_missing:
            rows = np.flatnonzero(bad)
            raise IngestionError(
                f"covariate {term.covariate!r} undefined for {rows.size} row(s), first at row {rows[0]}", rows[:20])
        basis = (bases or {}).get(term.name)
        if basis is None:
            basis = build_basis(term.kind, term.rank, np.concatenate([ev[~bad], ct[~bad]]), period=term.period)
        block = basis.evaluate(np.where(bad, 0.0, ev)) - basis.evaluate(np.where(bad, 0.0, ct))
        if term.kind == "linear":
            # identity differences, free of the centering offset's rounding
            block = (np.where(bad, 0.0, ev) - np.where(bad, 0.0, ct))[:, None]
        block[bad] = 0.0
        width = block.shape[1]
        penalty = None if term.kind == "linear" else basis.penalty.copy()
        blocks[term.name] = TermBlock(term, basis, slice(start, start + width), penalty,
                                      catalog.is_global(term.covariate), int(bad.sum()))
        cols.append(block)
        evs[term.name], cts[term.name] = ev, ct
        start += width
    X = np.hstack(cols)
    _scale_penalties(X, blocks)
    return DifferenceDesign(X, blocks, evs, cts, ccs.dropped_uninformative, ccs.total_events)


def _scale_penalties(X, blocks):
    """Rescale each penalty to the size of its block's cross-product."""
    n = max(X.shape[0], 1)
    for b in blocks.values():
        if b.penalty is None:
            continue
        xb = X[:, b.columns]
        gram = np.linalg.norm(xb.T @ xb / n)
        sn = np.linalg.norm(b.penalty)
        if gram > 0 and sn > 0:
            b.penalty = b.penalty * (gram / sn)
