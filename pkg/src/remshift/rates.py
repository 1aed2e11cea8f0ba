"""Incremental evaluation of log-additive dyad rates over a fixed dyad set.

The log-rate of dyad ``d`` at time ``t`` splits into three parts:

* a static part (node and dyadic covariates), computed once;
* a global part ``G(t)`` shared by every dyad (time and global covariates);
* an endogenous part, which only differs from its no-history value for
  "active" dyads whose own or reversed pair has occurred.

Only the endogenous part of active dyads is ever refreshed.
"""

from __future__ import annotations

import numpy as np

from .endostats import DyadState
from .errors import ConfigurationError, NumericError


class RateEngine:
    """Rates of the dyads ``(senders[i], receivers[i])`` under additive components.

    Parameters
    ----------
    catalog : CovariateCatalog
    components : list of (label, covariate name, callable)
        Each callable maps covariate values to a log-rate contribution.
    senders, receivers : ndarray
        The candidate dyad set.
    """

    def __init__(self, catalog, components, senders, receivers):
        self.catalog = catalog
        self.p = catalog.node_count
        self.senders = np.asarray(senders, dtype=np.int64)
        self.receivers = np.asarray(receivers, dtype=np.int64)
        self.size = self.senders.size
        if self.size == 0:
            raise ConfigurationError("empty dyad set")
        self.position = np.full(self.p * self.p, -1, dtype=np.int64)
        self.position[self.senders * self.p + self.receivers] = np.arange(self.size)

        self.static = np.zeros(self.size)
        self.global_components = []
        self.endo_components = []
        zeros = np.zeros(self.size)
        for label, cov, fn in components:
            kind = catalog.kind(cov)
            if kind in ("time", "global"):
                self.global_components.append((label, cov, fn))
            elif kind == "endogenous":
                self.endo_components.append((label, cov, fn))
            else:
                x = catalog.evaluate(cov, self.senders, self.receivers, zeros)
                contrib = np.asarray(fn(x), dtype=float)
                if not np.all(np.isfinite(contrib)):
                    raise NumericError(f"term {label!r} has non-finite static values", term=label)
                self.static += contrib
        self.time_varying_endo = any(
            getattr(catalog.endogenous[cov], "time_varying", True) for _, cov, _ in self.endo_components
        )
        inf = np.array([np.inf])
        self.endo_default = 0.0
        for label, cov, fn in self.endo_components:
            self.endo_default += float(np.asarray(fn(catalog.endogenous[cov].value(inf, inf)))[0])
        self.reset()

    def reset(self):
        self.state = DyadState(self.p)
        self.endo = np.full(self.size, self.endo_default)
        self.active = np.zeros(self.size, dtype=bool)
        self.active_idx = np.zeros(0, dtype=np.int64)

    def global_log(self, t):
        g = 0.0
        for label, cov, fn in self.global_components:
            x = self.catalog.evaluate(cov, 0, 0, np.array([float(t)]))
            g += float(np.asarray(fn(x))[0])
        if not np.isfinite(g):
            raise NumericError(f"global log-rate not finite at t={t}")
        return g

    def _endo_values(self, idx, t):
        out = np.zeros(idx.size)
        s, r = self.senders[idx], self.receivers[idx]
        for label, cov, fn in self.endo_components:
            x = self.catalog.evaluate(cov, s, r, np.full(idx.size, t), self.state)
            out += np.asarray(fn(x), dtype=float)
        return out

    def refresh(self, t):
        """Re-evaluate time-varying endogenous terms of active dyads at ``t``."""
        if self.time_varying_endo and self.active_idx.size:
            self.endo[self.active_idx] = self._endo_values(self.active_idx, t)

    def record(self, sender, receiver, t):
        """Register an event; affected dyads are re-evaluated just after ``t``."""
        self.state.update(sender, receiver, t)
        if not self.endo_components:
            return
        touched = []
        for d in (sender * self.p + receiver, receiver * self.p + sender):
            i = self.position[d]
            if i >= 0:
                touched.append(i)
                if not self.active[i]:
                    self.active[i] = True
                    self.active_idx = np.append(self.active_idx, i)
        if touched:
            idx = np.array(touched, dtype=np.int64)
            # value "just after" t: same-dyad elapsed time is 0+
            self.endo[idx] = self._endo_values(idx, np.nextafter(t, np.inf))

    def dyad_log_rates(self):
        """Static plus endogenous log-rate per dyad (global part excluded)."""
        return self.static + self.endo
