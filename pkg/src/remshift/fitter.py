"""Penalized fitting of the degenerate logistic model.

Every response is a success and there is no intercept, so the log-likelihood
of coefficients ``theta`` on a difference design ``X`` is
``sum(log(sigmoid(X @ theta)))``.  It is maximized by penalized iteratively
reweighted least squares; each step solves the augmented least-squares
problem ``[sqrt(W) X; E] theta ~ [sqrt(W) z; 0]`` (``E'E`` the combined
penalty) with a pivoted QR decomposition.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, stats

from .errors import ConfigurationError, UnsupportedConfigurationError

log = logging.getLogger(__name__)

MAX_ITER = 100
TOL = 1e-8
JITTER = 1e-10
SEPARATION_NORM = 1e3
FLAT_RANGE = 1e-4


def log_sigmoid(eta):
    return -np.logaddexp(0.0, -eta)


def sigmoid(eta):
    return np.exp(log_sigmoid(eta))


def deviance(X, theta):
    """``-2 * sum(log(pi))`` for all-success responses."""
    return -2.0 * float(np.sum(log_sigmoid(X @ theta)))


def score(X, theta):
    """Gradient of the log-likelihood."""
    return X.T @ (1.0 - sigmoid(X @ theta))


def information(X, theta):
    """Negated Hessian of the log-likelihood, ``X' W X``."""
    pi = sigmoid(X @ theta)
    w = pi * (1.0 - pi)
    return (X * w[:, None]).T @ X


def penalty_matrix(n_cols, penalties, lambdas):
    """Block-diagonal embedding of ``sum lambda_s S_s``."""
    S = np.zeros((n_cols, n_cols))
    for cols, Sb, name in penalties:
        idx = np.arange(cols.start, cols.stop) if isinstance(cols, slice) else cols
        S[np.ix_(idx, idx)] += lambdas[name] * Sb
    return S


def _root(S):
    ev, vec = np.linalg.eigh(S)
    ev = np.clip(ev, 0.0, None)
    keep = ev > 1e-14 * max(ev.max(initial=0.0), 1e-300)
    return np.sqrt(ev[keep])[:, None] * vec[:, keep].T


def _solve_augmented(A, b):
    q, r, piv = linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > d[0] * 1e-12)) if d.size and d[0] > 0 else 0
    if rank < A.shape[1]:
        scale = np.sqrt(JITTER * max(float(np.mean(np.sum(A * A, axis=0))), 1.0))
        A = np.vstack([A, scale * np.eye(A.shape[1])])
        b = np.concatenate([b, np.zeros(A.shape[1])])
        q, r, piv = linalg.qr(A, mode="economic", pivoting=True)
    sol = linalg.solve_triangular(r, q.T @ b)
    out = np.empty_like(sol)
    out[piv] = sol
    return out, rank


@dataclass
class _Iterate:
    theta: np.ndarray
    pdev: float
    converged: bool
    iterations: int
    rank: int
    improving: bool


def _pirls(X, S, theta, max_iter=MAX_ITER, tol=TOL):
    E = _root(S) if S.any() else np.zeros((0, X.shape[1]))

    def pen_dev(th):
        return deviance(X, th) + float(th @ S @ th)

    pdev = pen_dev(theta)
    converged = False
    improving = False
    rank = X.shape[1]
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ theta
        pi = sigmoid(eta)
        w = np.maximum(pi * (1.0 - pi), 1e-300)
        sw = np.sqrt(w)
        # sqrt(W) z with z = eta + (1 - pi) / w
        zt = sw * eta + np.sqrt(np.exp(log_sigmoid(-eta) - log_sigmoid(eta)))
        A = np.vstack([sw[:, None] * X, E])
        b = np.concatenate([zt, np.zeros(E.shape[0])])
        new, rank = _solve_augmented(A, b)
        step = new - theta
        new_pdev = pen_dev(new)
        halvings = 0
        while not (new_pdev <= pdev + 1e-12 * abs(pdev)) and halvings < 30:
            step *= 0.5
            new = theta + step
            new_pdev = pen_dev(new)
            halvings += 1
        if not new_pdev <= pdev + 1e-12 * abs(pdev):
            # no descent along the step: the iterate is as good as it gets
            converged = True
            break
        change = abs(new_pdev - pdev) / (abs(new_pdev) + 0.1)
        improving = new_pdev < pdev
        theta, pdev = new, new_pdev
        if change < tol:
            converged = True
            break
    return _Iterate(theta, pdev, converged, it, rank, improving)


def _firth(X, theta, max_iter=MAX_ITER, tol=TOL):
    """Maximize ``loglik + 0.5 log det(X' W X)`` by modified-score Newton steps."""

    def objective(th):
        sign, logdet = np.linalg.slogdet(information(X, th))
        return -deviance(X, th) / 2.0 + 0.5 * (logdet if sign > 0 else -np.inf)

    obj = objective(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pi = sigmoid(X @ theta)
        w = pi * (1.0 - pi)
        info = (X * w[:, None]).T @ X
        info_inv = np.linalg.pinv(info)
        hat = np.einsum("ij,jk,ik->i", X, info_inv, X) * w
        u = X.T @ (1.0 - pi + hat * (0.5 - pi))
        step = info_inv @ u
        new = theta + step
        new_obj = objective(new)
        halvings = 0
        while not (new_obj >= obj - 1e-12 * abs(obj)) and halvings < 30:
            step *= 0.5
            new = theta + step
            new_obj = objective(new)
            halvings += 1
        if not new_obj >= obj - 1e-12 * abs(obj):
            converged = True
            break
        change = abs(new_obj - obj) / (abs(new_obj) + 0.1)
        theta, obj = new, new_obj
        if change < tol and np.max(np.abs(step)) < 1e-7 * (1 + np.max(np.abs(theta))):
            converged = True
            break
    return _Iterate(theta, -2.0 * obj, converged, it, X.shape[1], False)


def has_separation(X, tol=1e-7):
    """Whether a direction ``d`` exists with ``X d >= 0`` and ``X d != 0``.

    For all-success responses this is exactly when the likelihood has no
    finite maximizer.  Solved as a linear programme over the unit box.
    """
    X = np.asarray(X, dtype=float)
    scale = np.max(np.abs(X)) or 1.0
    Xs = X / scale
    res = optimize.linprog(-Xs.sum(axis=0), A_ub=-Xs, b_ub=np.zeros(X.shape[0]),
                           bounds=[(-1, 1)] * X.shape[1], method="highs")
    return bool(res.status == 0 and -res.fun > tol * X.shape[0])


@dataclass
class SmoothingSelection:
    """Selected smoothing parameters and the cross-validation profile."""

    params: dict
    profile: dict = field(default_factory=dict)
    flat: dict = field(default_factory=dict)
    folds: int = 10


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimates of a degenerate logistic fit.

    ``coefficients`` spans every design column; columns that are zero in
    every row are not estimable, keep coefficient 0 and get ``nan``
    covariance.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    smoothing_params: dict
    edf: dict
    deviance: float
    penalized_deviance: float
    converged: bool
    iterations: int
    dropped_rows: int
    design: object = field(repr=False)
    separation: bool = False
    inestimable: tuple = ()
    firth: bool = False
    selection: SmoothingSelection | None = field(default=None, repr=False)

    @property
    def n_rows(self):
        return self.design.n_rows

    def block(self, name):
        return self.design.blocks[name]

    def term_coefficients(self, name):
        return self.coefficients[self.block(name).columns]

    def term_covariance(self, name):
        c = self.block(name).columns
        return self.covariance[c, c]

    def standard_errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def estimate(self, name):
        """Coefficient and standard error of a linear term."""
        b = self.block(name)
        if b.spec.kind != "linear":
            raise ConfigurationError(f"term {name!r} is a smooth; use predict_smooth")
        j = b.columns.start
        return float(self.coefficients[j]), float(np.sqrt(max(self.covariance[j, j], 0.0)))

    def term_contribution(self, name, x):
        """Log-rate contribution of a term at covariate values ``x``.

        Linear terms use the raw value (``beta * x``); smooths are centered.
        """
        b = self.block(name)
        centered = b.spec.kind != "linear"
        return b.basis.evaluate(x, centered=centered) @ self.term_coefficients(name)

    def rate_components(self):
        """``(label, covariate, callable)`` triples for rate evaluation."""
        return [(name, b.spec.covariate, _Contribution(self, name))
                for name, b in self.design.blocks.items()]

    def summary(self):
        """Rows of (term, kind, estimate or edf, se, p-value)."""
        rows = []
        for name, b in self.design.blocks.items():
            if name in self.inestimable:
                rows.append((name, b.spec.kind, float("nan"), float("nan"), float("nan")))
            elif b.spec.kind == "linear":
                est, se = self.estimate(name)
                z = est / se if se > 0 else np.inf
                rows.append((name, "linear", est, se, float(2 * stats.norm.sf(abs(z)))))
            else:
                rows.append((name, b.spec.kind, self.edf[name], float("nan"), self._smooth_pvalue(name)))
        return rows

    def _smooth_pvalue(self, name):
        th = self.term_coefficients(name)
        V = self.term_covariance(name)
        k = max(1, int(round(self.edf[name])))
        ev, vec = np.linalg.eigh(V)
        top = np.argsort(ev)[::-1][:k]
        top = top[ev[top] > 0]
        if top.size == 0:
            return float("nan")
        proj = vec[:, top].T @ th
        stat = float(np.sum(proj**2 / ev[top]))
        return float(stats.chi2.sf(stat, df=max(self.edf[name], 1e-3)))

    def write_summary(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["term", "kind", "estimate_or_edf", "se", "p_value"])
            for row in self.summary():
                w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])


class _Contribution:
    def __init__(self, fit, name):
        self.fit, self.name = fit, name

    def __call__(self, x):
        # undefined covariates contribute nothing, as in the design
        x = np.asarray(x, dtype=float)
        ok = np.isfinite(x)
        out = np.zeros(x.shape)
        out[ok] = self.fit.term_contribution(self.name, x[ok])
        return out


def _as_lambdas(design, smoothing):
    names = [n for n, b in design.blocks.items() if b.penalized]
    if isinstance(smoothing, SmoothingSelection):
        smoothing = smoothing.params
    if isinstance(smoothing, dict):
        missing = set(names) - set(smoothing)
        if missing:
            raise ConfigurationError(f"no smoothing parameter for {sorted(missing)}")
        return {n: float(smoothing[n]) for n in names}
    if np.isscalar(smoothing):
        return {n: float(smoothing) for n in names}
    raise ConfigurationError(f"cannot interpret smoothing {smoothing!r}")


def _active_columns(X):
    return np.flatnonzero(np.any(X != 0, axis=0))


def _fit_core(X, penalties, lambdas, theta0=None, max_iter=MAX_ITER, tol=TOL):
    S = penalty_matrix(X.shape[1], penalties, lambdas)
    theta = np.zeros(X.shape[1]) if theta0 is None else theta0.copy()
    return _pirls(X, S, theta, max_iter, tol), S


def default_grid(n_rows, size=13):
    """Log-spaced smoothing grid scaled to the number of rows."""
    return n_rows * np.logspace(-6, 3, size)


def select_smoothing(design, grid=None, folds=10, seed=0, sweeps=2):
    """Choose smoothing parameters by K-fold cross-validated deviance.

    Each fold's model is fitted on the remaining rows and scored by the mean
    held-out deviance.  With several smooths the parameters are updated one
    at a time over the grid, ``sweeps`` times, starting from the grid
    maximum.  A flat criterion (range below ``1e-4``) selects the largest
    value.

    Parameters
    ----------
    design : DifferenceDesign
    grid : array_like, optional
        Candidate values; defaults to :func:`default_grid`.
    folds : int
    seed : int
        Fold assignment seed.

    Returns
    -------
    SmoothingSelection
    """
    names = [n for n, b in design.blocks.items() if b.penalized]
    if not names:
        raise ConfigurationError("no penalized term to select smoothing for")
    grid = np.sort(np.asarray(default_grid(design.n_rows) if grid is None else grid, dtype=float))
    if grid.size == 0 or np.any(grid < 0):
        raise ConfigurationError("smoothing grid must be non-empty and non-negative")
    if grid.size == 1:
        return SmoothingSelection({n: float(grid[0]) for n in names}, {}, {}, folds)
    active = _active_columns(design.X)
    X = design.X[:, active]
    penalties = _restrict_penalties(design, active)
    n = X.shape[0]
    folds = max(2, min(folds, n))
    assign = np.random.default_rng(seed).permutation(n) % folds
    splits = [(assign != k, assign == k) for k in range(folds)]

    def criterion(lams, warm):
        total = 0.0
        for k, (tr, te) in enumerate(splits):
            it, _ = _fit_core(X[tr], penalties, lams, warm.get(k))
            warm[k] = it.theta
            total += deviance(X[te], it.theta)
        return total / n

    current = {nm: float(grid[-1]) for nm in names}
    profile, flat = {}, {}
    for _ in range(sweeps if len(names) > 1 else 1):
        for nm in names:
            warm = {}
            values = np.empty(grid.size)
            for g in range(grid.size - 1, -1, -1):
                values[g] = criterion({**current, nm: float(grid[g])}, warm)
            profile[nm] = (grid.copy(), values)
            if np.ptp(values) < FLAT_RANGE:
                flat[nm] = True
                current[nm] = float(grid[-1])
            else:
                flat[nm] = False
                best = np.flatnonzero(values <= values.min() + 1e-12)
                current[nm] = float(grid[best[-1]])
    for nm, is_flat in flat.items():
        if is_flat:
            log.info("flat cross-validation criterion for %s; largest smoothing parameter chosen", nm)
    return SmoothingSelection(current, profile, flat, folds)


def _restrict_penalties(design, active):
    pos = np.full(design.X.shape[1], -1)
    pos[active] = np.arange(active.size)
    out = []
    for cols, Sb, name in design.penalties():
        idx = np.arange(cols.start, cols.stop)
        keep = pos[idx] >= 0
        if not keep.any():
            continue
        new = pos[idx[keep]]
        out.append((new, Sb[np.ix_(keep, keep)], name))
    return [(np.asarray(c), S, n) for c, S, n in out]


def fit_degenerate_logistic(design, smoothing="cv", firth=False, max_iter=MAX_ITER, tol=TOL,
                            folds=10, grid=None, seed=0):
    """Fit the degenerate logistic additive model.

    Parameters
    ----------
    design : DifferenceDesign
    smoothing : "cv", float, dict or SmoothingSelection
        ``"cv"`` runs :func:`select_smoothing`; a number applies to every
        smooth; a dict maps smooth names to values.
    firth : bool
        Jeffreys-penalized (bias-reduced) fit; parametric terms only.
    max_iter, tol : convergence controls
    folds, grid, seed : passed to :func:`select_smoothing`

    Returns
    -------
    FitResult
        ``separation`` is set when no finite maximizer exists (always checked
        for unpenalized fits; for penalized ones only when the iteration does
        not settle or the estimate norm exceeds 1e3).
    """
    X = design.X
    if X.shape[0] == 0:
        raise ConfigurationError("design has no rows")
    penalized = [n for n, b in design.blocks.items() if b.penalized]
    if firth and penalized:
        raise UnsupportedConfigurationError(
            f"bias reduction is only available for parametric terms, not {penalized}")
    active = _active_columns(X)
    if active.size == 0:
        raise ConfigurationError("every design column is zero; nothing is estimable")
    inestimable = []
    for name, b in design.blocks.items():
        cols = np.arange(b.columns.start, b.columns.stop)
        if not np.isin(cols, active).any():
            inestimable.append(name)
            warnings.warn(f"term {name!r} is zero in every row and cannot be estimated", stacklevel=2)

    selection = None
    if penalized:
        if isinstance(smoothing, str):
            if smoothing != "cv":
                raise ConfigurationError(f"unknown smoothing policy {smoothing!r}")
            selection = select_smoothing(design, grid=grid, folds=folds, seed=seed)
            lambdas = selection.params
        else:
            selection = smoothing if isinstance(smoothing, SmoothingSelection) else None
            lambdas = _as_lambdas(design, smoothing)
    else:
        lambdas = {}

    Xa = X[:, active]
    penalties = _restrict_penalties(design, active)
    S = penalty_matrix(active.size, penalties, lambdas)
    if firth:
        it = _firth(Xa, np.zeros(active.size), max_iter, tol)
    else:
        it = _pirls(Xa, S, np.zeros(active.size), max_iter, tol)

    separation = False
    suspect = not S.any() or not it.converged or np.linalg.norm(it.theta) > SEPARATION_NORM
    if not firth and suspect:
        separation = has_separation(Xa)
        if separation:
            warnings.warn("data are separated: estimates diverge; consider the bias-reduced fit",
                          stacklevel=2)
    if not it.converged:
        warnings.warn(f"fit did not converge in {it.iterations} iterations", stacklevel=2)

    info = information(Xa, it.theta)
    cov_a = _inverse_psd(info + S)
    theta = np.zeros(X.shape[1])
    theta[active] = it.theta
    cov = np.full((X.shape[1], X.shape[1]), np.nan)
    cov[np.ix_(active, active)] = cov_a
    F = cov_a @ info
    pos = np.full(X.shape[1], -1)
    pos[active] = np.arange(active.size)
    edf = {}
    for name, b in design.blocks.items():
        idx = pos[np.arange(b.columns.start, b.columns.stop)]
        idx = idx[idx >= 0]
        edf[name] = float(np.trace(F[np.ix_(idx, idx)])) if idx.size else 0.0
    dev = deviance(Xa, it.theta)
    return FitResult(theta, cov, dict(lambdas), edf, dev, dev + float(it.theta @ S @ it.theta),
                     it.converged, it.iterations, design.dropped_rows, design, separation,
                     tuple(inestimable), firth, selection)


def _inverse_psd(H):
    H = (H + H.T) / 2.0
    ev, vec = np.linalg.eigh(H)
    tol = max(ev.max(initial=0.0), 1e-300) * 1e-12
    inv = np.where(ev > tol, 1.0 / np.where(ev > tol, ev, 1.0), 0.0)
    return (vec * inv) @ vec.T


def firth_adjust(design, max_iter=MAX_ITER, tol=TOL):
    """Bias-reduced fit (Jeffreys-prior penalized likelihood).

    Raises
    ------
    UnsupportedConfigurationError
        If the design contains penalized smooths.
    """
    return fit_degenerate_logistic(design, smoothing=None, firth=True, max_iter=max_iter, tol=tol)


@dataclass
class SmoothCurve:
    grid: np.ndarray
    fit: np.ndarray
    se: np.ndarray
    extrapolated: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["grid", "fit", "se", "extrapolated"])
            for row in zip(self.grid, self.fit, self.se, self.extrapolated):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])


def predict_smooth(fit, term, grid):
    """Centered term curve on ``grid`` with pointwise standard errors.

    Points outside the construction range are flagged in ``extrapolated``;
    spline values there are held at the boundary value.
    """
    if term not in fit.design.blocks:
        raise KeyError(f"unknown term {term!r}")
    grid = np.asarray(grid, dtype=float)
    b = fit.block(term)
    B = b.basis.evaluate(grid, centered=True)
    th = fit.term_coefficients(term)
    V = np.nan_to_num(fit.term_covariance(term))
    se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", B, V, B), 0.0, None))
    return SmoothCurve(grid, B @ th, se, ~b.basis.in_range(grid))


def observed_information_row(fit, row):
    """Per-coefficient information ``pi (1 - pi) x_j**2`` of one design row.

    The row sum over all rows equals the diagonal of ``X' W X``.
    """
    x = fit.design.X[row]
    pi = float(sigmoid(x @ fit.coefficients))
    return pi * (1.0 - pi) * x**2


def observed_information_rows(fit):
    X = fit.design.X
    pi = sigmoid(X @ fit.coefficients)
    return (pi * (1.0 - pi))[:, None] * X**2
