import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import (
    covariate_differences, fd_gradient, fd_hessian_diagonal, loglik, maximize_partial_likelihood, tiny_instance,
)
from remshift.design import DifferenceDesign, TermBlock, TermSpec, assemble_difference_design, build_basis
from remshift.errors import UnsupportedConfigurationError
from remshift.events import CovariateCatalog, IntensitySpec
from remshift.fitter import (
    default_grid, fit_degenerate_logistic, firth_adjust, has_separation, observed_information_row,
    observed_information_rows, predict_smooth, score, select_smoothing,
)
from remshift.simulate import TauLeapConfig, simulate_tau_leap
from remshift.timeshift import draw_shifts_for, sample_case_control, shift_process


def linear_design(X, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or [f"x{j}" for j in range(X.shape[1])]
    blocks = {}
    for j, nm in enumerate(names):
        basis = build_basis("linear", 1, [0.0, 1.0])
        blocks[nm] = TermBlock(TermSpec(nm, nm), basis, slice(j, j + 1), None, False, 0)
    return DifferenceDesign(X, blocks)


def test_complete_separation_flagged_and_firth_finite():
    d = linear_design([0.5, 1.0, 2.0])
    with pytest.warns(UserWarning, match="separated"):
        fit = fit_degenerate_logistic(d, smoothing=None)
    assert fit.separation
    fr = firth_adjust(d)
    assert np.isfinite(fr.coefficients).all() and fr.converged and not fr.separation


def test_balanced_rows_give_zero():
    d = linear_design([1.0, -1.0])
    assert fit_degenerate_logistic(d, smoothing=None).coefficients[0] == pytest.approx(0.0, abs=1e-12)
    assert firth_adjust(d).coefficients[0] == pytest.approx(0.0, abs=1e-12)
    assert not has_separation(d.X)


def test_tiny_instance_matches_direct_maximization():
    ccs, cat, names, d = tiny_instance(seed=1, n=100)
    fit = fit_degenerate_logistic(d, smoothing=None)
    ref = maximize_partial_likelihood(covariate_differences(ccs, cat, names))
    np.testing.assert_allclose(fit.coefficients, ref, atol=1e-6)


def test_score_vanishes_and_gradient_matches_finite_differences():
    _, _, _, d = tiny_instance(seed=2, n=100)
    fit = fit_degenerate_logistic(d, smoothing=None)
    assert np.max(np.abs(score(d.X, fit.coefficients))) / d.n_rows < 1e-6
    rng = np.random.default_rng(0)
    for _ in range(5):
        th = rng.normal(scale=0.5, size=d.X.shape[1])
        num = fd_gradient(lambda v: loglik(d.X, v), th)
        np.testing.assert_allclose(score(d.X, th), num, rtol=1e-5, atol=1e-7)


def test_information_rows_sum_to_hessian_diagonal():
    _, _, _, d = tiny_instance(seed=3, n=100)
    fit = fit_degenerate_logistic(d, smoothing=None)
    rows = observed_information_rows(fit)
    np.testing.assert_allclose(rows.sum(axis=0), fd_hessian_diagonal(d.X, fit.coefficients), rtol=1e-8)
    np.testing.assert_allclose(observed_information_row(fit, 4), rows[4], rtol=1e-14)


def test_information_zero_difference_and_monotone():
    d = linear_design([1.0, 2.0, -1.0, -2.0, 0.0])
    fit = fit_degenerate_logistic(d, smoothing=None)
    assert fit.coefficients[0] == pytest.approx(0.0, abs=1e-12)
    rows = observed_information_rows(fit)[:, 0]
    np.testing.assert_allclose(rows[:2], [0.25, 1.0], rtol=1e-12)
    assert rows[4] == 0.0


def test_firth_rejects_smooths():
    cat = CovariateCatalog(node_count=3)
    ccs, *_ = tiny_instance(seed=4, n=40)
    d = assemble_difference_design(ccs, cat, [TermSpec("g0", "time", "pspline", rank=5)])
    with pytest.raises(UnsupportedConfigurationError):
        fit_degenerate_logistic(d, firth=True)


def test_all_zero_term_is_inestimable():
    X = np.column_stack([np.linspace(-1, 2, 20), np.zeros(20)])
    with pytest.warns(UserWarning, match="cannot be estimated"):
        fit = fit_degenerate_logistic(linear_design(X, ["a", "b"]), smoothing=None)
    assert fit.inestimable == ("b",)
    assert fit.coefficients[1] == 0.0 and np.isnan(fit.covariance[1, 1])


def test_summary_table(tmp_path):
    _, _, names, d = tiny_instance(seed=5, n=80)
    fit = fit_degenerate_logistic(d, smoothing=None)
    rows = fit.summary()
    assert [r[0] for r in rows] == names
    assert all(0 <= r[4] <= 1 for r in rows)
    fit.write_summary(tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        assert len(list(csv.reader(fh))) == len(names) + 1


def linear_time_instance(n, seed):
    cat = CovariateCatalog(node_count=5, global_series={"z": lambda t: np.sin(37 * np.asarray(t))})
    spec = IntensitySpec(global_time_effect=lambda t: np.asarray(t, dtype=float))
    seq = simulate_tau_leap(spec, cat, TauLeapConfig(1e-4, n), seed=seed)
    ccs = sample_case_control(shift_process(seq, draw_shifts_for(seq, 1.0, seed=seed + 100)), seed=seed + 200)
    terms = [TermSpec("g0", "time", "pspline"), TermSpec("z", "z", "pspline")]
    return assemble_difference_design(ccs, cat, terms)


def test_linear_truth_selects_heavy_smoothing():
    picks, edfs = [], []
    for seed in range(5):
        d = linear_time_instance(2000, seed)
        fit = fit_degenerate_logistic(d, seed=seed)
        grid = default_grid(d.n_rows)
        picks.append(np.searchsorted(grid, fit.smoothing_params["g0"]))
        edfs.append(fit.edf["g0"] - d.blocks["g0"].basis.null_space_dim)
    assert np.median(picks) >= len(grid) - 2
    assert abs(np.median(edfs)) < 0.5


def test_noise_smooth_edf_shrinks_with_n():
    mean_edf = {}
    for n in (500, 2000):
        mean_edf[n] = np.mean([fit_degenerate_logistic(linear_time_instance(n, s), seed=s).edf["z"] for s in range(5)])
    assert mean_edf[2000] < mean_edf[500]


def test_single_value_grid_returned():
    d = linear_time_instance(300, 1)
    sel = select_smoothing(d, grid=[3.5])
    assert sel.params == {"g0": 3.5, "z": 3.5}


def test_predicted_smooths_centered_and_linear_through_mean():
    d = linear_time_instance(400, 2)
    fit = fit_degenerate_logistic(d, smoothing=1.0)
    for name in ("g0", "z"):
        data = np.concatenate([d.event_values[name], d.control_values[name]])
        curve = predict_smooth(fit, name, data)
        assert abs(curve.fit.mean()) < 1e-8
        assert np.all(curve.se >= 0)
    _, _, _, lin = tiny_instance(seed=6, n=60)
    lf = fit_degenerate_logistic(lin, smoothing=None)
    b = lin.blocks["w"].basis
    grid = np.array([b.center - 1.0, b.center, b.center + 2.0])
    c = predict_smooth(lf, "w", grid)
    beta = lf.estimate("w")[0]
    np.testing.assert_allclose(c.fit, beta * (grid - b.center), atol=1e-14)


@given(st.integers(0, 10_000))
def test_negated_design_negates_estimate(seed):
    _, _, _, d = tiny_instance(seed=seed, n=60)
    a = fit_degenerate_logistic(d, smoothing=None)
    b = fit_degenerate_logistic(d.negated(), smoothing=None)
    if a.separation:
        return
    np.testing.assert_allclose(b.coefficients, -a.coefficients, atol=1e-9)
