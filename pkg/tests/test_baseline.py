import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from remshift.baseline import (
    breslow_cumulative, estimate_lambda0, l2_decomposition, l2_distance, lambda0_from_step, write_breslow,
)
from remshift.errors import ConfigurationError
from remshift.events import ALL_PAIRS, CovariateCatalog, EventSequence, IntensitySpec
from remshift.simulate import TauLeapConfig, simulate_tau_leap
from remshift.studies import StudyConfig, run_replication


def homogeneous(lambda0, n, p=4, tau=0.01, seed=0):
    spec = IntensitySpec(lambda0=lambda0)
    return simulate_tau_leap(spec, CovariateCatalog(node_count=p), TauLeapConfig(tau, n), seed=seed)


def test_homogeneous_slope_recovers_rate():
    seq = homogeneous(1.5, 5000)
    lam, se = lambda0_from_step(breslow_cumulative(seq))
    assert abs(lam / 1.5 - 1) < 0.05
    assert se > 0


def test_single_event_single_dyad_jumps_by_one():
    seq = EventSequence([0.7], [0], [0], 1)
    step = breslow_cumulative(seq, policy=ALL_PAIRS)
    assert step.values.tolist() == [1.0]
    assert step.knots.tolist() == [0.7]


def test_log_two_offset_halves_estimator():
    seq = homogeneous(1.0, 200, seed=3)
    a = breslow_cumulative(seq)
    b = breslow_cumulative(seq, offset=math.log(2.0))
    np.testing.assert_allclose(b.values, a.values / 2.0, rtol=1e-15)


def test_exact_line_gives_exact_slope():
    t = np.array([0.3, 1.1, 2.0, 5.5])
    lam, se = estimate_lambda0(t, 0.8 * t)
    assert lam == pytest.approx(0.8, rel=1e-15)
    assert se == pytest.approx(0.0, abs=1e-15)


def test_slope_unbiased_under_noise():
    rng = np.random.default_rng(12)
    t = np.sort(rng.uniform(0, 10, 50))
    slopes = np.array([estimate_lambda0(t, 2.0 * t + rng.normal(0, 1.0, t.size))[0] for _ in range(1000)])
    assert abs(slopes.mean() - 2.0) < 3 * slopes.std(ddof=1) / math.sqrt(slopes.size)


def test_degenerate_regressions_rejected():
    with pytest.raises(ConfigurationError):
        estimate_lambda0([1.0], [1.0])
    with pytest.raises(ConfigurationError):
        estimate_lambda0([2.0, 2.0], [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        breslow_cumulative(EventSequence([], [], [], 2, horizon=1.0))


@given(st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 4.0]))
def test_breslow_monotone_and_scale_equivariant(seed, c):
    a = homogeneous(1.0, 80, p=3, tau=0.05, seed=seed)
    b = homogeneous(c, 80, p=3, tau=0.05 / c, seed=seed)
    sa, sb = breslow_cumulative(a), breslow_cumulative(b)
    assert np.all(np.diff(sa.values) >= 0)
    np.testing.assert_allclose(b.times * c, a.times, rtol=1e-9)
    assert lambda0_from_step(sb)[0] == pytest.approx(c * lambda0_from_step(sa)[0], rel=1e-9)


def test_l2_distance_of_known_functions():
    assert l2_distance(lambda t: np.ones_like(t), lambda t: np.zeros_like(t), 0.0, 4.0) == pytest.approx(2.0)
    assert l2_distance(lambda t: t, lambda t: 0 * t, 0.0, 1.0) == pytest.approx(math.sqrt(1 / 3), rel=1e-5)


@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(0.5, 5.0))
def test_l2_splits_into_level_and_shape(a, b, hi):
    f = lambda t: a + b * np.sin(t)
    g = lambda t: 0 * t
    level, shape = l2_decomposition(f, g, 0.0, hi)
    assert l2_distance(f, g, 0.0, hi) ** 2 == pytest.approx(level**2 * hi + shape**2, rel=1e-9, abs=1e-12)
    assert l2_decomposition(lambda t: t + 2.5, lambda t: t, 0.0, hi) == pytest.approx((2.5, 0.0), abs=1e-12)


def test_simulation_scenario_recovers_unit_lambda0():
    cfg = StudyConfig(values=(3000,), replications=6, seed=21, folds=5)
    recs = [run_replication(cfg, 3000, r) for r in range(cfg.replications)]
    lams = [r["lambda0_anchored"] for r in recs]
    assert 0.8 <= np.median(lams) <= 1.2


def test_breslow_csv(tmp_path):
    step = breslow_cumulative(homogeneous(1.0, 10, seed=1))
    write_breslow(tmp_path / "b.csv", step)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "event_time,cumulative_value" and len(lines) == 11
