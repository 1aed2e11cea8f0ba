import warnings

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from remshift.design import TermSpec, assemble_difference_design, build_basis
from remshift.errors import ConfigurationError, DegenerateCovariateError, IngestionError
from remshift.events import CovariateCatalog, EventSequence
from remshift.timeshift import CaseControlSet, draw_shifts_for, sample_case_control, shift_process


def manual_ccs(t_e, s_e, r_e, t_c, s_c, r_c, p=3):
    a = [np.asarray(v, dtype=float) for v in (t_e, t_c)]
    ints = [np.asarray(v, dtype=np.int64) for v in (s_e, r_e, s_c, r_c)]
    src = EventSequence(np.sort(a[0]) if a[0].size else [1.0], [0] * max(a[0].size, 1), [1] * max(a[0].size, 1), p,
                        horizon=max(a[0].max(initial=1.0), a[1].max(initial=1.0)))
    return CaseControlSet(a[0], ints[0], ints[1], a[1], ints[2], ints[3], np.arange(a[0].size), 0, a[0].size, src)


def greville(basis):
    k, d = basis.knots, basis.degree
    return np.array([k[j + 1: j + d + 1].mean() for j in range(basis.rank)])


def test_linear_basis():
    b = build_basis("linear", 10, [1.0, 2.0, 4.0])
    assert b.n_columns == 1
    np.testing.assert_array_equal(b.evaluate([3.0, 5.0], centered=False), [[3.0], [5.0]])
    assert np.all(b.penalty == 0)


def test_cyclic_wraps():
    b = build_basis("cyclic", 10, np.linspace(0, 24, 200), period=24)
    np.testing.assert_allclose(b.evaluate([0.0]), b.evaluate([24.0]), atol=1e-14)
    np.testing.assert_allclose(b.raw([0.0]).sum(), 1.0)


def test_penalty_annihilates_lines():
    b = build_basis("pspline", 10, np.linspace(0.0, 1.0, 300))
    g = greville(b)
    for a, slope in ((0.0, 1.0), (2.0, -3.0)):
        coef = a + slope * g
        assert abs(coef @ b.raw_penalty @ coef) < 1e-9 * np.abs(b.raw_penalty).max()
        # cubic B-splines reproduce lines through their Greville abscissae
        x = np.linspace(0, 1, 17)
        np.testing.assert_allclose(b.raw(x) @ coef, a + slope * x, atol=1e-12)
    assert b.null_space_dim == 1


def test_zero_variance_covariate_rejected():
    with pytest.raises(DegenerateCovariateError):
        build_basis("pspline", 10, np.full(20, 3.0))


def test_rank_reduced_for_few_values():
    with pytest.warns(UserWarning, match="rank reduced"):
        b = build_basis("pspline", 10, np.repeat([0.0, 1.0, 2.0, 3.0, 5.0], 4))
    assert b.rank == 5


def test_global_entries_vanish_when_times_coincide():
    cat = CovariateCatalog(node_count=3, global_series={"g": np.sin})
    ccs = manual_ccs([1.0, 2.0, 3.0], [0, 1, 2], [1, 2, 0], [1.0, 0.5, 3.0], [1, 0, 2], [2, 2, 1])
    d = assemble_difference_design(ccs, cat, [TermSpec("g", "g", "pspline", rank=5), TermSpec("t", "time")])
    rows_equal = [0, 2]
    assert np.all(d.X[rows_equal] == 0)
    assert d.X[1, d.blocks["t"].columns][0] == 1.5
    assert d.structural_zero_fraction("t") == pytest.approx(2 / 3)


def test_missing_covariate_rows():
    dist = np.array([[0.0, 1.0, np.nan], [1.0, 0.0, 2.0], [np.nan, 2.0, 0.0]])
    cat = CovariateCatalog(node_count=3, dyadic_attrs={"d": dist})
    ccs = manual_ccs([1.0, 2.0, 3.0], [0, 1, 0], [1, 2, 1], [1.0, 2.0, 3.0], [1, 0, 0], [2, 1, 2])
    with pytest.raises(IngestionError) as err:
        assemble_difference_design(ccs, cat, [TermSpec("d", "d")])
    assert list(err.value.rows) == [2]
    d = assemble_difference_design(ccs, cat, [TermSpec("d", "d", allow_missing=True)])
    assert d.X[2, 0] == 0.0 and d.blocks["d"].missing_rows == 1
    assert d.X[0, 0] == -1.0


def test_empty_case_control_set_cites_dropped_count():
    ccs = manual_ccs([], [], [], [], [], [])
    ccs = CaseControlSet(*[getattr(ccs, c) for c in CaseControlSet.COLUMNS], ccs.group, 7, 7, ccs.source)
    with pytest.raises(ConfigurationError, match="7 uninformative"):
        assemble_difference_design(ccs, CovariateCatalog(node_count=3), [TermSpec("t", "time")])


def test_term_spec_validation():
    with pytest.raises(ConfigurationError):
        TermSpec("c", "tod", "cyclic")
    with pytest.raises(ConfigurationError):
        TermSpec("s", "x", "spline")


def random_case_control(p, n, nu, seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.01, 10.0, n))
    s = rng.integers(0, p, n)
    r = (s + rng.integers(1, p, n)) % p
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        seq = EventSequence(t, s, r, p)
    cat = CovariateCatalog(node_count=p, global_series={"w": np.cos},
                           node_attrs={"x": rng.normal(size=p)},
                           dyadic_attrs={"d": rng.uniform(size=(p, p))})
    ccs = sample_case_control(shift_process(seq, draw_shifts_for(seq, nu, seed=seed)), seed=seed + 1)
    return ccs, cat


TERMS = [TermSpec("sx", "sender.x"), TermSpec("d", "d", "pspline", rank=6),
         TermSpec("w", "w", "pspline", rank=6), TermSpec("tod", "time", "cyclic", rank=6, period=3.0)]


pytestmark = pytest.mark.filterwarnings("ignore:only .* distinct values")

SAMPLES = (st.integers(4, 7), st.integers(30, 80), st.floats(0.1, 3.0), st.integers(0, 10_000))


@given(*SAMPLES)
def test_swapping_negates_design_rows(p, n, nu, seed):
    ccs, cat = random_case_control(p, n, nu, seed)
    assume(len(ccs) >= 20)
    d = assemble_difference_design(ccs, cat, TERMS)
    bases = {k: b.basis for k, b in d.blocks.items()}
    sw = assemble_difference_design(ccs.swapped(), cat, TERMS, bases=bases)
    np.testing.assert_array_equal(sw.X, -d.X)


@given(*SAMPLES)
def test_penalties_psd_and_bases_centered(p, n, nu, seed):
    ccs, cat = random_case_control(p, n, nu, seed)
    assume(len(ccs) >= 20)
    d = assemble_difference_design(ccs, cat, TERMS)
    for name, b in d.blocks.items():
        if b.penalty is not None:
            assert np.linalg.eigvalsh(b.penalty).min() > -1e-10 * np.abs(b.penalty).max()
        data = np.concatenate([d.event_values[name], d.control_values[name]])
        if b.spec.kind != "linear":
            assert np.abs(b.basis.evaluate(data).mean(axis=0)).max() < 1e-8


@given(st.lists(st.floats(-50, 50), min_size=5, max_size=60).filter(lambda v: np.ptp(v) > 1e-3),
       st.floats(0.5, 48.0), st.integers(-3, 3))
def test_cyclic_basis_is_periodic(data, period, k):
    b = build_basis("cyclic", 8, np.mod(data, period), period=period)
    x = np.asarray(data)
    np.testing.assert_allclose(b.evaluate(x), b.evaluate(x + k * period), atol=1e-9)
