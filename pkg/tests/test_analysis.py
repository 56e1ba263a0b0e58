import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmmw import analysis as an
from qmmw import game as qg
from qmmw import learning as lrn
from qmmw.fixtures import KET0, get_fixture
from qmmw.hermitian import ValidationError
from qmmw.seeding import run_rng

HALF = np.eye(2) / 2


# ---------------------------------------------------------------- moments


def test_constant_game_has_zero_bias_and_second_moment():
    g = get_fixture("constant")
    r = an.estimator_moments(g, qg.uniform_profile(g), "3mw-2pe", 0.1, 10_000,
                             np.random.default_rng(0))
    assert r.bias < 1e-12 and r.second_moment < 1e-20 and r.passed


def test_constant_game_one_point_is_unbiased():
    g = get_fixture("constant")
    r = an.estimator_moments(g, qg.uniform_profile(g), "3mw-1pe", 0.1, 20_000,
                             np.random.default_rng(0))
    assert r.bias <= 3 * r.bias_se + 1e-12
    assert r.sample_norm_max == pytest.approx(1 / 0.1)


@pytest.mark.parametrize("name", ["matching-pennies", "skewed-pennies", "dominant"])
@pytest.mark.parametrize("kind", ["3mw-2pe", "3mw-1pe"])
def test_moment_bounds_hold(name, kind):
    g = get_fixture(name)
    prof = [np.diag([0.7, 0.3]), np.diag([0.4, 0.6])]
    r = an.estimator_moments(g, prof, kind, 0.05, 20_000, np.random.default_rng(1))
    assert r.passed and r.asserted


def test_two_point_bias_shrinks_with_delta():
    g = get_fixture("skewed-pennies")
    prof = [np.diag([0.9, 0.1]), KET0 * 0.2 + HALF * 0.8]
    biases = [an.estimator_moments(g, prof, "3mw-2pe", d, 100_000,
                                   np.random.default_rng(2)).bias for d in (0.2, 0.1, 0.05)]
    assert biases[0] > biases[1] > biases[2]


def test_one_point_second_moment_scales_as_inverse_square():
    g = get_fixture("matching-pennies")
    prof = qg.uniform_profile(g)
    m = [an.estimator_moments(g, prof, "3mw-1pe", d, 10_000,
                              np.random.default_rng(3)).second_moment for d in (0.2, 0.1)]
    assert m[1] / m[0] == pytest.approx(4, rel=0.05)


def test_moment_argument_checks():
    g = get_fixture("matching-pennies")
    with pytest.raises(ValidationError, match="n_mc"):
        an.estimator_moments(g, qg.uniform_profile(g), "3mw-2pe", 0.1, 9_999,
                             np.random.default_rng(0))
    with pytest.raises(ValidationError):
        an.estimator_moments(g, qg.uniform_profile(g), "mmw", 0.1, 10_000,
                             np.random.default_rng(0))


def test_three_player_one_point_is_reported_not_asserted():
    from gamegen import random_povm_game

    g = random_povm_game(np.random.default_rng(0), (2, 2, 2), k=3)
    r = an.estimator_moments(g, qg.uniform_profile(g), "3mw-1pe", 0.1, 10_000,
                             np.random.default_rng(0))
    assert not r.asserted and r.bias_pass is None and r.sample_norm_pass


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(0, 5))
def test_pass_flags_monotone_in_bound(value, bound, se, extra):
    r = an.MomentReport("3mw-2pe", 0.1, 10_000, value, se, value, se, bound, bound, 1.0, 1.0)
    looser = dataclasses.replace(r, bias_bound=bound + extra, second_bound=bound + extra)
    if r.bias_pass:
        assert looser.bias_pass
    if r.second_pass:
        assert looser.second_pass


# ---------------------------------------------------------------- rate fits


def test_rate_fit_exact_power_laws():
    t = np.logspace(0, 5, 50)
    fit = an.rate_fit(t, t**-0.5)
    assert abs(fit.slope + 0.5) < 1e-9 and fit.r2 == pytest.approx(1)
    assert an.rate_fit(t, 3 * t**-0.25).slope == pytest.approx(-0.25, abs=1e-12)
    assert an.rate_fit(t, 3 * t**-0.25).intercept == pytest.approx(np.log(3))


@given(st.floats(-2, 2), st.floats(1e-3, 1e3))
def test_rate_fit_recovers_any_exponent(alpha, c):
    t = np.logspace(0, 4, 30)
    assert an.rate_fit(t, c * t**alpha).slope == pytest.approx(alpha, abs=1e-9)


def test_rate_fit_tail_and_errors():
    t = np.arange(1, 101, dtype=float)
    gap = np.where(t < 10, 1.0, t**-1.0)
    assert an.tail_rate_fit(t, gap, 100).slope == pytest.approx(-1)
    with pytest.raises(ValidationError, match="8 points"):
        an.rate_fit(t[:7], gap[:7])
    with pytest.raises(ValidationError):
        an.rate_fit(t, gap[:-1])


def test_rate_fit_clamps_zero_gaps():
    t = np.arange(1, 20, dtype=float)
    fit = an.rate_fit(t, np.zeros_like(t))
    assert fit.slope == 0 and np.isclose(fit.intercept, np.log(1e-12))


# ---------------------------------------------------------------- aggregation


def test_aggregate_single_and_constant():
    x = np.linspace(0, 1, 10)
    b = an.aggregate([x])
    for arr in (b.mean, b.median, b.q10, b.q90):
        np.testing.assert_allclose(arr, x)
    b = an.aggregate([np.full(5, 2.5)] * 7)
    np.testing.assert_array_equal(b.mean, 2.5)
    assert b.n_seeds == 7


def test_aggregate_uniform_noise():
    rng = np.random.default_rng(0)
    b = an.aggregate([rng.random(1) for _ in range(50)])
    assert abs(b.mean[0] - 0.5) < 3 * np.sqrt(1 / 12) / np.sqrt(50)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.permutations(range(6)))
def test_aggregate_permutation_invariant(seed, perm):
    rows = list(np.random.default_rng(seed).random((6, 4)))
    a = an.aggregate(rows)
    b = an.aggregate([rows[k] for k in perm])
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-15)
    np.testing.assert_array_equal(a.median, b.median)


def test_aggregate_grid_mismatch():
    g = get_fixture("matching-pennies")
    s = lrn.Schedule.constant(0.1)
    a = lrn.run(g, "mmw", s, 20, run_rng(0, 0))
    b = lrn.run(g, "mmw", s, 20, run_rng(0, 0), stride=5)
    with pytest.raises(ValidationError, match="grids"):
        an.aggregate([a, b])
    with pytest.raises(ValidationError):
        an.aggregate([])


# ---------------------------------------------------------------- VS success


def test_vs_success_rate_examples():
    res = an.vs_success_rate([1e-4, 2e-3, 5e-3], None, 1e-2)
    assert res.fraction == 1.0
    assert an.vs_success_rate([0.0, 1e-4], None, 0.0).fraction == 0.0
    assert an.vs_success_rate([1e-4, 0.5], None, 1e-2).fraction == 0.5


def test_vs_success_rate_on_trajectories():
    g = get_fixture("dominant")
    eq = list(g.equilibrium)
    trs = [lrn.run(g, "3mw-1pe", lrn.Schedule.power(0.1, 0.9, 0.5, 0.2), 200, run_rng(0, s),
                   reference=eq) for s in range(3)]
    res = an.vs_success_rate(trs, eq, 10.0)
    assert res.fraction == 1.0
    np.testing.assert_allclose(res.finals, [tr.final_bregman for tr in trs], atol=1e-10)


def test_nonincreasing():
    assert an.nonincreasing([3, 2, 2, 1])
    assert not an.nonincreasing([1, 2])
    assert an.nonincreasing([1, 1.05], tol=0.1)
