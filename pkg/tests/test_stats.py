import math

import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings, strategies as st

from crab.errors import ContractError
from crab.stats import betainc, paired_t_test, t_cdf, t_sf


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    assert abs(betainc(a, b, x) - scipy.special.betainc(a, b, x)) < 1e-8


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.integers(1, 60))
def test_t_tail_matches_scipy(t, df):
    assert abs(t_sf(t, df) - scipy.stats.t.sf(t, df)) < 1e-8
    assert abs(t_cdf(t, df) + t_sf(t, df) - 1) < 1e-15


def test_critical_values():
    # published one-tailed 5% points
    for df, crit in [(1, 6.314), (4, 2.132), (10, 1.812), (30, 1.697)]:
        assert t_sf(crit, df) == pytest.approx(0.05, abs=2e-4)


def test_identical_lists():
    assert paired_t_test([0.5, 0.6, 0.7], [0.5, 0.6, 0.7]) == (0.0, 0.5)


def test_engineered_t_2132():
    n = 5
    d = [-1.0, -0.5, 0.0, 0.5, 1.0]
    sd = math.sqrt(sum(x * x for x in d) / (n - 1))
    shift = 2.132 * sd / math.sqrt(n)
    a = [0.7 + x + shift for x in d]
    t, p = paired_t_test(a, [0.7] * n)
    assert t == pytest.approx(2.132, abs=1e-9)
    assert 0.049 <= p <= 0.051


def test_antisymmetry():
    a, b = [0.71, 0.69, 0.74, 0.70], [0.68, 0.70, 0.69, 0.66]
    t1, p1 = paired_t_test(a, b)
    t2, p2 = paired_t_test(b, a)
    assert t1 == -t2
    assert p1 + p2 == pytest.approx(1.0, abs=1e-12)
    ref = scipy.stats.ttest_rel(a, b, alternative="greater")
    assert t1 == pytest.approx(ref.statistic, rel=1e-12)
    assert p1 == pytest.approx(ref.pvalue, abs=1e-10)


def test_constant_nonzero_difference():
    t, p = paired_t_test([1.0, 2.0], [0.5, 1.5])
    assert t == math.inf and p == 0.0


def test_errors():
    with pytest.raises(ContractError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ContractError):
        paired_t_test([1.0, 2.0], [2.0])
    with pytest.raises(ValueError):
        betainc(0, 1, 0.5)
