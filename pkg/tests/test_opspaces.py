import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncq import PreconditionError
from ncq import linalg as la
from ncq.khintchine import KhintchineInstance, square_function_norm
from ncq.opspaces import (RpSpec, conjugate_exponent, four_term_candidates, four_term_infimum,
                          min_budget_base, oh_norm, quotient_norm, rp_embedding_coefficient,
                          rp_instance, rp_sigma, rp_weights, truncation_range)


def test_oh_single_element(rng):
    x = la.ginibre((3, 3), rng)
    assert oh_norm(x) == pytest.approx(la.op_norm(x), rel=1e-12)
    assert oh_norm(np.zeros((2, 3, 3))) == 0.0


@pytest.mark.parametrize("n", range(1, 9))
def test_oh_quarter_power_law(n):
    x = np.zeros((n, n, n))
    for k in range(n):
        x[k, k, 0] = 1.0
    assert abs(oh_norm(x) - n**0.25) <= 1e-10


def test_oh_unitary_invariance_and_homogeneity(rng):
    for _ in range(10):
        x = la.ginibre((3, 3, 3), rng)
        u, v = la.random_unitary(3, rng), la.random_unitary(3, rng)
        assert abs(oh_norm(u @ x @ v) - oh_norm(x)) <= 1e-9
        c = complex(rng.normal(), rng.normal())
        assert abs(oh_norm(c * x) - abs(c) * oh_norm(x)) <= 1e-12 * max(1, oh_norm(x))


def test_quotient_examples(rng):
    assert quotient_norm(KhintchineInstance(np.ones((1, 1, 1)), [1.0], [1.0])) == pytest.approx(1.0, abs=1e-7)
    x = la.ginibre((3, 2, 2), rng)
    col = square_function_norm(x, [1.0] * 3, "column")
    assert quotient_norm(KhintchineInstance(x, [1.0] * 3, [1e6] * 3)) == pytest.approx(col, rel=1e-6)


def test_quotient_monotone_under_weight_doubling(rng):
    for _ in range(3):
        x = la.ginibre((3, 2, 2), rng)
        lam = rng.uniform(0.1, 1, 3)
        nu = rng.uniform(0.1, 1, 3)
        base = quotient_norm(KhintchineInstance(x, lam, nu))
        for k in range(3):
            lam2, nu2 = lam.copy(), nu.copy()
            lam2[k] *= 2
            nu2[k] *= 2
            assert quotient_norm(KhintchineInstance(x, lam2, nu)) >= base - 1e-7
            assert quotient_norm(KhintchineInstance(x, lam, nu2)) >= base - 1e-7


def test_oh_versus_quotient_is_bounded(rng):
    # reported diagnostic: the ratio stays within a modest range on a battery
    ratios = []
    for _ in range(5):
        x = la.ginibre((3, 2, 2), rng)
        q = quotient_norm(KhintchineInstance(x, [0.5] * 3, [0.5] * 3))
        ratios.append(q / oh_norm(x))
    assert all(0 < r < 100 for r in ratios)


def test_conjugate_exponent():
    assert conjugate_exponent(2.0) == 2.0
    assert conjugate_exponent(3.0) == pytest.approx(1.5)
    with pytest.raises(PreconditionError):
        conjugate_exponent(1.0)


def test_rp_sigma_examples():
    assert rp_sigma(0, 2.0) == 0.5
    assert rp_sigma(1, 2.0) == 1.0
    assert rp_sigma(-1, 2.0) == 0.0
    assert rp_sigma(2, 3.0) == pytest.approx(2 ** -1.5)
    assert rp_sigma(-2, 3.0) == pytest.approx(1 - 2**-3)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.01, 50), st.integers(-50, 50))
def test_rp_sigma_in_unit_interval(p, j):
    s = rp_sigma(j, p)
    assert 0.0 <= s <= 1.0
    assert 0.0 < rp_embedding_coefficient(j, p) <= 1.0


def test_rp_table():
    rows = rp_weights(RpSpec(2.0, -2, 2))
    assert [r.j for r in rows] == [-2, -1, 0, 1, 2]
    for r in rows:
        assert r.column_weight + r.row_weight == pytest.approx(1.0)
    assert rows[2].embedding == 1.0
    assert rows[0].embedding == pytest.approx(3.0**-1)
    with pytest.raises(PreconditionError):
        RpSpec(0.5, 0, 1)
    with pytest.raises(ValueError):
        RpSpec(2.0, 1, 0)


def test_rp_endpoints_are_column_and_row(rng):
    x = la.ginibre((1, 2, 2), rng)
    # sigma_-1 = 0: pure column; sigma_1 = 1: pure row (p = 2)
    col = quotient_norm(rp_instance(x, RpSpec(2.0, -1, -1)))
    row = quotient_norm(rp_instance(x, RpSpec(2.0, 1, 1)))
    assert col == pytest.approx(la.nuclear_norm(x[0]), rel=1e-7)
    assert row == pytest.approx(la.nuclear_norm(x[0]), rel=1e-7)


def test_truncation_examples():
    t = truncation_range(2.0, 4, math.exp(4))
    assert t.cap == 2 and t.index_count == 4 * 5
    for p in (1.5, 2.0, 7.0):
        assert truncation_range(p, 2, 1e9).cap >= 1
    with pytest.raises(PreconditionError):
        truncation_range(2.0, 1, 10.0)
    with pytest.raises(PreconditionError):
        truncation_range(2.0, 4, 1.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("eps", [0.25, 1.0])
def test_budget_holds_for_computed_base(p, eps):
    lam = min_budget_base(p, eps)
    for n in (2, 3, 10, 100, 10**6):
        t = truncation_range(p, n, lam, eps)
        assert t.budget_ok
        # 2^m' <= n^(eps n), in log form
        assert t.m_prime * math.log(2) <= eps * n * math.log(n) * (1 + 1e-12)
    assert not truncation_range(p, 10, lam / 2, eps).budget_ok


def test_four_term_candidates(rng):
    x = la.ginibre((2, 2, 2, 2), rng)
    mu, nu = np.array([0.3, 0.6]), np.array([0.4, 0.8])
    out = four_term_candidates(x, mu, nu)
    assert set(out) == {"column_cc", "row_rr", "mixed_cr", "mixed_rc", "infimum"}
    # each candidate is a feasible (undecomposed) value, so the infimum lies below
    for key in ("column_cc", "row_rr", "mixed_cr", "mixed_rc"):
        assert out["infimum"] <= out[key] + 1e-7
    with pytest.raises(PreconditionError):
        four_term_infimum(x, [0.0, 0.5], nu)
