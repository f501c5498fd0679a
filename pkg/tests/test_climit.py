import itertools
import math

import numpy as np
import pytest

from ncq import CapExceededError, PreconditionError
from ncq import linalg as la
from ncq.climit import (CltInstance, SpeicherModel, ccr_charfn_series, ccr_closed_form,
                        ccr_commutator_check, dense_word_trace, finite_n_moment_dense,
                        finite_n_moment_exact, finite_n_moment_mc, limit_moment, random_signs,
                        speicher_generators, word_sign_expectation, word_trace)
from ncq.quasifree import MatrixState

X = np.array([[0, 1], [1, 0]])


def small_state():
    dens = np.diag([0.3, 0.7])
    a = np.array([[0.2, 1.0 + 0.5j], [0.3, -0.4]])
    b = np.array([[1.0, 0.5], [0.5, -0.6]])
    return MatrixState(dens, {"a": a, "b": b})


def unit_gaussian_state():
    # psi(x^2) = 1 for the selfadjoint unitary X under the trace state
    return MatrixState(np.eye(2) / 2, {"x": X})


def brute_force_moment(state, word, q, n, T=1.0):
    """Average over all sign matrices of tau (x) psi^(x)n on dense u_n(x)."""
    d = state.dim
    pairs = list(itertools.combinations(range(n), 2))
    dens = la.kron(np.eye(2**n) / 2**n, la.kron_all([state.density] * n))
    total = 0.0
    for bits in itertools.product((1.0, -1.0), repeat=len(pairs)):
        s = np.ones((n, n))
        prob = 1.0
        for (i, j), b in zip(pairs, bits):
            s[i, j] = s[j, i] = b
            prob *= (1 + q) / 2 if b > 0 else (1 - q) / 2
        if prob == 0:
            continue
        vs = speicher_generators(n, s)
        us = {}
        for name, x in state.elements.items():
            us[name] = math.sqrt(T / n) * sum(
                la.kron(vs[k], la.embed(x, k, [d] * n)) for k in range(n))
        prod = np.eye(dens.shape[0], dtype=complex)
        for sym in word:
            prod = prod @ us[sym]
        total += prob * np.trace(dens @ prod)
    return complex(total)


def test_single_site_generator():
    np.testing.assert_array_equal(speicher_generators(1, np.ones((1, 1))), [X])


def test_two_site_anticommutation():
    v1, v2 = speicher_generators(2, np.array([[1, -1], [-1, 1]]))
    np.testing.assert_allclose(v1 @ v2, -v2 @ v1)


def test_generators_are_selfadjoint_unitaries(rng):
    for n in range(1, 7):
        model = SpeicherModel.sample(n, 0.2, rng)
        gens = model.generators()
        for i, vi in enumerate(gens):
            np.testing.assert_allclose(vi @ vi, np.eye(2**n), atol=0)
            np.testing.assert_allclose(vi, la.dagger(vi))
            for j, vj in enumerate(gens):
                if i != j:
                    assert np.max(np.abs(vi @ vj - model.signs[i, j] * vj @ vi)) <= 1e-13


def test_dense_cap():
    with pytest.raises(CapExceededError):
        speicher_generators(11, np.ones((11, 11)))


def test_word_trace_examples():
    s = np.array([[1, -1], [-1, 1]])
    assert word_trace([1], s) == 0
    assert word_trace([1, 2, 1, 2], s) == -1
    assert word_trace([1, 1], s) == 1


def test_word_sign_expectation_examples():
    assert word_sign_expectation([1, 2, 1, 2], 0.3) == pytest.approx(0.3)
    assert word_sign_expectation([1, 2, 2, 1], 0.3) == 1.0
    assert word_sign_expectation([1, 2, 2], 0.3) == 0.0


def test_word_trace_matches_dense(rng):
    for _ in range(200):
        n = int(rng.integers(1, 7))
        s = random_signs(n, float(rng.uniform(-1, 1)), rng)
        gens = speicher_generators(n, s)
        word = list(rng.integers(1, n + 1, size=int(rng.integers(1, 9))))
        assert word_trace(word, s) == dense_word_trace(word, gens)


def test_random_signs_mean(rng):
    s = np.stack([random_signs(6, 0.4, rng) for _ in range(4000)])
    off = s[:, 0, 1:]
    assert abs(off.mean() - 0.4) < 0.03


def test_instance_validation():
    with pytest.raises(PreconditionError):
        CltInstance(small_state(), ("a", "b"), T=0.0)
    with pytest.raises(PreconditionError):
        CltInstance(MatrixState(np.eye(2), {"a": X}), ("a", "a"))
    with pytest.raises(KeyError):
        CltInstance(small_state(), ("a", "c"))


@pytest.mark.parametrize("n", [1, 2, 5, 40])
def test_second_moment_is_exact_for_every_n(n):
    state = small_state()
    inst = CltInstance(state, ("a", "b"), T=2.5, q=0.3)
    want = 2.5 * state.evaluate(["a", "b"])
    assert abs(finite_n_moment_exact(inst, n) - want) <= 1e-13
    assert abs(limit_moment(inst) - want) <= 1e-13


@pytest.mark.parametrize("q", [-1.0, 0.0, 0.5, 1.0])
@pytest.mark.parametrize("n", [2, 3])
def test_exact_matches_brute_force(q, n):
    state = small_state()
    for word in [("a", "b", "a", "b"), ("a", "a", "b", "b"), ("b", "a", "b", "b")]:
        inst = CltInstance(state, word, 1.3, q)
        want = brute_force_moment(state, word, q, n, 1.3)
        assert abs(finite_n_moment_exact(inst, n) - want) <= 1e-12
        assert abs(finite_n_moment_dense(inst, n) - want) <= 1e-12


def test_exact_matches_dense_oracle_mixed_colours():
    state = small_state()
    for colours in [(0.2, -0.6, 0.2, -0.6), (0.5, 0.5, -1.0, -1.0), (1.0, -0.3, 0.7, 0.0)]:
        inst = CltInstance(state, ("a", "b", "a", "b"), 1.0, colours)
        for n in (2, 3):
            assert abs(finite_n_moment_exact(inst, n) - finite_n_moment_dense(inst, n)) <= 1e-12


def test_limit_examples():
    state = unit_gaussian_state()
    assert limit_moment(CltInstance(state, ("x",) * 4, 1.0, 1.0)) == pytest.approx(3.0)
    assert limit_moment(CltInstance(state, ("x",) * 4, 1.0, -1.0)) == pytest.approx(1.0)
    assert limit_moment(CltInstance(state, ("x",) * 4, 1.0, 0.0)) == pytest.approx(2.0)


@pytest.mark.parametrize("q", [-1.0, 0.0, 0.5, 1.0])
def test_convergence_rate_is_one_over_n(q):
    inst = CltInstance(small_state(), ("a", "b", "a", "b"), 1.0, q)
    lim = limit_moment(inst)
    errs = [abs(finite_n_moment_exact(inst, n) - lim) for n in (8, 16, 32)]
    for e1, e2 in zip(errs, errs[1:]):
        assert 1.5 <= e1 / e2 <= 3.0


def test_mixed_colours_converge_to_t_mixed_limit():
    state = small_state()
    for colours in [(0.2, -0.6, 0.2, -0.6), (0.9, 0.1, 0.9, 0.1), (-1.0, 0.5, 0.5, -1.0)]:
        inst = CltInstance(state, ("a", "b", "a", "b"), 1.0, colours)
        lim = limit_moment(inst)
        for n in (8, 16, 32, 64):
            assert abs(finite_n_moment_exact(inst, n) - lim) <= 5.0 / n


def test_mc_second_moment_has_zero_variance():
    inst = CltInstance(small_state(), ("a", "b"), 1.0, 0.3)
    est = finite_n_moment_mc(inst, 4, 50, seed=3)
    assert est.stderr <= 1e-14
    assert abs(est.mean - small_state().evaluate(["a", "b"])) <= 1e-13


def test_mc_within_four_standard_errors():
    inst = CltInstance(small_state(), ("a", "b", "a", "b"), 1.0, 0.5)
    est = finite_n_moment_mc(inst, 4, 10_000, seed=11)
    assert abs(est.mean - finite_n_moment_exact(inst, 4)) <= 4 * est.stderr


def test_mc_reproducible_across_jobs_and_chunks():
    inst = CltInstance(small_state(), ("a", "b", "b", "a"), 1.0, -0.2)
    a = finite_n_moment_mc(inst, 5, 3000, seed=2**63 + 5)
    b = finite_n_moment_mc(inst, 5, 3000, seed=2**63 + 5, jobs=4, chunk=333)
    c = finite_n_moment_mc(inst, 5, 3000, seed=2**63 + 6)
    assert a == b
    assert a.mean != c.mean


def test_mc_rejects_mixed_colours():
    inst = CltInstance(small_state(), ("a", "b"), 1.0, (0.1, 0.2))
    with pytest.raises(PreconditionError):
        finite_n_moment_mc(inst, 3, 10, seed=0)


def test_ccr_series_examples():
    assert ccr_charfn_series(0.4, 0, 0).value == pytest.approx(1.0)
    r = ccr_charfn_series(0.4, 1.0, 0.0)
    assert abs(r.value - math.exp(0.5)) <= max(r.tail_bound, 1e-12)
    r = ccr_charfn_series(0.5, 0.5, 0.5)
    assert abs(r.value - math.exp(0.25)) <= 1e-6


@pytest.mark.parametrize("mu", [0.3, 0.5, 0.8])
def test_ccr_grid(mu):
    grid = [-1.0, -0.5, 0.0, 0.5, 1.0]
    for z in grid:
        for w in grid:
            r = ccr_charfn_series(mu, z, w, True, 16)
            assert r.error <= 1e-6
            assert r.error <= r.tail_bound + 1e-12


def test_ccr_distinct_indices_factorize():
    r = ccr_charfn_series(0.8, 0.7, -0.9, same_index=False)
    assert abs(r.value - math.exp((0.49 + 0.81) / 2)) <= 1e-6
    assert r.closed_form == pytest.approx(ccr_closed_form(0.3, 0.7, -0.9, same_index=False))


def test_ccr_order_cap():
    with pytest.raises(CapExceededError):
        ccr_charfn_series(0.5, 0.1, 0.1, order=25)


def test_commutator_examples():
    assert abs(ccr_commutator_check(0.5).commutator) <= 1e-15
    chk = ccr_commutator_check(0.75)
    assert chk.commutator == pytest.approx(1j)
    assert chk.residual <= 1e-14
    with pytest.raises(PreconditionError):
        ccr_commutator_check(1.0)


def test_scalar_square_kills_the_correction_at_q_minus_one():
    # b^2 = c 1 makes the single-site four-point values obey the fermionic
    # pairing rule, so the 1/n term vanishes identically
    b = np.array([[1.0, 0.5], [0.5, -1.0]])
    state = MatrixState(np.diag([0.3, 0.7]), {"b": b})
    inst = CltInstance(state, ("b",) * 4, 1.0, -1.0)
    lim = limit_moment(inst)
    for n in (2, 3, 8, 16):
        assert abs(finite_n_moment_exact(inst, n) - lim) <= 1e-14
    assert abs(finite_n_moment_dense(inst, 3) - lim) <= 1e-14
