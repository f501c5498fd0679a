import itertools
import math

import numpy as np
import pytest

from ncq import CapExceededError, PreconditionError
from ncq import linalg as la
from ncq.khintchine import lhs_car_norm
from ncq.quasifree import (MatrixState, QuasiFreeSpec, TwoPointKernel, car_generator, car_generators,
                           car_moment_formula, car_ordered_trace, car_relation_residual, car_trace,
                           determinant_formula, growth_bound_check, modular_conjugate,
                           moment_growth_certificate, quasifree_density, state_lengths, wick_moment,
                           wick_moment_enumerated)


def test_single_mode_generator():
    np.testing.assert_array_equal(car_generator(1, 1), [[0, 1], [0, 0]])


@pytest.mark.parametrize("K", range(1, 9))
def test_car_relations(K):
    assert car_relation_residual(car_generators(K)) <= 1e-13


def test_two_mode_anticommute():
    a1, a2 = car_generators(2)
    assert np.max(np.abs(a1 @ a2 + a2 @ a1)) == 0.0


def test_mode_cap():
    with pytest.raises(CapExceededError):
        car_generator(1, 13)


@pytest.mark.parametrize("mu", [0.0, 1.0, -0.2, 1.2])
def test_spec_rejects_boundary(mu):
    with pytest.raises(PreconditionError):
        QuasiFreeSpec((mu,))


def test_density_examples(rng):
    np.testing.assert_allclose(quasifree_density(QuasiFreeSpec((0.5,))), np.diag([0.5, 0.5]))
    spec = QuasiFreeSpec(tuple(rng.uniform(0.05, 0.95, size=4)))
    assert abs(np.trace(quasifree_density(spec)) - 1) <= 1e-13
    spec = QuasiFreeSpec((1 / 3, 1 / 4))
    a2 = car_generator(2, 2)
    assert np.trace(quasifree_density(spec) @ la.dagger(a2) @ a2) == pytest.approx(0.25, abs=1e-15)


def test_modular_conjugate_examples():
    mu = 0.3
    spec = QuasiFreeSpec((mu,))
    a = car_generator(1, 1)
    np.testing.assert_allclose(modular_conjugate(spec, a, 0.5), math.sqrt((1 - mu) / mu) * a, atol=1e-15)
    np.testing.assert_allclose(modular_conjugate(spec, a, 0.0), a)
    d = quasifree_density(spec)
    np.testing.assert_allclose(modular_conjugate(spec, d, 0.7), d, atol=1e-15)


def test_moment_formula_examples():
    spec = QuasiFreeSpec((0.2, 0.7))
    assert car_moment_formula(spec, (1,), (1,)) == pytest.approx(0.2)
    assert car_moment_formula(spec, (1,), (2,)) == 0
    assert car_moment_formula(spec, (1, 2), (1, 2)) == pytest.approx(0.14)
    with pytest.raises(ValueError):
        car_moment_formula(spec, (2, 1), (1, 2))


def test_moment_formula_matches_dense_trace(rng):
    spec = QuasiFreeSpec(tuple(rng.uniform(0.1, 0.9, size=4)))
    for r in range(4):
        for s in range(4):
            for i in itertools.combinations(range(1, 5), r):
                for j in itertools.combinations(range(1, 5), s):
                    assert abs(car_ordered_trace(spec, i, j) - car_moment_formula(spec, i, j)) <= 1e-12


def _car_symbols(word):
    return [f"b{k}*" if st else f"b{k}" for k, st in word]


def test_wick_small_examples():
    kernel = TwoPointKernel({(a, b): complex(v) for (a, b), v in
                             zip(itertools.product("wxyz", repeat=2), np.arange(1, 17) * 0.1)})
    psi = kernel
    assert wick_moment(kernel, "wx", 0.3) == pytest.approx(psi("w", "x"))
    for q in (-1.0, 0.0, 0.4, 1.0):
        want = psi("w", "x") * psi("y", "z") + psi("w", "z") * psi("x", "y") + q * psi("w", "y") * psi("x", "z")
        assert wick_moment(kernel, "wxyz", q) == pytest.approx(want, abs=1e-14)
    assert wick_moment(kernel, "wxy", 0.5) == 0


def test_wick_missing_symbol():
    with pytest.raises(KeyError):
        wick_moment(TwoPointKernel({("a", "a"): 1.0}), ["a", "b"], 0.0)


@pytest.mark.parametrize("q", [-1.0, -0.5, 0.0, 0.3, 1.0])
def test_wick_dynamic_programme_matches_enumeration(q, rng):
    names = ["x", "y", "z"]
    vals = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    kernel = TwoPointKernel({(a, b): vals[i, j] for i, a in enumerate(names) for j, b in enumerate(names)})
    for _ in range(20):
        word = list(rng.choice(names, size=int(rng.choice([2, 4, 6, 8]))))
        assert abs(wick_moment(kernel, word, q) - wick_moment_enumerated(kernel, word, q)) <= 1e-12


def test_wick_matches_dense_trace_k2():
    spec = QuasiFreeSpec((0.3, 0.65))
    kernel = MatrixState.car(spec).kernel()
    for L in (2, 4):
        for letters in itertools.product((1, 2), repeat=L):
            for stars in itertools.product((False, True), repeat=L):
                word = list(zip(letters, stars))
                assert abs(car_trace(spec, word) - wick_moment(kernel, _car_symbols(word), -1.0)) <= 1e-12


def _linear_combination(spec, coeffs):
    gens = car_generators(spec.K)
    return sum(c * a for c, a in zip(coeffs, gens))


@pytest.mark.parametrize("trial", range(20))
def test_determinant_formula(trial):
    rng = np.random.default_rng(1000 + trial)
    K = int(rng.integers(2, 5))
    r = int(rng.integers(1, 4))
    s = r if trial % 4 else int(rng.integers(1, 4))
    spec = QuasiFreeSpec(tuple(rng.uniform(0.1, 0.9, size=K)))
    g = rng.normal(size=(r, K)) + 1j * rng.normal(size=(r, K))
    h = rng.normal(size=(s, K)) + 1j * rng.normal(size=(s, K))
    bg = [_linear_combination(spec, gi) for gi in g]
    bh = [_linear_combination(spec, hj) for hj in h]
    elements = {f"g{i}*": la.dagger(b) for i, b in enumerate(bg)}
    elements.update({f"h{j}": b for j, b in enumerate(bh)})
    state = MatrixState(quasifree_density(spec), elements)
    word = [f"g{i}*" for i in reversed(range(r))] + [f"h{j}" for j in range(s)]
    dense = state.evaluate(word)
    wick = wick_moment(state.kernel(), word, -1.0)
    closed = determinant_formula(spec, g, h)
    assert abs(dense - closed) <= 1e-9
    assert abs(wick - closed) <= 1e-9


def test_sign_absorption(rng):
    K, m = 3, 2
    spec = QuasiFreeSpec(tuple(rng.uniform(0.1, 0.9, size=K)))
    x = la.ginibre((K, m, m), rng)
    base = lhs_car_norm(x, spec, "symmetric")
    for signs in itertools.product((1, -1), repeat=K):
        flipped = x * np.array(signs)[:, None, None]
        assert abs(lhs_car_norm(flipped, spec, "symmetric") - base) <= 1e-10


def test_growth_bound_examples():
    kernel = TwoPointKernel({("x", "x"): 1.0})
    chk = growth_bound_check(kernel, ["x", "x"], [1.0, 1.0], 1.0)
    assert chk.ok and chk.bound == pytest.approx(2.0)
    zero = TwoPointKernel({("z", "z"): 0.0})
    assert growth_bound_check(zero, ["z"] * 4, [0.0] * 4).ok


def test_growth_bound_car_state():
    state = MatrixState.car(QuasiFreeSpec((0.3, 0.6))).normalized()
    word = ["b1", "b2*", "b2", "b1*"]
    chk = growth_bound_check(state.kernel(), word, state_lengths(state, word), -1.0)
    assert chk.ok and chk.margin > 0


def test_certificate_examples():
    assert moment_growth_certificate([0.0] * 10) == pytest.approx(0.1)
    gauss = [0 if k % 2 else math.prod(range(1, k, 2)) for k in range(1, 41)]
    c = moment_growth_certificate(gauss)
    assert c is not None and c <= 2.0
    # k^(2k) beats c^(k+1) k^k for every grid c once k log k > (k+1) log 100
    assert moment_growth_certificate([k ** (2 * k) for k in range(1, 201)]) is None


def test_certificate_rejects_negative_even_moment():
    with pytest.raises(ValueError):
        moment_growth_certificate({2: -1.0})
