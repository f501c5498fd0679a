import numpy as np
import pytest
import scipy.linalg

from ncq import CapExceededError, NumericalError
from ncq import linalg as la


def test_kron_matches_numpy(rng):
    a = la.ginibre((2, 3), rng)
    b = la.ginibre((3, 2), rng)
    np.testing.assert_allclose(la.kron(a, b), np.kron(a, b))


def test_dim_cap_is_enforced():
    old = la.set_dim_cap(8)
    try:
        with pytest.raises(CapExceededError):
            la.kron(np.eye(4), np.eye(4))
        la.kron(np.eye(2), np.eye(4))
    finally:
        la.set_dim_cap(old)
    assert la.get_dim_cap() == old


def test_embed_places_operator_on_leg():
    x = np.arange(9.0).reshape(3, 3)
    np.testing.assert_allclose(la.embed(x, 1, [2, 3, 2]), np.kron(np.kron(np.eye(2), x), np.eye(2)))


def test_norms_against_definitions(rng):
    a = la.ginibre((4, 3), rng)
    s = np.linalg.svd(a, compute_uv=False)
    assert la.nuclear_norm(a) == pytest.approx(s.sum(), rel=1e-13)
    assert la.op_norm(a) == pytest.approx(s.max(), rel=1e-13)
    assert la.frobenius_norm(a) == pytest.approx(np.sqrt((s**2).sum()), rel=1e-13)


def test_nuclear_norm_unitary_invariance(rng):
    a = la.ginibre((4, 4), rng)
    u, v = la.random_unitary(4, rng), la.random_unitary(4, rng)
    assert la.nuclear_norm(u @ a @ v) == pytest.approx(la.nuclear_norm(a), rel=1e-12)


def test_random_unitary_is_unitary(rng):
    u = la.random_unitary(5, rng)
    np.testing.assert_allclose(u @ la.dagger(u), np.eye(5), atol=1e-13)


def test_psd_sqrt_and_power(rng):
    g = la.ginibre((4, 4), rng)
    p = g @ la.dagger(g)
    r = la.psd_sqrt(p)
    np.testing.assert_allclose(r @ r, p, atol=1e-12)
    np.testing.assert_allclose(la.psd_power(p, -1.0) @ p, np.eye(4), atol=1e-10)


def test_expm_matches_scipy(rng):
    a = 0.3 * la.ginibre((3, 3), rng)
    np.testing.assert_allclose(la.expm(a), scipy.linalg.expm(a), atol=1e-13)


def test_nonfinite_input_rejected():
    with pytest.raises(NumericalError):
        la.nuclear_norm(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_block_shapes(rng):
    blocks = la.ginibre((3, 2, 2), rng)
    assert la.block_column(blocks).shape == (6, 2)
    assert la.block_row(blocks).shape == (2, 6)
