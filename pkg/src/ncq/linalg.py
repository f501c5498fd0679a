"""Dense complex matrix kernel.

All functions are pure: inputs are never modified and every result is a
fresh array.  Dimensions are checked against a global cap so that an
accidentally huge tensor product fails loudly instead of exhausting memory.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from . import CapExceededError, NumericalError

DEFAULT_DIM_CAP = 2**14
EXPM_MAGNITUDE_CAP = 700.0

_dim_cap = DEFAULT_DIM_CAP


def get_dim_cap() -> int:
    return _dim_cap


def set_dim_cap(cap: int) -> int:
    """Set the total-dimension cap, returning the previous value."""
    global _dim_cap
    if cap < 1:
        raise ValueError("dimension cap must be positive")
    old, _dim_cap = _dim_cap, int(cap)
    return old


def check_dim(dim: int, what: str = "matrix") -> None:
    if dim > _dim_cap:
        raise CapExceededError(f"{what} dimension {dim} exceeds cap {_dim_cap}")


def as_cmatrix(a) -> np.ndarray:
    """Return a complex 2-D copy of ``a``, rejecting non-finite entries."""
    m = np.array(a, dtype=complex, ndmin=2)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product with the row index ``(i1, i2) -> i1 * rows(b) + i2``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    check_dim(a.shape[0] * b.shape[0], "kron row")
    check_dim(a.shape[1] * b.shape[1], "kron column")
    return np.kron(a, b)


def kron_all(factors: Iterable) -> np.ndarray:
    factors = list(factors)
    if not factors:
        return np.ones((1, 1), dtype=complex)
    return reduce(kron, factors)


def embed(op, leg: int, dims: Sequence[int]) -> np.ndarray:
    """Place ``op`` on tensor leg ``leg`` (0-based) with identities elsewhere."""
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[leg] = np.asarray(op, dtype=complex)
    return kron_all(factors)


def svd_values(a) -> np.ndarray:
    """Singular values in nonincreasing order (length ``min(rows, cols)``)."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def nuclear_norm(a) -> float:
    return float(np.sum(svd_values(a)))


def op_norm(a) -> float:
    s = svd_values(a)
    return float(s[0]) if s.size else 0.0


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a)))


def dagger(a) -> np.ndarray:
    return np.conj(np.asarray(a)).T


def hermitian_part(a) -> np.ndarray:
    a = np.asarray(a)
    return 0.5 * (a + dagger(a))


def psd_function(a, fn) -> np.ndarray:
    """Apply ``fn`` to the spectrum of the Hermitian matrix ``a``.

    Eigenvalues are clipped at zero first, so tiny negative rounding noise
    in a positive matrix does not produce NaNs under ``sqrt``.
    """
    w, v = np.linalg.eigh(hermitian_part(a))
    w = np.clip(w, 0.0, None)
    return (v * fn(w)) @ dagger(v)


def psd_sqrt(a) -> np.ndarray:
    return psd_function(a, np.sqrt)


def psd_power(a, s: float) -> np.ndarray:
    """``a**s`` for a positive definite Hermitian ``a`` (any real ``s``)."""
    w, v = np.linalg.eigh(hermitian_part(a))
    if s < 0 and np.min(w) <= 0:
        raise NumericalError("negative power of a singular matrix")
    w = np.clip(w, 0.0, None)
    return (v * w**s) @ dagger(v)


def expm(a) -> np.ndarray:
    """Matrix exponential (Pade scaling-and-squaring)."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expm needs a square matrix")
    if a.size and np.max(np.abs(a)) > EXPM_MAGNITUDE_CAP:
        raise NumericalError("expm input exceeds the magnitude cap")
    return scipy.linalg.expm(a)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def ginibre(shape, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def block_column(blocks: Sequence) -> np.ndarray:
    """Stack ``[c_1; c_2; ...]``; its nuclear norm is ``tr((sum c_k* c_k)^(1/2))``."""
    return np.vstack([np.asarray(b, dtype=complex) for b in blocks])


def block_row(blocks: Sequence) -> np.ndarray:
    """Concatenate ``[d_1, d_2, ...]``; nuclear norm ``tr((sum d_k d_k*)^(1/2))``."""
    return np.hstack([np.asarray(b, dtype=complex) for b in blocks])
