"""Operator-space norms at a fixed matrix level.

* OH:  ``||sum_k x_k (x) conj(x_k)||^1/2`` (entrywise conjugate).
* ``Q(lam, nu)``: the two-term quotient norm of ``R + C``, delegated to
  :func:`ncq.khintchine.two_term_infimum`.
* ``R_p`` weights and the truncated index range used to embed ``R_p^n``
  into a finite ``S_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import PreconditionError
from . import linalg as la
from .khintchine import KhintchineInstance, square_function_norm, two_term_infimum
from .solver import DecompositionResult, SplitTerm, solve_split


def oh_norm(x) -> float:
    """``||sum_k x_k (x) conj(x_k)||^1/2`` for a family of ``m x m`` matrices."""
    x = np.asarray(x, dtype=complex)
    if x.ndim == 2:
        x = x[None]
    if x.shape[0] == 0:
        return 0.0
    m = x.shape[1]
    la.check_dim(m * m, "OH tensor")
    total = np.zeros((m * m, m * m), dtype=complex)
    for xk in x:
        total += la.kron(xk, np.conj(xk))
    return math.sqrt(la.op_norm(total))


def quotient_norm(inst: KhintchineInstance, **solver_opts) -> float:
    """Norm of ``sum_k f_k (x) x_k`` in ``Q(lam, nu)`` with ``L_1(M_m)`` coefficients."""
    return two_term_infimum(inst, **solver_opts).objective


# -- R_p ---------------------------------------------------------------------

def conjugate_exponent(p: float) -> float:
    if not p > 1:
        raise PreconditionError(f"p={p} must exceed 1")
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class RpSpec:
    p: float
    j_min: int
    j_max: int

    def __post_init__(self):
        conjugate_exponent(self.p)
        if self.j_min > self.j_max:
            raise ValueError("empty index range")

    @property
    def p_conj(self) -> float:
        return conjugate_exponent(self.p)

    @property
    def indices(self) -> range:
        return range(self.j_min, self.j_max + 1)


def rp_sigma(j: int, p: float) -> float:
    """``|j|^-p'`` for ``j >= 1``, ``1/2`` at ``0``, ``1 - |j|^-p`` for ``j <= -1``."""
    pc = conjugate_exponent(p)
    if j >= 1:
        return float(j) ** (-pc)
    if j == 0:
        return 0.5
    return 1.0 - float(-j) ** (-p)


def rp_embedding_coefficient(j: int, p: float) -> float:
    """``(1+|j|)^(-p/2)`` for ``j < 0`` and ``(1+|j|)^(-p'/2)`` for ``j >= 0``."""
    pc = conjugate_exponent(p)
    return (1.0 + abs(j)) ** (-(p if j < 0 else pc) / 2.0)


@dataclass(frozen=True)
class RpRow:
    j: int
    sigma: float
    column_weight: float
    row_weight: float
    embedding: float


def rp_weights(spec: RpSpec) -> list[RpRow]:
    """Weight table: ``1 - sigma_j`` on the column side, ``sigma_j`` on the row side."""
    out = []
    for j in spec.indices:
        s = rp_sigma(j, spec.p)
        out.append(RpRow(j, s, 1.0 - s, s, rp_embedding_coefficient(j, spec.p)))
    return out


def rp_instance(x, spec: RpSpec) -> KhintchineInstance:
    """Two-term instance over pairs ``(k, j)``: coefficient ``x_k`` repeated for
    every ``j`` with weights ``1 - sigma_j`` and ``sigma_j``."""
    x = np.asarray(x, dtype=complex)
    if x.ndim == 2:
        x = x[None]
    rows = rp_weights(spec)
    blocks, lam, nu = [], [], []
    for xk in x:
        for r in rows:
            blocks.append(xk)
            lam.append(r.column_weight)
            nu.append(r.row_weight)
    return KhintchineInstance(np.stack(blocks), tuple(lam), tuple(nu))


# -- truncation and the dimension budget ------------------------------------

def truncation_constant(p: float) -> float:
    return 2.0 * max(p, conjugate_exponent(p))


@dataclass(frozen=True)
class Truncation:
    p: float
    n: int
    lam: float
    cap: int
    index_count: int
    m_prime: float
    eps: float | None
    log2_budget: float | None
    budget_ok: bool | None


def min_budget_base(p: float, eps: float) -> float:
    """Smallest ``lam`` with ``2^m' <= n^(eps n)`` for all ``n``, where
    ``m' = 2 c(p) n log n / log lam``: ``log lam >= 2 c(p) log 2 / eps``."""
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    return math.exp(2.0 * truncation_constant(p) * math.log(2.0) / eps)


def truncation_range(p: float, n: int, lam: float, eps: float | None = None) -> Truncation:
    """``cap = ceil(c(p) log n / log lam)`` with ``c(p) = 2 max(p, p')``.

    Reports the size ``m' = 2 c(p) n log n / log lam`` and, when ``eps`` is
    given, whether ``2^m' <= n^(eps n)`` (compared in log form).
    """
    if n < 2:
        raise PreconditionError("n must be at least 2")
    if not lam > 1:
        raise PreconditionError("lam must exceed 1")
    c = truncation_constant(p)
    ratio = c * math.log(n) / math.log(lam)
    cap = max(1, math.ceil(ratio - 1e-12))
    m_prime = 2.0 * ratio * n
    if eps is None:
        return Truncation(p, n, lam, cap, n * (2 * cap + 1), m_prime, None, None, None)
    lhs = m_prime * math.log(2.0)
    rhs = eps * n * math.log(n)
    return Truncation(p, n, lam, cap, n * (2 * cap + 1), m_prime, eps, rhs / math.log(2.0),
                      lhs <= rhs * (1 + 1e-12))


# -- candidate terms of the four-term tensor formula -------------------------

def four_term_candidates(x, mu: Sequence[float], nu: Sequence[float]) -> dict[str, float]:
    """The four square-function terms for coefficients ``x_{ij}`` (array of
    shape ``(I, J, m, m)``) indexed by two weight sequences.

    The terms are the column/row square functions with product weights
    ``(1-mu_i)(1-nu_j)``, ``(1-mu_i) nu_j``, ``mu_i (1-nu_j)``, ``mu_i nu_j``
    evaluated at the undecomposed coefficients, plus the infimum over
    four-way splits.  No equivalence constant is asserted.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 4 or x.shape[2] != x.shape[3]:
        raise ValueError("x must have shape (I, J, m, m)")
    I, J, m, _ = x.shape
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != (I,) or nu.shape != (J,):
        raise ValueError("weight lengths do not match x")
    flat = x.reshape(I * J, m, m)
    w = {
        "cc": np.outer(1 - mu, 1 - nu).ravel(),
        "cr": np.outer(1 - mu, nu).ravel(),
        "rc": np.outer(mu, 1 - nu).ravel(),
        "rr": np.outer(mu, nu).ravel(),
    }
    out = {
        "column_cc": square_function_norm(flat, w["cc"], "column"),
        "row_rr": square_function_norm(flat, w["rr"], "row"),
        # mixed terms: a column in one index and a row in the other, realized
        # as the nuclear norm of an (I m) x (J m) block matrix
        "mixed_cr": _mixed_norm(x, np.sqrt(np.outer(1 - mu, nu))),
        "mixed_rc": _mixed_norm(np.swapaxes(x, 0, 1), np.sqrt(np.outer(1 - nu, mu))),
    }
    out["infimum"] = four_term_infimum(x, mu, nu).objective
    return out


def _mixed_norm(x: np.ndarray, scale: np.ndarray) -> float:
    I, J, m, _ = x.shape
    blocks = scale[:, :, None, None] * x
    return la.nuclear_norm(blocks.transpose(0, 2, 1, 3).reshape(I * m, J * m))


def four_term_infimum(x, mu, nu, **solver_opts) -> DecompositionResult:
    """Infimum of the four terms above over ``x_ij = sum of four parts``."""
    x = np.asarray(x, dtype=complex)
    I, J, m, _ = x.shape
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    shape = x.shape
    if np.any((mu <= 0) | (mu >= 1)) or np.any((nu <= 0) | (nu >= 1)):
        raise PreconditionError("four-term weights must lie strictly inside (0, 1)")

    def scale_of(wts):
        wts = np.asarray(wts, dtype=float)
        return np.broadcast_to((1.0 / np.sqrt(wts))[:, :, None, None], shape).copy()

    def col(w):
        return w.reshape(I * J * m, m)

    def col_inv(mat):
        return mat.reshape(shape)

    def row(w):
        return w.transpose(2, 0, 1, 3).reshape(m, I * J * m)

    def row_inv(mat):
        return mat.reshape(m, I, J, m).transpose(1, 2, 0, 3)

    def mixed(w):
        return w.transpose(0, 2, 1, 3).reshape(I * m, J * m)

    def mixed_inv(mat):
        return mat.reshape(I, m, J, m).transpose(0, 2, 1, 3)

    def mixed_t(w):
        return w.transpose(1, 2, 0, 3).reshape(J * m, I * m)

    def mixed_t_inv(mat):
        return mat.reshape(J, m, I, m).transpose(2, 0, 1, 3)

    terms = [
        SplitTerm(scale_of(np.outer(1 - mu, 1 - nu)), col, col_inv, "cc"),
        SplitTerm(scale_of(np.outer(1 - mu, nu)), mixed, mixed_inv, "cr"),
        SplitTerm(scale_of(np.outer(mu, 1 - nu)), mixed_t, mixed_t_inv, "rc"),
        SplitTerm(scale_of(np.outer(mu, nu)), row, row_inv, "rr"),
    ]
    return solve_split(terms, x, **solver_opts)
