"""Both sides of Khintchine-type norm equivalences.

Right-hand sides are weighted square-function infima

    inf_{x_k = c_k + d_k} tr((sum_k lam_k c_k* c_k)^1/2) + tr((sum_k nu_k d_k d_k*)^1/2)

solved with :mod:`ncq.solver`.  Left-hand sides are nuclear norms of
``sum_k W_k (x) x_k`` for quasi-free CAR matrices ``W_k``.

The second half realizes independent copies in a tensor product:
``N = M_b (x) M_d^(x)n`` with ``alpha_i`` placing an element of
``M = M_b (x) M_d`` on the ``b`` leg and the ``i``-th ``d`` leg.  The state
is ``phi_b (x) rho^(x)n`` and the conditional expectation onto ``M_b`` is
``E(z) = (id (x) rho^(x)n)(z)``.  Elements of ``L_1`` are densities, so
``alpha_i(x D) = alpha_i(x) D_n``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import CapExceededError, PreconditionError
from . import linalg as la
from .quasifree import QuasiFreeSpec, car_generators, quasifree_density
from .solver import (DecompositionResult, SplitTerm, block_scale, column_term,
                     row_term, solve_split)

LHS_MODE_CAP = 8
LHS_DIM_CAP = 2**8 * 4
COPIES_SITE_CAP = 3
KH_BUDGET = 200.0
MAIN_LOWER_CONSTANT = 40.0


def square_function_norm(blocks, weights, side: str = "column") -> float:
    """``tr((sum w_k c_k* c_k)^1/2)`` (column) or ``tr((sum w_k c_k c_k*)^1/2)`` (row)."""
    c = np.asarray(blocks, dtype=complex)
    if c.ndim == 2:
        c = c[None]
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if w.shape != (c.shape[0],):
        raise ValueError("one weight per block is required")
    scaled = np.sqrt(w)[:, None, None] * c
    if side == "column":
        return la.nuclear_norm(la.block_column(scaled))
    if side == "row":
        return la.nuclear_norm(la.block_row(scaled))
    raise ValueError(f"side must be 'column' or 'row', got {side!r}")


@dataclass(frozen=True)
class KhintchineInstance:
    """Coefficients ``x_k`` (stack of shape ``(K, m, m)``) with column weights
    ``lam`` and row weights ``nu``."""

    x: np.ndarray
    lam: tuple[float, ...]
    nu: tuple[float, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=complex)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != x.shape[2]:
            raise ValueError(f"x must be a stack of square matrices, got {x.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        if len(self.lam) != x.shape[0] or len(self.nu) != x.shape[0]:
            raise ValueError("one weight pair per coefficient is required")
        if any(v < 0 for v in self.lam + self.nu):
            raise PreconditionError("weights must be nonnegative")

    @property
    def K(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def objective(self, c) -> float:
        c = np.asarray(c, dtype=complex)
        return (square_function_norm(c, self.lam, "column")
                + square_function_norm(self.x - c, self.nu, "row"))


def two_term_infimum(inst: KhintchineInstance, **solver_opts) -> DecompositionResult:
    """Minimize the weighted column plus row square functions over ``c + d = x``.

    A zero weight forces its component to vanish: ``lam_k = 0`` means
    ``c_k = 0`` and ``nu_k = 0`` means ``d_k = 0``.  Both zero is rejected.
    """
    lam = np.array(inst.lam)
    nu = np.array(inst.nu)
    if np.any((lam == 0) & (nu == 0)):
        raise PreconditionError("lam_k and nu_k cannot both vanish")
    x = inst.x

    def inv_sqrt(w):
        return np.where(w > 0, 1.0 / np.sqrt(np.where(w > 0, w, 1.0)), 0.0)

    terms = [column_term(block_scale(inv_sqrt(lam), x.shape), "c"),
             row_term(block_scale(inv_sqrt(nu), x.shape), "d")]
    res = solve_split(terms, x, **solver_opts)
    # re-evaluate at the returned split in the original weights
    res.objective = inst.objective(res.part("c"))
    res.lower_bound = min(res.lower_bound, res.objective)
    return res


def car_weights(spec: QuasiFreeSpec, normalization: str) -> tuple[np.ndarray, np.ndarray]:
    mu = np.array(spec.mu)
    if normalization == "symmetric":
        return 1.0 - mu, mu
    if normalization == "right":
        return mu, mu**2 / (1.0 - mu)
    raise ValueError(f"normalization must be 'symmetric' or 'right', got {normalization!r}")


def car_coefficient_matrices(spec: QuasiFreeSpec, normalization: str) -> list[np.ndarray]:
    """``D^1/2 a_k D^1/2`` (symmetric) or ``a_k D`` (right)."""
    if spec.K > LHS_MODE_CAP:
        raise CapExceededError(f"K={spec.K} exceeds {LHS_MODE_CAP}")
    dens = np.real(np.diag(quasifree_density(spec)))
    gens = car_generators(spec.K)
    if normalization == "symmetric":
        h = np.sqrt(dens)
        return [h[:, None] * a * h[None, :] for a in gens]
    if normalization == "right":
        return [a * dens[None, :] for a in gens]
    raise ValueError(f"normalization must be 'symmetric' or 'right', got {normalization!r}")


def lhs_car_norm(x, spec: QuasiFreeSpec, normalization: str = "symmetric") -> float:
    """``|| sum_k W_k (x) x_k ||_1``."""
    x = _coeffs(x, spec.K)
    if 2**spec.K * x.shape[1] > LHS_DIM_CAP:
        raise CapExceededError(f"dimension {2**spec.K * x.shape[1]} exceeds {LHS_DIM_CAP}")
    ws = car_coefficient_matrices(spec, normalization)
    total = sum(la.kron(w, xk) for w, xk in zip(ws, x))
    return la.nuclear_norm(total)


def _coeffs(x, K: int) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 2 and K == 1 and x.shape[0] == x.shape[1]:
        x = x[None]
    if x.ndim == 1:
        x = x[:, None, None]
    if x.ndim != 3 or x.shape[0] != K or x.shape[1] != x.shape[2]:
        raise ValueError(f"need {K} square coefficient matrices, got shape {x.shape}")
    return x


@dataclass
class KhintchineReport:
    lhs: float
    rhs: float
    rhs_lower: float
    ratio: float
    ratio_max: float
    budget: float
    converged: bool
    decomposition: DecompositionResult = field(repr=False)

    @property
    def ok(self) -> bool:
        # lhs / rhs lies in [ratio, ratio_max] because rhs_lower <= rhs* <= rhs
        return self.ratio >= 1.0 / self.budget and self.ratio_max <= self.budget


def khintchine_ratio(x, spec: QuasiFreeSpec, normalization: str = "symmetric",
                     budget: float = KH_BUDGET, **solver_opts) -> KhintchineReport:
    x = _coeffs(x, spec.K)
    lam, nu = car_weights(spec, normalization)
    lhs = lhs_car_norm(x, spec, normalization)
    res = two_term_infimum(KhintchineInstance(x, tuple(lam), tuple(nu)), **solver_opts)
    rhs, lo = res.objective, res.lower_bound
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    ratio_max = lhs / lo if lo > 0 else (0.0 if lhs == 0 else math.inf)
    return KhintchineReport(lhs, rhs, lo, ratio, ratio_max, budget, res.converged, res)


# -- the three-term norm ----------------------------------------------------

def _diagonalize_state(rho) -> tuple[np.ndarray, np.ndarray]:
    rho = la.as_cmatrix(rho)
    w, u = np.linalg.eigh(la.hermitian_part(rho))
    if np.min(w) <= 0:
        raise PreconditionError("the state on the conditioned leg must be faithful")
    return w, u


def k_norm_terms(b: int, d: int, n: int, eps: float, rho_diag: np.ndarray) -> list[SplitTerm]:
    """Split terms for ``n||x_1||_1 + sqrt(n eps)(||x_2||_c + ||x_3||_r)`` on
    ``M_b (x) M_d`` with a diagonal ``rho``.

    For ``x_2 = xi D`` one has ``D_b E(xi* xi) D_b = Tr_d(rho^-1/2 x_2* x_2
    rho^-1/2)``, so the column term is the nuclear norm of the blocks
    ``x_2 (1 (x) rho^-1/2)(1 (x) |j>)`` stacked over ``j``; the row term is
    its mirror image.
    """
    dim = b * d
    shape = (dim, dim)
    r = np.sqrt(np.tile(rho_diag, b))           # index (beta, j) -> sqrt(rho_j)
    c = math.sqrt(n * eps)

    def col_fwd(w):
        return w.reshape(dim, b, d).transpose(2, 0, 1).reshape(d * dim, b)

    def col_inv(mat):
        return mat.reshape(d, dim, b).transpose(1, 2, 0).reshape(shape)

    def row_fwd(w):
        return w.reshape(b, d * dim)

    def row_inv(mat):
        return mat.reshape(shape)

    return [
        SplitTerm(np.full(shape, 1.0 / n), lambda w: w, lambda w: w, "x1"),
        SplitTerm(np.broadcast_to(r[None, :] / c, shape).copy(), col_fwd, col_inv, "x2"),
        SplitTerm(np.broadcast_to(r[:, None] / c, shape).copy(), row_fwd, row_inv, "x3"),
    ]


def k_norm_three_term(x, n: int, eps: float, rho=None, b: int | None = None,
                      **solver_opts) -> DecompositionResult:
    """``||x||_{K_{n,eps}}`` for an ``L_1`` element ``x`` of ``M_b (x) M_d``.

    ``rho`` is the density of the state on the ``M_d`` leg (default: ``d = 1``,
    so ``E`` is the identity).  Parts are returned in the original basis.
    """
    x = la.as_cmatrix(x)
    if n < 1 or eps <= 0:
        raise PreconditionError("need n >= 1 and eps > 0")
    if rho is None:
        rho = np.ones((1, 1))
    w, u = _diagonalize_state(rho)
    d = w.size
    if b is None:
        b = x.shape[0] // d
    if x.shape != (b * d, b * d):
        raise ValueError(f"x has shape {x.shape}, expected {(b * d, b * d)}")
    rot = la.kron(np.eye(b), u)
    xr = la.dagger(rot) @ x @ rot
    res = solve_split(k_norm_terms(b, d, n, eps, w), xr, **solver_opts)
    res.parts = [rot @ p @ la.dagger(rot) for p in res.parts]
    return res


def k_norm_objective(parts: Sequence[np.ndarray], n: int, eps: float, rho, b: int) -> float:
    """Evaluate the three-term objective at a given split (any basis)."""
    w, u = _diagonalize_state(rho)
    d = w.size
    rot = la.kron(np.eye(b), u)
    terms = k_norm_terms(b, d, n, eps, w)
    total = 0.0
    for t, p in zip(terms, parts):
        pr = la.dagger(rot) @ np.asarray(p, dtype=complex) @ rot
        total += la.nuclear_norm(t.to_matrix(pr / t.scale))
    return total


def k_dual_norm(y, n: int, eps: float, rho, b: int) -> float:
    """``max(||y||, sqrt(n/eps)||E(y*y)||^1/2, sqrt(n/eps)||E(yy*)||^1/2)``."""
    y = la.as_cmatrix(y)
    e1 = partial_expectation(la.dagger(y) @ y, rho, b)
    e2 = partial_expectation(y @ la.dagger(y), rho, b)
    s = math.sqrt(n / eps)
    return max(la.op_norm(y), s * math.sqrt(la.op_norm(e1)), s * math.sqrt(la.op_norm(e2)))


def partial_expectation(z, rho, b: int) -> np.ndarray:
    """``(id (x) rho)(z)`` for ``z`` on ``M_b (x) M_d``."""
    rho = la.as_cmatrix(rho)
    d = rho.shape[0]
    z = np.asarray(z, dtype=complex).reshape(b, d, b, d)
    return np.einsum("ajbk,kj->ab", z, rho)


# -- independent copies -----------------------------------------------------

def clifford_generators(n: int) -> list[np.ndarray]:
    """Anticommuting selfadjoint unitaries of dimension ``2^n``."""
    z = np.diag([1.0, -1.0]).astype(complex)
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    return [la.kron_all([z] * i + [x] + [np.eye(2)] * (n - i - 1)) for i in range(n)]


@dataclass
class CopiesModel:
    """``n`` copies of ``M = M_b (x) M_d`` inside ``M_b (x) M_d^(x)n``."""

    n: int
    b: int
    d: int
    rho: np.ndarray
    phi_b: np.ndarray

    def __post_init__(self):
        if self.n < 1 or self.n > COPIES_SITE_CAP:
            raise CapExceededError(f"n={self.n} outside 1..{COPIES_SITE_CAP}")
        self.rho = la.as_cmatrix(self.rho)
        self.phi_b = la.as_cmatrix(self.phi_b)
        if self.rho.shape != (self.d, self.d) or self.phi_b.shape != (self.b, self.b):
            raise ValueError("state densities do not match the leg dimensions")
        for r in (self.rho, self.phi_b):
            if abs(np.trace(r) - 1) > 1e-12 or np.min(np.linalg.eigvalsh(la.hermitian_part(r))) <= 0:
                raise PreconditionError("states must be faithful densities of trace one")
        la.check_dim(2**self.n * self.dim, "copies model")

    @property
    def dim(self) -> int:
        return self.b * self.d**self.n

    @property
    def base_dim(self) -> int:
        return self.b * self.d

    @property
    def density_m(self) -> np.ndarray:
        return la.kron(self.phi_b, self.rho)

    @property
    def density_n(self) -> np.ndarray:
        return la.kron(self.phi_b, la.kron_all([self.rho] * self.n))

    def alpha(self, i: int, x) -> np.ndarray:
        """Place ``x`` in ``M_b (x) M_d`` on legs ``b`` and ``d_i`` (1-based)."""
        b, d, n = self.b, self.d, self.n
        if not 1 <= i <= n:
            raise ValueError(f"copy index {i} outside 1..{n}")
        x = np.asarray(x, dtype=complex)
        if x.shape != (b * d, b * d):
            raise ValueError(f"x has shape {x.shape}, expected {(b * d, b * d)}")
        full = la.kron(x, np.eye(d ** (n - 1)))          # legs: b, d_i, rest
        legs = [b, d] + [d] * (n - 1)
        t = full.reshape(legs + legs)
        # reorder (b, d_i, d_others...) to (b, d_1, ..., d_n)
        order = [0] + list(range(2, i + 1)) + [1] + list(range(i + 1, n + 1))
        perm = order + [p + n + 1 for p in order]
        return t.transpose(perm).reshape(self.dim, self.dim)

    def expectation(self, z) -> np.ndarray:
        """``E(z) = (id (x) rho^(x)n)(z)`` onto ``M_b``."""
        return partial_expectation(z, la.kron_all([self.rho] * self.n), self.b)

    def expectation_m(self, y) -> np.ndarray:
        return partial_expectation(y, self.rho, self.b)

    def embed_b(self, z) -> np.ndarray:
        return la.kron(z, np.eye(self.d**self.n))


def copies_lhs_exact(model: CopiesModel, x) -> float:
    """Mean over all ``2^n`` sign vectors of ``|| sum_i eps_i v_i tau (x) alpha_i(x) D_n ||_1``
    with Clifford ``v_i`` and ``tau = 1 / 2^n``."""
    n = model.n
    dn = model.density_n
    ys = [model.alpha(i, x) @ dn for i in range(1, n + 1)]
    vs = [v / 2**n for v in clifford_generators(n)]
    total = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=n):
        total += la.nuclear_norm(sum(s * la.kron(v, y) for s, v, y in zip(signs, vs, ys)))
    return total / 2**n


def copies_two_term(model: CopiesModel, x, **solver_opts) -> DecompositionResult:
    """``inf_{alpha_i(x) D_n = c_i + d_i} ||(sum c_i* c_i)^1/2||_1 + ||(sum d_i d_i*)^1/2||_1``."""
    dn = model.density_n
    ys = np.stack([model.alpha(i, x) @ dn for i in range(1, model.n + 1)])
    ones = (1.0,) * model.n
    return two_term_infimum(KhintchineInstance(ys, ones, ones), **solver_opts)


def copies_k_norm(model: CopiesModel, x, eps: float, **solver_opts) -> DecompositionResult:
    """Three-term norm of the density ``x D_M``."""
    return k_norm_three_term(np.asarray(x) @ model.density_m, model.n, eps, model.rho,
                             model.b, **solver_opts)


@dataclass(frozen=True)
class UpDown:
    column: float
    row: float


def _contraction_parts(model: CopiesModel, y):
    y = la.as_cmatrix(y)
    if la.op_norm(y) > 1 + 1e-12:
        raise PreconditionError(f"y is not a contraction (norm {la.op_norm(y):.6g})")
    a = la.psd_sqrt(np.eye(y.shape[0]) - y @ la.dagger(y))
    bb = la.psd_sqrt(np.eye(y.shape[0]) - la.dagger(y) @ y)
    n = model.n
    al_a = [model.alpha(i, a) for i in range(1, n + 1)]
    al_b = [model.alpha(i, bb) for i in range(1, n + 1)]
    eye = np.eye(model.dim, dtype=complex)
    A, B = [], []
    for i in range(n):
        A.append(eye.copy() if i == 0 else A[-1] @ al_a[i - 1])
        B.append(eye.copy() if i == 0 else al_b[i - 1] @ B[-1])
    Y = [model.alpha(i, y) for i in range(1, n + 1)]
    return a, bb, al_a, al_b, A, B, Y


def updown_certificate(model: CopiesModel, y) -> UpDown:
    """``||sum (A_i Y_i B_i)(A_i Y_i B_i)*||`` and the starred variant."""
    *_, A, B, Y = _contraction_parts(model, y)
    terms = [Ai @ Yi @ Bi for Ai, Yi, Bi in zip(A, Y, B)]
    col = sum(t @ la.dagger(t) for t in terms)
    row = sum(la.dagger(t) @ t for t in terms)
    return UpDown(la.op_norm(col), la.op_norm(row))


@dataclass
class RechnenReport:
    factorization_error: float
    one_minus_ea: float
    one_minus_eb: float
    bound_ii: float
    sum_iii_a: float
    sum_iii_b: float
    bound_iii: float
    sum_iv_a: float
    sum_iv_b: float
    bound_iv: float

    @property
    def ok(self) -> bool:
        tol = 1e-12
        return (self.factorization_error <= 1e-12
                and max(self.one_minus_ea, self.one_minus_eb) <= self.bound_ii + tol
                and max(self.sum_iii_a, self.sum_iii_b) <= self.bound_iii + tol
                and max(self.sum_iv_a, self.sum_iv_b) <= self.bound_iv + tol)


def rechnen_check(model: CopiesModel, y, eps: float) -> RechnenReport:
    """Conditional-expectation identities and bounds for ``a = sqrt(1 - yy*)``,
    ``b = sqrt(1 - y*y)`` under ``||y||_{K*} <= 1`` and ``eps < 1/e``."""
    n = model.n
    if not 0 < eps < math.exp(-1):
        raise PreconditionError(f"eps={eps} must lie in (0, 1/e)")
    dual = k_dual_norm(y, n, eps, model.rho, model.b)
    if dual > 1 + 1e-12:
        raise PreconditionError(f"||y||_K* = {dual:.6g} exceeds 1")
    a, bb, al_a, al_b, A, B, _ = _contraction_parts(model, y)
    ea = model.expectation_m(a)
    eb = model.expectation_m(bb)
    eye_b = np.eye(model.b)

    err = 0.0
    for i in range(1, n + 1):
        target_a = np.linalg.matrix_power(ea, i)
        target_b = np.linalg.matrix_power(eb, i)
        fwd_a = np.linalg.multi_dot(al_a[:i]) if i > 1 else al_a[0]
        bwd_a = np.linalg.multi_dot(al_a[:i][::-1]) if i > 1 else al_a[0]
        fwd_b = np.linalg.multi_dot(al_b[:i]) if i > 1 else al_b[0]
        bwd_b = np.linalg.multi_dot(al_b[:i][::-1]) if i > 1 else al_b[0]
        for prod, target in ((fwd_a, target_a), (bwd_a, target_a), (fwd_b, target_b), (bwd_b, target_b)):
            err = max(err, float(np.max(np.abs(model.expectation(prod) - target))))

    def iii(e):
        return la.op_norm(sum(eye_b - np.linalg.matrix_power(e, i - 1) for i in range(1, n + 1)))

    eye_n = np.eye(model.dim)
    iv_a = la.op_norm(sum(model.expectation((eye_n - Ai) @ la.dagger(eye_n - Ai)) for Ai in A))
    iv_b = la.op_norm(sum(model.expectation(la.dagger(eye_n - Bi) @ (eye_n - Bi)) for Bi in B))
    e = math.e
    return RechnenReport(err, la.op_norm(eye_b - ea), la.op_norm(eye_b - eb), eps / n,
                         iii(ea), iii(eb), e * eps * n, iv_a, iv_b, 2 * e * eps * n)
