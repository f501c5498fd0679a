"""ADMM for sums of nuclear norms under a linear split.

Problem::

    minimize    sum_t || R_t(W_t) ||_1
    subject to  sum_t S_t * W_t = X          (entrywise products)

``R_t`` rearranges the entries of an array shaped like ``X`` into a matrix
(a block column, a block row, ...) and ``S_t >= 0`` is an entrywise scale.
The parts of the split are ``P_t = S_t * W_t``.

The splitting is ``W = V`` with ``f(W) = sum_t ||R_t(W_t)||_1`` and ``g`` the
indicator of the affine constraint; the ``W`` step is singular value
soft-thresholding and the ``V`` step an entrywise projection.  Any ``Y``
with ``||R_t(S_t * Y)||_op <= 1`` for all ``t`` gives the lower bound
``Re<Y, X>``; the scaled multiplier of the ``V`` step supplies such a ``Y``
after normalization, so every result carries a certified bracket
``lower_bound <= optimum <= objective``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import NumericalError
from . import linalg as la

log = logging.getLogger(__name__)

MAX_ITER = 50_000
TOL = 1e-8


@dataclass(frozen=True)
class SplitTerm:
    """One summand: an entrywise scale and an entry-permuting reshape with
    its inverse."""

    scale: np.ndarray
    to_matrix: Callable[[np.ndarray], np.ndarray]
    from_matrix: Callable[[np.ndarray], np.ndarray]
    name: str = ""


@dataclass
class DecompositionResult:
    parts: list[np.ndarray]
    objective: float
    lower_bound: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    names: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.objective - self.lower_bound

    def part(self, name: str) -> np.ndarray:
        return self.parts[self.names.index(name)]

    @property
    def c(self) -> np.ndarray:
        return self.part("c")

    @property
    def d(self) -> np.ndarray:
        return self.part("d")


def svt(a: np.ndarray, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``tau ||.||_1``."""
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"SVD failed in the prox step: {exc}") from exc
    s = np.maximum(s - tau, 0.0)
    return (u * s) @ vh


def term_objective(term: SplitTerm, w: np.ndarray) -> float:
    return la.nuclear_norm(term.to_matrix(w))


def dual_bound(terms: Sequence[SplitTerm], x: np.ndarray, y: np.ndarray) -> float:
    """``Re<Y, X> / max_t ||R_t(S_t * Y)||_op`` (clipped at zero)."""
    num = float(np.real(np.vdot(y, x)))
    den = max(la.op_norm(t.to_matrix(t.scale * y)) for t in terms)
    if den <= 0 or num <= 0:
        return 0.0
    return num / den


def solve_split(terms: Sequence[SplitTerm], x, *, rho: float = 1.0, tol: float = TOL,
                max_iter: int = MAX_ITER, check_every: int = 10) -> DecompositionResult:
    """Minimize ``sum_t ||R_t(W_t)||_1`` subject to ``sum_t S_t * W_t = X``.

    Stops when the primal and dual residuals are both below ``tol`` (relative
    to the size of the iterates) or the certified relative gap is below
    ``tol``.  Non-convergence is reported through ``converged=False``.
    """
    x = np.asarray(x, dtype=complex)
    scales = [np.broadcast_to(np.asarray(t.scale, dtype=float), x.shape) for t in terms]
    if any(np.any(s < 0) for s in scales):
        raise ValueError("scales must be nonnegative")
    s2 = sum(s * s for s in scales)
    if np.any((s2 == 0) & (x != 0)):
        raise ValueError("an entry of X is not reachable by any term")
    s2_safe = np.where(s2 > 0, s2, 1.0)
    names = tuple(t.name for t in terms)

    def project(z):
        resid = (x - sum(s * zi for s, zi in zip(scales, z))) / s2_safe
        return [zi + s * resid for s, zi in zip(scales, z)]

    def objective(v):
        return sum(term_objective(t, vi) for t, vi in zip(terms, v))

    def certificate(u, rho_):
        y = -sum(s * rho_ * ui for s, ui in zip(scales, u)) / s2_safe
        return dual_bound(terms, x, y)

    zero = [np.zeros(x.shape, dtype=complex) for _ in terms]
    if not np.any(x):
        return DecompositionResult(zero, 0.0, 0.0, 0.0, 0.0, 0, True, names)

    v = project(zero)
    u = [np.zeros(x.shape, dtype=complex) for _ in terms]
    xnorm = np.linalg.norm(x)
    r_norm = s_norm = np.inf
    best_lb = 0.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        w = [t.from_matrix(svt(t.to_matrix(vi - ui), 1.0 / rho)) for t, vi, ui in zip(terms, v, u)]
        v_old = v
        v = project([wi + ui for wi, ui in zip(w, u)])
        u = [ui + wi - vi for ui, wi, vi in zip(u, w, v)]

        r_norm = np.sqrt(sum(np.linalg.norm(wi - vi) ** 2 for wi, vi in zip(w, v)))
        s_norm = rho * np.sqrt(sum(np.linalg.norm(vi - vo) ** 2 for vi, vo in zip(v, v_old)))
        size = max(xnorm, np.sqrt(sum(np.linalg.norm(vi) ** 2 for vi in v)))
        if r_norm <= tol * size and s_norm <= tol * size:
            converged = True
            break
        if it % check_every == 0:
            best_lb = max(best_lb, certificate(u, rho))
            obj = objective(v)
            if obj - best_lb <= tol * max(obj, 1e-300):
                converged = True
                break
        if r_norm > 10 * s_norm:
            rho *= 2.0
            u = [ui / 2.0 for ui in u]
        elif s_norm > 10 * r_norm:
            rho /= 2.0
            u = [ui * 2.0 for ui in u]

    obj = objective(v)
    best_lb = min(max(best_lb, certificate(u, rho)), obj)
    if not converged:
        log.warning("ADMM stopped after %d iterations: primal %.2e, dual %.2e, gap %.2e",
                    it, r_norm, s_norm, obj - best_lb)
    parts = [s * vi for s, vi in zip(scales, v)]
    return DecompositionResult(parts, obj, best_lb, float(r_norm), float(s_norm), it,
                               converged, names, {"rho": rho})


# -- common reshapes for stacks of blocks (shape (K, a, b)) -----------------

def column_term(scale, name: str = "") -> SplitTerm:
    """Term ``|| [w_1; ...; w_K] ||_1`` for a stack ``w`` of shape ``(K, a, b)``."""
    scale = np.asarray(scale, dtype=float)

    def fwd(w):
        return w.reshape(-1, w.shape[-1])

    def inv(mat, shape=scale.shape):
        return mat.reshape(shape)

    return SplitTerm(scale, fwd, inv, name)


def row_term(scale, name: str = "") -> SplitTerm:
    """Term ``|| [w_1, ..., w_K] ||_1`` for a stack ``w`` of shape ``(K, a, b)``."""
    scale = np.asarray(scale, dtype=float)
    K, a, b = scale.shape

    def fwd(w):
        return np.transpose(w, (1, 0, 2)).reshape(a, K * b)

    def inv(mat):
        return np.transpose(mat.reshape(a, K, b), (1, 0, 2))

    return SplitTerm(scale, fwd, inv, name)


def block_scale(weights, shape) -> np.ndarray:
    """Broadcast one weight per leading index to a stack of ``shape``."""
    w = np.asarray(weights, dtype=float)
    return np.broadcast_to(w.reshape((-1,) + (1,) * (len(shape) - 1)), shape).copy()
