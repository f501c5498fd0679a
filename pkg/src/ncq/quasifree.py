"""Jordan-Wigner CAR matrices, quasi-free densities and Wick-type moments.

The generator ``a_k`` on ``K`` modes is

    Z (x) ... (x) Z (x) e12 (x) 1 (x) ... (x) 1      (Z on legs 1..k-1)

with ``Z = diag(1, -1)`` and ``e12 = [[0, 1], [0, 0]]``.  The quasi-free
state with occupation numbers ``mu`` has density ``(x)_k diag(1 - mu_k, mu_k)``,
so that ``tr(D a_k* a_k) = mu_k``.

Symbol words for the Wick evaluator are lists of string names resolved
through a :class:`TwoPointKernel` (pair values only) or a
:class:`MatrixState` (an explicit finite-dimensional model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from . import CapExceededError, PreconditionError
from . import linalg as la
from .partitions import PairPartition, beta_q, enumerate_pair_partitions

CAR_MODE_CAP = 12
WICK_LENGTH_CAP = 12

E12 = np.array([[0, 1], [0, 0]], dtype=complex)
PAULI_Z = np.diag([1.0, -1.0]).astype(complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y_CCR = np.array([[0, 1j], [-1j, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class QuasiFreeSpec:
    mu: tuple[float, ...]

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mu)
        object.__setattr__(self, "mu", mu)
        if not mu:
            raise PreconditionError("need at least one mode")
        bad = [v for v in mu if not 0.0 < v < 1.0]
        if bad:
            raise PreconditionError(f"occupation numbers must lie in (0, 1), got {bad}")

    @property
    def K(self) -> int:
        return len(self.mu)


def _check_modes(K: int) -> None:
    if K < 1:
        raise ValueError("K must be positive")
    if K > CAR_MODE_CAP:
        raise CapExceededError(f"K={K} exceeds the CAR mode cap {CAR_MODE_CAP}")


def car_generator(k: int, K: int) -> np.ndarray:
    """Annihilator ``a_k`` (1-based ``k``) on ``K`` modes."""
    _check_modes(K)
    if not 1 <= k <= K:
        raise ValueError(f"mode {k} outside 1..{K}")
    return _generator(k, K).copy()


@lru_cache(maxsize=256)
def _generator(k: int, K: int) -> np.ndarray:
    out = la.kron_all([PAULI_Z] * (k - 1) + [E12] + [I2] * (K - k))
    out.flags.writeable = False
    return out


def car_generators(K: int) -> list[np.ndarray]:
    return [car_generator(k, K) for k in range(1, K + 1)]


def car_relation_residual(gens: Sequence[np.ndarray]) -> float:
    """Largest entrywise deviation from the canonical anticommutation relations."""
    dim = gens[0].shape[0]
    eye = np.eye(dim)
    worst = 0.0
    for k, ak in enumerate(gens):
        for j, aj in enumerate(gens):
            anti = ak @ aj + aj @ ak
            mixed = ak @ la.dagger(aj) + la.dagger(aj) @ ak
            worst = max(worst, np.max(np.abs(anti)),
                        np.max(np.abs(mixed - (k == j) * eye)))
    return float(worst)


def quasifree_density(spec: QuasiFreeSpec) -> np.ndarray:
    _check_modes(spec.K)
    return la.kron_all([np.diag([1.0 - m, m]) for m in spec.mu])


def modular_conjugate(spec: QuasiFreeSpec, x, s: float) -> np.ndarray:
    """``D^s x D^-s`` for the quasi-free density ``D``."""
    d = np.real(np.diag(quasifree_density(spec)))
    x = np.asarray(x, dtype=complex)
    if x.shape != (d.size, d.size):
        raise ValueError(f"x has shape {x.shape}, density has dimension {d.size}")
    return (d**s)[:, None] * x * (d ** (-s))[None, :]


def _check_increasing(seq: Sequence[int], name: str) -> None:
    if any(b <= a for a, b in zip(seq, seq[1:])):
        raise ValueError(f"{name} must be strictly increasing, got {list(seq)}")


def car_moment_formula(spec: QuasiFreeSpec, i: Sequence[int], j: Sequence[int]) -> complex:
    """Closed form of ``phi(a_{i_r}* ... a_{i_1}* a_{j_1} ... a_{j_s})`` for
    increasing ``i`` and ``j``."""
    _check_increasing(i, "i")
    _check_increasing(j, "j")
    if len(i) != len(j) or list(i) != list(j):
        return 0.0 + 0.0j
    return complex(math.prod(spec.mu[k - 1] for k in i))


def car_word(spec: QuasiFreeSpec, word: Sequence[tuple[int, bool]]) -> np.ndarray:
    """Dense product of letters ``(k, starred)``."""
    _check_modes(spec.K)
    out = np.eye(2**spec.K, dtype=complex)
    for k, starred in word:
        if not 1 <= k <= spec.K:
            raise ValueError(f"mode {k} outside 1..{spec.K}")
        a = _generator(k, spec.K)
        out = out @ (la.dagger(a) if starred else a)
    return out


def car_trace(spec: QuasiFreeSpec, word: Sequence[tuple[int, bool]]) -> complex:
    """``tr(D_mu * word)`` computed densely."""
    return complex(np.trace(quasifree_density(spec) @ car_word(spec, word)))


def car_ordered_trace(spec: QuasiFreeSpec, i: Sequence[int], j: Sequence[int]) -> complex:
    """Dense evaluation of the word ``a_{i_r}* ... a_{i_1}* a_{j_1} ... a_{j_s}``."""
    word = [(k, True) for k in reversed(i)] + [(k, False) for k in j]
    return car_trace(spec, word)


def determinant_formula(spec: QuasiFreeSpec, g, h) -> complex:
    """``delta_rs det[sum_k conj(g_i[k]) h_j[k] mu_k]`` for rows ``g_i``, ``h_j``."""
    g = np.atleast_2d(np.asarray(g, dtype=complex))
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    if g.shape[0] != h.shape[0]:
        return 0.0 + 0.0j
    gram = np.conj(g) @ np.diag(spec.mu) @ h.T
    return complex(np.linalg.det(gram))


# -- two-point data and the Wick evaluator ---------------------------------

@dataclass(frozen=True)
class TwoPointKernel:
    """Pair values ``psi(x y)`` on a finite alphabet of symbol names."""

    table: Mapping[tuple[str, str], complex]

    def __call__(self, a: str, b: str) -> complex:
        try:
            return self.table[(a, b)]
        except KeyError:
            raise KeyError(f"kernel has no entry for ({a!r}, {b!r})") from None

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(sorted({s for pair in self.table for s in pair}))

    def gram(self, adjoint: Mapping[str, str]) -> np.ndarray:
        """``[psi(x_i* x_j)]`` over the symbols that have a listed adjoint."""
        names = [s for s in self.symbols if s in adjoint]
        return np.array([[self(adjoint[a], b) for b in names] for a in names], dtype=complex)

    def scaled(self, t: float) -> "TwoPointKernel":
        return TwoPointKernel({k: t * v for k, v in self.table.items()})


@dataclass
class MatrixState:
    """A positive functional ``psi(x) = tr(density @ x)`` on a matrix algebra,
    together with named elements of that algebra.

    The density need not have trace one (the CAR and CCR models below are
    weights of total mass ``K``).
    """

    density: np.ndarray
    elements: dict[str, np.ndarray]
    adjoint: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=complex)
        dim = self.density.shape[0]
        for name, x in self.elements.items():
            if np.shape(x) != (dim, dim):
                raise ValueError(f"element {name!r} has shape {np.shape(x)}, expected {(dim, dim)}")

    @property
    def dim(self) -> int:
        return self.density.shape[0]

    @property
    def mass(self) -> float:
        return float(np.real(np.trace(self.density)))

    def product(self, word: Sequence[str]) -> np.ndarray:
        out = np.eye(self.dim, dtype=complex)
        for s in word:
            out = out @ self.elements[s]
        return out

    def evaluate(self, word: Sequence[str]) -> complex:
        return complex(np.trace(self.density @ self.product(word)))

    def kernel(self) -> TwoPointKernel:
        names = list(self.elements)
        return TwoPointKernel({(a, b): self.evaluate([a, b]) for a in names for b in names})

    def normalized(self) -> "MatrixState":
        return MatrixState(self.density / self.mass, dict(self.elements), dict(self.adjoint))

    def length(self, name: str, T: float = 1.0) -> float:
        """``max(||x||, (T psi(x* x))^1/2, (T psi(x x*))^1/2)``."""
        x = self.elements[name]
        xs = la.dagger(x)
        a = T * np.real(np.trace(self.density @ xs @ x))
        b = T * np.real(np.trace(self.density @ x @ xs))
        return max(la.op_norm(x), math.sqrt(max(a, 0.0)), math.sqrt(max(b, 0.0)))

    @classmethod
    def car(cls, spec: QuasiFreeSpec) -> "MatrixState":
        """``l_inf^K(M_2)`` with ``psi = sum_k (1-mu_k) x_11(k) + mu_k x_22(k)``;
        elements ``b{k} = delta_k (x) e12`` and their adjoints ``b{k}*``."""
        K = spec.K
        dens = np.zeros((2 * K, 2 * K), dtype=complex)
        elements, adjoint = {}, {}
        for k, m in enumerate(spec.mu, start=1):
            sl = slice(2 * (k - 1), 2 * k)
            dens[sl, sl] = np.diag([1.0 - m, m])
            b = np.zeros((2 * K, 2 * K), dtype=complex)
            b[sl, sl] = E12
            elements[f"b{k}"] = b
            elements[f"b{k}*"] = la.dagger(b)
            adjoint[f"b{k}"], adjoint[f"b{k}*"] = f"b{k}*", f"b{k}"
        return cls(dens, elements, adjoint)

    @classmethod
    def ccr(cls, spec: QuasiFreeSpec) -> "MatrixState":
        """Same weight; selfadjoint elements ``X{k} = delta_k (x) [[0,1],[1,0]]``
        and ``Y{k} = delta_k (x) [[0,i],[-i,0]]``."""
        K = spec.K
        dens = np.zeros((2 * K, 2 * K), dtype=complex)
        elements = {}
        for k, m in enumerate(spec.mu, start=1):
            sl = slice(2 * (k - 1), 2 * k)
            dens[sl, sl] = np.diag([1.0 - m, m])
            for name, blk in (("X", PAULI_X), ("Y", PAULI_Y_CCR)):
                e = np.zeros((2 * K, 2 * K), dtype=complex)
                e[sl, sl] = blk
                elements[f"{name}{k}"] = e
        return cls(dens, elements, {n: n for n in elements})


BetaLike = float | Callable[[PairPartition], complex]


def _q_wick(kernel: TwoPointKernel, symbols: tuple[str, ...], q: float) -> complex:
    """Pair-partition sum with weight ``q ** crossings``, by dynamic programming.

    Scanning left to right, a point either opens a block or closes one of the
    currently open blocks; closing the block opened at stack position ``i``
    crosses exactly the blocks opened after it that are still open.
    """
    m = len(symbols)

    if q == 1.0:
        return _commutative_wick(kernel, symbols)

    @lru_cache(maxsize=None)
    def rec(pos: int, open_syms: tuple[str, ...]) -> complex:
        if len(open_syms) > m - pos:
            return 0.0
        if pos == m:
            return 1.0 if not open_syms else 0.0
        s = symbols[pos]
        total = rec(pos + 1, open_syms + (s,))
        n_open = len(open_syms)
        for idx, o in enumerate(open_syms):
            w = kernel(o, s)
            if w == 0:
                continue
            weight = q ** (n_open - 1 - idx)
            if weight == 0:
                continue
            total += weight * w * rec(pos + 1, open_syms[:idx] + open_syms[idx + 1:])
        return total

    return complex(rec(0, ()))


def _commutative_wick(kernel: TwoPointKernel, symbols: tuple[str, ...]) -> complex:
    # with all weights 1 only the multiset of open symbols matters
    m = len(symbols)

    @lru_cache(maxsize=None)
    def rec(pos: int, open_counts: tuple[tuple[str, int], ...]) -> complex:
        n_open = sum(c for _, c in open_counts)
        if n_open > m - pos:
            return 0.0
        if pos == m:
            return 1.0 if n_open == 0 else 0.0
        s = symbols[pos]
        counts = dict(open_counts)
        pushed = dict(counts)
        pushed[s] = pushed.get(s, 0) + 1
        total = rec(pos + 1, tuple(sorted(pushed.items())))
        for o, c in open_counts:
            w = kernel(o, s)
            if w == 0:
                continue
            rest = dict(counts)
            rest[o] -= 1
            if not rest[o]:
                del rest[o]
            total += c * w * rec(pos + 1, tuple(sorted(rest.items())))
        return total

    return complex(rec(0, ()))


def wick_moment(kernel: TwoPointKernel, symbols: Sequence[str], beta: BetaLike = -1.0) -> complex:
    """``sum_{sigma in P_2(m)} beta(sigma) prod_{(a,b) in sigma} psi(x_a x_b)``.

    ``beta`` is either a number ``q`` (weight ``q ** crossings``, evaluated by
    a dynamic programme without enumerating partitions) or a callable on
    :class:`PairPartition` (evaluated by enumeration, ``m <= 12``).
    """
    symbols = tuple(symbols)
    m = len(symbols)
    if m % 2:
        return 0.0 + 0.0j
    if m == 0:
        return 1.0 + 0.0j
    for s in symbols:
        if s not in kernel.symbols:
            raise KeyError(f"kernel has no entries for symbol {s!r}")
    if not callable(beta):
        return _q_wick(kernel, symbols, float(beta))
    if m > WICK_LENGTH_CAP:
        raise CapExceededError(f"word length {m} exceeds the enumeration cap {WICK_LENGTH_CAP}")
    total = 0.0 + 0.0j
    for sigma in enumerate_pair_partitions(m):
        prod = 1.0 + 0.0j
        for a, b in sigma.blocks:
            prod *= kernel(symbols[a - 1], symbols[b - 1])
            if prod == 0:
                break
        if prod != 0:
            total += beta(sigma) * prod
    return total


def wick_moment_enumerated(kernel: TwoPointKernel, symbols: Sequence[str], q: float) -> complex:
    """Brute-force counterpart of the ``q`` dynamic programme."""
    return wick_moment(kernel, symbols, lambda s: beta_q(s, q))


@dataclass(frozen=True)
class GrowthCheck:
    ok: bool
    moment: complex
    bound: float
    margin: float


def growth_bound_check(kernel: TwoPointKernel, symbols: Sequence[str],
                       lengths: Sequence[float], beta: BetaLike = -1.0) -> GrowthCheck:
    """Check ``|moment| <= m^(m/2) prod |x_i|`` for the given lengths."""
    m = len(symbols)
    if len(lengths) != m:
        raise ValueError("one length per symbol is required")
    moment = wick_moment(kernel, symbols, beta)
    bound = float(m ** (m / 2) * math.prod(lengths))
    return GrowthCheck(abs(moment) <= bound * (1 + 1e-12) + 1e-300, moment, bound, bound - abs(moment))


def state_lengths(state: MatrixState, symbols: Sequence[str], T: float = 1.0) -> list[float]:
    return [state.length(s, T) for s in symbols]


def moment_growth_certificate(moments: Mapping[int, float] | Sequence[float],
                              step: float = 0.1, c_max: float = 100.0) -> float | None:
    """Smallest grid value ``c`` with ``|m_k| <= c^(k+1) k^k`` for all given ``k``.

    ``moments`` is either a mapping ``k -> m_k`` or a sequence read as
    ``m_1, m_2, ...``.  Values may be Python integers of any size (the test
    is done in log form).  Returns ``None`` if no grid value works.
    """
    if not isinstance(moments, Mapping):
        moments = dict(enumerate(moments, start=1))
    for k, v in moments.items():
        if k < 1:
            raise ValueError("moment indices start at 1")
        if k % 2 == 0 and v < 0:
            raise ValueError(f"even moment m_{k} = {v} is negative")
    n_steps = int(round(c_max / step))
    # log form: log|m_k| <= (k+1) log c + k log k
    items = [(k, abs(v)) for k, v in moments.items() if v != 0]
    for i in range(1, n_steps + 1):
        c = round(i * step, 12)
        if all(math.log(v) <= (k + 1) * math.log(c) + k * math.log(k) + 1e-12 for k, v in items):
            return c
    return None
