"""Speicher's random-sign model, finite-n moments and their pair-partition limit.

Sites ``1..n`` carry Pauli-type matrices.  For a symmetric sign assignment
``s`` the generator on site ``j`` is

    v_j = diag(1, s_1j) (x) ... (x) diag(1, s_{j-1,j}) (x) X (x) 1 (x) ... (x) 1

so that ``v_j`` is a selfadjoint unitary and ``v_i v_j = s_ij v_j v_i``.
With ``u_n(x) = sqrt(T/n) sum_k v_k (x) pi_k(x)`` the mixed moments of
``u_n`` under ``tau (x) psi^(x)n``, averaged over the signs, are evaluated
combinatorially (exact, any ``n``), densely (oracle, ``n <= 3``) and by
Monte Carlo.

Colours.  A position may carry its own sign mean ``q_i``.  The signs are
coupled through one uniform variable per site pair: ``s_kl(c) =
sign(c - t_kl)`` with ``t_kl`` uniform on ``[-1, 1]``, so ``E s(c) = c``.  A
letter of colour ``c`` on site ``l`` carries ``diag(1, s_kl(c))`` on every
site ``k < l``; swapping letters on sites ``k < l`` produces the sign of the
colour of the letter on the larger site.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import CapExceededError, PreconditionError
from . import linalg as la
from .partitions import Partition, enumerate_partitions, t_mixed
from .quasifree import MatrixState, QuasiFreeSpec, TwoPointKernel, wick_moment

DENSE_SITE_CAP = 10
ORACLE_SITE_CAP = 3
EXACT_LENGTH_CAP = 10
MIXED_LENGTH_CAP = 8
CCR_ORDER_CAP = 24

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


# -- the sign model ---------------------------------------------------------

def _sign_matrix(n: int, signs) -> np.ndarray:
    s = np.asarray(signs, dtype=float)
    if s.shape != (n, n):
        raise ValueError(f"signs must be an {n}x{n} array")
    off = ~np.eye(n, dtype=bool)
    if not np.array_equal(s, s.T) or not np.all(np.isin(s[off], (-1.0, 1.0))):
        raise ValueError("signs must be symmetric with off-diagonal entries in {-1, +1}")
    return s


def speicher_generators(n: int, signs) -> list[np.ndarray]:
    """Dense ``v_1..v_n`` (dimension ``2^n``) for a sign matrix ``signs``."""
    if n > DENSE_SITE_CAP:
        raise CapExceededError(f"n={n} exceeds the dense site cap {DENSE_SITE_CAP}")
    s = _sign_matrix(n, signs)
    eye = np.eye(2, dtype=complex)
    out = []
    for j in range(n):
        legs = [np.diag([1.0, s[i, j]]).astype(complex) for i in range(j)]
        out.append(la.kron_all(legs + [PAULI_X] + [eye] * (n - j - 1)))
    return out


@dataclass(frozen=True)
class SpeicherModel:
    n: int
    q: float
    signs: np.ndarray

    @classmethod
    def sample(cls, n: int, q: float, rng: np.random.Generator) -> "SpeicherModel":
        return cls(n, q, random_signs(n, q, rng))

    def generators(self) -> list[np.ndarray]:
        return speicher_generators(self.n, self.signs)


def random_signs(n: int, q: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric i.i.d. signs with mean ``q`` (diagonal set to 1)."""
    if not -1.0 <= q <= 1.0:
        raise PreconditionError(f"q={q} outside [-1, 1]")
    iu = np.triu_indices(n, 1)
    u = rng.random(len(iu[0]))
    s = np.ones((n, n))
    s[iu] = np.where(u < (1.0 + q) / 2.0, 1.0, -1.0)
    s[(iu[1], iu[0])] = s[iu]
    return s


def _pair_parities(word: Sequence[int]) -> tuple[bool, dict[tuple[int, int], int]]:
    """Sort ``word`` by adjacent swaps: return whether every letter has even
    multiplicity and the parity of swaps needed for each unordered letter pair."""
    counts: dict[int, int] = {}
    for k in word:
        counts[k] = counts.get(k, 0) + 1
    even = all(c % 2 == 0 for c in counts.values())
    parity: dict[tuple[int, int], int] = {}
    for a, b in itertools.combinations(range(len(word)), 2):
        ka, kb = word[a], word[b]
        if ka > kb:
            key = (kb, ka)
            parity[key] = parity.get(key, 0) ^ 1
    return even, {k: v for k, v in parity.items() if v}


def word_trace(word: Sequence[int], signs) -> int:
    """Normalized trace ``2^-n tr(v_k1 ... v_km)`` by symbolic reduction.

    ``signs`` is indexed by 1-based letters (a mapping or a matrix whose row
    ``k-1`` belongs to letter ``k``).
    """
    even, odd = _pair_parities(word)
    if not even:
        return 0
    s = np.asarray(signs)
    out = 1
    for (a, b) in odd:
        out *= int(s[a - 1, b - 1])
    return out


def word_sign_expectation(word: Sequence[int], q: float) -> float:
    """``E`` of the normalized trace when the signs are i.i.d. with mean ``q``."""
    even, odd = _pair_parities(word)
    if not even:
        return 0.0
    return float(q) ** len(odd)


def dense_word_trace(word: Sequence[int], gens: Sequence[np.ndarray]) -> float:
    prod = np.eye(gens[0].shape[0], dtype=complex)
    for k in word:
        prod = prod @ gens[k - 1]
    return float(np.real(np.trace(prod))) / prod.shape[0]


# -- instances --------------------------------------------------------------

@dataclass(frozen=True)
class CltInstance:
    """Symbols over a normalized :class:`MatrixState`, a scaling ``T`` and a
    colour: either one ``q`` or one ``q_i`` per position."""

    state: MatrixState
    symbols: tuple[str, ...]
    T: float = 1.0
    q: float | tuple[float, ...] = 1.0

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if not self.T > 0:
            raise PreconditionError("T must be positive")
        if abs(self.state.mass - 1.0) > 1e-12:
            raise PreconditionError("the state must be normalized (trace one)")
        missing = [s for s in self.symbols if s not in self.state.elements]
        if missing:
            raise KeyError(f"unknown symbols {missing}")
        qs = self.q if isinstance(self.q, tuple) else (self.q,)
        if isinstance(self.q, tuple) and len(self.q) != len(self.symbols):
            raise ValueError("one colour per symbol is required")
        if any(not -1.0 <= c <= 1.0 for c in qs):
            raise PreconditionError(f"colours must lie in [-1, 1], got {qs}")

    @property
    def m(self) -> int:
        return len(self.symbols)

    @property
    def colours(self) -> tuple[float, ...]:
        return self.q if isinstance(self.q, tuple) else (float(self.q),) * self.m

    @property
    def uniform(self) -> bool:
        return len(set(self.colours)) <= 1

    def kernel(self) -> TwoPointKernel:
        return self.state.kernel()


def _block_value(inst: CltInstance, block: Sequence[int]) -> complex:
    return inst.state.evaluate([inst.symbols[p - 1] for p in block])


def _even_partitions(m: int) -> list[Partition]:
    return [p for p in enumerate_partitions(m) if all(len(b) % 2 == 0 for b in p.blocks)]


def _falling(n: int, r: int) -> int:
    return math.prod(range(n - r + 1, n + 1)) if r <= n else 0


# -- exact finite-n moments -------------------------------------------------

def _sign_mean(colours: Sequence[float]) -> float:
    """``(1/2) int_{-1}^{1} prod_i sign(c_i - t) dt``."""
    if not colours:
        return 1.0
    cuts = sorted(colours)
    total, left, sign = 0.0, -1.0, 1.0
    for c in cuts:
        total += sign * (c - left)
        left, sign = c, -sign
    total += sign * (1.0 - left)
    return total / 2.0


def _leg_factor(labels: Sequence[int], colours: Sequence[float], blk: int, rank: Sequence[int]) -> float:
    """Averaged normalized trace on the leg of block ``blk``.

    Letters of ``blk`` act as X; letters of blocks ranked above act as
    ``diag(1, sign)``; lower blocks act trivially.  Starting from basis state
    ``e`` the word is walked once; a letter seen while in state 1 contributes
    its sign.  Signs of different blocks are independent.
    """
    out = 0.0
    for e in (0, 1):
        state = e
        seen: dict[int, list[float]] = {}
        for lab, col in zip(labels, colours):
            if lab == blk:
                state ^= 1
            elif rank[lab] > rank[blk] and state == 1:
                seen.setdefault(lab, []).append(col)
        if state != e:
            return 0.0
        out += math.prod(_sign_mean(c) for c in seen.values())
    return out / 2.0


def _complete_homogeneous(alphas: Sequence[float], degree: int) -> float:
    h = np.zeros(degree + 1)
    h[0] = 1.0
    for a in alphas:
        for j in range(1, degree + 1):
            h[j] += a * h[j - 1]
    return float(h[degree])


def _mixed_partition_weight(part: Partition, colours: Sequence[float], n: int) -> float:
    """``sum`` over injective site assignments of the averaged trace, for a
    partition with coloured positions."""
    r = len(part.blocks)
    if r > n:
        return 0.0
    labels = part.labels()
    block_cols = [[colours[p - 1] for p in b] for b in part.blocks]
    e_blk = [_sign_mean(c) for c in block_cols]
    total = 0.0
    for order in itertools.permutations(range(r)):
        rank = [0] * r
        for pos, blk in enumerate(order):
            rank[blk] = pos
        legs = 1.0
        for blk in range(r):
            legs *= _leg_factor(labels, colours, blk, rank)
            if legs == 0.0:
                break
        if legs == 0.0:
            continue
        # an unused site with g used sites below it sees the blocks ranked >= g
        alphas = [(1.0 + math.prod(e_blk[b] for b in order[g:])) / 2.0 for g in range(r)]
        total += legs * _complete_homogeneous(alphas + [1.0], n - r)
    return total


def finite_n_moment_exact(inst: CltInstance, n: int) -> complex:
    """Sign-averaged ``tau (x) psi^(x)n (u_n(x_1) ... u_n(x_m))``."""
    m = inst.m
    if n < 1:
        raise ValueError("n must be positive")
    if m > EXACT_LENGTH_CAP:
        raise CapExceededError(f"m={m} exceeds {EXACT_LENGTH_CAP}")
    if not inst.uniform and m > MIXED_LENGTH_CAP:
        raise CapExceededError(f"mixed colours need m <= {MIXED_LENGTH_CAP}")
    q = inst.colours[0] if m else 1.0
    total = 0.0 + 0.0j
    for part in _even_partitions(m):
        r = len(part.blocks)
        if r > n:
            continue
        if inst.uniform:
            weight = _falling(n, r) * word_sign_expectation([lab + 1 for lab in part.labels()], q)
        else:
            weight = _mixed_partition_weight(part, inst.colours, n)
        if weight == 0:
            continue
        total += weight * math.prod(_block_value(inst, b) for b in part.blocks)
    return complex((inst.T / n) ** (m / 2) * total)


def _coloured_generators(n: int, colours: Sequence[float], t: np.ndarray) -> dict[float, list[np.ndarray]]:
    out = {}
    for c in set(colours):
        s = np.ones((n, n))
        for k, l in itertools.combinations(range(n), 2):
            s[k, l] = s[l, k] = 1.0 if c > t[k, l] else -1.0
        out[c] = speicher_generators(n, s)
    return out


def finite_n_moment_dense(inst: CltInstance, n: int) -> complex:
    """Dense oracle: exhaustive sign enumeration and explicit matrices.

    Each site pair's uniform variable is replaced by the cells cut out of
    ``[-1, 1]`` by the distinct colours, weighted by cell length.
    """
    if n > ORACLE_SITE_CAP:
        raise CapExceededError(f"dense oracle limited to n <= {ORACLE_SITE_CAP}")
    d = inst.state.dim
    la.check_dim(2**n * d**n, "dense oracle")
    cuts = [-1.0] + sorted(set(inst.colours)) + [1.0]
    cells = [((a + b) / 2.0, (b - a) / 2.0) for a, b in zip(cuts, cuts[1:]) if b > a]
    pairs = list(itertools.combinations(range(n), 2))
    rho = la.kron(np.eye(2**n) / 2**n, la.kron_all([inst.state.density] * n))
    pis = {s: [la.embed(inst.state.elements[s], k, [d] * n) for k in range(n)]
           for s in set(inst.symbols)}
    scale = math.sqrt(inst.T / n)
    total = 0.0 + 0.0j
    for choice in itertools.product(cells, repeat=len(pairs)):
        t = np.zeros((n, n))
        weight = 1.0
        for (k, l), (mid, w) in zip(pairs, choice):
            t[k, l] = t[l, k] = mid
            weight *= w
        gens = _coloured_generators(n, inst.colours, t)
        prod = np.eye(rho.shape[0], dtype=complex)
        for sym, c in zip(inst.symbols, inst.colours):
            u = sum(la.kron(gens[c][k], pis[sym][k]) for k in range(n))
            prod = prod @ (scale * u)
        total += weight * np.trace(rho @ prod)
    return complex(total)


# -- Monte Carlo ------------------------------------------------------------

@dataclass(frozen=True)
class McEstimate:
    mean: complex
    stderr: float
    samples: int


@lru_cache(maxsize=None)
def _mc_plan(m: int, n: int):
    """Per even partition: injective site assignments and the block pairs
    whose letters must be swapped an odd number of times."""
    plan = []
    for part in _even_partitions(m):
        r = len(part.blocks)
        if r > n:
            continue
        labels = part.labels()
        _, odd = _pair_parities([lab + 1 for lab in labels])
        assign = np.array(list(itertools.permutations(range(n), r)), dtype=np.intp).reshape(-1, r)
        plan.append((part, assign, tuple((a - 1, b - 1) for a, b in odd)))
    return plan


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # explicit uint64: a plain list would pass through float64 and merge large seeds
    key = np.array([seed & (2**64 - 1), index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _mc_values(inst: CltInstance, n: int, seed: int, start: int, stop: int) -> np.ndarray:
    q = inst.colours[0]
    signs = np.stack([random_signs(n, q, _sample_rng(seed, i)) for i in range(start, stop)])
    values = np.zeros(stop - start, dtype=complex)
    for part, assign, odd in _mc_plan(inst.m, n):
        psi = math.prod(_block_value(inst, b) for b in part.blocks)
        if psi == 0:
            continue
        prod = np.ones((stop - start, assign.shape[0]))
        for a, b in odd:
            prod = prod * signs[:, assign[:, a], assign[:, b]]
        values += psi * prod.sum(axis=1)
    return (inst.T / n) ** (inst.m / 2) * values


def finite_n_moment_mc(inst: CltInstance, n: int, samples: int, seed: int,
                       jobs: int = 1, chunk: int = 1000) -> McEstimate:
    """Monte Carlo over sign assignments; each sample's conditional moment
    is computed exactly.

    Sample ``i`` draws from a Philox stream keyed by ``(seed, i)`` and the
    per-sample values are reduced in index order, so the result does not
    depend on ``jobs`` or ``chunk``.
    """
    if not inst.uniform:
        raise PreconditionError("Monte Carlo is implemented for a single colour")
    if n > DENSE_SITE_CAP:
        raise CapExceededError(f"n={n} exceeds {DENSE_SITE_CAP}")
    if inst.m > EXACT_LENGTH_CAP:
        raise CapExceededError(f"m={inst.m} exceeds {EXACT_LENGTH_CAP}")
    if samples < 2:
        raise ValueError("need at least two samples")
    bounds = [(a, min(a + chunk, samples)) for a in range(0, samples, chunk)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda ab: _mc_values(inst, n, seed, *ab), bounds))
    else:
        parts = [_mc_values(inst, n, seed, a, b) for a, b in bounds]
    vals = np.concatenate(parts)
    mean = complex(np.mean(vals))
    se = float(np.sqrt(np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1)) / math.sqrt(samples))
    return McEstimate(mean, se, samples)


# -- limits -----------------------------------------------------------------

def limit_moment(inst: CltInstance) -> complex:
    """Pair-partition limit with weight ``q ** crossings`` or the mixed weight."""
    if inst.m % 2:
        return 0.0 + 0.0j
    kernel = inst.kernel().scaled(inst.T)
    if inst.uniform:
        return wick_moment(kernel, inst.symbols, inst.colours[0] if inst.m else 1.0)
    cols = inst.colours

    def beta(sigma):
        w = t_mixed(sigma, cols)
        return 0.0 if w is None else w

    return wick_moment(kernel, inst.symbols, beta)


# -- CCR characteristic function -------------------------------------------

def ccr_kernel(mu: float, same_index: bool = True) -> TwoPointKernel:
    """``psi(X^2) = psi(Y^2) = 1``, ``psi(XY) = i(2mu - 1) = -psi(YX)`` (zero
    across distinct indices)."""
    if not 0.0 < mu < 1.0:
        raise PreconditionError(f"mu={mu} outside (0, 1)")
    c = 1j * (2.0 * mu - 1.0) if same_index else 0.0
    return TwoPointKernel({("X", "X"): 1.0, ("Y", "Y"): 1.0, ("X", "Y"): c, ("Y", "X"): -c})


def ccr_closed_form(mu: float, z: complex, w: complex, same_index: bool = True) -> complex:
    delta = 1.0 if same_index else 0.0
    return complex(np.exp(1j * z * w * (2.0 * mu - 1.0) * delta) * np.exp((z * z + w * w) / 2.0))


@dataclass(frozen=True)
class CharFnResult:
    value: complex
    closed_form: complex
    tail_bound: float

    @property
    def error(self) -> float:
        return abs(self.value - self.closed_form)


def _growth_tail(z: float, w: float, order: int, horizon: int = 400) -> float:
    """Bound on the discarded terms using ``|phi(word)| <= N^(N/2)`` for unit
    lengths: sum over ``r > order`` or ``s > order`` of
    ``|z|^r |w|^s N^(N/2) / (r! s!)``, ``N = r + s``."""
    total = 0.0
    lz = math.log(z) if z > 0 else -math.inf
    lw = math.log(w) if w > 0 else -math.inf
    for N in range(order + 1, horizon + 1):
        for r in range(N + 1):
            s = N - r
            if r <= order and s <= order:
                continue
            if (r and lz == -math.inf) or (s and lw == -math.inf):
                continue
            log_t = (r * lz if r else 0.0) + (s * lw if s else 0.0) + 0.5 * N * math.log(N) \
                - math.lgamma(r + 1) - math.lgamma(s + 1)
            total += math.exp(log_t)
    return total


def ccr_charfn_series(mu: float, z: complex, w: complex, same_index: bool = True,
                      order: int = 16) -> CharFnResult:
    """Truncated ``sum_{r,s <= order} z^r w^s / (r! s!) phi_1(X^r Y^s)``."""
    if order > CCR_ORDER_CAP:
        raise CapExceededError(f"order {order} exceeds {CCR_ORDER_CAP}")
    kernel = ccr_kernel(mu, same_index)
    value = 0.0 + 0.0j
    for r in range(order + 1):
        for s in range(order + 1):
            if (r + s) % 2:
                continue
            coef = z**r * w**s / (math.factorial(r) * math.factorial(s))
            if coef == 0:
                continue
            value += coef * wick_moment(kernel, ["X"] * r + ["Y"] * s, 1.0)
    return CharFnResult(complex(value), ccr_closed_form(mu, z, w, same_index),
                        _growth_tail(abs(z), abs(w), order))


@dataclass(frozen=True)
class CommutatorCheck:
    commutator: complex
    expected: complex
    kernel_value: complex
    residual: float


def ccr_commutator_check(mu: float) -> CommutatorCheck:
    """``phi_1(XY) - phi_1(YX)`` against ``2i(2mu - 1)`` and the 2x2 model."""
    kernel = ccr_kernel(mu)
    comm = wick_moment(kernel, ["X", "Y"], 1.0) - wick_moment(kernel, ["Y", "X"], 1.0)
    model = MatrixState.ccr(QuasiFreeSpec((mu,)))
    direct = model.evaluate(["X1", "Y1"]) - model.evaluate(["Y1", "X1"])
    expected = 2j * (2.0 * mu - 1.0)
    return CommutatorCheck(comm, expected, direct, max(abs(comm - expected), abs(direct - expected)))
