"""Carleson packing constants and the weighted Carleson embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .haar import disbalanced_table, interval_integrals
from .lattice import level_slice
from .weights import Weight, a2d_characteristic


@dataclass(frozen=True)
class CarlesonSequence:
    """Non-negative ``alpha_I`` for levels 0..N-1, heap order."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        if a.ndim != 1 or (a.size + 1) & a.size:
            raise ValueError("alpha must have 2**N - 1 entries")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("alpha must be finite and non-negative")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @property
    def depth(self) -> int:
        return (self.alpha.size + 1).bit_length() - 1

    def scaled(self, lam: float) -> "CarlesonSequence":
        return CarlesonSequence(lam * self.alpha)


def _tree_sums(values: np.ndarray, depth: int) -> list[np.ndarray]:
    """``S(J) = sum_{I in D(J)} values_I`` for every J, one array per level."""
    sums = [None] * depth
    below = np.zeros(1 << depth)
    for k in range(depth - 1, -1, -1):
        below = values[level_slice(k)] + below[0::2] + below[1::2]
        sums[k] = below
    return sums


def _max_packing(numer: np.ndarray, denom_levels: list[np.ndarray], depth: int) -> tuple[float, tuple[int, int]]:
    best, arg = 0.0, (0, 0)
    for k, s in enumerate(_tree_sums(numer, depth)):
        ratio = s / (2.0 ** -k * denom_levels[k])
        j = int(np.argmax(ratio))
        if ratio[j] > best:
            best, arg = float(ratio[j]), (k, j)
    return best, arg


def carleson_constant(alpha: CarlesonSequence) -> float:
    """Least C with ``(1/|J|) sum_{I in D(J)} alpha_I <= C`` for all J (one bottom-up pass)."""
    depth = alpha.depth
    ones = [np.ones(1 << k) for k in range(depth)]
    return _max_packing(alpha.alpha, ones, depth)[0]


@dataclass(frozen=True)
class EmbeddingResult:
    c_pack: float
    c_embed: float  # best ratio found among the test functions
    c_embed_exact: float | None  # true supremum (dense, small depth only)
    argmax_pack: tuple[int, int]

    @property
    def ok(self) -> bool:
        top = self.c_embed if self.c_embed_exact is None else max(self.c_embed, self.c_embed_exact)
        return top <= 4.0 * self.c_pack * (1 + 1e-12) + 1e-300


def _embedding_quadratic(f: np.ndarray, alpha: np.ndarray, sw: np.ndarray, depth: int) -> np.ndarray:
    """``sum_I (f w^{1/2})_I^2 alpha_I / ||f||_2^2`` for a stack of leaf arrays."""
    lengths = np.repeat(2.0 ** -np.arange(depth), 1 << np.arange(depth))
    avgs = interval_integrals(f * sw) / lengths
    return (avgs ** 2) @ alpha / np.mean(f ** 2, axis=-1)


def embedding_constants(alpha: CarlesonSequence, w: Weight, trials: int = 64, seed: int = 0,
                        exact: bool | None = None) -> EmbeddingResult:
    """Packing constant versus the embedding ratio it controls.

    ``c_pack = max_J (1/(|J| w_J)) sum_{I in D(J)} w_I^2 alpha_I``.  ``c_embed``
    is the largest ``sum_I (f w^{1/2})_I^2 alpha_I / ||f||_2^2`` over ``trials``
    standard-normal ``f`` plus ``f = w^{1/2} chi_J`` on the maximising ``J``.
    With ``exact`` (default for depth <= 10) the supremum over all ``f`` is
    computed as a top singular value as well.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    depth = alpha.depth
    if depth != w.depth:
        raise ValueError("alpha and weight depths differ")
    w_heap = w.heap_averages()
    wl = [w.level_averages(k) for k in range(depth)]
    c_pack, (k, j) = _max_packing(w_heap ** 2 * alpha.alpha, wl, depth)

    n = w.n_leaves
    sw = np.sqrt(w.values)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((trials, n))
    adv = np.zeros(n)
    sl = slice(j * (n >> k), (j + 1) * (n >> k))
    adv[sl] = sw[sl]
    ratios = _embedding_quadratic(np.vstack([f, adv]), alpha.alpha, sw, depth)
    c_embed = float(np.max(ratios))

    if exact is None:
        exact = depth <= 10
    c_exact = None
    if exact:
        # rows: sqrt(alpha_I) * averaging functional of f * w^{1/2}, Euclidean-normalised f
        rows = _embedding_quadratic_matrix(alpha.alpha, sw, depth)
        c_exact = float(np.linalg.norm(rows, 2) ** 2)
    return EmbeddingResult(c_pack, c_embed, c_exact, (k, j))


def _embedding_quadratic_matrix(alpha: np.ndarray, sw: np.ndarray, depth: int) -> np.ndarray:
    n = sw.size
    rows = np.empty((alpha.size, n))
    for k in range(depth):
        span = n >> k
        block = np.zeros((1 << k, n))
        for j in range(1 << k):
            block[j, j * span:(j + 1) * span] = sw[j * span:(j + 1) * span] / span
        rows[level_slice(k)] = block * np.sqrt(alpha[level_slice(k)])[:, None]
    # ||f||_2^2 = |u|^2 with u = f / sqrt(n)
    return rows * np.sqrt(n)


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-15


def c_squared_bound(w: Weight) -> BoundCheck:
    """Packing constant of ``{c_I^2}`` against ``2 log [w]_{A_2^d}``."""
    tab = disbalanced_table(w)
    lhs = carleson_constant(CarlesonSequence(tab.c ** 2))
    rhs = 2.0 * np.log(a2d_characteristic(w).value)
    return BoundCheck(lhs, float(max(rhs, 0.0)))


def lemma_use_ratio(w: Weight) -> tuple[float, float]:
    """Packing constants of the sequences that feed the embedding in the chi_I sums.

    ``ratio_w = max_J (1/(|J| w_J)) sum w_I^2 c_I^2 (w^-1)_I`` and the dual
    ``ratio_winv`` with ``w`` and ``w^-1`` (``c`` and ``d``) exchanged.
    """
    depth = w.depth
    tab = disbalanced_table(w)
    wI, vI = w.heap_averages(), w.heap_inv_averages()
    ratio_w, _ = _max_packing(wI ** 2 * tab.c ** 2 * vI, [w.level_averages(k) for k in range(depth)], depth)
    ratio_v, _ = _max_packing(vI ** 2 * tab.d ** 2 * wI, [w.level_inv_averages(k) for k in range(depth)], depth)
    return ratio_w, ratio_v
