"""Martingale transforms, their L2(w) operator norms and the four-sum expansion."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .haar import HaarCoefficients, analyze, disbalanced_table, interval_integrals, synthesize
from .lattice import DyadicInterval
from .weights import Weight

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
MAX_ITER = 100_000
DENSE_MAX_DEPTH = 10


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SigmaPattern:
    """Multipliers ``sigma_I`` in ``[-1, 1]`` for levels 0..N-1, heap order."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.ndim != 1 or s.size < 1 or (s.size + 1) & s.size:
            raise ValueError("sigma must have 2**N - 1 entries")
        if np.any(np.abs(s) > 1.0) or not np.all(np.isfinite(s)):
            raise ValueError("|sigma_I| <= 1 required")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def depth(self) -> int:
        return (self.sigma.size + 1).bit_length() - 1

    def __getitem__(self, interval: DyadicInterval) -> float:
        return float(self.sigma[interval.index])

    @classmethod
    def constant(cls, depth: int, value: float = 1.0) -> "SigmaPattern":
        return cls(np.full((1 << depth) - 1, float(value)))

    @classmethod
    def uniform(cls, depth: int, rng: np.random.Generator) -> "SigmaPattern":
        return cls(rng.uniform(-1.0, 1.0, (1 << depth) - 1))

    @classmethod
    def signs(cls, depth: int, rng: np.random.Generator) -> "SigmaPattern":
        return cls(rng.choice([-1.0, 1.0], (1 << depth) - 1))

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.sigma).tobytes()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, SigmaPattern) and np.array_equal(self.sigma, other.sigma)

    def __hash__(self):
        return hash(self.sigma.tobytes())


@dataclass(frozen=True)
class NormEstimate:
    value: float
    method: str  # "dense-oracle", "power-iteration" or "lanczos"
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True


def apply(sigma: SigmaPattern, f) -> np.ndarray:
    """``T_sigma f = sum_I sigma_I (f, h_I) h_I`` on leaf arrays (last axis)."""
    c = analyze(f)
    if c.coeffs.shape[-1] != sigma.sigma.size:
        raise ValueError("depth of f and sigma differ")
    return synthesize(HaarCoefficients(np.zeros_like(c.mean), c.coeffs * sigma.sigma))


def transform_matrix(sigma: SigmaPattern) -> np.ndarray:
    """Dense matrix of ``T_sigma`` acting on leaf values (symmetric)."""
    n = sigma.sigma.size + 1
    return apply(sigma, np.eye(n)).T


def _weighted_operator(sigma: SigmaPattern, w: Weight):
    """Matvec of ``M^T M`` with ``M = W^{1/2} T W^{-1/2}``."""
    sw = np.sqrt(w.values)

    def m(x):
        return sw * apply(sigma, x / sw)

    def mt(y):
        return apply(sigma, y * sw) / sw

    return m, mt


def _dense_norm(sigma: SigmaPattern, w: Weight) -> NormEstimate:
    sw = np.sqrt(w.values)
    m = sw[:, None] * transform_matrix(sigma) / sw[None, :]
    return NormEstimate(float(np.linalg.norm(m, 2)), "dense-oracle")


def power_iteration(matvec, x0: np.ndarray, tol: float = DEFAULT_TOL,
                    max_iter: int = MAX_ITER) -> tuple[float, np.ndarray, int, float, bool]:
    """Largest eigenvalue of a symmetric PSD operator.

    Stops once the relative change of the Rayleigh quotient, inflated by the
    observed contraction factor ``rho / (1 - rho)``, drops below ``tol``; the
    inflation keeps slow (small-gap) runs from stopping early.  Returns
    ``(eigenvalue, vector, iterations, residual, converged)``.
    """
    x = x0 / np.linalg.norm(x0)
    y = matvec(x)
    lam = float(x @ y)
    prev_step = None
    residual = np.inf
    for it in range(1, max_iter + 1):
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, x, it, 0.0, True
        x = y / ny
        y = matvec(x)
        new = float(x @ y)
        step = abs(new - lam) / max(abs(new), 1e-300)
        lam = new
        if prev_step is None or prev_step == 0.0:
            rho = 0.0 if step == 0.0 else 0.5
        else:
            rho = min(step / prev_step, 1.0)
        residual = np.inf if rho >= 1.0 else step * max(1.0, rho / (1.0 - rho))
        prev_step = step
        if residual <= tol:
            return lam, x, it, residual, True
    return lam, x, max_iter, residual, False


def lanczos_top(matvec, n: int, x0: np.ndarray, tol: float = DEFAULT_TOL,
                max_iter: int = MAX_ITER) -> tuple[float, np.ndarray, int, bool]:
    """Largest eigenvalue of a symmetric operator by implicitly restarted Lanczos."""
    counter = {"n": 0}

    def mv(v):
        counter["n"] += 1
        return matvec(np.ravel(v))

    op = LinearOperator((n, n), matvec=mv, dtype=float)
    try:
        vals, vecs = eigsh(op, k=1, which="LA", v0=x0, tol=tol * 1e-2, maxiter=max_iter,
                           ncv=min(n, 40))
        return float(vals[0]), vecs[:, 0], counter["n"], True
    except Exception as exc:  # ArpackNoConvergence carries partial results
        vals = getattr(exc, "eigenvalues", None)
        vecs = getattr(exc, "eigenvectors", None)
        if vals is not None and len(vals):
            return float(vals[0]), vecs[:, 0], counter["n"], False
        raise NonConvergenceError(str(exc)) from exc


def weighted_norm(sigma: SigmaPattern, w: Weight, tol: float = DEFAULT_TOL,
                  method: str = "auto", seed: int = 0, max_iter: int = MAX_ITER,
                  x0: np.ndarray | None = None) -> NormEstimate:
    """Estimate ``||T_sigma||_{L2(w) -> L2(w)}``.

    ``method`` is ``"dense"`` (exact, N <= 10), ``"power"``, ``"lanczos"`` or
    ``"auto"`` (dense when N <= 10, otherwise power iteration).  Iterative
    methods only use fast transforms and diagonal scalings.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if sigma.depth != w.depth:
        raise ValueError(f"sigma depth {sigma.depth} != weight depth {w.depth}")
    if method == "auto":
        method = "dense" if w.depth <= DENSE_MAX_DEPTH else "power"
    if method == "dense":
        if w.depth > DENSE_MAX_DEPTH:
            raise ValueError(f"dense oracle limited to depth <= {DENSE_MAX_DEPTH}")
        return _dense_norm(sigma, w)

    m, mt = _weighted_operator(sigma, w)

    def mtm(x):
        return mt(m(x))

    if x0 is None:
        x0 = np.random.default_rng(seed).standard_normal(w.n_leaves)
    if method == "power":
        lam, _, its, res, ok = power_iteration(mtm, x0, tol, max_iter)
        if not ok:
            logger.warning("power iteration hit the cap of %d iterations (residual %.3g)", max_iter, res)
        return NormEstimate(float(np.sqrt(max(lam, 0.0))), "power-iteration", its, float(res), ok)
    if method == "lanczos":
        lam, _, its, ok = lanczos_top(mtm, w.n_leaves, x0, tol, max_iter)
        return NormEstimate(float(np.sqrt(max(lam, 0.0))), "lanczos", its, tol if ok else np.inf, ok)
    raise ValueError(f"unknown method {method!r}")


# -- worst-case sign search -------------------------------------------------------

class _DenseNorms:
    """Top singular triplets of ``M(sigma) = A diag(sigma) B`` for a fixed weight."""

    def __init__(self, w: Weight):
        n = w.n_leaves
        sw = np.sqrt(w.values)
        # rows: h_I on leaves scaled to be orthonormal in the Euclidean sense
        h = analyze(np.eye(n)).coeffs.T * np.sqrt(n)
        self.a = sw[:, None] * h.T  # n x m
        self.b = h / sw[None, :]  # m x n
        self.bbt = self.b @ self.b.T

    def norm(self, sigma: np.ndarray) -> float:
        g = (self.a * sigma) @ self.bbt @ (self.a * sigma).T
        top = np.linalg.eigvalsh(g)[-1]
        return float(np.sqrt(max(top, 0.0)))

    def triplet(self, sigma: np.ndarray):
        m = (self.a * sigma) @ self.b
        u, s, vt = np.linalg.svd(m)
        return float(s[0]), u[:, 0], vt[0]


def _sign_ascent(ev: _DenseNorms, sigma: np.ndarray, max_rounds: int = 100) -> tuple[np.ndarray, float]:
    """Alternate between the top singular pair and the signs it prefers.

    Each round cannot decrease the norm: the bilinear form at the old pair
    only grows when every sigma_I takes the sign of its own term.
    """
    best = ev.norm(sigma)
    for _ in range(max_rounds):
        _, u, v = ev.triplet(sigma)
        g = (ev.a.T @ u) * (ev.b @ v)
        new = np.where(g > 0, 1.0, np.where(g < 0, -1.0, sigma))
        if np.array_equal(new, sigma):
            break
        val = ev.norm(new)
        if val <= best * (1 + 1e-13):
            break
        sigma, best = new, val
    return sigma, best


def _flip_ascent(ev: _DenseNorms, sigma: np.ndarray, best: float) -> tuple[np.ndarray, float, bool]:
    """Single-flip first-improvement passes in heap (lexicographic) order."""
    improved_any = False
    improved = True
    while improved:
        improved = False
        for i in range(sigma.size):
            sigma[i] = -sigma[i]
            val = ev.norm(sigma)
            if val > best * (1 + 1e-12):
                best, improved, improved_any = val, True, True
            else:
                sigma[i] = -sigma[i]
    return sigma, best, improved_any


def worst_sigma(w: Weight, restarts: int = 4, seed: int = 0,
                flips: bool = True) -> tuple[SigmaPattern, NormEstimate]:
    """Search ``sigma in {-1, +1}`` maximising ``||T_sigma||_{L2(w)}``.

    The norm is convex in each ``sigma_I`` separately, so the maximum over the
    box is attained at a vertex.  Each restart starts from random signs, runs
    the sign/singular-vector ascent and then single-flip ascent until no flip
    helps.  Deterministic given ``seed``; ties go to the lexicographically
    smallest pattern.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if w.depth > DENSE_MAX_DEPTH:
        raise ValueError(f"worst_sigma supports depth <= {DENSE_MAX_DEPTH}")
    ev = _DenseNorms(w)
    rng = np.random.default_rng(seed)
    best_sigma, best_val = None, -np.inf
    for _ in range(restarts):
        sigma = rng.choice([-1.0, 1.0], (1 << w.depth) - 1)
        sigma, val = _sign_ascent(ev, sigma)
        while flips:
            sigma, val, changed = _flip_ascent(ev, sigma, val)
            if not changed:
                break
            sigma, val = _sign_ascent(ev, sigma)
        # sigma and -sigma have the same norm; canonicalise the root sign
        if sigma[0] < 0:
            sigma = -sigma
        better = val > best_val * (1 + 1e-12)
        tie = not better and val >= best_val * (1 - 1e-12)
        if better or (tie and tuple(sigma) < tuple(best_sigma)):
            best_sigma, best_val = sigma.copy(), val
    pattern = SigmaPattern(best_sigma)
    return pattern, _dense_norm(pattern, w)


# -- four-sum expansion ---------------------------------------------------------------

@dataclass(frozen=True)
class FourSums:
    s1: float
    s2: float
    s3: float
    s4: float
    bilinear: float  # sum_I sigma_I (f w^{-1/2}, h_I)(g w^{1/2}, h_I), computed directly

    @property
    def total(self) -> float:
        return self.s1 + self.s2 + self.s3 + self.s4


def four_sum_decomposition(sigma: SigmaPattern, f, g, w: Weight) -> FourSums:
    """Split ``sum_I sigma_I (f w^{-1/2}, h_I)(g w^{1/2}, h_I)`` along the disbalanced systems.

    With ``F = f w^{-1/2}`` and ``G = g w^{1/2}``, ``h_I = delta h_I^w - gamma chi_I``
    turns each product into four terms: both weighted-Haar pairings (S1), one
    weighted-Haar and one ``chi_I`` pairing (S2, S3) and two ``chi_I``
    pairings (S4).
    """
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    tab = disbalanced_table(w)
    F = f / np.sqrt(w.values)
    G = g * np.sqrt(w.values)
    cf, cg = analyze(F).coeffs, analyze(G).coeffs
    A, B = interval_integrals(F), interval_integrals(G)
    # inner products against the weighted systems, L2(dx)
    a = (cf + tab.gamma_winv * A) / tab.delta_winv
    b = (cg + tab.gamma_w * B) / tab.delta_w
    s = sigma.sigma
    return FourSums(
        s1=float(np.sum(s * a * tab.delta_winv * b * tab.delta_w)),
        s2=float(-np.sum(s * A * tab.gamma_winv * b * tab.delta_w)),
        s3=float(-np.sum(s * a * tab.delta_winv * B * tab.gamma_w)),
        s4=float(np.sum(s * A * tab.gamma_winv * B * tab.gamma_w)),
        bilinear=float(np.sum(s * cf * cg)),
    )
