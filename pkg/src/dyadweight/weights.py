"""Piecewise-constant weights on the dyadic grid and their A_2-type characteristics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .lattice import ROOT, DyadicInterval


class InvalidWeightError(ValueError):
    """Weight values are non-positive, non-finite or of the wrong length."""


class PositivityError(InvalidWeightError):
    """A generator parameter would produce a non-positive weight."""


class QuadratureError(RuntimeError):
    """Kernel mass check failed."""


def pyramid(values: np.ndarray) -> list[np.ndarray]:
    """Dyadic averages of leaf values; entry ``k`` holds the ``2**k`` averages of level ``k``."""
    levels = [np.asarray(values, dtype=float)]
    while levels[-1].size > 1:
        levels.append(levels[-1].reshape(-1, 2).mean(axis=1))
    return levels[::-1]


class Weight:
    """Strictly positive weight, constant on each of the ``2**depth`` finest leaves.

    Averages of ``w`` and ``1/w`` over every dyadic interval are computed once
    at construction.
    """

    def __init__(self, values):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size < 2 or values.size & (values.size - 1):
            raise InvalidWeightError(f"need a power-of-two number (>= 2) of leaf values, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidWeightError("weight values must be finite and strictly positive")
        values.setflags(write=False)
        self.values = values
        self.depth = values.size.bit_length() - 1
        self._avg = pyramid(values)
        self._inv_avg = pyramid(1.0 / values)
        for a in self._avg + self._inv_avg:
            a.setflags(write=False)

    @classmethod
    def constant(cls, depth: int, value: float = 1.0) -> "Weight":
        return cls(np.full(1 << depth, float(value)))

    @property
    def n_leaves(self) -> int:
        return self.values.size

    def level_averages(self, level: int) -> np.ndarray:
        return self._avg[level]

    def level_inv_averages(self, level: int) -> np.ndarray:
        return self._inv_avg[level]

    def average(self, interval: DyadicInterval = ROOT) -> float:
        return float(self._avg[interval.level][interval.position])

    def inv_average(self, interval: DyadicInterval = ROOT) -> float:
        return float(self._inv_avg[interval.level][interval.position])

    def heap_averages(self) -> np.ndarray:
        """``w_I`` for levels 0..N-1 in heap order."""
        return np.concatenate(self._avg[:-1])

    def heap_inv_averages(self) -> np.ndarray:
        return np.concatenate(self._inv_avg[:-1])

    def inverse(self) -> "Weight":
        return Weight(1.0 / self.values)

    def scaled(self, c: float) -> "Weight":
        return Weight(c * self.values)

    def reflected(self) -> "Weight":
        """``x -> w(1 - x)``."""
        return Weight(self.values[::-1])

    def __eq__(self, other):
        return isinstance(other, Weight) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"Weight(depth={self.depth}, min={self.values.min():.6g}, max={self.values.max():.6g})"

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {"depth": self.depth, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Weight":
        values = data["values"]
        w = cls(values)
        if "depth" in data and int(data["depth"]) != w.depth:
            raise InvalidWeightError(f"depth {data['depth']} does not match {len(values)} values")
        return w

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Weight":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Characteristic:
    value: float
    kind: str  # "dyadic-A_p", "Poisson-A2" or "Heat-A2"
    p: float = 2.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def delta(self) -> float:
        return self.value - 1.0


def a2d_characteristic(w: Weight, p: float = 2.0) -> Characteristic:
    """Dyadic A_p characteristic: max over all dyadic I of ``w_I * (w^{1/(1-p)})_I^{p-1}``."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    if p == 2.0:
        dual = w._inv_avg
    else:
        dual = pyramid(w.values ** (1.0 / (1.0 - p)))
    best, arg = -np.inf, (0, 0)
    for k in range(w.depth + 1):
        prod = w._avg[k] * dual[k] ** (p - 1.0)
        j = int(np.argmax(prod))
        if prod[j] > best:
            best, arg = float(prod[j]), (k, j)
    return Characteristic(best, "dyadic-A_p", p, {"argmax": arg})


# -- continuous characteristics ------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Sampling of the upper half-plane for Poisson/heat characteristics.

    ``t_min=None`` resolves to ``2**(-N-2)`` for a depth-``N`` weight.  The
    weight is extended to the line by even reflection about 0 and 1 (period
    2).  Kernel cells further than ``truncation`` from ``x`` are replaced by
    the analytic tail mass times the mean of the function.
    """

    t_min: float | None = None
    t_max: float = 4.0
    n_t: int = 64
    truncation: float = 64.0
    mass_tol: float = 1e-6

    def t_grid(self, depth: int) -> np.ndarray:
        t_min = self.t_min if self.t_min is not None else 2.0 ** (-depth - 2)
        return np.geomspace(t_min, self.t_max, self.n_t)


def reflect_extend(values: np.ndarray) -> np.ndarray:
    """One period ``[0, 2)`` of the even reflection of leaf values on ``[0, 1)``."""
    return np.concatenate([values, values[::-1]])


def _cell_masses(kind: str, m: np.ndarray, h: float, t: float) -> np.ndarray:
    lo, hi = (m - 0.5) * h, (m + 0.5) * h
    if kind == "poisson":
        return (np.arctan(hi / t) - np.arctan(lo / t)) / np.pi
    s = 2.0 * np.sqrt(t)
    return 0.5 * (erf(hi / s) - erf(lo / s))


def _tail_mass(kind: str, radius: float, t: float) -> float:
    if kind == "poisson":
        return 1.0 - 2.0 / np.pi * np.arctan(radius / t)
    return 1.0 - float(erf(radius / (2.0 * np.sqrt(t))))


def extension_fields(w: Weight, kind: str, quad: QuadratureSpec | None = None):
    """Poisson or heat extensions of ``w`` and ``1/w`` at leaf midpoints.

    Returns ``(t, ext_w, ext_winv)`` with arrays of shape ``(n_t, 2**N)``.
    Convolution of a piecewise-constant function with cell-integrated kernels
    is exact, so the only approximation is the far-field tail.
    """
    if kind not in ("poisson", "heat"):
        raise ValueError(f"unknown kernel {kind!r}")
    quad = quad or QuadratureSpec()
    n = w.n_leaves
    h = 1.0 / n
    period = 2 * n
    cells = int(round(quad.truncation * n))
    m = np.arange(-cells, cells + 1)
    ts = quad.t_grid(w.depth)
    ext = reflect_extend(w.values)
    ext_inv = 1.0 / ext
    f_ext, f_inv = np.fft.rfft(ext), np.fft.rfft(ext_inv)
    mean_w, mean_winv = ext.mean(), ext_inv.mean()
    out_w = np.empty((ts.size, n))
    out_inv = np.empty((ts.size, n))
    for i, t in enumerate(ts):
        k = _cell_masses(kind, m, h, t)
        tail = _tail_mass(kind, (cells + 0.5) * h, t)
        mass_err = abs(k.sum() + tail - 1.0)
        if mass_err > quad.mass_tol:
            raise QuadratureError(f"{kind} kernel mass off by {mass_err:.3g} at t={t:.3g}")
        folded = np.bincount(m % period, weights=k, minlength=period)
        kf = np.fft.rfft(folded)
        out_w[i] = np.fft.irfft(f_ext * kf, period)[:n] + tail * mean_w
        out_inv[i] = np.fft.irfft(f_inv * kf, period)[:n] + tail * mean_winv
    return ts, out_w, out_inv


def _continuous_characteristic(w: Weight, kind: str, quad: QuadratureSpec | None) -> Characteristic:
    quad = quad or QuadratureSpec()
    ts, ew, einv = extension_fields(w, kind, quad)
    prod = ew * einv
    it, ix = np.unravel_index(int(np.argmax(prod)), prod.shape)
    meta = {
        "estimate": "lower",
        "t_grid": [float(ts[0]), float(ts[-1]), int(ts.size)],
        "x_grid": "leaf midpoints",
        "extension": "even reflection (period 2), tail as constant mean",
        "truncation": quad.truncation,
        "argmax": {"x": (ix + 0.5) / w.n_leaves, "t": float(ts[it])},
    }
    label = "Poisson-A2" if kind == "poisson" else "Heat-A2"
    return Characteristic(float(prod[it, ix]), label, 2.0, meta)


def poisson_characteristic(w: Weight, quad: QuadratureSpec | None = None) -> Characteristic:
    """Max of ``w^H (1/w)^H`` over the sample grid: a lower estimate of [w]_{A_2^H}."""
    return _continuous_characteristic(w, "poisson", quad)


def heat_characteristic(w: Weight, quad: QuadratureSpec | None = None) -> Characteristic:
    """Max of ``w^h (1/w)^h`` over the sample grid: a lower estimate of [w]_{A_2^h}."""
    return _continuous_characteristic(w, "heat", quad)


# -- generators -------------------------------------------------------------

FAMILIES = ("haar-bump", "step", "power-like", "random-multiscale")
DEFAULT_BUMP = DyadicInterval(1, 0)


def _random_multiscale_profile(depth: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = 1 << depth
    phi = np.zeros(n)
    for k in range(depth):
        signs = rng.choice([-1.0, 1.0], size=1 << k)
        # +-1 on the halves of every level-k interval, damped by 2^{-k/2}
        pattern = np.repeat(np.stack([-signs, signs], axis=1).ravel(), n >> (k + 1))
        phi += 2.0 ** (-k / 2) * pattern
    return phi / np.abs(phi).max()


def _power_profile(depth: int, alpha: float, center: float = 0.5) -> np.ndarray:
    # exact cell averages of |x - center|^alpha
    edges = np.linspace(0.0, 1.0, (1 << depth) + 1) - center
    prim = np.sign(edges) * np.abs(edges) ** (alpha + 1.0) / (alpha + 1.0)
    return np.diff(prim) * (1 << depth)


def make_family(kind: str, epsilon: float, seed: int = 0, depth: int = 8,
                interval: DyadicInterval | None = None) -> Weight:
    """Weight from a one-parameter family that becomes constant as ``epsilon -> 0``.

    haar-bump
        ``1 + epsilon`` on the left half of ``interval``, ``1 - epsilon`` on its
        right half, 1 elsewhere (default interval ``[0, 1/2)``).
    step
        ``1 + epsilon`` on ``[0, 1/3)`` (rounded to leaves), 1 elsewhere.
    power-like
        cell averages of ``|x - 1/2|^(-epsilon)``.
    random-multiscale
        ``exp(epsilon * phi)`` with ``phi`` a seeded +-1 multiscale Haar
        pattern normalised to ``max|phi| = 1``.
    """
    n = 1 << depth
    if kind == "haar-bump":
        interval = interval or DEFAULT_BUMP
        if interval.level >= depth:
            raise ValueError(f"bump interval {interval} too fine for depth {depth}")
        values = np.ones(n)
        sl = interval.leaf_slice(depth)
        half = (sl.stop - sl.start) // 2
        values[sl.start:sl.start + half] += epsilon
        values[sl.start + half:sl.stop] -= epsilon
    elif kind == "step":
        values = np.ones(n)
        values[: max(1, round(n / 3))] += epsilon
    elif kind == "power-like":
        if epsilon >= 1.0:
            raise PositivityError("power-like family needs epsilon < 1")
        values = _power_profile(depth, -epsilon) if epsilon != 0 else np.ones(n)
    elif kind == "random-multiscale":
        values = np.exp(np.clip(epsilon * _random_multiscale_profile(depth, seed), -50.0, 50.0))
    else:
        raise ValueError(f"unknown family {kind!r}; choose from {FAMILIES}")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise PositivityError(f"{kind} with epsilon={epsilon} is not strictly positive")
    return Weight(values)


def epsilon_for_delta(kind: str, delta: float, seed: int = 0, depth: int = 8,
                      interval: DyadicInterval | None = None, rtol: float = 1e-12) -> float:
    """Invert ``epsilon -> [w]_{A_2^d} - 1`` by bisection (the map is increasing)."""
    if delta <= 0:
        return 0.0
    hi_cap = {"haar-bump": 1.0, "step": 1e6, "power-like": 1.0, "random-multiscale": 50.0}[kind]
    lo, hi = 0.0, min(0.5, hi_cap / 2)
    while hi < hi_cap and a2d_characteristic(make_family(kind, hi, seed, depth, interval)).delta < delta:
        lo, hi = hi, min(2 * hi, hi_cap * (1 - 1e-9))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if a2d_characteristic(make_family(kind, mid, seed, depth, interval)).delta < delta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)
