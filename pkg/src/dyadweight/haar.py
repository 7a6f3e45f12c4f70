"""Fast Haar analysis/synthesis and the disbalanced Haar system of a weight.

Transforms act on the last axis, so a stack of functions can be processed in
one call.  Functions on [0, 1) are represented by their ``2**N`` leaf values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import DyadicInterval, haar_eval, haar_on_leaves, level_slice
from .weights import Weight


def _depth_of(n: int) -> int:
    if n < 2 or n & (n - 1):
        raise ValueError(f"length must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


@dataclass
class HaarCoefficients:
    """Global mean plus ``(f, h_I)`` for levels 0..N-1 in heap order."""

    mean: np.ndarray | float
    coeffs: np.ndarray

    @property
    def depth(self) -> int:
        return _depth_of(self.coeffs.shape[-1] + 1)

    def __getitem__(self, interval: DyadicInterval):
        return self.coeffs[..., interval.index]

    def energy(self):
        """``mean**2 + sum coeffs**2``; equals the L2(dx) norm squared."""
        return np.asarray(self.mean) ** 2 + np.sum(self.coeffs ** 2, axis=-1)


def analyze(f) -> HaarCoefficients:
    """Pyramid transform, O(2**N) per function."""
    a = np.asarray(f, dtype=float)
    depth = _depth_of(a.shape[-1])
    coeffs = np.empty(a.shape[:-1] + (a.shape[-1] - 1,))
    for k in range(depth - 1, -1, -1):
        left, right = a[..., 0::2], a[..., 1::2]
        # (f, h_I) = sqrt|I| / 2 * (avg_{I+} - avg_{I-}),  |I| = 2^-k
        coeffs[..., level_slice(k)] = (right - left) * 2.0 ** (-0.5 * k - 1)
        a = 0.5 * (left + right)
    return HaarCoefficients(a[..., 0], coeffs)


def synthesize(c: HaarCoefficients) -> np.ndarray:
    """Inverse of :func:`analyze`."""
    coeffs = np.asarray(c.coeffs, dtype=float)
    depth = _depth_of(coeffs.shape[-1] + 1)
    a = np.asarray(c.mean, dtype=float)[..., None]
    for k in range(depth):
        d = coeffs[..., level_slice(k)] * 2.0 ** (0.5 * k)
        out = np.empty(a.shape[:-1] + (2 * a.shape[-1],))
        out[..., 0::2] = a - d
        out[..., 1::2] = a + d
        a = out
    return a


def interval_integrals(f) -> np.ndarray:
    """``(f, chi_I) = |I| * avg_I f`` for levels 0..N-1, heap order, last axis."""
    a = np.asarray(f, dtype=float)
    depth = _depth_of(a.shape[-1])
    out = np.empty(a.shape[:-1] + (a.shape[-1] - 1,))
    for k in range(depth - 1, -1, -1):
        a = 0.5 * (a[..., 0::2] + a[..., 1::2])
        out[..., level_slice(k)] = a * 2.0 ** -k
    return out


# -- disbalanced system -------------------------------------------------------

@dataclass(frozen=True)
class DisbalancedConstants:
    c: float
    d: float
    gamma_w: float
    gamma_winv: float
    delta_w: float
    delta_winv: float


@dataclass(frozen=True)
class DisbalancedTable:
    """All constants for levels 0..N-1 of one weight, heap order."""

    length: np.ndarray
    c: np.ndarray
    d: np.ndarray
    gamma_w: np.ndarray
    gamma_winv: np.ndarray
    delta_w: np.ndarray
    delta_winv: np.ndarray

    def at(self, interval: DyadicInterval) -> DisbalancedConstants:
        i = interval.index
        return DisbalancedConstants(
            float(self.c[i]), float(self.d[i]), float(self.gamma_w[i]),
            float(self.gamma_winv[i]), float(self.delta_w[i]), float(self.delta_winv[i]),
        )


def _half_averages(avg: list[np.ndarray], depth: int):
    parent = np.concatenate(avg[:depth])
    left = np.concatenate([avg[k + 1][0::2] for k in range(depth)])
    right = np.concatenate([avg[k + 1][1::2] for k in range(depth)])
    return parent, left, right


def disbalanced_table(w: Weight) -> DisbalancedTable:
    """Constants of the weighted Haar system ``h_I^w = (h_I + gamma chi_I) / delta``.

    ``c_I = sqrt|I| (w_{I-} - w_{I+}) / (2 w_I)`` and ``delta_w^2 = w_{I+} w_{I-} / w_I``.
    With the right-positive ``h_I`` the weighted system has zero ``w``-mean
    and unit ``L2(w)`` norm only for ``gamma_w = +c_I / |I|``, which is what is
    stored here (likewise ``gamma_{w^-1} = +d_I / |I|``).
    """
    depth = w.depth
    length = np.concatenate([np.full(1 << k, 2.0 ** -k) for k in range(depth)])
    wI, wl, wr = _half_averages([w.level_averages(k) for k in range(depth + 1)], depth)
    vI, vl, vr = _half_averages([w.level_inv_averages(k) for k in range(depth + 1)], depth)
    root = np.sqrt(length)
    c = root * (wl - wr) / (2.0 * wI)
    d = root * (vl - vr) / (2.0 * vI)
    return DisbalancedTable(
        length=length,
        c=c,
        d=d,
        gamma_w=c / length,
        gamma_winv=d / length,
        delta_w=np.sqrt(wl * wr / wI),
        delta_winv=np.sqrt(vl * vr / vI),
    )


def disbalanced_constants(w: Weight, interval: DyadicInterval) -> DisbalancedConstants:
    if interval.level >= w.depth:
        raise ValueError(f"{interval} has no Haar function at depth {w.depth}")
    return disbalanced_table(w).at(interval)


def weighted_haar_eval(w: Weight, interval: DyadicInterval, x):
    """Pointwise value of ``h_I^w``."""
    k = disbalanced_constants(w, interval)
    x = np.asarray(x, dtype=float)
    inside = (x >= interval.left) & (x < interval.right)
    out = (np.asarray(haar_eval(interval, x)) + k.gamma_w * inside) / k.delta_w
    return out if out.ndim else float(out)


def weighted_haar_on_leaves(w: Weight, interval: DyadicInterval, inverse: bool = False) -> np.ndarray:
    """``h_I^w`` (or ``h_I^{w^-1}`` with ``inverse=True``) sampled on the leaves."""
    k = disbalanced_constants(w, interval)
    gamma, delta = (k.gamma_winv, k.delta_winv) if inverse else (k.gamma_w, k.delta_w)
    chi = np.zeros(w.n_leaves)
    chi[interval.leaf_slice(w.depth)] = 1.0
    return (haar_on_leaves(interval, w.depth) + gamma * chi) / delta


def weighted_inner(f, g, w: Weight) -> float:
    """``(f, g)_{L2(w)}`` for leaf arrays."""
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    if f.shape[-1] != w.n_leaves or g.shape[-1] != w.n_leaves:
        raise ValueError("length mismatch between functions and weight")
    return float(np.sum(f * g * w.values) / w.n_leaves)
