"""Depth-limited Bellman function for the weighted Haar bilinear form.

``B_k(X, Y, x, y, r, s)`` is the largest value of
``(1/(4|J|)) sum_I |<f>_{I+} - <f>_{I-}| |<g>_{I+} - <g>_{I-}| |I|`` over
dyadic configurations ``k`` levels deep whose averages over ``J`` are
``x = <f>, y = <g>, r = <w>, s = <w^-1>, X = <f^2 w>, Y = <g^2 w^-1>``.
It is built from ``B_0 = 0`` by

    B_{k+1}(v) = max over splits v = (v+ + v-)/2 of
                 (B_k(v+) + B_k(v-))/2 + |x+ - x-| |y+ - y-| / 4.

The scalings ``f -> lam f``, ``g -> mu g`` and ``w -> kappa w`` give
``B(v) = sqrt(XY) b(x/sqrt(Xs), y/sqrt(Yr), rs)``, so only the three
reduced coordinates are tabulated (trilinear interpolation off-grid).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

FORMAT = "dyadweight.bellman"
VERSION = 1
_EPS = 1e-12


@dataclass(frozen=True)
class BellmanPoint:
    X: float
    Y: float
    x: float
    y: float
    r: float
    s: float
    Q: float

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.X * self.Y))

    def reduced(self) -> tuple[float, float, float]:
        """``(x / sqrt(Xs), y / sqrt(Yr), rs)``."""
        return (self.x / np.sqrt(self.X * self.s), self.y / np.sqrt(self.Y * self.r), self.r * self.s)

    @classmethod
    def from_reduced(cls, xt: float, yt: float, p: float, Q: float,
                     X: float = 1.0, Y: float = 1.0, r: float | None = None) -> "BellmanPoint":
        r = np.sqrt(p) if r is None else r
        s = p / r
        return cls(X, Y, xt * np.sqrt(X * s), yt * np.sqrt(Y * r), r, s, Q)


def in_domain(v: BellmanPoint, tol: float = 1e-12) -> bool:
    """Closed domain: positive X, Y, r, s; x, y >= 0; x^2 <= Xs; y^2 <= Yr; 1 <= rs <= Q."""
    if not v.Q > 1:
        return False
    if min(v.X, v.Y, v.r, v.s) <= 0 or min(v.x, v.y) < 0:
        return False
    p = v.r * v.s
    return (v.x ** 2 <= v.X * v.s * (1 + tol) and v.y ** 2 <= v.Y * v.r * (1 + tol)
            and 1 - tol <= p <= v.Q * (1 + tol))


@dataclass
class BellmanTable:
    """Reduced values ``b_k`` on the grid ``xt x yt x p`` for every depth ``0..k``."""

    Q: float
    xt: np.ndarray
    yt: np.ndarray
    p: np.ndarray
    layers: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def values(self) -> np.ndarray:
        return self.layers[-1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.xt.size, self.yt.size, self.p.size)

    @classmethod
    def zero(cls, Q: float, n_xy: int = 33, n_p: int = 9) -> "BellmanTable":
        if not Q > 1:
            raise ValueError("Q must exceed 1")
        g = np.linspace(0.0, 1.0, n_xy)
        return cls(float(Q), g, g.copy(), np.linspace(1.0, Q, n_p), [np.zeros((n_xy, n_xy, n_p))])

    def nodes(self) -> np.ndarray:
        """Reduced coordinates of all grid nodes, shape ``(n, 3)`` in C order."""
        m = np.meshgrid(self.xt, self.yt, self.p, indexing="ij")
        return np.stack([a.ravel() for a in m], axis=1)

    def reduced_value(self, pts: np.ndarray, depth: int | None = None) -> np.ndarray:
        depth = self.depth if depth is None else depth
        pts = np.atleast_2d(pts)
        lo = np.array([self.xt[0], self.yt[0], self.p[0]])
        hi = np.array([self.xt[-1], self.yt[-1], self.p[-1]])
        interp = RegularGridInterpolator((self.xt, self.yt, self.p), self.layers[depth])
        return interp(np.clip(pts, lo, hi))

    def evaluate_arrays(self, X, Y, x, y, r, s, depth: int | None = None) -> np.ndarray:
        pts = np.stack([x / np.sqrt(X * s), y / np.sqrt(Y * r), r * s], axis=-1)
        return np.sqrt(X * Y) * self.reduced_value(pts, depth)

    def evaluate(self, v: BellmanPoint, depth: int | None = None) -> float:
        return float(v.scale * self.reduced_value(np.array(v.reduced()), depth)[0])

    def interpolation_error(self, depth: int | None = None) -> float:
        """Bound ``sum_axes max |second difference| / 8`` on the trilinear error of ``b``."""
        b = self.layers[self.depth if depth is None else depth]
        err = 0.0
        for ax in range(3):
            if b.shape[ax] >= 3:
                err += float(np.abs(np.diff(b, 2, axis=ax)).max()) / 8.0
        return err

    def local_interpolation_error(self, pts: np.ndarray, depth: int | None = None) -> np.ndarray:
        """Cell-wise bound: ``sum_axes |second difference| / 8`` maximised over the cell's corners."""
        b = self.layers[self.depth if depth is None else depth]
        node_err = np.zeros_like(b)
        for ax in range(3):
            if b.shape[ax] >= 3:
                d2 = np.abs(np.diff(b, 2, axis=ax)) / 8.0
                pad = [(0, 0)] * 3
                pad[ax] = (1, 1)
                node_err += np.pad(d2, pad, mode="edge")
        pts = np.atleast_2d(pts)
        idx = []
        for ax, g in enumerate((self.xt, self.yt, self.p)):
            i = np.clip(np.searchsorted(g, pts[:, ax], side="right") - 1, 0, g.size - 2)
            idx.append(i)
        out = np.zeros(pts.shape[0])
        for di in (0, 1):
            for dj in (0, 1):
                for dk in (0, 1):
                    out = np.maximum(out, node_err[idx[0] + di, idx[1] + dj, idx[2] + dk])
        return out

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "Q": self.Q,
            "axes": {"xt": self.xt.tolist(), "yt": self.yt.tolist(), "p": self.p.tolist()},
            "points": self.nodes().tolist(),
            "values": [layer.ravel().tolist() for layer in self.layers],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BellmanTable":
        if not isinstance(d, dict) or d.get("format") != FORMAT:
            raise ValueError("not a Bellman table")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported table version {d.get('version')}")
        ax = d["axes"]
        xt, yt, p = (np.asarray(ax[k], dtype=float) for k in ("xt", "yt", "p"))
        shape = (xt.size, yt.size, p.size)
        layers = [np.asarray(v, dtype=float).reshape(shape) for v in d["values"]]
        return cls(float(d["Q"]), xt, yt, p, layers, d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "BellmanTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- one DP step ---------------------------------------------------------------------

_N_PARAMS = 6  # alpha, beta, rho, zeta, theta, phi


def _param_box(Q: float) -> tuple[np.ndarray, np.ndarray]:
    # a two-valued w with w+/w- ratio set by rho has <w><w^-1> = 1/(1 - rho^2)
    rho = min(0.99, 1.01 * np.sqrt(1.0 - 1.0 / Q))
    lo = np.array([-0.99, -0.99, -rho, 0.0, 0.0, 0.0])
    hi = np.array([0.99, 0.99, rho, 1.0, 1.0, 1.0])
    return lo, hi


def _split(V: np.ndarray, prm: np.ndarray, Q: float):
    """Children ``v+, v-``, the gain and feasibility for split parameters.

    ``X+- = X(1 +- alpha)``, ``Y+- = Y(1 +- beta)``, ``r+- = r(1 +- rho)``;
    ``zeta`` places ``r+ s+`` inside its feasible range (which fixes ``s+-``),
    and ``theta``/``phi`` place ``x+ - x``/``y+ - y`` inside theirs.
    """
    X, Y, x, y, r, s = V.T
    a, b, rho, zeta, th, ph = prm.T
    p = r * s
    Xp, Xm, Yp, Ym = X * (1 + a), X * (1 - a), Y * (1 + b), Y * (1 - b)
    rp, rm = r * (1 + rho), r * (1 - rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo_p = np.maximum(1.0, p * (1 + rho) * (2 - Q / (p * (1 - rho))))
        hi_p = np.minimum(Q, p * (1 + rho) * (2 - 1.0 / (p * (1 - rho))))
        ok = lo_p <= hi_p
        pp = lo_p + zeta * (hi_p - lo_p)
        tau = pp / (p * (1 + rho)) - 1.0
        ok &= np.abs(tau) < 1
        sp, sm = s * (1 + tau), s * (1 - tau)
        pm = rm * sm
        ok &= (pm >= 1 - 1e-12) & (pm <= Q * (1 + 1e-12))
        lo_x = np.maximum(-x, x - np.sqrt(Xm * sm))
        hi_x = np.minimum(x, np.sqrt(Xp * sp) - x)
        lo_y = np.maximum(-y, y - np.sqrt(Ym * rm))
        hi_y = np.minimum(y, np.sqrt(Yp * rp) - y)
        ok &= (lo_x <= hi_x + _EPS) & (lo_y <= hi_y + _EPS)
        dx = lo_x + th * np.maximum(hi_x - lo_x, 0.0)
        dy = lo_y + ph * np.maximum(hi_y - lo_y, 0.0)
    ok &= np.isfinite(dx) & np.isfinite(dy)
    plus = np.stack([Xp, Yp, np.maximum(x + dx, 0), np.maximum(y + dy, 0), rp, sp], axis=1)
    minus = np.stack([Xm, Ym, np.maximum(x - dx, 0), np.maximum(y - dy, 0), rm, sm], axis=1)
    return plus, minus, np.abs(dx) * np.abs(dy), ok


def _objective(table: BellmanTable, V: np.ndarray, prm: np.ndarray, depth: int | None = None) -> np.ndarray:
    plus, minus, gain, ok = _split(V, prm, table.Q)
    out = np.full(V.shape[0], -np.inf)
    if ok.any():
        bp = table.evaluate_arrays(*plus[ok].T, depth=depth)
        bm = table.evaluate_arrays(*minus[ok].T, depth=depth)
        out[ok] = 0.5 * (bp + bm) + gain[ok]
    return out


def _maximize(table: BellmanTable, V: np.ndarray, restarts: int, rng: np.random.Generator,
              rounds: int = 40, min_step: float = 1e-5) -> np.ndarray:
    """Best split value per row of ``V``: random starts then coordinate search."""
    n = V.shape[0]
    lo, hi = _param_box(table.Q)
    best_p = np.tile((lo + hi) / 2, (n, 1))
    best_p[:, 4:] = 1.0  # largest x/y separation at the symmetric split
    best_v = _objective(table, V, best_p)
    for _ in range(restarts):
        trial = lo + (hi - lo) * rng.random((n, _N_PARAMS))
        val = _objective(table, V, trial)
        better = val > best_v
        best_p[better], best_v[better] = trial[better], val[better]
    step = np.tile((hi - lo) / 8, (n, 1))
    for _ in range(rounds):
        moved = np.zeros(n, dtype=bool)
        for j in range(_N_PARAMS):
            for sgn in (1.0, -1.0):
                trial = best_p.copy()
                trial[:, j] = np.clip(trial[:, j] + sgn * step[:, j], lo[j], hi[j])
                val = _objective(table, V, trial)
                better = val > best_v + 1e-15
                best_p[better], best_v[better] = trial[better], val[better]
                moved |= better
        step[~moved] *= 0.5
        if np.all(step < min_step):
            break
    return best_v


def _node_points(table: BellmanTable) -> np.ndarray:
    nd = table.nodes()
    r = np.sqrt(nd[:, 2])
    s = nd[:, 2] / r
    return np.stack([np.ones(len(nd)), np.ones(len(nd)), nd[:, 0] * np.sqrt(s), nd[:, 1] * np.sqrt(r), r, s], axis=1)


def bellman_step(table: BellmanTable, v: BellmanPoint, restarts: int = 64, seed: int = 0) -> float:
    """One DP step at ``v``: ``max((B_k(v+) + B_k(v-))/2 + gain)``, never below ``B_k(v)``."""
    if not in_domain(v):
        raise ValueError("point outside the Bellman domain")
    if abs(v.Q - table.Q) > 1e-12 * table.Q:
        raise ValueError("point and table use different Q")
    V = np.array([[v.X, v.Y, v.x, v.y, v.r, v.s]])
    found = _maximize(table, V, restarts, np.random.default_rng(seed))[0]
    return float(max(found, table.evaluate(v)))


def extend_table(table: BellmanTable, restarts: int = 64, seed: int = 0) -> BellmanTable:
    """Append ``b_{k+1}`` at every node (vectorised over nodes)."""
    rng = np.random.default_rng([seed, table.depth])
    found = _maximize(table, _node_points(table), restarts, rng)
    new = np.maximum(found.reshape(table.shape), table.values)
    meta = dict(table.meta)
    meta.update(restarts=restarts, seed=seed)
    return BellmanTable(table.Q, table.xt, table.yt, table.p, table.layers + [new], meta)


def build_table(Q: float, depth: int, n_xy: int = 33, n_p: int = 9, restarts: int = 64,
                seed: int = 0) -> BellmanTable:
    table = BellmanTable.zero(Q, n_xy, n_p)
    for _ in range(depth):
        table = extend_table(table, restarts, seed)
    return table


# -- verification ------------------------------------------------------------------------

@dataclass
class VerificationReport:
    checked: int
    violations: list = field(default_factory=list)
    boundary_points: int = 0  # samples with rs == 1
    max_excess: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_range(table: BellmanTable, c: float, depth: int | None = None) -> VerificationReport:
    """``0 <= B_k <= (1 + c sqrt(Q - 1)) sqrt(XY)`` at every node."""
    b = table.layers[table.depth if depth is None else depth]
    bound = 1.0 + c * np.sqrt(table.Q - 1.0)
    nodes = table.nodes()
    flat = b.ravel()
    excess = np.maximum(flat - bound, -flat)
    bad = np.flatnonzero((flat < 0) | (flat > bound * (1 + 1e-12)) | ~np.isfinite(flat))
    viol = [{"point": nodes[i].tolist(), "value": float(flat[i]), "bound": bound} for i in bad]
    return VerificationReport(flat.size, viol, int(np.sum(nodes[:, 2] == 1.0)), float(np.max(excess)))


def depth_monotone(table: BellmanTable) -> bool:
    return all(np.all(table.layers[k + 1] >= table.layers[k]) for k in range(table.depth))


def sample_triples(table: BellmanTable, samples: int, seed: int = 0):
    """Random admissible ``(v, v+, v-)``, with ``v`` at random scale and position."""
    rng = np.random.default_rng(seed)
    lo, hi = _param_box(table.Q)
    out_v, out_p, out_m, out_g = [], [], [], []
    count = 0
    while count < samples:
        m = 2 * (samples - count) + 16
        red = np.column_stack([rng.random(m), rng.random(m), rng.uniform(1.0, table.Q, m)])
        X, Y, r = np.exp(rng.uniform(-2, 2, (3, m)))
        s = red[:, 2] / r
        V = np.stack([X, Y, red[:, 0] * np.sqrt(X * s), red[:, 1] * np.sqrt(Y * r), r, s], axis=1)
        prm = lo + (hi - lo) * rng.random((m, _N_PARAMS))
        plus, minus, gain, ok = _split(V, prm, table.Q)
        take = np.flatnonzero(ok)[: samples - count]
        out_v.append(V[take]); out_p.append(plus[take]); out_m.append(minus[take]); out_g.append(gain[take])
        count += take.size
    return np.vstack(out_v), np.vstack(out_p), np.vstack(out_m), np.concatenate(out_g)


def verify_midpoint_concavity(table: BellmanTable, samples: int = 10_000, seed: int = 0,
                              slack: float = 1e-6) -> VerificationReport:
    """``B_{k+1}(v) >= (B_k(v+) + B_k(v-))/2 + |dx||dy|/4`` on random triples.

    ``k + 1`` is the table depth.  Each comparison gets ``slack`` plus the
    cell-local interpolation error bounds of the three interpolated values.
    """
    if table.depth < 1:
        raise ValueError("need a table of depth >= 1")
    k = table.depth - 1
    V, P, M, gain = sample_triples(table, samples, seed)
    lhs = table.evaluate_arrays(*V.T, depth=k + 1)
    rhs = 0.5 * (table.evaluate_arrays(*P.T, depth=k) + table.evaluate_arrays(*M.T, depth=k)) + gain
    def err(A, d):
        pts = np.stack([A[:, 2] / np.sqrt(A[:, 0] * A[:, 5]), A[:, 3] / np.sqrt(A[:, 1] * A[:, 4]),
                        A[:, 4] * A[:, 5]], axis=1)
        return np.sqrt(A[:, 0] * A[:, 1]) * table.local_interpolation_error(pts, d)

    tol = slack + err(V, k + 1) + 0.5 * (err(P, k) + err(M, k))
    excess = rhs - lhs - tol
    bad = np.flatnonzero(excess > 0)
    viol = [{"v": V[i].tolist(), "lhs": float(lhs[i]), "rhs": float(rhs[i])} for i in bad]
    on_edge = int(np.sum(np.abs(V[:, 4] * V[:, 5] - 1.0) < 1e-12))
    return VerificationReport(V.shape[0], viol, on_edge, float(np.max(rhs - lhs)))
