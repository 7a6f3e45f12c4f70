"""Sweeps over weight families, sqrt-law fits and result files."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .lattice import DyadicInterval
from .martingale import NonConvergenceError, worst_sigma
from .weights import FAMILIES, InvalidWeightError, a2d_characteristic, epsilon_for_delta, make_family

RESULT_FORMAT = "dyadweight.sweep"
RESULT_VERSION = 1
VOLATILE_KEYS = ("timestamp", "wall_time")


class InsufficientDataError(ValueError):
    pass


class ImpossibleNormError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.  Give ``epsilons`` directly or ``deltas`` (target ``[w]_{A_2^d} - 1``)."""

    family: str
    operator: str = "martingale"  # or "hilbert"
    epsilons: tuple[float, ...] | None = None
    deltas: tuple[float, ...] | None = None
    depth: int = 8
    seed: int = 0
    restarts: int = 2
    interval: tuple[int, int] | None = None  # haar-bump location (level, position)
    grid_n: int = 1 << 12
    half_length: float = 8.0
    trials: int = 8
    tol: float = 1e-8
    output: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.operator not in ("martingale", "hilbert"):
            raise ValueError(f"unknown operator {self.operator!r}")
        if (self.epsilons is None) == (self.deltas is None):
            raise ValueError("give exactly one of epsilons and deltas")
        grid = self.epsilons if self.epsilons is not None else self.deltas
        grid = tuple(float(g) for g in grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("parameter grid must be non-empty and strictly increasing")
        object.__setattr__(self, "epsilons" if self.epsilons is not None else "deltas", grid)
        if self.interval is not None:
            object.__setattr__(self, "interval", tuple(int(v) for v in self.interval))
        if not self.tol > 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1 or self.trials < 1:
            raise ValueError("restarts and trials must be >= 1")

    @property
    def bump_interval(self) -> DyadicInterval | None:
        return DyadicInterval(*self.interval) if self.interval else None

    def epsilon_grid(self) -> tuple[float, ...]:
        if self.epsilons is not None:
            return self.epsilons
        return tuple(epsilon_for_delta(self.family, d, self.seed, self.depth, self.bump_interval)
                     for d in self.deltas)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SqrtFit:
    c: float  # least-squares prefactor of norm - 1 = c delta^b
    b: float
    r2: float
    c_law: float  # max (norm - 1) / sqrt(delta): smallest c with norm <= 1 + c sqrt(delta)
    n: int


@dataclass
class SweepResult:
    config: dict
    records: list[dict]
    fit: SqrtFit | None
    fit_note: str = ""
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {
            "format": RESULT_FORMAT,
            "version": RESULT_VERSION,
            "config": self.config,
            "records": self.records,
            "fit": asdict(self.fit) if self.fit else None,
            "fit_note": self.fit_note,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        if not isinstance(d, dict) or d.get("format") != RESULT_FORMAT:
            raise ValueError("not a sweep result file")
        fit = SqrtFit(**d["fit"]) if d.get("fit") else None
        return cls(d["config"], list(d["records"]), fit, d.get("fit_note", ""), d.get("timestamp", ""))

    def ok_records(self) -> list[dict]:
        return [r for r in self.records if r.get("norm") is not None]


def fit_sqrt_law(records, tol: float = 1e-6, min_delta: float = 0.0) -> SqrtFit:
    """Least squares of ``log(norm - 1) = log c + b log delta``.

    Uses records with ``delta > min_delta`` and ``norm > 1``.  Any norm below
    ``1 - tol`` is rejected: some ``|sigma_I| = 1`` mode always gives norm >= 1.
    """
    pairs = [(float(r["delta"]), float(r["norm"])) for r in records if r.get("norm") is not None]
    bad = [n for _, n in pairs if n < 1.0 - tol]
    if bad:
        raise ImpossibleNormError(f"norm {min(bad):.12g} below 1 - {tol:g}")
    use = [(d, n) for d, n in pairs if d > min_delta and d > 0 and n > 1.0]
    if len(use) < 3:
        raise InsufficientDataError(f"need >= 3 records with delta > 0 and norm > 1, have {len(use)}")
    d = np.array([u[0] for u in use])
    y = np.array([u[1] for u in use]) - 1.0
    lx, ly = np.log(d), np.log(y)
    A = np.column_stack([np.ones_like(lx), lx])
    (a, b), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([a, b])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return SqrtFit(float(np.exp(a)), float(b), r2, float(np.max(y / np.sqrt(d))), len(use))


def _martingale_point(cfg: ExperimentConfig, eps: float) -> dict:
    start = time.perf_counter()
    rec = {"epsilon": eps}
    try:
        w = make_family(cfg.family, eps, cfg.seed, cfg.depth, cfg.bump_interval)
        sigma, est = worst_sigma(w, cfg.restarts, cfg.seed)
        rec.update(delta=a2d_characteristic(w).delta, norm=est.value, sigma=sigma.digest())
    except (InvalidWeightError, NonConvergenceError) as exc:
        rec.update(delta=None, norm=None, error=f"{type(exc).__name__}: {exc}")
    rec["wall_time"] = time.perf_counter() - start
    return rec


def _hilbert_point(cfg: ExperimentConfig, eps: float) -> dict:
    from .continuum import weighted_hilbert_norm

    start = time.perf_counter()
    rec = {"epsilon": eps}
    try:
        w = make_family(cfg.family, eps, cfg.seed, cfg.depth, cfg.bump_interval)
        res = weighted_hilbert_norm(w, cfg.grid_n, cfg.half_length, cfg.trials, cfg.seed, cfg.tol)
        if not res.estimate.converged:
            raise NonConvergenceError("Hilbert norm iteration did not converge")
        rec.update(delta=res.delta, norm=res.value, a2d_delta=a2d_characteristic(w).delta)
    except (InvalidWeightError, NonConvergenceError) as exc:
        rec.update(delta=None, norm=None, error=f"{type(exc).__name__}: {exc}")
    rec["wall_time"] = time.perf_counter() - start
    return rec


def worker_count() -> int:
    env = os.environ.get("DYADWEIGHT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run(cfg: ExperimentConfig, point) -> SweepResult:
    eps = cfg.epsilon_grid()
    workers = min(worker_count(), len(eps))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(point, [cfg] * len(eps), eps))
    else:
        records = [point(cfg, e) for e in eps]
    records.sort(key=lambda r: (r["delta"] is None, r["delta"] or 0.0, r["epsilon"]))
    fit, note = None, ""
    try:
        fit = fit_sqrt_law(records, min_delta=10 * cfg.tol)
    except InsufficientDataError as exc:
        note = f"fit skipped: {exc}"
    return SweepResult(cfg.to_dict(), records, fit, note,
                       datetime.now(timezone.utc).isoformat(timespec="seconds"))


def run_martingale_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Worst-sigma norm against ``[w]_{A_2^d} - 1`` along a family."""
    return _run(cfg, _martingale_point)


def run_hilbert_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Weighted Hilbert norm against the Poisson ``delta_H`` along a family."""
    return _run(cfg, _hilbert_point)


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    return run_hilbert_sweep(cfg) if cfg.operator == "hilbert" else run_martingale_sweep(cfg)


def stable_view(result: dict) -> dict:
    """Result dict without the fields that differ between identical runs."""
    out = {k: v for k, v in result.items() if k not in VOLATILE_KEYS}
    out["records"] = [{k: v for k, v in r.items() if k not in VOLATILE_KEYS} for r in result["records"]]
    return out


# -- files ---------------------------------------------------------------------

def write_results(result: SweepResult, base, svg: bool = False) -> list[Path]:
    """``base.json`` (full), ``base.csv`` (epsilon, delta, norm) and optionally ``base.svg``."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    paths = [base.with_suffix(".json"), base.with_suffix(".csv")]
    paths[0].write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    with open(paths[1], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "delta", "norm"])
        for r in result.records:
            writer.writerow([_num(r["epsilon"]), _num(r["delta"]), _num(r["norm"])])
    if svg:
        paths.append(base.with_suffix(".svg"))
        paths[2].write_text(render_svg([result]))
    return paths


def load_result(path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))


def _num(v) -> str:
    return "" if v is None else f"{float(v):.12g}"


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_svg(results: list[SweepResult], width: int = 640, height: int = 420) -> str:
    """Log-log plot of ``norm - 1`` against ``delta`` with the fitted lines."""
    series = []
    for res in results:
        pts = [(r["delta"], r["norm"] - 1.0) for r in res.ok_records()
               if r["delta"] is not None and r["delta"] > 0 and r["norm"] > 1.0]
        label = f"{res.config.get('operator', '?')}/{res.config.get('family', '?')}"
        series.append((label, pts, res.fit))
    allpts = [p for _, pts, _ in series for p in pts]
    if not allpts:
        raise ValueError("no plottable records")
    lx = [math.log10(p[0]) for p in allpts]
    ly = [math.log10(p[1]) for p in allpts]
    x0, x1 = math.floor(min(lx)), math.ceil(max(lx))
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    x1, y1 = max(x1, x0 + 1), max(y1, y0 + 1)
    ml, mr, mt, mb = 70, 20, 20, 50
    pw, ph = width - ml - mr, height - mt - mb

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<clipPath id="plot"><rect x="{ml}" y="{mt}" width="{pw}" height="{ph}"/></clipPath>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>']
    for k in range(x0, x1 + 1):
        out.append(f'<text x="{X(k):.2f}" y="{height - mb + 18}" text-anchor="middle">1e{k}</text>')
    for k in range(y0, y1 + 1):
        out.append(f'<text x="{ml - 6}" y="{Y(k) + 4:.2f}" text-anchor="end">1e{k}</text>')
    out.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 8}" text-anchor="middle">delta</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.2f}" transform="rotate(-90 14 {mt + ph / 2:.2f})" '
               f'text-anchor="middle">norm - 1</text>')
    for i, (label, pts, fit) in enumerate(series):
        col = _PALETTE[i % len(_PALETTE)]
        for d, e in pts:
            out.append(f'<circle cx="{X(math.log10(d)):.2f}" cy="{Y(math.log10(e)):.2f}" r="3" fill="{col}"/>')
        if fit is not None:
            a, b = math.log10(fit.c), fit.b
            xa, xb = x0, x1
            out.append(f'<line x1="{X(xa):.2f}" y1="{Y(a + b * xa):.2f}" x2="{X(xb):.2f}" '
                       f'y2="{Y(a + b * xb):.2f}" stroke="{col}" stroke-dasharray="4 3" clip-path="url(#plot)"/>')
            label += f" (c={fit.c:.3g}, b={fit.b:.3g})"
        out.append(f'<text x="{ml + 8}" y="{mt + 16 + 16 * i}" fill="{col}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
