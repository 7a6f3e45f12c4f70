"""Grid functions on the line, the Hilbert transform and half-plane extensions.

A :class:`GridFunction` samples a function at ``x_j = -L + j * 2L/n``; the
sample is treated as the value on the cell ``[x_j - h/2, x_j + h/2)``, and a
constant ``exterior`` value is assumed outside ``[-L, L)``.  Poisson and heat
extensions convolve this piecewise-constant function with cell-integrated
kernels, so they are exact for the step model and the kernel mass is
accounted for analytically.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import erf

from .martingale import NormEstimate, lanczos_top, power_iteration
from .weights import Characteristic, QuadratureSpec, Weight, poisson_characteristic

DEFAULT_L = 8.0
DEFAULT_N = 1 << 12


class SupportWarning(UserWarning):
    pass


class GridTooCoarseError(RuntimeError):
    pass


class KernelMassError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridFunction:
    samples: np.ndarray
    half_length: float = DEFAULT_L
    exterior: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 2 or s.size & (s.size - 1):
            raise ValueError("need a power-of-two number of samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def h(self) -> float:
        return 2.0 * self.half_length / self.n

    @property
    def x(self) -> np.ndarray:
        return -self.half_length + self.h * np.arange(self.n)

    @classmethod
    def from_callable(cls, fn, n: int = DEFAULT_N, half_length: float = DEFAULT_L,
                      exterior: float = 0.0) -> "GridFunction":
        x = -half_length + (2.0 * half_length / n) * np.arange(n)
        return cls(np.asarray(fn(x), dtype=float) * np.ones(n), half_length, exterior)

    def with_samples(self, samples) -> "GridFunction":
        return GridFunction(samples, self.half_length, self.exterior)

    def integral(self) -> float:
        return float(self.samples.sum() * self.h)

    def inner(self, other: "GridFunction") -> float:
        return float(np.dot(self.samples, other.samples) * self.h)

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def padded(self, factor: int) -> "GridFunction":
        """Same function on ``[-factor L, factor L)`` with exterior samples filled in."""
        if factor == 1:
            return self
        n = self.n * factor
        s = np.full(n, self.exterior)
        start = (n - self.n) // 2
        s[start:start + self.n] = self.samples
        return GridFunction(s, self.half_length * factor, self.exterior)

    def cropped(self, n: int) -> "GridFunction":
        start = (self.n - n) // 2
        return GridFunction(self.samples[start:start + n], self.half_length * n / self.n, self.exterior)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for xi, vi in zip(self.x, self.samples):
                writer.writerow([repr(float(xi)), repr(float(vi))])

    @classmethod
    def from_csv(cls, path, exterior: float = 0.0) -> "GridFunction":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        n = data.shape[0]
        half = -data[0, 0]
        if not np.allclose(data[:, 0], -half + (2 * half / n) * np.arange(n), rtol=0, atol=1e-12 * max(half, 1)):
            raise ValueError("x column is not a uniform grid starting at -L")
        return cls(data[:, 1], half, exterior)


def _check_support(f: GridFunction) -> None:
    peak = np.abs(f.samples).max()
    edge = max(abs(f.samples[0]), abs(f.samples[-1]))
    if peak > 0 and edge > 1e-6 * peak:
        warnings.warn(f"function does not decay at the domain edge ({edge:.3g} vs max {peak:.3g})",
                      SupportWarning, stacklevel=3)


def hilbert_multiplier(n: int) -> np.ndarray:
    """``-i sgn(xi)`` on the rfft frequencies; zero at DC and Nyquist."""
    m = np.full(n // 2 + 1, -1j)
    m[0] = 0.0
    if n % 2 == 0:
        m[-1] = 0.0
    return m


def hilbert_transform(f: GridFunction, mode: str = "spectral", pad: int = 1) -> GridFunction:
    """``Hf(x) = (1/pi) p.v. int f(y) / (x - y) dy`` on the grid.

    ``spectral`` applies ``-i sgn(xi)`` to the (optionally zero-padded)
    periodic grid.  ``pv`` is the singularity-skipping rule that sums over
    the nodes at odd offsets with doubled weight,
    ``(2/pi) sum_{i-j odd} f_j / (i - j)``, evaluated as a linear
    convolution with no periodisation.
    """
    _check_support(f)
    if mode == "spectral":
        g = f.padded(pad) if pad > 1 else f
        out = np.fft.irfft(np.fft.rfft(g.samples) * hilbert_multiplier(g.n), g.n)
        res = GridFunction(out, g.half_length, 0.0)
        return res.cropped(f.n) if pad > 1 else res
    if mode == "pv":
        m = np.arange(-(f.n - 1), f.n)
        kern = np.zeros(m.size)
        odd = m % 2 != 0
        kern[odd] = 2.0 / (np.pi * m[odd])
        out = fftconvolve(f.samples, kern)[f.n - 1:2 * f.n - 1]
        return GridFunction(out, f.half_length, 0.0)
    raise ValueError(f"unknown mode {mode!r}")


def periodization_bound(f: GridFunction, x_max: float | None = None) -> float:
    """Bound on |spectral - line| Hilbert transform for |x| <= x_max.

    Uses ``||f||_1 * sup |K_per(u) - 1/(pi u)|`` over the separations
    ``|u| <= x_max + support radius``, where ``K_per`` is the period-2L
    cotangent kernel.
    """
    big = np.abs(f.samples) > 1e-12 * np.abs(f.samples).max()
    if not big.any():
        return 0.0
    radius = np.abs(f.x[big]).max()
    x_max = radius if x_max is None else x_max
    u_max = min(x_max + radius, 2 * f.half_length * 0.999)
    u = np.linspace(1e-6, u_max, 4001)
    L2 = 2.0 * f.half_length
    diff = np.abs(np.cos(np.pi * u / L2) / np.sin(np.pi * u / L2) / L2 - 1.0 / (np.pi * u))
    return float(np.abs(f.samples).sum() * f.h * diff.max())


# -- half-plane extensions ------------------------------------------------------

@dataclass(frozen=True)
class HalfPlaneGrid:
    """Log-spaced ``t`` values with trapezoid-in-``log t`` weights.

    Extensions are evaluated on the function's grid widened ``pad`` times.
    """

    t: np.ndarray
    pad: int = 4
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("t must be positive and strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def log_spaced(cls, t_min: float = 1e-3, t_max: float = 32.0, n_t: int = 96, pad: int = 4):
        return cls(np.geomspace(t_min, t_max, n_t), pad)

    def _log_weights(self) -> np.ndarray:
        s = np.log(self.t)
        wts = np.zeros_like(s)
        ds = np.diff(s)
        wts[:-1] += ds / 2
        wts[1:] += ds / 2
        return wts

    @property
    def weights_dt(self) -> np.ndarray:
        """Weights for ``int g dt`` (``dt = t dlog t``)."""
        return self._log_weights() * self.t

    @property
    def weights_t_dt(self) -> np.ndarray:
        """Weights for ``int g t dt``."""
        return self._log_weights() * self.t ** 2


def _poisson_pdf(s, t):
    return t / (np.pi * (t * t + s * s))


def _heat_pdf(s, t):
    return np.exp(-s * s / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)


def _kernel_cells(kind: str, deriv: str | None, d: np.ndarray, h: float, t: float) -> np.ndarray:
    """Kernel (or its x/t derivative) integrated over the cell of width h at offset d."""
    a, b = d - 0.5 * h, d + 0.5 * h
    if kind == "poisson":
        if deriv is None:
            return (np.arctan(b / t) - np.arctan(a / t)) / np.pi
        if deriv == "x":
            return _poisson_pdf(b, t) - _poisson_pdf(a, t)
        return (a / (t * t + a * a) - b / (t * t + b * b)) / np.pi
    if kind == "heat":
        s = 2.0 * np.sqrt(t)
        if deriv is None:
            return 0.5 * (erf(b / s) - erf(a / s))
        if deriv == "x":
            return _heat_pdf(b, t) - _heat_pdf(a, t)
        return (a * _heat_pdf(a, t) - b * _heat_pdf(b, t)) / (2.0 * t)
    raise ValueError(f"unknown kernel {kind!r}")


def _tail_mass(kind: str, radius: float, t: float) -> float:
    if kind == "poisson":
        return 1.0 - 2.0 / np.pi * np.arctan(radius / t)
    return 1.0 - float(erf(radius / (2.0 * np.sqrt(t))))


def extend(f: GridFunction, grid: HalfPlaneGrid, kind: str = "poisson",
           deriv: str | None = None, mass_tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Poisson/heat extension (or ``d/dx``, ``d/dt`` of it) on the padded grid.

    Returns ``(x, field)`` with ``field`` of shape ``(n_t, n_x)``.
    """
    g = f.padded(grid.pad)
    ne, h = g.n, g.h
    data = np.zeros(ne)
    start = (ne - f.n) // 2
    data[start:start + f.n] = f.samples
    inside = np.zeros(ne)
    inside[start:start + f.n] = 1.0
    offsets = h * np.arange(-(ne - 1), ne)
    out = np.empty((grid.t.size, ne))
    for i, t in enumerate(grid.t):
        k = _kernel_cells(kind, deriv, offsets, h, t)
        if deriv is None:
            err = abs(k.sum() + _tail_mass(kind, (ne - 0.5) * h, t) - 1.0)
            if err > mass_tol:
                raise KernelMassError(f"{kind} kernel mass off by {err:.3g} at t={t:.3g}")
        val = fftconvolve(data, k)[ne - 1:2 * ne - 1]
        if f.exterior != 0.0:
            in_mass = fftconvolve(inside, k)[ne - 1:2 * ne - 1]
            val = val + f.exterior * ((1.0 if deriv is None else 0.0) - in_mass)
        out[i] = val
    return g.x, out


def poisson_extend(f: GridFunction, grid: HalfPlaneGrid) -> np.ndarray:
    return extend(f, grid, "poisson")[1]


def heat_extend(f: GridFunction, grid: HalfPlaneGrid) -> np.ndarray:
    return extend(f, grid, "heat")[1]


def _gradients(f: GridFunction, grid: HalfPlaneGrid, kind: str, mode: str):
    if mode == "kernel":
        _, gx = extend(f, grid, kind, "x")
        _, gt = extend(f, grid, kind, "t")
        return gx, gt
    x, u = extend(f, grid, kind)
    gx = np.gradient(u, x[1] - x[0], axis=1)
    gt = np.gradient(u, grid.t, axis=0)
    return gx, gt


@dataclass(frozen=True)
class PairingResult:
    lhs: float
    rhs: float
    slack: float = 1e-2
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + self.slack) + 1e-14

    @property
    def mismatch(self) -> float:
        """Relative gap ``|lhs - rhs| / max(|lhs|, |rhs|)``."""
        scale = max(abs(self.lhs), abs(self.rhs))
        return abs(self.lhs - self.rhs) / scale if scale > 0 else 0.0


def _x_weight(grid_x: np.ndarray) -> float:
    return float(grid_x[1] - grid_x[0])


def pairing_inequality(phi: GridFunction, psi: GridFunction, grid: HalfPlaneGrid | None = None,
                       mode: str = "fd", slack: float = 1e-2, cauchy_tol: float = 5e-2) -> PairingResult:
    """Both sides of ``|int H(phi) psi| <= int int |grad phi^H| |grad psi^H| t dt dx``.

    Gradients are centred differences (``mode="fd"``) or differentiated
    kernels (``mode="kernel"``).  In ``fd`` mode the right side is also
    computed with differentiated kernels; a relative disagreement above
    ``cauchy_tol`` raises :class:`GridTooCoarseError`.
    """
    grid = grid or HalfPlaneGrid.log_spaced()
    lhs = abs(hilbert_transform(phi, "pv").inner(psi))

    def rhs_for(m):
        px, pt = _gradients(phi, grid, "poisson", m)
        qx, qt = _gradients(psi, grid, "poisson", m)
        dens = np.hypot(px, pt) * np.hypot(qx, qt)
        x = phi.padded(grid.pad).x
        return float(grid.weights_t_dt @ dens.sum(axis=1) * _x_weight(x))

    rhs = rhs_for(mode)
    meta = {"mode": mode, "t_range": [float(grid.t[0]), float(grid.t[-1])], "n_t": int(grid.t.size)}
    if mode == "fd" and lhs + rhs > 0:
        ref = rhs_for("kernel")
        meta["kernel_rhs"] = ref
        if abs(rhs - ref) > cauchy_tol * max(abs(ref), 1e-300):
            raise GridTooCoarseError(f"finite-difference rhs {rhs:.6g} vs kernel rhs {ref:.6g}")
    # |grad P_t| = 1/(pi r^2) gives int_T^inf <= ||phi||_1 ||psi||_1 / (2 pi T)
    l1 = np.abs(phi.samples).sum() * phi.h * np.abs(psi.samples).sum() * psi.h
    meta["t_tail_bound"] = float(l1 / (2 * np.pi * grid.t[-1]))
    return PairingResult(lhs, rhs, slack, meta)


def littlewood_paley_pairing(phi: GridFunction, psi: GridFunction, grid: HalfPlaneGrid | None = None) -> tuple[float, float]:
    """``(int phi psi, 2 int int grad phi^H . grad psi^H t dt dx)``, kernel gradients.

    The identity behind the half-plane pairing; its factor 2 is what the
    constant-1 pairing inequality drops.  Beyond ``t_max`` both extensions
    are close to ``(int f) P_t``, whose contribution
    ``(int phi)(int psi) / (pi t_max)`` is added.
    """
    grid = grid or HalfPlaneGrid.log_spaced()
    px, pt = _gradients(phi, grid, "poisson", "kernel")
    qx, qt = _gradients(psi, grid, "poisson", "kernel")
    x = phi.padded(grid.pad).x
    rhs = 2.0 * float(grid.weights_t_dt @ (px * qx + pt * qt).sum(axis=1) * _x_weight(x))
    rhs += phi.integral() * psi.integral() / (np.pi * float(grid.t[-1]))
    return phi.inner(psi), float(rhs)


def heat_pairing_identity(phi: GridFunction, psi: GridFunction, grid: HalfPlaneGrid | None = None,
                          mode: str = "fd") -> PairingResult:
    """``int phi psi dx`` against ``2 int int d_x phi^h d_x psi^h dx dt``.

    In one dimension the square of the Riesz transform is ``-Identity``, so
    the heat-flow pairing lemma reduces to this identity.  The ``t``
    integral over the grid uses the trapezoid rule in ``log t``; the pieces
    below ``t_min`` and above ``t_max`` are added analytically:
    ``t_min * int phi' psi'`` and ``(1/2) int phi^h psi^h (x, t_max) dx``.
    """
    grid = grid or HalfPlaneGrid.log_spaced()
    lhs = phi.inner(psi)
    x, u = extend(phi, grid, "heat")
    _, v = extend(psi, grid, "heat")
    dx = _x_weight(x)
    if mode == "kernel":
        _, ux = extend(phi, grid, "heat", "x")
        _, vx = extend(psi, grid, "heat", "x")
    else:
        ux = np.gradient(u, dx, axis=1)
        vx = np.gradient(v, dx, axis=1)
    body = 2.0 * float(grid.weights_dt @ (ux * vx).sum(axis=1) * dx)
    head = 2.0 * float(grid.t[0]) * float(np.dot(np.gradient(phi.samples, phi.h), np.gradient(psi.samples, psi.h)) * phi.h)
    tail = float(np.dot(u[-1], v[-1]) * dx)
    if mode == "fd":
        ref = 2.0 * float(grid.weights_dt @ (extend(phi, grid, "heat", "x")[1]
                                             * extend(psi, grid, "heat", "x")[1]).sum(axis=1) * dx)
        if abs(ref - body) > 5e-2 * max(abs(ref), 1e-12):
            raise GridTooCoarseError(f"finite-difference body {body:.6g} vs kernel body {ref:.6g}")
    meta = {"body": body, "head": head, "tail": tail, "mode": mode, "n_t": int(grid.t.size)}
    return PairingResult(lhs, body + head + tail, 0.0, meta)


# -- weighted Hilbert norm ----------------------------------------------------------

def weight_on_grid(w: Weight, n: int = DEFAULT_N, half_length: float = DEFAULT_L) -> np.ndarray:
    """Sample the even-reflected (period 2) extension of ``w`` at cell midpoints."""
    x = -half_length + (2.0 * half_length / n) * (np.arange(n) + 0.5)
    y = np.mod(x, 2.0)
    y = np.where(y >= 1.0, 2.0 - y, y)
    idx = np.minimum((y * w.n_leaves).astype(int), w.n_leaves - 1)
    return w.values[idx]


@dataclass(frozen=True)
class HilbertNormResult:
    estimate: NormEstimate
    characteristic: Characteristic
    n: int
    half_length: float

    @property
    def value(self) -> float:
        return self.estimate.value

    @property
    def delta(self) -> float:
        return self.characteristic.delta


def weighted_hilbert_norm(w: Weight, n: int = DEFAULT_N, half_length: float = DEFAULT_L,
                          trials: int = 8, seed: int = 0, tol: float = 1e-8,
                          method: str = "lanczos", max_iter: int = 20_000,
                          quad: QuadratureSpec | None = None) -> HilbertNormResult:
    """Lower estimate of ``||H||_{L2(w) -> L2(w)}`` on the periodic grid.

    ``M = W^{1/2} H W^{-1/2}`` with ``H`` the spectral multiplier.  The
    largest eigenvalue of ``M^T M`` is found from the best of ``trials``
    random starts by Lanczos (default) or plain power iteration.
    """
    wg = weight_on_grid(w, n, half_length)
    sw = np.sqrt(wg)
    mult = hilbert_multiplier(n)

    def H(v):
        return np.fft.irfft(np.fft.rfft(v) * mult, n)

    def mtm(x):
        # H^T = -H
        return -H(wg * H(x / sw)) / sw

    rng = np.random.default_rng(seed)
    best_x, best_q = None, -np.inf
    for _ in range(trials):
        x = rng.standard_normal(n)
        q = float(x @ mtm(x)) / float(x @ x)
        if q > best_q:
            best_x, best_q = x, q
    if method == "lanczos":
        lam, _, its, ok = lanczos_top(mtm, n, best_x, tol, max_iter)
        res = tol if ok else np.inf
    elif method == "power":
        lam, _, its, res, ok = power_iteration(mtm, best_x, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    lam = max(lam, best_q)
    est = NormEstimate(float(np.sqrt(max(lam, 0.0))), method if method == "lanczos" else "power-iteration",
                       its, float(res), ok)
    return HilbertNormResult(est, poisson_characteristic(w, quad), n, half_length)


def field_to_csv(path, x: np.ndarray, t: np.ndarray, values: np.ndarray) -> None:
    """Half-plane field as ``(x, t, value)`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "t", "value"])
        for i, ti in enumerate(t):
            for xj, vij in zip(x, values[i]):
                writer.writerow([repr(float(xj)), repr(float(ti)), repr(float(vij))])


def random_bump_pairs(count: int, seed: int = 0, n: int = DEFAULT_N,
                      half_length: float = DEFAULT_L) -> list[tuple[GridFunction, GridFunction]]:
    """Seeded pairs of sums of one to three Gaussian bumps centred in ``[-3, 3]``."""
    rng = np.random.default_rng(seed)

    def bump():
        k = int(rng.integers(1, 4))
        c, wd = rng.uniform(-3, 3, k), rng.uniform(0.3, 1.5, k)
        a = rng.choice([-1.0, 1.0], k) * rng.uniform(0.5, 1.5, k)
        return GridFunction.from_callable(
            lambda x: sum(a[i] * np.exp(-((x - c[i]) / wd[i]) ** 2) for i in range(k)), n, half_length)

    return [(bump(), bump()) for _ in range(count)]


def gaussian(center: float = 0.0, width: float = 1.0, amplitude: float = 1.0):
    return lambda x: amplitude * np.exp(-((x - center) / width) ** 2)
