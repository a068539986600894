"""Heat extension of fields and point measures, scale ladders, heated weights.

The heat extension is ``Heat[f](x, t) = (4 pi t)^{-d/2} int f(y) exp(-|x-y|^2/4t) dy``,
equivalently the Fourier multiplier ``exp(-4 pi^2 t |xi|^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .field_grid import Field, GridSpec, PointMeasure, VectorPointCharge
from . import io as fio

__all__ = [
    "heat_multiplier",
    "alias_level",
    "heat_extend",
    "heat_at",
    "HeatLadder",
    "build_ladder",
    "semigroup_defect",
    "HeatedWeightSample",
    "EnvelopeViolation",
    "heat_weight",
    "spectral_tail",
]

DEFAULT_ALIAS_TOL = 1e-8


def heat_multiplier(grid: GridSpec, t: float) -> np.ndarray:
    return np.exp(-4.0 * np.pi**2 * t * grid.freq_norm2())


def alias_level(grid: GridSpec, t: float) -> float:
    """Size ``exp(-L^2/4t)`` of the nearest periodic image of the kernel."""
    return math.exp(-grid.L**2 / (4.0 * t))


def _check_time(t):
    if not t > 0:
        raise ValueError("heat time must be positive")


def _spectral(f: Field, t: float, alias_tol: float | None) -> Field:
    if alias_tol is not None and alias_level(f.grid, t) > alias_tol:
        raise ValueError(
            f"periodic images too strong: exp(-L^2/4t) = "
            f"{alias_level(f.grid, t):.2e} exceeds {alias_tol:.1e}"
        )
    axes = tuple(range(1, f.grid.d + 1))
    spec = np.fft.fftn(f.data, axes=axes) * heat_multiplier(f.grid, t)
    return Field(f.grid, np.fft.ifftn(spec, axes=axes).real)


def _gauss_sum(points: np.ndarray, centers: np.ndarray, weights: np.ndarray,
               t: float, chunk: int = 1 << 16) -> np.ndarray:
    """``sum_i w_i K_t(x - y_i)`` for rows ``x`` of ``points``.

    ``weights`` has shape ``(n_centers, ell)``; returns ``(n_points, ell)``.
    """
    d = points.shape[1]
    norm = (4.0 * np.pi * t) ** (-d / 2)
    out = np.empty((points.shape[0], weights.shape[1]))
    per = max(1, chunk // max(1, centers.shape[0]))
    for s in range(0, points.shape[0], per):
        x = points[s:s + per]
        r2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
        out[s:s + per] = np.exp(-r2 / (4.0 * t)) @ weights
    return norm * out


def heat_at(f, x, t: float) -> np.ndarray:
    """Direct Gaussian summation of ``Heat[f](x, t)`` at arbitrary points.

    Parameters
    ----------
    f : Field, PointMeasure or VectorPointCharge
        Grid fields are treated as step data on R^d, zero outside the box.
    x : array_like, shape (n, d)
    t : float

    Returns
    -------
    ndarray, shape (n, ell)
    """
    _check_time(t)
    x = np.atleast_2d(np.asarray(x, float))
    if isinstance(f, PointMeasure):
        return _gauss_sum(x, f.positions, f.masses[:, None], t)
    if isinstance(f, VectorPointCharge):
        base = _gauss_sum(x, f.base.positions, f.base.masses[:, None], t)
        return base * f.direction[None, :]
    g = f.grid
    if math.sqrt(t) < g.h / 2:
        raise ValueError("kernel unresolved for direct evaluation (sqrt(t) < h/2)")
    w = f.data.reshape(f.ell, -1).T * g.cell_volume
    return _gauss_sum(x, g.points(), w, t)


def heat_extend(f, t: float, grid: GridSpec | None = None, backend: str = "spectral",
                alias_tol: float | None = DEFAULT_ALIAS_TOL) -> Field:
    """Heat extension at time ``t`` sampled on a grid.

    Fields use the spectral multiplier by default (``backend='direct'``
    sums Gaussians over nodes instead).  Point measures and vector charges
    are always summed directly and need ``grid``.
    """
    _check_time(t)
    if isinstance(f, (PointMeasure, VectorPointCharge)):
        if grid is None:
            raise ValueError("a target grid is needed for point measures")
        vals = heat_at(f, grid.points(), t)
        return Field(grid, vals.T.reshape((vals.shape[1],) + grid.shape))
    if backend == "spectral":
        return _spectral(f, t, alias_tol)
    if backend == "direct":
        vals = heat_at(f, f.grid.points(), t)
        return Field(f.grid, vals.T.reshape((f.ell,) + f.grid.shape))
    raise ValueError(f"unknown backend {backend!r}")


def spectral_tail(f: Field) -> float:
    """Fraction of spectral L2 energy in the outer quarter of the band."""
    g = f.grid
    axes = tuple(range(1, g.d + 1))
    spec = np.abs(np.fft.fftn(f.data, axes=axes)) ** 2
    total = float(spec.sum())
    if total == 0:
        return 0.0
    nyq = 1.0 / (2.0 * g.h)
    outer = np.sqrt(g.freq_norm2()) > 0.75 * nyq
    return float(spec[:, outer].sum()) / total


@dataclass(frozen=True, eq=False)
class HeatLadder:
    """Levels ``f_k = Heat[f](., A^{-2k})`` for ``k = 0..K``."""

    base: Field
    A: int
    levels: tuple = dc_field(repr=False)
    alias_tol: float | None = DEFAULT_ALIAS_TOL
    resolution: str = "scale"

    @property
    def K(self) -> int:
        return len(self.levels) - 1

    @property
    def grid(self) -> GridSpec:
        return self.base.grid

    def time(self, k: int) -> float:
        return float(self.A) ** (-2 * k)

    def __getitem__(self, k: int) -> Field:
        return self.levels[k]

    def refine_from(self, m: int, k: int) -> Field:
        """Level ``k`` rebuilt from level ``m >= k`` by heating ``A^{-2k} - A^{-2m}``."""
        if m < k:
            raise ValueError("need m >= k")
        if m == k:
            return self.levels[k]
        return heat_extend(self.levels[m], self.time(k) - self.time(m),
                           alias_tol=self.alias_tol)

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for k, lev in enumerate(self.levels):
            fio.write_field(lev, out / f"fk_{k}.bin")
        fio.write_field(self.base, out / "base.bin")
        fio.write_keyvalue(out / "manifest.txt", {
            "A": self.A,
            "K": self.K,
            "alias_tol": self.alias_tol if self.alias_tol is not None else "none",
            "resolution": self.resolution,
            "d": self.grid.d,
            "N": self.grid.N,
            "L": self.grid.L,
            "base_sha256": fio.field_hash(self.base),
        })
        return out

    @classmethod
    def load(cls, directory) -> "HeatLadder":
        src = Path(directory)
        meta = fio.read_keyvalue(src / "manifest.txt")
        K = int(meta["K"])
        levels = tuple(fio.read_field(src / f"fk_{k}.bin") for k in range(K + 1))
        tol = None if meta["alias_tol"] == "none" else float(meta["alias_tol"])
        return cls(fio.read_field(src / "base.bin"), int(meta["A"]), levels, tol,
                   meta.get("resolution", "scale"))


def build_ladder(f: Field, A: int, K: int, resolution: str = "scale",
                 alias_tol: float | None = DEFAULT_ALIAS_TOL,
                 tail_tol: float = 1e-10) -> HeatLadder:
    """Heat ladder with levels at times ``A^{-2k}``.

    ``resolution='scale'`` requires ``A^{-K} >= 2h``, so every cube of side
    ``A^{-K}`` spans at least two nodes.  ``resolution='content'`` instead
    requires the input spectrum to be negligible near the Nyquist band,
    which is enough when only norms of the levels are needed.
    """
    A = int(A)
    if A < 3 or A % 2 == 0:
        raise ValueError("A must be an odd integer >= 3")
    if K < 1:
        raise ValueError("K must be at least 1")
    h = f.grid.h
    if resolution == "scale":
        if float(A) ** (-K) < 2 * h * (1 - 1e-12):
            raise ValueError(
                f"finest scale A^-K = {A ** -K:.3e} is below 2h = {2 * h:.3e}"
            )
    elif resolution == "content":
        tail = spectral_tail(f)
        if tail > tail_tol:
            raise ValueError(f"input not resolved: spectral tail {tail:.2e}")
    else:
        raise ValueError(f"unknown resolution mode {resolution!r}")
    levels = tuple(heat_extend(f, float(A) ** (-2 * k), alias_tol=alias_tol)
                   for k in range(K + 1))
    return HeatLadder(f, A, levels, alias_tol, resolution)


def semigroup_defect(f: Field, s: float, t: float,
                     alias_tol: float | None = DEFAULT_ALIAS_TOL) -> float | None:
    """Relative L2 gap between two-step and one-step heating.

    Returns ``None`` when the reference ``Heat[f](s+t)`` vanishes.
    """
    _check_time(s)
    _check_time(t)
    two = heat_extend(heat_extend(f, s, alias_tol=alias_tol), t, alias_tol=alias_tol)
    one = heat_extend(f, s + t, alias_tol=alias_tol)
    den = float(np.sqrt(np.sum(one.data**2)))
    if den == 0.0:
        return None
    return float(np.sqrt(np.sum((two.data - one.data) ** 2))) / den


class EnvelopeViolation(ValueError):
    """A heated-weight sample left its certified envelope."""

    def __init__(self, point, value, lower, upper):
        self.point = np.asarray(point)
        self.value = value
        super().__init__(
            f"heated weight {value:.6e} at x={self.point} outside "
            f"[{lower:.6e}, {upper:.6e}]"
        )


@dataclass(frozen=True, eq=False)
class HeatedWeightSample:
    points: np.ndarray
    values: np.ndarray
    c_lower: float
    c_upper: float
    theta: float
    t: float

    def envelope(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.linalg.norm(self.points, axis=1)
        base = (1.0 + r) ** (-self.theta)
        return self.c_lower * base, self.c_upper * base


def evaluation_lattice(d: int, radius: float = 12.0, spacing: float = 0.5,
                       far: float = 200.0) -> np.ndarray:
    """Lattice points in a cube plus geometric rays out to ``far``."""
    ax = np.arange(-radius, radius + 1e-9, spacing)
    if d == 1:
        near = ax[:, None]
    else:
        coarse = ax[:: max(1, int(round(1.0 / spacing)))] if d == 3 else ax
        near = np.stack(np.meshgrid(*([coarse] * d), indexing="ij"), -1).reshape(-1, d)
    rs = np.geomspace(radius, far, 12)
    dirs = [np.eye(d)[0], -np.eye(d)[0], np.ones(d) / np.sqrt(d)]
    rays = np.array([r * u for r in rs for u in dirs])
    return np.vstack([near, rays])


def heat_weight(wgt, t: float, points=None, rel_slack: float = 1e-9) -> HeatedWeightSample:
    """Heat a weight and certify two-sided polynomial bounds.

    The weight must satisfy ``c (1+|x|)^-theta <= w <= C (1+|x|)^-theta``.
    Comparing ``1 + |x - y|`` with ``(1 + |x|)(1 + |y|)`` gives certified
    constants ``c E[(1 + sqrt(2t)|Z|)^-theta]`` and ``C E[(1 + sqrt(2t)|Z|)^theta]``
    for a standard Gaussian ``Z``.  Every sample is checked against them.
    """
    from .weights import Heated, envelope_constants, gaussian_moment

    if not 0 < t <= 2:
        raise ValueError("heat time must lie in (0, 2]")
    c, C, theta = envelope_constants(wgt)
    d = wgt.d
    lo = c * gaussian_moment(d, t, -theta)
    hi = C * gaussian_moment(d, t, theta)
    if points is None:
        from .weights import PolyDecay
        spacing = 0.5 if isinstance(getattr(wgt, "base", wgt), PolyDecay) or d == 1 else 1.0
        pts = evaluation_lattice(d, spacing=spacing)
    else:
        pts = np.atleast_2d(points)
    vals = Heated(wgt, t)(pts)
    base = (1.0 + np.linalg.norm(pts, axis=1)) ** (-theta)
    bad_lo = vals < lo * base * (1 - rel_slack)
    bad_hi = vals > hi * base * (1 + rel_slack)
    bad = np.flatnonzero(bad_lo | bad_hi)
    if bad.size:
        i = bad[0]
        raise EnvelopeViolation(pts[i], vals[i], lo * base[i], hi * base[i])
    return HeatedWeightSample(pts, vals, lo, hi, theta, t)
