"""Uniform periodic grids, sampled vector fields and finite atomic measures.

A :class:`GridSpec` covers the box ``[-L, L)^d`` with ``N`` nodes per axis.
A :class:`Field` stores ``ell`` real components per node in component-major
order, so ``field.data`` has shape ``(ell, N, ..., N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import math

import numpy as np

__all__ = [
    "GridSpec",
    "Field",
    "PointMeasure",
    "VectorPointCharge",
    "make_grid",
    "quadrature",
    "boundary_mass",
    "check_boundary_decay",
    "gen_gradient_field",
    "gen_divfree_field",
    "gen_near_delta",
    "gen_bump",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L, L)^d``.

    Attributes
    ----------
    d : int
        Spatial dimension, 1 to 3.
    N : int
        Samples per axis, even and at least 16.
    L : float
        Box half-width.
    """

    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if self.N % 2:
            raise ValueError("N must be even")
        if self.N < 16:
            raise ValueError("N must be at least 16")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis: ``-L + i h``."""
        return -self.L + self.h * np.arange(self.N)

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        ax = self.axis()
        return np.meshgrid(*([ax] * self.d), indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes as an ``(N**d, d)`` array in row-major node order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def radius(self, center=None) -> np.ndarray:
        """Euclidean distance of every node from ``center``."""
        c = np.zeros(self.d) if center is None else np.asarray(center, float)
        r2 = sum((m - ci) ** 2 for m, ci in zip(self.mesh(), c))
        return np.sqrt(r2)

    def frequencies(self) -> list[np.ndarray]:
        """Frequency arrays ``n / (2L)`` per axis in FFT order."""
        f = np.fft.fftfreq(self.N, d=self.h)
        return np.meshgrid(*([f] * self.d), indexing="ij")

    def freq_norm2(self) -> np.ndarray:
        """``|xi|^2`` on the frequency lattice, FFT order."""
        return sum(f * f for f in self.frequencies())


def make_grid(d: int, N: int, L: float) -> GridSpec:
    """Build a validated grid; node ``i`` sits at ``-L + i*h``."""
    return GridSpec(int(d), int(N), float(L))


@dataclass(frozen=True, eq=False)
class Field:
    """Real vector field sampled on a grid.

    ``data`` has shape ``(ell,) + grid.shape`` and is stored read-only.
    """

    grid: GridSpec
    data: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.shape == self.grid.shape:
            arr = arr[None]
        if arr.ndim != self.grid.d + 1 or arr.shape[1:] != self.grid.shape:
            raise ValueError(
                f"data shape {arr.shape} does not match grid {self.grid.shape}"
            )
        if arr.shape[0] < 1:
            raise ValueError("a field needs at least one component")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field samples must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def ell(self) -> int:
        return self.data.shape[0]

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm over components."""
        if self.ell == 1:
            return np.abs(self.data[0])
        return np.sqrt(np.sum(self.data * self.data, axis=0))

    def with_data(self, data) -> "Field":
        return Field(self.grid, data)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.data + other.data)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.data - other.data)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.data * float(c))

    __rmul__ = __mul__


def _same_grid(a: Field, b: Field):
    if a.grid != b.grid or a.ell != b.ell:
        raise ValueError("fields live on different grids or component counts")


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Finite nonnegative atomic measure ``sum_i m_i delta_{x_i}``."""

    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        m = np.atleast_1d(np.asarray(self.masses, dtype=np.float64))
        if pos.shape[0] == 0 or m.shape[0] != pos.shape[0]:
            raise ValueError("positions and masses must be non-empty and match")
        if pos.shape[1] not in (1, 2, 3):
            raise ValueError("positions must have 1 to 3 coordinates")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(m))):
            raise ValueError("positions and masses must be finite")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        pos.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", m)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def scaled(self, c: float) -> "PointMeasure":
        return PointMeasure(self.positions, self.masses * c)

    def shifted(self, v) -> "PointMeasure":
        return PointMeasure(self.positions + np.asarray(v, float), self.masses)

    @classmethod
    def delta(cls, d: int, at=None, mass: float = 1.0) -> "PointMeasure":
        x = np.zeros((1, d)) if at is None else np.asarray(at, float).reshape(1, d)
        return cls(x, [mass])


@dataclass(frozen=True, eq=False)
class VectorPointCharge:
    """Rank-one charge ``a (x) mu`` with unit direction ``a``."""

    direction: np.ndarray
    base: PointMeasure

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.direction, dtype=np.float64))
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")
        a.flags.writeable = False
        object.__setattr__(self, "direction", a)

    @property
    def ell(self) -> int:
        return self.direction.shape[0]


def quadrature(f: Field) -> np.ndarray:
    """Rectangle rule ``h^d * sum`` per component.

    numpy reduces contiguous data by pairwise summation, so the result does
    not depend on how the work is scheduled.
    """
    flat = np.ascontiguousarray(f.data).reshape(f.ell, -1)
    return f.grid.cell_volume * np.sum(flat, axis=1)


def boundary_mass(f: Field) -> float:
    """Mass of ``|f|`` on nodes within one spacing of the box boundary."""
    g = f.grid
    ax = g.axis()
    edge = (ax < -g.L + g.h * 1.5) | (ax > g.L - g.h * 1.5)
    mask = np.zeros(g.shape, dtype=bool)
    for a in range(g.d):
        shape = [1] * g.d
        shape[a] = g.N
        mask |= edge.reshape(shape)
    return float(g.cell_volume * np.sum(f.magnitude()[mask]))


def check_boundary_decay(f: Field, tol: float) -> None:
    """Reject fields whose mass near the box boundary exceeds ``tol``."""
    m = boundary_mass(f)
    if m > tol:
        raise ValueError(
            f"field mass within one spacing of the boundary is {m:.3e} > {tol:.1e}"
        )


def _unit(direction, ell):
    a = np.zeros(ell) if direction is None else np.asarray(direction, float)
    if direction is None:
        a[0] = 1.0
    if a.shape != (ell,):
        raise ValueError("direction must have ell entries")
    n = np.linalg.norm(a)
    if abs(n - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return a


def gen_bump(grid: GridSpec, center=None, width: float = 1.0,
             amplitude: float = 1.0) -> np.ndarray:
    """Samples of ``amplitude * exp(-|x-c|^2 / (2 width^2))``."""
    if width < 4 * grid.h:
        raise ValueError("under-resolved bump")
    r = grid.radius(center)
    return amplitude * np.exp(-0.5 * (r / width) ** 2)


def gen_gradient_field(grid: GridSpec, center=None, width: float = 1.0,
                       amplitude: float = 1.0) -> Field:
    """Analytic gradient of a Gaussian bump, ``ell = d`` components."""
    b = gen_bump(grid, center, width, amplitude)
    c = np.zeros(grid.d) if center is None else np.asarray(center, float)
    comps = [-(m - ci) / width**2 * b for m, ci in zip(grid.mesh(), c)]
    return Field(grid, np.stack(comps))


def gen_divfree_field(grid: GridSpec, center=None, width: float = 1.0,
                      amplitude: float = 1.0) -> Field:
    """Rotated gradient ``(d_y psi, -d_x psi)`` of a Gaussian stream bump."""
    if grid.d != 2:
        raise ValueError("stream-function generator requires d=2")
    psi = gen_bump(grid, center, width, amplitude)
    c = np.zeros(2) if center is None else np.asarray(center, float)
    x, y = grid.mesh()
    dpsi_dx = -(x - c[0]) / width**2 * psi
    dpsi_dy = -(y - c[1]) / width**2 * psi
    return Field(grid, np.stack([dpsi_dy, -dpsi_dx]))


def gen_near_delta(grid: GridSpec, sigma: float, ell: int = 1, direction=None,
                   center=None) -> Field:
    """``a (x) g_sigma`` with ``g_sigma`` the unit-mass Gaussian of std ``sigma``."""
    if sigma < 2 * grid.h:
        raise ValueError("under-resolved delta approximation")
    a = _unit(direction, ell)
    r = grid.radius(center)
    g = np.exp(-0.5 * (r / sigma) ** 2)
    # discrete unit mass: absorbs the truncation of wide Gaussians by the box
    g /= grid.cell_volume * math.fsum(g.ravel())
    return Field(grid, a.reshape((ell,) + (1,) * grid.d) * g[None])
