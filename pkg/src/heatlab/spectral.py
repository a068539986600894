"""Fourier transforms, Riesz potentials, band filters and the cancellation check.

The continuous transform is ``fhat(xi) = int f(x) exp(-2 pi i <xi, x>) dx``.
On a grid with nodes ``-L + i h`` the discrete version is
``fhat[n] = h^d (-1)^{|n|} FFT(f)[n]`` at frequencies ``n / (2L)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .field_grid import Field, GridSpec

__all__ = [
    "Spectrum",
    "dft",
    "idft",
    "apply_multiplier",
    "RieszResult",
    "riesz_potential",
    "BandFilter",
    "besov_band",
    "band_is_resolvable",
    "SymbolMap",
    "gradient_symbol",
    "divfree_symbol",
    "identity_symbol",
    "builtin_symbol",
    "load_symbol_csv",
    "sphere_samples",
    "CancellationResult",
    "cancellation_defect",
]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex spectrum of a field, FFT ordering, shape ``(ell,) + grid.shape``."""

    grid: GridSpec
    values: np.ndarray

    @property
    def cell(self) -> float:
        """Measure of one frequency cell, ``(2L)^{-d}``."""
        return (2.0 * self.grid.L) ** (-self.grid.d)

    def frequencies(self) -> list[np.ndarray]:
        return self.grid.frequencies()


def _phase(grid: GridSpec) -> np.ndarray:
    n = np.fft.fftfreq(grid.N, d=1.0 / grid.N).astype(np.int64)
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    out = np.ones(grid.shape)
    for a in range(grid.d):
        shape = [1] * grid.d
        shape[a] = grid.N
        out = out * sign.reshape(shape)
    return out


def _axes(grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(1, grid.d + 1))


def dft(f: Field) -> Spectrum:
    """Grid approximation of the continuous Fourier transform."""
    g = f.grid
    vals = np.fft.fftn(f.data, axes=_axes(g)) * (g.cell_volume * _phase(g))
    return Spectrum(g, vals)


def idft(s: Spectrum) -> Field:
    """Inverse of :func:`dft`; returns the real part."""
    g = s.grid
    vals = s.values * (_phase(g) / g.cell_volume)
    return Field(g, np.fft.ifftn(vals, axes=_axes(g)).real)


def apply_multiplier(f: Field, mult: np.ndarray) -> Field:
    """Apply a real, even Fourier multiplier given on the FFT lattice."""
    axes = _axes(f.grid)
    spec = np.fft.fftn(f.data, axes=axes)
    return Field(f.grid, np.fft.ifftn(spec * mult, axes=axes).real)


@dataclass(frozen=True)
class RieszResult:
    field: Field
    dc_truncated: bool


def riesz_potential(f: Field, alpha: float, mean_tol: float = 1e-8) -> RieszResult:
    """Multiplier ``|xi|^{-alpha}`` with the zero frequency removed.

    Inputs whose per-component mean exceeds ``mean_tol`` (relative to the
    L1 mass) are flagged as DC-truncated.
    """
    g = f.grid
    if not 0 < alpha < g.d:
        raise ValueError(f"alpha must lie in (0, {g.d})")
    r2 = g.freq_norm2()
    mult = np.zeros_like(r2)
    nz = r2 > 0
    mult[nz] = r2[nz] ** (-alpha / 2)
    axes = _axes(g)
    mass = g.cell_volume * np.sum(np.abs(f.data))
    means = g.cell_volume * np.abs(f.data.reshape(f.ell, -1).sum(axis=1))
    flagged = bool(np.any(means > mean_tol * max(mass, np.finfo(float).tiny)))
    out = np.fft.ifftn(np.fft.fftn(f.data, axes=axes) * mult, axes=axes).real
    return RieszResult(Field(g, out), flagged)


def _taper(r: np.ndarray) -> np.ndarray:
    """Smooth radial profile: 1 on [0, 1], 0 on [2, inf)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r <= 1.0] = 1.0
    mid = (r > 1.0) & (r < 2.0)
    s = r[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - s * s))
    return out


@dataclass(frozen=True)
class BandFilter:
    """Littlewood-Paley profile with plateau ``r0`` and support ``r1``.

    The profile is ``1`` on ``[0, r0]`` and ``0`` on ``[r1, inf)`` with a
    smooth taper between; band ``k`` is ``psi(xi/A^k) - psi(xi/A^(k-1))``.
    """

    A: float = 3.0
    r0: float = 1.0
    r1: float = 2.0

    def __post_init__(self):
        if not 0 < self.r0 < self.r1:
            raise ValueError("need 0 < r0 < r1")
        if self.A <= 1:
            raise ValueError("band base must exceed 1")

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return _taper(1.0 + (r - self.r0) / (self.r1 - self.r0))

    def band_multiplier(self, grid: GridSpec, k: int) -> np.ndarray:
        r = np.sqrt(grid.freq_norm2())
        return self.profile(r / self.A**k) - self.profile(r / self.A ** (k - 1))

    def lowpass_multiplier(self, grid: GridSpec, k: int) -> np.ndarray:
        return self.profile(np.sqrt(grid.freq_norm2()) / self.A**k)


def band_is_resolvable(grid: GridSpec, k: int, filt: BandFilter) -> bool:
    nyquist = 1.0 / (2.0 * grid.h)
    return filt.A**k * filt.r1 <= nyquist * (1 + 1e-12)


def besov_band(f: Field, k: int, filt: BandFilter) -> Field:
    """Band-pass piece ``f * (psi_k - psi_{k-1})``."""
    if not band_is_resolvable(f.grid, k, filt):
        raise ValueError(f"band {k} is not resolvable on this grid")
    return apply_multiplier(f, filt.band_multiplier(f.grid, k))


@dataclass(frozen=True)
class SymbolMap:
    """Map from unit directions to ``ell x k`` bases of a subspace.

    ``basis(zeta)`` returns a full-column-rank matrix whose columns span
    the subspace attached to ``zeta``.  ``samples`` optionally pins the
    directions the map is known at (used for maps loaded from files).
    """

    d: int
    ell: int
    k: int
    basis: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    samples: np.ndarray | None = None


def gradient_symbol(d: int) -> SymbolMap:
    return SymbolMap(d, d, 1, lambda z: np.asarray(z, float).reshape(d, 1), "gradient")


def _perp_basis(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, float)
    d = z.size
    # complete z to an orthonormal basis; the last d-1 columns span z-perp
    q, _ = np.linalg.qr(np.column_stack([z, np.eye(d)]))
    return q[:, 1:d]


def divfree_symbol(d: int) -> SymbolMap:
    if d < 2:
        raise ValueError("divergence-free symbol needs d >= 2")
    return SymbolMap(d, d, d - 1, _perp_basis, "divfree")


def identity_symbol(d: int, ell: int) -> SymbolMap:
    return SymbolMap(d, ell, ell, lambda z: np.eye(ell), "identity")


def builtin_symbol(name: str, d: int, ell: int | None = None) -> SymbolMap:
    name = name.strip().lower()
    if name == "gradient":
        return gradient_symbol(d)
    if name in ("divfree", "curl", "div-free"):
        return divfree_symbol(d)
    if name == "identity":
        return identity_symbol(d, ell or d)
    raise ValueError(f"unknown symbol map {name!r}")


def load_symbol_csv(path, d: int, ell: int, k: int) -> SymbolMap:
    """Read rows ``zeta_0..zeta_{d-1}, b_00, b_01, ...`` (row-major ``ell x k``).

    A header row is required.  Directions are normalized on load.
    """
    zs, bs = [], []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for n, row in enumerate(reader, 2):
            vals = [float(v) for v in row if v.strip()]
            if len(vals) != d + ell * k:
                raise ValueError(f"line {n}: expected {d + ell * k} numbers")
            z = np.array(vals[:d])
            zs.append(z / np.linalg.norm(z))
            bs.append(np.array(vals[d:]).reshape(ell, k))
    zs = np.array(zs)
    table = np.array(bs)

    def basis(z):
        i = int(np.argmax(zs @ np.asarray(z, float)))
        return table[i]

    return SymbolMap(d, ell, k, basis, Path(path).stem, samples=zs)


def sphere_samples(d: int, M: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        a = 2 * np.pi * np.arange(M) / M
        return np.column_stack([np.cos(a), np.sin(a)])
    i = np.arange(M) + 0.5
    z = 1 - 2 * i / M
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z * z)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


@dataclass(frozen=True)
class CancellationResult:
    defect: float
    witness: np.ndarray | None
    tol: float
    samples: int

    @property
    def canceling(self) -> bool:
        return self.witness is None


def cancellation_defect(omega: SymbolMap, samples=None) -> CancellationResult:
    """Smallest singular value of the stacked complements ``I - P(zeta_i)``.

    A value at or below ``1e-8 * ||stack||`` yields a unit witness vector
    lying in every sampled subspace.
    """
    if samples is None:
        samples = omega.samples
    if samples is None:
        samples = sphere_samples(omega.d, max(2 * omega.d, 8))
    elif np.isscalar(samples):
        samples = sphere_samples(omega.d, int(samples))
    samples = np.atleast_2d(np.asarray(samples, float))
    if samples.shape[0] < 2 * omega.d and omega.samples is None:
        raise ValueError("need at least 2d sample directions")
    eye = np.eye(omega.ell)
    blocks = []
    for z in samples:
        b = np.asarray(omega.basis(z / np.linalg.norm(z)), float).reshape(omega.ell, -1)
        sv = np.linalg.svd(b, compute_uv=False)
        if sv.size < omega.k or sv[omega.k - 1] <= 1e-10:
            raise ValueError("rank drop in subspace basis")
        q, _ = np.linalg.qr(b)
        blocks.append(eye - q @ q.T)
    stack = np.vstack(blocks)
    _, s, vt = np.linalg.svd(stack)
    defect = float(s[-1])
    tol = 1e-8 * float(s[0]) if s[0] > 0 else 1e-8
    witness = None
    if defect <= tol:
        witness = vt[-1]
        j = int(np.argmax(np.abs(witness)))
        witness = witness * np.sign(witness[j])
    return CancellationResult(defect, witness, tol, samples.shape[0])
