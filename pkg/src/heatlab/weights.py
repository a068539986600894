"""Analytic weights with polynomial decay, the lattice partition weight and heated weights.

Every weight is a callable mapping an ``(n, d)`` array of points to ``n``
positive values.  Decay forms report their exponent ``theta`` and certified
constants ``c, C`` with ``c (1+|x|)^-theta <= w(x) <= C (1+|x|)^-theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

__all__ = [
    "ParametricWeight",
    "PolyDecay",
    "Rho",
    "Unit",
    "LatticeNormalized",
    "Heated",
    "eval_weight",
    "atom_weight",
    "envelope_constants",
    "gaussian_moment",
    "SmoothnessBound",
    "smoothness_function",
    "probe_pairs",
]


def _points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if d == 1 else x.reshape(1, d)
    if x.shape[-1] != d:
        raise ValueError(f"points must have {d} coordinates")
    return x.reshape(-1, d)


class ParametricWeight:
    """Base class: positive weight on R^d."""

    d: int
    theta: float

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(_points(x, self.d))

    def evaluate(self, pts: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def on_grid(self, grid, scale: float = 1.0, shift=None) -> np.ndarray:
        """Samples of ``w(scale * x - shift)`` at every node of ``grid``."""
        pts = grid.points() * scale
        if shift is not None:
            pts = pts - np.asarray(shift, float)
        return self.evaluate(pts).reshape(grid.shape)


def _check_decay(theta, d):
    if not theta > d:
        raise ValueError(f"decay exponent {theta} must exceed d = {d}")


@dataclass(frozen=True)
class PolyDecay(ParametricWeight):
    """``(1 + |x - center|)^-theta``."""

    theta: float
    d: int = 1
    center: tuple | None = None

    def __post_init__(self):
        _check_decay(self.theta, self.d)
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
            if len(self.center) != self.d:
                raise ValueError("center has the wrong dimension")

    @property
    def c(self) -> np.ndarray:
        return np.zeros(self.d) if self.center is None else np.array(self.center)

    def profile(self, r):
        return (1.0 + r) ** (-self.theta)

    def evaluate(self, pts):
        return self.profile(np.linalg.norm(pts - self.c, axis=1))


def Rho(theta_G: float, d: int = 1) -> PolyDecay:
    """``(1 + |x|)^{-theta_G - 2d}``."""
    return PolyDecay(theta_G + 2 * d, d)


@dataclass(frozen=True)
class Unit(ParametricWeight):
    """The constant weight 1."""

    d: int = 1
    theta: float = 0.0

    def evaluate(self, pts):
        return np.ones(pts.shape[0])


# --- lattice-normalized weight -------------------------------------------------

_NEAR = 2


def _cheb_nodes(n: int) -> np.ndarray:
    return 0.5 * np.cos(np.pi * np.arange(n) / (n - 1))


def _bary_matrix(u: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Barycentric interpolation weights, shape ``(len(u), len(nodes))``."""
    n = nodes.size
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    diff = u[:, None] - nodes[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    c = w / diff
    out = c / c.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    if rows.any():
        out[rows] = hit[rows].astype(float)
    return out


def _offsets(radius: int, d: int, inner: int = -1) -> np.ndarray:
    ax = np.arange(-radius, radius + 1)
    m = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    if inner >= 0:
        m = m[np.max(np.abs(m), axis=1) > inner]
    return m.astype(float)


class LatticeNormalized(ParametricWeight):
    """``w(x) = (1+|x|)^-theta / sum_j (1+|x-j|)^-theta`` over ``j`` in ``Z^d``.

    The lattice sum ``S`` is periodic.  It is split into an exact near part
    over ``|m - round(x)|_inf <= 2`` and a far part that is smooth on the unit
    cell and stored as a tensor Chebyshev interpolant.  The far part keeps
    lattice points out to the radius where the integral-test tail bound
    drops below ``tail_tol`` times the smallest head term, unless that
    radius exceeds ``max_radius``; ``tail_bound`` records what was achieved.
    """

    def __init__(self, theta: float, d: int = 1, tail_tol: float = 1e-12,
                 max_radius: int | None = None, cheb_n: int | None = None):
        _check_decay(theta, d)
        self.theta = float(theta)
        self.d = int(d)
        self.tail_tol = tail_tol
        self.cheb_n = cheb_n or {1: 20, 2: 16, 3: 8}[self.d]
        cap = max_radius or {1: 4000, 2: 400, 3: 36}[self.d]
        head = (1.0 + math.sqrt(self.d) / 2) ** (-self.theta)
        th, d = self.theta, self.d
        need = (d * 2**d / ((th - d) * tail_tol * head)) ** (1.0 / (th - d)) - 0.5
        R = int(min(cap, max(_NEAR + 1, math.ceil(need))))
        self.radius = R
        self.tail_bound = self._tail(R) / head

    def __repr__(self):
        return f"LatticeNormalized(theta={self.theta}, d={self.d})"

    def __eq__(self, other):
        return (isinstance(other, LatticeNormalized)
                and (self.theta, self.d, self.radius) == (other.theta, other.d, other.radius))

    def __hash__(self):
        return hash(("lattice", self.theta, self.d, self.radius))

    def _tail(self, R: int) -> float:
        """Integral-test bound on ``sum_{|m|_inf > R} (1 + |x - m|)^-theta``."""
        d, th = self.d, self.theta
        return d * 2**d * (R + 0.5) ** (d - th) / (th - d)

    def phi(self, y):
        return (1.0 + np.linalg.norm(y, axis=-1)) ** (-self.theta)

    def _far_direct(self, u: np.ndarray) -> np.ndarray:
        offs = _offsets(self.radius, self.d, inner=_NEAR)
        out = np.zeros(u.shape[0])
        step = max(1, 4_000_000 // max(1, u.shape[0]))
        for s in range(0, offs.shape[0], step):
            diff = u[:, None, :] - offs[None, s:s + step, :]
            out += np.sum(self.phi(diff), axis=1)
        return out

    @cached_property
    def _table(self) -> np.ndarray:
        # the far sum is even in every coordinate, so only the nonnegative
        # half of the symmetric node set is computed
        n = self.cheb_n
        half = _cheb_nodes(n)[: (n + 1) // 2]
        grid = np.stack(np.meshgrid(*([half] * self.d), indexing="ij"), -1)
        vals = self._far_direct(grid.reshape(-1, self.d)).reshape((half.size,) * self.d)
        fold = np.minimum(np.arange(n), n - 1 - np.arange(n))
        return vals[np.ix_(*([fold] * self.d))]

    def _far(self, u: np.ndarray) -> np.ndarray:
        nodes = _cheb_nodes(self.cheb_n)
        mats = [_bary_matrix(u[:, a].copy(), nodes) for a in range(self.d)]
        T = self._table
        if self.d == 1:
            return mats[0] @ T
        n = self.cheb_n
        if self.d == 2:
            return np.sum((mats[0] @ T) * mats[1], axis=1)
        part = (mats[0] @ T.reshape(n, n * n)).reshape(-1, n, n)
        part = np.sum(part * mats[1][:, :, None], axis=1)
        return np.sum(part * mats[2], axis=1)

    def split(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest lattice point and offset in ``[-1/2, 1/2]^d``."""
        base = np.floor(pts + 0.5)
        return base, pts - base

    def lattice_sum(self, pts) -> np.ndarray:
        pts = _points(pts, self.d)
        _, u = self.split(pts)
        near = _offsets(_NEAR, self.d)
        s = np.sum(self.phi(u[:, None, :] - near[None, :, :]), axis=1)
        return s + self._far(u)

    def lattice_sum_direct(self, pts) -> np.ndarray:
        """Reference sum over the full truncated window, no interpolation."""
        pts = _points(pts, self.d)
        _, u = self.split(pts)
        near = _offsets(_NEAR, self.d)
        s = np.sum(self.phi(u[:, None, :] - near[None, :, :]), axis=1)
        return s + self._far_direct(u)

    def evaluate(self, pts):
        return self.phi(pts) / self.lattice_sum(pts)

    @cached_property
    def bounds(self) -> tuple[float, float]:
        """Certified ``(c_w, C_w)`` from a cell scan plus a Lipschitz margin.

        ``|grad log S| <= theta``, so values between scan points differ from
        the nearest scan value by at most a factor ``exp(theta * delta)``.
        """
        n = {1: 257, 2: 65, 3: 17}[self.d]
        ax = np.linspace(0.0, 0.5, n)
        pts = np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), -1).reshape(-1, self.d)
        S = self.lattice_sum(pts)
        delta = 0.5 / (n - 1) * math.sqrt(self.d) / 2
        slack = math.exp(self.theta * delta)
        # account for the truncated tail on the upper side of S
        s_max = S.max() * slack + self._tail(self.radius)
        s_min = S.min() / slack
        return 1.0 / s_max, 1.0 / s_min


def atom_weight(k: int, j, x, theta1: float, A: int, d: int | None = None,
                weight: LatticeNormalized | None = None) -> np.ndarray:
    """``w_{k,j}(x) = w(A^k x - j)`` for the lattice weight ``w``."""
    j = np.atleast_1d(np.asarray(j, float))
    d = d or j.size
    w = weight or LatticeNormalized(theta1, d)
    pts = _points(x, d)
    return w.evaluate(float(A) ** k * pts - j)


# --- heated weights -------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(256)


def _gl(a: np.ndarray, b: np.ndarray):
    """Gauss-Legendre nodes/weights mapped to ``[a_i, b_i]`` per row."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return mid[:, None] + half[:, None] * _GL_X[None, :], half[:, None] * _GL_W[None, :]


def _radial_heat(profile, r: np.ndarray, t: float, d: int) -> np.ndarray:
    """Heat of a radial weight ``profile(|y|)`` evaluated at radii ``r``."""
    r = np.asarray(r, float)
    sq = math.sqrt(t)
    W = 17.0 * sq
    if d == 1:
        lo = np.maximum(0.0, r - W)
        rho, wts = _gl(lo, r + W)
        k1 = np.exp(-((rho - r[:, None]) ** 2) / (4 * t))
        out = np.sum(wts * profile(rho) * k1, axis=1)
        # reflected branch, relevant only near the origin
        mask = r < W
        if mask.any():
            rr = r[mask]
            rho2, w2 = _gl(np.zeros_like(rr), W - rr)
            k2 = np.exp(-((rho2 + rr[:, None]) ** 2) / (4 * t))
            out[mask] += np.sum(w2 * profile(rho2) * k2, axis=1)
        return out / math.sqrt(4 * np.pi * t)
    lo = np.maximum(0.0, r - W)
    rho, wts = _gl(lo, r + W)
    g = np.exp(-((rho - r[:, None]) ** 2) / (4 * t))
    if d == 2:
        ker = g * special.i0e(rho * r[:, None] / (2 * t))
        return np.sum(wts * rho * profile(rho) * ker, axis=1) / (2 * t)
    small = r < 1e-8 * sq
    out = np.empty_like(r)
    if (~small).any():
        rs = r[~small]
        rh, ww = rho[~small], wts[~small]
        ker = np.exp(-((rh - rs[:, None]) ** 2) / (4 * t)) * (-np.expm1(-rh * rs[:, None] / t))
        out[~small] = np.sum(ww * rh * profile(rh) * ker, axis=1) / (rs * math.sqrt(4 * np.pi * t))
    if small.any():
        rh, ww = _gl(np.zeros(1), np.full(1, W))
        val = np.sum(ww * 4 * np.pi * rh**2 * profile(rh) * np.exp(-rh**2 / (4 * t)))
        out[small] = val * (4 * np.pi * t) ** (-1.5)
    return out


def _gh_rule(d: int, n: int | None = None):
    n = n or {1: 160, 2: 32, 3: 16}[d]
    z, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / w.sum()
    Z = np.stack(np.meshgrid(*([z] * d), indexing="ij"), -1).reshape(-1, d)
    Wt = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
    return Z, Wt


class Heated(ParametricWeight):
    """``Heat[base](., t)``.

    Radial bases are integrated in the radial variable with a high-order
    Gauss-Legendre rule; other bases use tensor Gauss-Hermite quadrature.
    Heating a heated weight composes the times.
    """

    def __init__(self, base: ParametricWeight, t: float):
        if t < 0:
            raise ValueError("heat time must be nonnegative")
        if isinstance(base, Heated):
            t = t + base.t
            base = base.base
        self.base = base
        self.t = float(t)
        self.d = base.d
        self.theta = base.theta

    def __repr__(self):
        return f"Heated({self.base!r}, t={self.t})"

    def evaluate(self, pts):
        if self.t == 0.0:
            return self.base.evaluate(pts)
        b = self.base
        if isinstance(b, Unit):
            return np.ones(pts.shape[0])
        if isinstance(b, PolyDecay):
            r = np.linalg.norm(pts - b.c, axis=1)
            return _radial_heat(b.profile, r, self.t, self.d)
        Z, Wt = _gh_rule(self.d)
        s = math.sqrt(2 * self.t)
        out = np.empty(pts.shape[0])
        step = max(1, 200_000 // Z.shape[0])
        for i in range(0, pts.shape[0], step):
            p = pts[i:i + step]
            y = (p[:, None, :] + s * Z[None, :, :]).reshape(-1, self.d)
            out[i:i + step] = b.evaluate(y).reshape(p.shape[0], -1) @ Wt
        return out


def eval_weight(wgt: ParametricWeight, x) -> np.ndarray:
    return wgt(x)


def gaussian_moment(d: int, t: float, s: float) -> float:
    """``E[(1 + sqrt(2t)|Z|)^s]`` for a standard Gaussian ``Z`` in R^d."""
    c = 2 ** (1 - d / 2) / math.gamma(d / 2)
    a = math.sqrt(2 * t)

    def f(r):
        return c * r ** (d - 1) * math.exp(-r * r / 2) * (1 + a * r) ** s

    val, _ = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return val


def envelope_constants(wgt: ParametricWeight) -> tuple[float, float, float]:
    """Certified ``(c, C, theta)`` with ``c(1+|x|)^-theta <= w <= C(1+|x|)^-theta``."""
    if isinstance(wgt, PolyDecay):
        a = float(np.linalg.norm(wgt.c))
        return (1 + a) ** (-wgt.theta), (1 + a) ** wgt.theta, wgt.theta
    if isinstance(wgt, LatticeNormalized):
        c, C = wgt.bounds
        return c, C, wgt.theta
    if isinstance(wgt, Heated):
        c, C, th = envelope_constants(wgt.base)
        if wgt.t == 0:
            return c, C, th
        return (c * gaussian_moment(wgt.d, wgt.t, -th),
                C * gaussian_moment(wgt.d, wgt.t, th), th)
    raise ValueError(f"no polynomial envelope for {wgt!r}")


# --- smoothness functions -------------------------------------------------------

@dataclass(frozen=True)
class SmoothnessBound:
    """Lower bound from probes and upper bound from analytic estimates."""

    lower: float
    upper: float

    @property
    def exact(self) -> bool:
        return self.lower == self.upper


def probe_pairs(d: int, zeta: float, radius: float = 8.0, spacing: float = 0.5):
    """Deterministic pairs ``(x, y)`` with ``|x - y| = zeta``."""
    ax = np.arange(-radius, radius + 1e-9, spacing if d < 3 else 2 * spacing)
    xs = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    dirs = [np.eye(d)[i] * s for i in range(d) for s in (1, -1)]
    if d > 1:
        dirs.append(np.ones(d) / math.sqrt(d))
        dirs.append(-np.ones(d) / math.sqrt(d))
    X = np.repeat(xs, len(dirs), axis=0)
    Y = X + zeta * np.tile(np.array(dirs), (xs.shape[0], 1))
    return X, Y


def _upper_bound(wgt, zeta):
    if isinstance(wgt, PolyDecay):
        return (1 + zeta) ** wgt.theta
    if isinstance(wgt, Unit):
        return 1.0
    if isinstance(wgt, LatticeNormalized):
        c, C = wgt.bounds
        return C / c * (1 + zeta) ** wgt.theta
    if isinstance(wgt, Heated):
        # heating is convolution with a probability density
        return _upper_bound(wgt.base, zeta)
    return math.inf


def smoothness_function(wgt: ParametricWeight, zeta: float, probes=None) -> SmoothnessBound:
    """``s[w](zeta) = sup_{|x-y| <= zeta} w(x) / w(y)``.

    Exact for polynomial decay, ``(1 + zeta)^theta``.  For other forms the
    probe maximum is a lower bound and the analytic estimate an upper bound.
    """
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    if zeta == 0:
        return SmoothnessBound(1.0, 1.0)
    if isinstance(wgt, PolyDecay) or isinstance(wgt, Unit):
        v = _upper_bound(wgt, zeta)
        return SmoothnessBound(v, v)
    X, Y = probes if probes is not None else probe_pairs(wgt.d, zeta)
    wx, wy = wgt(X), wgt(Y)
    lower = float(max(np.max(wx / wy), np.max(wy / wx), 1.0))
    return SmoothnessBound(lower, max(lower, _upper_bound(wgt, zeta)))
