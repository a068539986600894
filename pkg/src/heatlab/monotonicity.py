"""The monotone functional ``Q_p``, its derivative identity and related diagnostics.

For a finite nonnegative atomic measure ``mu`` and a weight ``G``::

    Q_p(t) = t^{d(p-1)/2} int u(x, t)^p v(x, t) dx,
    u = Heat[mu](., t),   v = Heat[G](., (1 - t)/p).

``u`` is an exact Gaussian sum over atoms.  ``v`` is the spectral heat
extension of ``G`` sampled on one fixed lattice per solver, so every
``t`` of a scan sees the same smooth terminal weight and the derivative
identity holds for it exactly.  The integral is a lattice sum of spacing
``min(0.25, sqrt(t_min)/4)``; the integrand is analytic there and the sum
converges spectrally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .field_grid import Field, GridSpec, PointMeasure
from .heat_flow import heat_extend
from .weights import ParametricWeight, Unit

__all__ = [
    "QpSolver",
    "QpEvaluation",
    "qp",
    "bct_rhs",
    "bct_identity_defect",
    "BctCheck",
    "ScanResult",
    "monotonicity_scan",
    "ConeSample",
    "line_measure",
    "ExponentEstimate",
    "improved_exponent",
    "ConcentrationDiagnostic",
    "concentration_diagnostic",
    "FlatnessDefect",
    "flatness_defect",
]

TAIL = 1e-12


def _even_fast(n: int) -> int:
    n = sfft.next_fast_len(max(2, n))
    while n % 2:
        n = sfft.next_fast_len(n + 1)
    return n


@dataclass(frozen=True)
class QpEvaluation:
    t: float
    value: float
    norm_t: float
    tail: float


class QpSolver:
    """Evaluator of ``Q_p`` and the right side of its derivative identity.

    Parameters
    ----------
    mu : PointMeasure
    G : ParametricWeight
        ``Unit`` selects the flat-weight mode ``v = 1``.
    p : float
        Exponent, ``p > 1``.
    t_min : float
        Smallest time the solver will be asked about; fixes the spacing.
    tail : float
        Relative size of the integrand allowed on the box boundary.
    """

    def __init__(self, mu: PointMeasure, G: ParametricWeight, p: float,
                 t_min: float, tail: float = TAIL, max_nodes: int = 4_000_000):
        if not p > 1:
            raise ValueError("p must exceed 1")
        if not 0 < t_min <= 1:
            raise ValueError("times must lie in (0, 1]")
        d = mu.d
        if getattr(G, "d", d) != d:
            raise ValueError("weight and measure dimensions differ")
        self.mu, self.G, self.p, self.d = mu, G, float(p), d
        self.t_min, self.tail = float(t_min), float(tail)
        self.flat = isinstance(G, Unit)

        log_tail = math.log(1.0 / tail)
        reach = float(np.max(np.abs(mu.positions)))
        margin = math.sqrt(4.0 / self.p * log_tail)  # u^p at t = 1
        if not self.flat:
            theta = float(getattr(G, "theta", 0.0))
            r_g = tail ** (-1.0 / theta) - 1.0 if theta > 0 else 20.0
            c = float(np.max(np.abs(getattr(G, "c", np.zeros(d)))))
            s_max = (1.0 - t_min) / self.p
            margin = max(margin, math.sqrt(4.0 * s_max * log_tail) + min(r_g, 20.0) + c)
        L = reach + margin
        spacing = min(0.25, math.sqrt(t_min) / 4.0)
        N = _even_fast(int(math.ceil(2 * L / spacing)))
        if N**d > max_nodes:
            raise ValueError(f"quadrature lattice too large ({N}^{d} nodes)")
        self.grid = GridSpec(d, N, L)
        self._pts = self.grid.points()
        self._G = None if self.flat else Field(self.grid, G.evaluate(self._pts).reshape((1,) + self.grid.shape))
        self._cache = {}

    # -- pieces ------------------------------------------------------------------
    def v(self, t: float) -> np.ndarray:
        if self.flat:
            return np.ones(self.grid.size)
        s = (1.0 - t) / self.p
        if s <= 0:
            return self._G.data[0].ravel()
        return heat_extend(self._G, s, alias_tol=None).data[0].ravel()

    def _moments(self, t: float, need_var: bool = True):
        """Log-mass ``log M``, and the variance of ``Y`` under ``mu_{x,t}/M``.

        ``var`` is ``None`` when ``need_var`` is false and nothing is cached.
        """
        key = float(t)
        hit = self._cache.get(key)
        if hit is not None and (hit[1] is not None or not need_var):
            return hit
        pos, m = self.mu.positions, self.mu.masses
        keep = m > 0
        pos, logm = pos[keep], np.log(m[keep])
        n = self._pts.shape[0]
        logM = np.full(n, -np.inf)
        var = np.zeros(n) if need_var else None
        step = max(1, (1 << 21) // max(1, pos.shape[0]))
        for s in range(0, n, step):
            x = self._pts[s:s + step]
            diff = x[:, None, :] - pos[None, :, :]
            e = logm[None, :] - np.sum(diff * diff, axis=-1) / (4.0 * t)
            top = e.max(axis=1)
            w = np.exp(e - top[:, None])
            tot = w.sum(axis=1)
            logM[s:s + step] = top + np.log(tot)
            if need_var:
                w /= tot[:, None]
                mean = np.einsum("ni,nij->nj", w, diff)
                cen = diff - mean[:, None, :]
                var[s:s + step] = np.einsum("ni,ni->n", w, np.sum(cen * cen, axis=-1))
        out = (logM, var)
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = out
        return out

    def _check_time(self, t):
        if not self.t_min * (1 - 1e-12) <= t <= 1.0:
            raise ValueError(f"t = {t} outside the solver range [{self.t_min}, 1]")

    def _integrand_tail(self, dens: np.ndarray) -> float:
        top = float(dens.max())
        if top == 0:
            return 0.0
        a = dens.reshape(self.grid.shape)
        edge = 0.0
        for ax in range(self.d):
            edge = max(edge, float(np.take(a, 0, axis=ax).max()),
                       float(np.take(a, -1, axis=ax).max()))
        return edge / top

    def evaluate(self, t: float) -> QpEvaluation:
        self._check_time(t)
        d, p = self.d, self.p
        logM, _ = self._moments(t, need_var=False)
        logu = logM - 0.5 * d * math.log(4 * math.pi * t)
        dens = np.exp(p * logu) * self.v(t)
        tail = self._integrand_tail(dens)
        if tail > 1e3 * self.tail:
            raise ValueError(f"quadrature tail certificate failed ({tail:.2e})")
        integral = self.grid.cell_volume * float(np.sum(dens))
        return QpEvaluation(t, t ** (d * (p - 1) / 2) * integral, integral ** (1 / p), tail)

    def qp(self, t: float) -> float:
        return self.evaluate(t).value

    def rhs(self, t: float) -> tuple[float, bool]:
        """``(p-1)/4 (4 pi)^{-dp/2} t^{-d/2-2} int D(Y_x) M^p v dx`` and a collapse flag."""
        self._check_time(t)
        d, p = self.d, self.p
        logM, var = self._moments(t)
        # factor the largest log-mass out so that M^p stays finite
        top = float(logM.max())
        if not np.isfinite(top):
            return 0.0, True
        dens = var * np.exp(p * (logM - top)) * self.v(t)
        s = self.grid.cell_volume * float(np.sum(dens))
        if s == 0.0:
            return 0.0, bool(self.mu.positions.shape[0] > 1)
        logval = (math.log(s) + p * top + math.log((p - 1) / 4)
                  - 0.5 * d * p * math.log(4 * math.pi) - (d / 2 + 2) * math.log(t))
        return math.exp(logval), False


def qp(mu: PointMeasure, G: ParametricWeight, p: float, t: float) -> float:
    """``Q_p[mu, G](t)``."""
    return QpSolver(mu, G, p, t).qp(t)


def bct_rhs(mu: PointMeasure, G: ParametricWeight, p: float, t: float) -> float:
    """Right side of the derivative identity; ``0`` for one-point measures."""
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    return QpSolver(mu, G, p, t).rhs(t)[0]


@dataclass(frozen=True)
class BctCheck:
    t: float
    qp: float
    rhs: float
    fd: float
    fd_coarse: float
    defect: float


def bct_identity_defect(mu: PointMeasure, G: ParametricWeight, p: float, t: float,
                        h_t: float = 1e-4, solver: QpSolver | None = None,
                        floor_rel: float = 1e-6) -> BctCheck:
    """Relative gap between ``dQ_p/dt`` and the variance formula.

    The derivative is the Richardson extrapolation of central differences
    with steps ``h_t`` and ``h_t/2``; the step is rejected when the two
    differ by more than 10 percent of the extrapolated value.
    """
    if not (0 < t - h_t and t + h_t < 1):
        raise ValueError("need t - h_t > 0 and t + h_t < 1")
    S = solver or QpSolver(mu, G, p, t - h_t)
    Q = S.qp
    d1 = (Q(t + h_t) - Q(t - h_t)) / (2 * h_t)
    d2 = (Q(t + h_t / 2) - Q(t - h_t / 2)) / h_t
    fd = (4 * d2 - d1) / 3
    q0 = Q(t)
    floor = floor_rel * q0
    if abs(d1 - d2) > 0.1 * max(abs(fd), floor):
        raise ValueError("time step too large: central differences disagree")
    r, _ = S.rhs(t)
    return BctCheck(t, q0, r, fd, d1, abs(fd - r) / max(r, floor))


@dataclass(frozen=True)
class ScanResult:
    t: np.ndarray
    values: np.ndarray
    lhs_norm: np.ndarray
    rhs_norm: np.ndarray
    monotone: bool
    normalized_ok: bool

    @property
    def verdict(self) -> str:
        return "PASS" if self.monotone and self.normalized_ok else "FAIL"


def monotonicity_scan(mu: PointMeasure, G: ParametricWeight, p: float, t_grid,
                      slack: float = 1e-8, solver: QpSolver | None = None) -> ScanResult:
    """``Q_p`` on an increasing grid in ``(0, 1]``, plus the two-norm form

    ``||Heat[mu](t)||_{L_p(v_t)} <= t^{-d(p-1)/(2p)} ||Heat[mu](1)||_{L_p(G)}``.
    """
    ts = np.asarray(t_grid, float)
    if ts.ndim != 1 or ts.size < 2 or np.any(np.diff(ts) <= 0) or ts[0] <= 0 or ts[-1] > 1:
        raise ValueError("t_grid must be increasing inside (0, 1]")
    S = solver or QpSolver(mu, G, p, float(ts[0]))
    ev = [S.evaluate(float(t)) for t in ts]
    vals = np.array([e.value for e in ev])
    lhs = np.array([e.norm_t for e in ev])
    one = S.evaluate(1.0).norm_t
    d = mu.d
    rhs = ts ** (-d * (p - 1) / (2 * p)) * one
    mono = bool(np.all(vals[1:] >= vals[:-1] * (1 - slack)))
    norm_ok = bool(np.all(lhs <= rhs * (1 + slack)))
    return ScanResult(ts, vals, lhs, rhs, mono, norm_ok)


# --- invariant cones and the improved exponent ----------------------------------

@dataclass(frozen=True, eq=False)
class ConeSample:
    """Representatives of an invariant cone.

    ``tag='Mq'`` stands for measures depending on at most ``q`` coordinates;
    ``free`` lists the directions along which they are invariant.
    ``tag='Mspace'`` carries a symbol map instead.
    """

    tag: str
    representatives: tuple
    q: int | None = None
    free: np.ndarray | None = None
    symbol: object = None

    def __post_init__(self):
        if self.tag not in ("Mq", "Mspace", "delta"):
            raise ValueError(f"unknown cone tag {self.tag!r}")
        if not self.representatives:
            raise ValueError("a cone sample needs at least one representative")

    def invariance_defect(self, shift: float = 1.0) -> float:
        """Largest relative change of the sampled mass profile under a free shift.

        Only interior atoms are compared, so the finite sampling length
        does not count as a violation.
        """
        if self.tag != "Mq" or self.free is None:
            return 0.0
        worst = 0.0
        for mu in self.representatives:
            for a in np.atleast_2d(self.free):
                proj = mu.positions @ a
                lo, hi = proj.min() + shift, proj.max() - shift
                inner = (proj >= lo - 1e-12) & (proj <= hi + 1e-12)
                moved = mu.positions[inner] + shift * a
                dist = np.min(np.linalg.norm(moved[:, None] - mu.positions[None], axis=-1), axis=1)
                worst = max(worst, float(dist.max()))
        return worst


def line_measure(d: int = 2, n: int = 21, length: float = 8.0, direction=None,
                 center=None, mass: float = 1.0) -> PointMeasure:
    """``n`` equal atoms spread uniformly on a segment of the given length."""
    a = np.zeros(d)
    a[-1] = 1.0
    if direction is not None:
        a = np.asarray(direction, float)
        a = a / np.linalg.norm(a)
    c = np.zeros(d) if center is None else np.asarray(center, float)
    s = np.linspace(-length / 2, length / 2, n)
    return PointMeasure(c[None, :] + s[:, None] * a[None, :], np.full(n, mass / n))


@dataclass(frozen=True)
class ExponentEstimate:
    worst: np.ndarray      # per representative, clamped at 0
    fit: np.ndarray        # least-squares slope / p, per representative
    ratios: tuple          # Q(t)/Q(1) series per representative

    @property
    def minimum(self) -> float:
        return float(self.worst.min())

    @property
    def median(self) -> float:
        return float(np.median(self.worst))


def improved_exponent(cone: ConeSample, G: ParametricWeight, p: float, t_grid) -> ExponentEstimate:
    """Largest ``delta`` with ``Q_p(t) <= t^{p delta} Q_p(1)`` on the grid."""
    ts = np.asarray(t_grid, float)
    ts = ts[ts < 1]
    if ts.size == 0 or ts.min() <= 0:
        raise ValueError("t_grid needs points inside (0, 1)")
    worst, fit, ratios = [], [], []
    for mu in cone.representatives:
        S = QpSolver(mu, G, p, float(ts.min()))
        q1 = S.qp(1.0)
        if q1 == 0:
            raise ValueError("Q_p(1) vanishes")
        r = np.array([S.qp(float(t)) for t in ts]) / q1
        lt = np.log(ts)
        est = np.log(r) / (p * lt)
        worst.append(max(0.0, float(est.min())))
        fit.append(float(np.sum(lt * np.log(r)) / np.sum(lt * lt)) / p)
        ratios.append(r)
    return ExponentEstimate(np.array(worst), np.array(fit), tuple(ratios))


# --- concentration diagnostics --------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConcentrationDiagnostic:
    cells: np.ndarray          # (n, d) cube indices k
    a: np.ndarray              # mu(Q_k)
    kind: np.ndarray
    good: np.ndarray
    b: np.ndarray
    conc1_scale: float         # mass factor that normalizes Conc1 to 1
    conc2: float               # variance functional of the normalized measure
    x0: np.ndarray | None
    conc3_lhs: float
    conc3_rhs: float

    @property
    def concentrated(self) -> bool:
        return self.x0 is not None and self.conc3_lhs >= self.conc3_rhs


def _theta_of(G) -> float:
    return float(getattr(G, "theta", 0.0))


def concentration_diagnostic(mu: PointMeasure, G: ParametricWeight, p: float,
                             nu: float, R: float, tau: float = 0.5,
                             theta_G: float | None = None) -> ConcentrationDiagnostic:
    """Cube masses, kind/good maps and the concentration verdict around ``x0``.

    Cubes are ``[nu k, nu (k+1))``; ``x0`` is the center of the kind and
    good cube with the largest ``a_k^p G(nu k)``.
    """
    d = mu.d
    if not 0 < nu < d ** -0.5:
        raise ValueError("need 0 < nu < d^{-1/2}")
    theta_G = _theta_of(G) if theta_G is None else theta_G
    rho = lambda r: (1.0 + r) ** (-(theta_G + 2 * d))

    S = QpSolver(mu, G, p, 1.0)
    logM, var = S._moments(1.0)
    Gs = S.v(1.0)
    base = S.grid.cell_volume * math.fsum(np.exp(p * logM) * Gs)
    scale = base ** (-1.0 / p)
    conc2 = scale**p * S.grid.cell_volume * math.fsum(var * np.exp(p * logM) * Gs)

    keys = np.floor(mu.positions / nu).astype(np.int64)
    cells, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    a = scale * np.bincount(inv, weights=mu.masses, minlength=cells.shape[0])
    diff = cells[:, None, :] - cells[None, :, :]
    dist = nu * np.sqrt(np.sum(diff * diff, axis=-1).astype(float))

    far = dist >= R
    kind = nu**p * a**p >= np.sum(np.where(far, rho(dist), 0.0) * a[None, :] ** p, axis=1)

    # b_k: the R-neighborhood mass minus the heaviest ball of radius sqrt(d)
    near = dist <= R
    b = np.empty(cells.shape[0])
    rd = math.sqrt(d)
    span = int(math.floor(rd))
    offs = np.stack(np.meshgrid(*([np.arange(-span, span + 1)] * d), indexing="ij"), -1).reshape(-1, d)
    cand = np.unique((cells[:, None, :] + offs[None]).reshape(-1, d), axis=0)
    cd = cand[:, None, :] - cells[None, :, :]
    in_ball = np.sqrt(np.sum(cd * cd, axis=-1).astype(float)) <= rd
    for i in range(cells.shape[0]):
        mass_near = a * near[i]
        b[i] = float(mass_near.sum() - (in_ball.astype(float) @ mass_near).max())
    good = (a > 0) & (tau * a >= b)

    x0, lhs, rhs = None, 0.0, 0.0
    ok = np.flatnonzero(kind & good)
    if ok.size:
        gval = G.evaluate(nu * cells[ok].astype(float))
        best = ok[int(np.argmax(a[ok] ** p * gval))]
        x0 = nu * (cells[best] + 0.5)
        r = np.linalg.norm(mu.positions - x0[None, :], axis=1)
        m = scale * mu.masses
        lhs = nu * float(np.sum(m[r < nu]))
        rhs = float(np.sum(np.where(r >= nu, rho(r), 0.0) * m))
    return ConcentrationDiagnostic(cells, a, kind, good, b, scale, conc2, x0, lhs, rhs)


# --- flatness defect --------------------------------------------------------------

@dataclass(frozen=True)
class FlatnessDefect:
    gap: float
    identity_defect: float
    rank1_deviation: float
    sign_deviation: float
    degenerate: bool = False


def flatness_defect(g: Field, w: ParametricWeight, t: float) -> FlatnessDefect:
    """``int (Heat[|g|] - |Heat[g]|) w`` and how far ``g`` is from ``a (x) h``, ``h >= 0``.

    ``identity_defect`` compares the gap with the difference of the two
    weighted norms ``||g||_{L1(Heat[w])} - ||Heat[g]||_{L1(w)}``, with
    ``Heat[w]`` computed separately on the same grid.
    """
    grid = g.grid
    mag = g.magnitude()
    dv = grid.cell_volume
    total = dv * float(np.sum(mag))
    if total == 0:
        return FlatnessDefect(0.0, 0.0, 0.0, 0.0, True)
    ws = w.evaluate(grid.points()).reshape(grid.shape)
    heat_abs = heat_extend(Field(grid, mag[None]), t).data[0]
    abs_heat = heat_extend(g, t).magnitude()
    gap = dv * math.fsum(((heat_abs - abs_heat) * ws).ravel())
    hw = heat_extend(Field(grid, ws[None]), t).data[0]
    other = dv * (math.fsum((mag * hw).ravel()) - math.fsum((abs_heat * ws).ravel()))

    flat = g.data.reshape(g.ell, -1)
    mean = flat.sum(axis=1)
    if np.linalg.norm(mean) > 1e-12 * np.abs(flat).sum():
        a = mean / np.linalg.norm(mean)
    else:
        a = np.linalg.svd(flat, full_matrices=False)[0][:, 0]
    h = a @ flat
    if h.sum() < 0:
        a, h = -a, -h
    resid = flat - a[:, None] * h[None, :]
    rank1 = float(np.sum(np.linalg.norm(resid, axis=0))) * dv / total
    hn = float(np.sum(np.abs(h)))
    sign = float(np.sum(np.abs(np.minimum(h, 0.0)))) / hn if hn > 0 else 0.0
    return FlatnessDefect(gap, abs(gap - other), rank1, sign)
