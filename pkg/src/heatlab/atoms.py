"""Atoms of a heat ladder: cubes, localized masses, classification and graphs.

Atom ``(k, j)`` pairs a level with a lattice point.  Its cube is
``Q_{k,j} = {x : |A^k x - j|_inf <= 1/2}`` and its weight is
``w_{k,j}(x) = w(A^k x - j)`` for the lattice-normalized weight ``w``.

Weighted masses against heated weights use the symmetry of the heat
semigroup: ``int |g| Heat[w](., s) = int Heat[|g|](., s) w``.  The heating
then acts on grid data and no weight ever needs to be heated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .field_grid import Field, GridSpec
from .heat_flow import HeatLadder, heat_extend
from .params import ProofParameters
from .weights import Heated, LatticeNormalized

__all__ = [
    "AtomTable",
    "HorizontalGraph",
    "VerticalForest",
    "lattice_weight",
    "cube_labels",
    "parent_index",
    "atom_window",
    "level_integrals",
    "atom_star",
    "classify_atom",
    "build_atom_table",
    "build_atom_tables",
    "maximal_function",
    "maximal_all",
    "build_horizontal_graph",
    "graph_violations",
    "saturation",
    "build_vertical_forest",
    "concentration_check",
    "saturated_concentration_constant",
    "sum_of_weights_constant",
    "partition_defect",
    "level_l1",
    "table_rows",
]


@lru_cache(maxsize=16)
def lattice_weight(theta1: float, d: int) -> LatticeNormalized:
    return LatticeNormalized(float(theta1), int(d))


def cube_labels(grid: GridSpec, k: int, A: int) -> np.ndarray:
    """Lattice index ``j`` of the level-``k`` cube holding each node, ``(N^d, d)``."""
    return np.floor(grid.points() * float(A) ** k + 0.5).astype(np.int64)


def parent_index(j, A: int) -> np.ndarray:
    """Index of the level-``k`` cube containing level-``k+1`` cube ``j`` (odd ``A``)."""
    j = np.asarray(j, dtype=np.int64)
    return (2 * j + A) // (2 * A)


def atom_window(grid: GridSpec, k: int, A: int, margin: int = 0) -> np.ndarray:
    """All lattice indices of cubes meeting the grid, plus ``margin`` layers."""
    s = float(A) ** k
    lo = int(math.floor(-grid.L * s + 0.5)) - margin
    hi = int(math.floor((grid.L - grid.h) * s + 0.5)) + margin
    ax = np.arange(lo, hi + 1)
    return np.stack(np.meshgrid(*([ax] * grid.d), indexing="ij"), -1).reshape(-1, grid.d)


def _lattice_profile(w: LatticeNormalized, y: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(y * y, axis=-1))
    return np.exp(-w.theta * np.log1p(r))


def level_integrals(grid: GridSpec, k: int, A: int, data: np.ndarray,
                    indices: np.ndarray, w: LatticeNormalized,
                    block: int = 1 << 22) -> np.ndarray:
    """``h^d sum_x g_c(x) w(A^k x - j)`` for each row ``g_c`` and atom ``j``.

    ``data`` has shape ``(n_fun, N^d)``; result has shape ``(n_atoms, n_fun)``.
    """
    pts = grid.points() * float(A) ** k
    S = w.lattice_sum(pts)
    scaled = (np.atleast_2d(data) / S[None, :]).T
    out = np.empty((indices.shape[0], scaled.shape[1]))
    step = max(1, block // grid.size)
    for s in range(0, indices.shape[0], step):
        j = indices[s:s + step].astype(float)
        phi = _lattice_profile(w, pts[None, :, :] - j[:, None, :])
        out[s:s + step] = phi @ scaled
    return grid.cell_volume * out


def _level_data(ladder: HeatLadder, k: int) -> np.ndarray:
    """Rows: ``|f_k|``, ``Heat[|f_{k+2}|](s2)``, ``Heat[|f_{k+3}|](s3)``."""
    A = ladder.A
    s2 = A ** (-2.0 * k) - A ** (-2.0 * k - 4)
    s3 = A ** (-2.0 * k) - A ** (-2.0 * k - 6)
    g = ladder.grid
    mag = lambda fld: Field(g, fld.magnitude())
    plain = ladder[k].magnitude()
    star = heat_extend(mag(ladder[k + 2]), s2, alias_tol=ladder.alias_tol).data[0]
    conv = heat_extend(mag(ladder[k + 3]), s3, alias_tol=ladder.alias_tol).data[0]
    return np.stack([plain.ravel(), star.ravel(), conv.ravel()])


@dataclass(eq=False)
class AtomTable:
    """Per-atom statistics at one level over a finite window.

    Attributes
    ----------
    star : ndarray
        ``||f_{k+2}||_{L1(Heat[w_{k,j}](A^{-2k} - A^{-2k-4}))}``.
    heated3 : ndarray
        ``||f_{k+3}||_{L1(Heat[w_{k,j}](A^{-2k} - A^{-2k-6}))}``.
    plain : ndarray
        ``||f_k||_{L1(w_{k,j})}``.
    """

    k: int
    indices: np.ndarray
    star: np.ndarray
    heated3: np.ndarray | None = None
    plain: np.ndarray | None = None
    epsilon: float = 0.01
    maximal: np.ndarray | None = None
    argmax: np.ndarray | None = None
    saturated: np.ndarray | None = None
    tail_certificate: float = 0.0
    _lookup: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.indices = np.atleast_2d(np.asarray(self.indices, dtype=np.int64))
        self.star = np.asarray(self.star, dtype=float)
        self._lookup = {tuple(j): n for n, j in enumerate(self.indices.tolist())}

    def __len__(self):
        return self.star.size

    def position(self, j) -> int:
        return self._lookup[tuple(int(v) for v in np.atleast_1d(j))]

    def get(self, j):
        return self._lookup.get(tuple(int(v) for v in np.atleast_1d(j)))

    @property
    def defect(self) -> np.ndarray:
        return self.heated3 - self.plain

    @property
    def degenerate(self) -> np.ndarray:
        return self.heated3 == 0.0

    @property
    def convex(self) -> np.ndarray:
        return (~self.degenerate) & (self.defect >= self.epsilon * self.heated3)

    @property
    def flat(self) -> np.ndarray:
        return ~self.convex


def build_atom_table(ladder: HeatLadder, k: int, params: ProofParameters,
                     indices=None) -> AtomTable:
    """Star values, convexity data and maximal functions for level ``k``."""
    if k + 3 > ladder.K:
        raise ValueError(f"ladder too shallow: level {k} needs K >= {k + 3}")
    g = ladder.grid
    w = lattice_weight(params.theta1, g.d)
    if indices is None:
        indices = atom_window(g, k, ladder.A, params.window_radius)
    vals = level_integrals(g, k, ladder.A, _level_data(ladder, k), indices, w)
    table = AtomTable(k, indices, vals[:, 1], heated3=vals[:, 2], plain=vals[:, 0],
                      epsilon=params.epsilon)
    M, arg = maximal_all(table.indices, table.star, params.theta4)
    table.maximal, table.argmax = M, arg
    table.saturated = M <= params.Ksat * table.star
    # bound on the maximal function from atoms outside the window:
    # every star is at most ||f_{k+2}||_{L1}
    total = g.cell_volume * float(np.sum(ladder[k + 2].magnitude()))
    gap = 1 + params.window_radius
    table.tail_certificate = (1.0 + gap) ** (-params.theta4) * total
    return table


def build_atom_tables(ladder: HeatLadder, params: ProofParameters,
                      levels=None) -> list[AtomTable]:
    levels = range(ladder.K - 2) if levels is None else levels
    return [build_atom_table(ladder, k, params) for k in levels]


def atom_star(ladder: HeatLadder, k: int, j, params: ProofParameters) -> float:
    """``f*_{k,j}`` for a single atom."""
    if k + 2 > ladder.K:
        raise ValueError(f"ladder too shallow: level {k} needs K >= {k + 2}")
    A = ladder.A
    s2 = A ** (-2.0 * k) - A ** (-2.0 * k - 4)
    g = ladder.grid
    data = heat_extend(Field(g, ladder[k + 2].magnitude()), s2,
                       alias_tol=ladder.alias_tol).data[0].ravel()
    idx = np.atleast_2d(np.asarray(j, dtype=np.int64))
    w = lattice_weight(params.theta1, g.d)
    return float(level_integrals(g, k, A, data, idx, w)[0, 0])


@dataclass(frozen=True)
class Classification:
    convex: bool
    defect: float
    heated: float
    degenerate: bool

    @property
    def label(self) -> str:
        return "Convex" if self.convex else "Flat"


def classify_atom(ladder: HeatLadder, k: int, j, epsilon: float,
                  params: ProofParameters) -> Classification:
    """Convex iff the weighted mass gain from level ``k`` to ``k+3`` is at least
    ``epsilon`` times the heated level-``k+3`` mass; zero data is a degenerate Flat."""
    if k + 3 > ladder.K:
        raise ValueError(f"ladder too shallow: level {k} needs K >= {k + 3}")
    idx = np.atleast_2d(np.asarray(j, dtype=np.int64))
    w = lattice_weight(params.theta1, ladder.grid.d)
    vals = level_integrals(ladder.grid, k, ladder.A, _level_data(ladder, k), idx, w)[0]
    plain, heated = vals[0], vals[2]
    if heated == 0.0:
        return Classification(False, 0.0, 0.0, True)
    diff = heated - plain
    return Classification(bool(diff >= epsilon * heated), float(diff), float(heated), False)


# --- maximal functions and graphs -----------------------------------------------

def _decay_matrix(a: np.ndarray, b: np.ndarray, theta: float) -> np.ndarray:
    diff = a[:, None, :].astype(float) - b[None, :, :].astype(float)
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return np.exp(-theta * np.log1p(r))


def _lex_order(indices: np.ndarray) -> np.ndarray:
    """Rank of each row in lexicographic order."""
    order = np.lexsort(indices.T[::-1])
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank


def maximal_all(indices: np.ndarray, star: np.ndarray, theta4: float,
                block: int = 1 << 22):
    """``M_j = max_i (1+|i-j|)^-theta4 star_i`` over the table, with argmax.

    Ties go to ``j`` itself when it attains the maximum, otherwise to the
    lexicographically smallest index.
    """
    n = star.size
    M = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    rank = _lex_order(indices)
    by_rank = np.argsort(rank)
    step = max(1, block // max(1, n))
    for s in range(0, n, step):
        rows = np.arange(s, min(n, s + step))
        # columns in lexicographic order so argmax picks the smallest index
        vals = _decay_matrix(indices[rows], indices[by_rank], theta4) * star[by_rank][None, :]
        best = np.argmax(vals, axis=1)
        M[rows] = vals[np.arange(rows.size), best]
        arg[rows] = by_rank[best]
    self_ties = star >= M
    arg[self_ties] = np.arange(n)[self_ties]
    return M, arg


def maximal_function(table: AtomTable, j, theta4: float, window_radius=None):
    """``M^{theta4}_{k,j}`` and the maximizing index.

    With ``window_radius`` the supremum runs over ``|i - j|_inf <= R_w``, and
    the dropped atoms must satisfy ``(1+R_w)^-theta4 max_star <= 1e-12 M``.
    """
    pos = table.position(j)
    jj = table.indices[pos]
    sel = np.arange(len(table))
    if window_radius is not None:
        inside = np.max(np.abs(table.indices - jj), axis=1) <= window_radius
        outside = ~inside
        sel = np.flatnonzero(inside)
    vals = _decay_matrix(jj[None, :], table.indices[sel], theta4)[0] * table.star[sel]
    best = float(vals.max())
    if window_radius is not None and outside.any():
        tail = (1.0 + window_radius) ** (-theta4) * float(table.star[outside].max())
        if tail > 1e-12 * best:
            raise ValueError("window too small: tail bound exceeds 1e-12 of the result")
    if table.star[pos] >= best:
        return best, tuple(jj)
    cand = sel[vals == best]
    pick = cand[np.argmin(_lex_order(table.indices)[cand])]
    return best, tuple(table.indices[pick])


@dataclass(frozen=True, eq=False)
class HorizontalGraph:
    """Arrows ``src[j] -> j`` within one level; ``src[j] = -1`` means none."""

    k: int
    src: np.ndarray

    @property
    def arrows(self) -> list[tuple[int, int]]:
        return [(int(s), int(t)) for t, s in enumerate(self.src) if s >= 0]

    def has_incoming(self) -> np.ndarray:
        return self.src >= 0

    def is_source(self) -> np.ndarray:
        out = np.zeros(self.src.size, dtype=bool)
        out[self.src[self.src >= 0]] = True
        return out


def build_horizontal_graph(indices: np.ndarray, star: np.ndarray, lam: float,
                           theta4: float, k: int = 0, choice: str = "argmax",
                           maximal=None) -> HorizontalGraph:
    """Pick ``jhat`` with ``M_j <= lam (1+|jhat-j|)^-theta4 star_jhat``; arrow iff ``jhat != j``.

    ``choice='argmax'`` takes the maximizer itself.  ``choice='first'``
    takes ``j`` when admissible, else the lexicographically first admissible
    index, which exercises the full slack ``lam``.
    """
    indices = np.atleast_2d(indices)
    star = np.asarray(star, float)
    n = star.size
    if maximal is None:
        M, arg = maximal_all(indices, star, theta4)
    else:
        M, arg = maximal
    src = np.full(n, -1, dtype=np.int64)
    if choice == "argmax":
        hat = arg
    elif choice == "first":
        hat = np.empty(n, dtype=np.int64)
        by_rank = np.argsort(_lex_order(indices))
        for s in range(n):
            if M[s] <= lam * star[s]:
                hat[s] = s
                continue
            vals = _decay_matrix(indices[s:s + 1], indices[by_rank], theta4)[0] * star[by_rank]
            ok = np.flatnonzero(M[s] <= lam * vals)
            hat[s] = by_rank[ok[0]] if ok.size else arg[s]
    else:
        raise ValueError(f"unknown choice rule {choice!r}")
    live = (hat != np.arange(n)) & (M > 0)
    src[live] = hat[live]
    return HorizontalGraph(k, src)


def saturation(M: np.ndarray, star: np.ndarray, Ksat: float = 2.0) -> np.ndarray:
    return np.asarray(M) <= Ksat * np.asarray(star)


def graph_violations(graph: HorizontalGraph, M, star, Ksat: float = 2.0) -> dict:
    """Counts of two-step paths, unsaturated arrowless vertices and unsaturated sources."""
    sat = saturation(M, star, Ksat)
    inc = graph.has_incoming()
    srcs = graph.is_source()
    return {
        "two_paths": int(np.sum(srcs & inc)),
        "arrowless_unsaturated": int(np.sum(~inc & ~sat)),
        "sources_unsaturated": int(np.sum(srcs & ~sat)),
        "self_loops": int(np.sum(graph.src == np.arange(graph.src.size))),
    }


# --- vertical forest ------------------------------------------------------------

@dataclass(eq=False)
class VerticalForest:
    """Arrows between flat atoms of consecutive levels.

    Vertices are ``(k, position)`` pairs into the per-level tables.
    """

    parent: dict
    children: dict
    vertices: list
    roots: list
    tree_of: dict

    def depth_members(self, root) -> dict:
        """Members of the tree at ``root``, grouped by level."""
        out = {}
        stack = [root]
        while stack:
            v = stack.pop()
            out.setdefault(v[0], []).append(v[1])
            stack.extend(self.children.get(v, []))
        return out


def build_vertical_forest(tables: list[AtomTable], graphs: list[HorizontalGraph],
                          A: int) -> VerticalForest:
    """Arrows ``(k, j) -> (k+1, j')`` between flat, non-degenerate atoms.

    The source must be 2-saturated and either contain ``Q_{k+1,j'}`` or be
    the horizontal source of the unsaturated cube that contains it.
    """
    if A % 2 == 0:
        raise ValueError("cube nesting needs odd A")
    vert = []
    is_vertex = []
    for t in tables:
        ok = t.flat & ~t.degenerate
        is_vertex.append(ok)
        vert.extend((t.k, int(n)) for n in np.flatnonzero(ok))
    parent, children = {}, {}
    for lvl in range(len(tables) - 1):
        up, down = tables[lvl], tables[lvl + 1]
        g = graphs[lvl]
        for c in np.flatnonzero(is_vertex[lvl + 1]):
            P = up.get(parent_index(down.indices[c], A))
            if P is None:
                continue
            src = None
            if up.saturated[P]:
                src = P
            elif g.src[P] >= 0:
                src = int(g.src[P])
            if src is None or not (is_vertex[lvl][src] and up.saturated[src]):
                continue
            a, b = (up.k, int(src)), (down.k, int(c))
            parent[b] = a
            children.setdefault(a, []).append(b)
    roots = [v for v in vert if v not in parent]
    tree_of = {}
    for r in roots:
        stack = [r]
        while stack:
            v = stack.pop()
            tree_of[v] = r
            stack.extend(children.get(v, []))
    return VerticalForest(parent, children, vert, roots, tree_of)


# --- concentration and weight identities -----------------------------------------

@dataclass(frozen=True)
class ConcentrationResult:
    passed: bool
    ratio: float
    degenerate: bool


def concentration_check(ladder: HeatLadder, k: int, j, C: float, params: ProofParameters,
                        theta2: float | None = None) -> ConcentrationResult:
    """Ratio of ``||f_{k+2}||_{L1(u_{k,j})}`` to ``f*_{k,j}`` with
    ``u_{k,j}(x) = (1 + |A^k x - j|)^-theta2``."""
    theta2 = params.theta2 if theta2 is None else theta2
    if not theta2 > params.theta4 + ladder.grid.d:
        raise ValueError("need theta2 > theta4 + d")
    g = ladder.grid
    jj = np.asarray(j, float).reshape(1, -1)
    y = g.points() * float(ladder.A) ** k - jj
    u = np.exp(-theta2 * np.log1p(np.sqrt(np.sum(y * y, axis=1))))
    num = g.cell_volume * float(np.sum(ladder[k + 2].magnitude().ravel() * u))
    den = atom_star(ladder, k, j, params)
    if den == 0.0:
        return ConcentrationResult(num <= 0.0, 0.0, True)
    ratio = num / den
    return ConcentrationResult(ratio <= C, ratio, False)


def saturated_concentration_constant(params: ProofParameters) -> float:
    """Constant for the concentration inequality at a 2-saturated atom.

    ``2 s_u(sqrt d) s_w(sqrt d) / Heat[w](0, 1 - A^-4) * sum_i (1+|i|)^(theta4-theta2)``
    with ``u = (1+|x|)^-theta2``; the lattice sum includes an integral tail bound.
    """
    d = params.d
    w = lattice_weight(params.theta1, d)
    c_w, C_w = w.bounds
    s_u = (1 + math.sqrt(d)) ** params.theta2
    s_w = C_w / c_w * (1 + math.sqrt(d)) ** params.theta1
    w0 = float(Heated(w, 1 - float(params.A) ** -4)(np.zeros((1, d)))[0])
    e = params.theta2 - params.theta4
    R = {1: 20000, 2: 300, 3: 40}[d]
    ax = np.arange(-R, R + 1, dtype=float)
    if d == 1:
        total = float(np.sum((1 + np.abs(ax)) ** -e))
    else:
        grids = np.meshgrid(*([ax] * d), indexing="ij")
        r = np.sqrt(sum(gg * gg for gg in grids))
        total = float(np.sum((1 + r) ** -e))
    total += d * 2**d * (R + 0.5) ** (d - e) / (e - d)
    return 2 * s_u * s_w / w0 * total


def sum_of_weights_constant(A: int, theta1: float, d: int, probes=None) -> float:
    """Largest ratio ``sum_{Q_{1,j} in Q_{0,0}} w(Ax - j) / w(x)`` over probes."""
    w = lattice_weight(theta1, d)
    if probes is None:
        ax = np.linspace(-6, 6, 97 if d == 1 else (25 if d == 2 else 9))
        probes = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    half = (A - 1) // 2
    kids = np.stack(np.meshgrid(*([np.arange(-half, half + 1)] * d), indexing="ij"), -1).reshape(-1, d)
    top = np.zeros(probes.shape[0])
    for j in kids:
        top += w.evaluate(A * probes - j)
    return float(np.max(top / w.evaluate(probes)))


def partition_defect(grid: GridSpec, k: int, A: int, theta1: float) -> float:
    """``max_x |sum_j w(A^k x - j) - 1|`` over the grid nodes.

    Uses the full truncated lattice sum (no interpolation) for the numerator
    and the production evaluation for the denominator.  Nodes with equal
    offsets from the lattice share one evaluation.
    """
    w = lattice_weight(theta1, grid.d)
    pts = grid.points() * float(A) ** k
    _, u = w.split(pts)
    key = np.round(u, 13)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    reps = np.zeros_like(uniq)
    reps[inv] = pts
    num = w.lattice_sum_direct(reps)
    den = w.lattice_sum(reps)
    return float(np.max(np.abs(num / den - 1.0)))


def level_l1(ladder: HeatLadder) -> np.ndarray:
    g = ladder.grid
    return np.array([g.cell_volume * float(np.sum(lev.magnitude())) for lev in ladder.levels])


def table_rows(tables: list[AtomTable], graphs=None, forest=None):
    """Rows ``k, j, star, flag, maximal, saturated, h_arrow_src, v_arrow_dst``."""
    header = ("k", "j", "star", "flag", "maximal", "saturated", "h_arrow_src", "v_arrow_dst")
    rows = []
    for lvl, t in enumerate(tables):
        g = graphs[lvl] if graphs else None
        for n in range(len(t)):
            j = ",".join(str(int(v)) for v in t.indices[n])
            flag = "Convex" if t.convex[n] else ("Flat*" if t.degenerate[n] else "Flat")
            src = ""
            if g is not None and g.src[n] >= 0:
                src = ",".join(str(int(v)) for v in t.indices[g.src[n]])
            dst = ""
            if forest is not None:
                kids = forest.children.get((t.k, n), [])
                nxt = tables[lvl + 1] if lvl + 1 < len(tables) else None
                if kids and nxt is not None:
                    dst = ";".join(",".join(str(int(v)) for v in nxt.indices[c]) for _, c in kids)
            rows.append((t.k, j, t.star[n], flag, t.maximal[n], bool(t.saturated[n]), src, dst))
    return header, rows
