"""Embedding-sum reports built on heat ladders and atom tables."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import atoms as at
from .field_grid import Field
from .heat_flow import HeatLadder, build_ladder
from .norms import lorentz_norm
from .params import ProofParameters

__all__ = [
    "EmbeddingRow",
    "embedding_report",
    "ConvexReport",
    "convex_sum_report",
    "TreeRow",
    "tree_budget_report",
    "telescoping_audit",
    "partition_audit",
    "AtomAnalysis",
    "analyze_atoms",
    "resolvable_levels",
]


def l1(f: Field) -> float:
    return f.grid.cell_volume * float(np.sum(f.magnitude()))


@dataclass(frozen=True)
class EmbeddingRow:
    k: int
    term: float
    partial_sum: float
    ratio: float


def embedding_report(f: Field, params: ProofParameters, ladder: HeatLadder | None = None,
                     resolution: str = "scale") -> list[EmbeddingRow]:
    """Rows ``k, A^{-alpha k} ||f_k||_{L_{p,1}}``, running sum and ratio to ``||f||_{L1}``."""
    if ladder is None:
        ladder = build_ladder(f, params.A, params.K, resolution=resolution)
    norm = l1(f)
    rows, total = [], 0.0
    for k in range(ladder.K + 1):
        term = float(params.A) ** (-params.alpha * k) * lorentz_norm(ladder[k], params.p, 1.0)
        total += term
        rows.append(EmbeddingRow(k, term, total, total / norm if norm > 0 else 0.0))
    return rows


@dataclass(eq=False)
class AtomAnalysis:
    ladder: HeatLadder
    params: ProofParameters
    tables: list
    graphs: list
    forest: at.VerticalForest
    _nodes: dict = field(default_factory=dict, repr=False)


def resolvable_levels(ladder: HeatLadder) -> range:
    """Levels ``k <= K-3`` whose cubes span at least two grid cells."""
    h = ladder.grid.h
    top = 0
    while top <= ladder.K - 3 and float(ladder.A) ** (-top) >= 2 * h * (1 - 1e-12):
        top += 1
    return range(top)


def analyze_atoms(ladder: HeatLadder, params: ProofParameters, choice: str = "argmax",
                  levels=None) -> AtomAnalysis:
    """Atom tables (levels ``0..K-3`` by default) with horizontal graphs and forest."""
    levels = resolvable_levels(ladder) if levels is None else levels
    if len(levels) == 0:
        raise ValueError("no resolvable atom level: refine the grid or deepen the ladder")
    tables = at.build_atom_tables(ladder, params, levels)
    graphs = [at.build_horizontal_graph(t.indices, t.star, params.lam, params.theta4, t.k,
                                        choice=choice, maximal=(t.maximal, t.argmax))
              for t in tables]
    forest = at.build_vertical_forest(tables, graphs, params.A)
    return AtomAnalysis(ladder, params, tables, graphs, forest)


def node_atoms(ladder: HeatLadder, k: int, A: int, table: at.AtomTable) -> np.ndarray:
    """Table position of the level-``k`` cube holding each node (``-1`` if absent)."""
    labels = at.cube_labels(ladder.grid, k, A)
    uniq, inv = np.unique(labels, axis=0, return_inverse=True)
    look = np.array([-1 if (q := table.get(u)) is None else q for u in uniq], dtype=np.int64)
    return look[inv.reshape(-1)]


def _region(an: "AtomAnalysis", lvl: int, members) -> np.ndarray:
    """Node mask of the union of cubes of table ``lvl`` at positions ``members``."""
    if lvl not in an._nodes:
        t = an.tables[lvl]
        an._nodes[lvl] = node_atoms(an.ladder, t.k, an.params.A, t)
    return np.isin(an._nodes[lvl], np.asarray(list(members), dtype=np.int64))


@dataclass(frozen=True)
class ConvexReport:
    lhs: float
    rhs: float
    ratio: float
    coverage: tuple
    terms: tuple


def convex_sum_report(an: AtomAnalysis) -> ConvexReport:
    """``sum_k A^{-alpha k} ||f_k||_{L_{p,1}(union of convex cubes)}`` against ``||f||_{L1}``."""
    P, lad = an.params, an.ladder
    terms, cover = [], []
    for lvl, t in enumerate(an.tables):
        mask = _region(an, lvl, np.flatnonzero(t.convex))
        cover.append(float(mask.mean()))
        val = lorentz_norm(lad[t.k], P.p, 1.0, region=mask) if mask.any() else 0.0
        terms.append(float(P.A) ** (-P.alpha * t.k) * val)
    lhs = float(sum(terms))
    rhs = l1(lad.base)
    return ConvexReport(lhs, rhs, lhs / rhs if rhs > 0 else 0.0, tuple(cover), tuple(terms))


@dataclass(frozen=True)
class TreeRow:
    root_k: int
    root_j: tuple
    size: int
    depth_mass: tuple       # (k, A^{-alpha k} ||f_k||_{L_{p,1}(member cubes)})
    budget: float
    ratio: float
    decay_rate: float


def _root_budgets(an: AtomAnalysis) -> dict:
    """Telescoping charge of each root.

    Level-0 roots pay ``f*_{0,j}``.  A root at level ``k >= 1`` pays the
    convexity gain ``D_{k-1,i}`` of its parent cube ``i`` (or of the
    horizontal source of that parent, if it has one), shared equally
    among the roots that draw on the same atom.
    """
    P = an.params
    owners = {}
    charge = {}
    for r in an.forest.roots:
        k, n = r
        lvl = k - an.tables[0].k
        if lvl == 0:
            charge[r] = float(an.tables[0].star[n])
            continue
        up = an.tables[lvl - 1]
        par = up.get(at.parent_index(an.tables[lvl].indices[n], P.A))
        if par is None:
            charge[r] = 0.0
            continue
        src = an.graphs[lvl - 1].src[par]
        key = (lvl - 1, int(src) if src >= 0 else int(par))
        owners.setdefault(key, []).append(r)
    for (lvl, n), roots in owners.items():
        pay = max(0.0, float(an.tables[lvl].defect[n])) / len(roots)
        for r in roots:
            charge[r] = pay
    return charge


def tree_budget_report(an: AtomAnalysis) -> list[TreeRow]:
    P, lad = an.params, an.ladder
    budgets = _root_budgets(an)
    base = {t.k: i for i, t in enumerate(an.tables)}
    rows = []
    for r in an.forest.roots:
        members = an.forest.depth_members(r)
        depth = []
        for k in sorted(members):
            mask = _region(an, base[k], members[k])
            val = lorentz_norm(lad[k], P.p, 1.0, region=mask)
            depth.append((k, float(P.A) ** (-P.alpha * k) * val))
        mass = sum(v for _, v in depth)
        rate = float("nan")
        vals = np.array([v for _, v in depth])
        if vals.size > 1 and np.all(vals > 0):
            rate = float(np.exp(np.mean(np.diff(np.log(vals)))))
        b = budgets.get(r, 0.0)
        rows.append(TreeRow(r[0], tuple(int(v) for v in an.tables[base[r[0]]].indices[r[1]]),
                            sum(len(v) for v in members.values()), tuple(depth), b,
                            mass / b if b > 0 else float("inf"), rate))
    return rows


def telescoping_audit(an: AtomAnalysis) -> dict:
    """Per-atom positive gains summed over levels against ``3 ||f||_{L1}``."""
    gains = sum(float(np.sum(np.maximum(t.defect, 0.0))) for t in an.tables)
    worst = min((float(np.min(t.defect)) for t in an.tables), default=0.0)
    norm = l1(an.ladder.base)
    tree_total = sum(_root_budgets(an).values())
    return {"gains": gains, "bound": 3 * norm, "norm": norm, "most_negative": worst,
            "tree_budgets": tree_total, "passed": gains <= 3 * norm * (1 + 1e-6)}


def partition_audit(an: AtomAnalysis) -> dict:
    """Every atom is convex, in exactly one tree, or degenerate."""
    convex = sum(int(t.convex.sum()) for t in an.tables)
    degenerate = sum(int(t.degenerate.sum()) for t in an.tables)
    total = sum(len(t) for t in an.tables)
    in_trees = len(an.forest.tree_of)
    roots = set(an.forest.roots)
    orphans = [v for v in an.forest.vertices if an.forest.tree_of.get(v) not in roots]
    return {"atoms": total, "convex": convex, "in_trees": in_trees, "degenerate": degenerate,
            "orphans": len(orphans), "passed": convex + in_trees + degenerate == total and not orphans}
