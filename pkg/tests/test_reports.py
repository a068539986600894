import numpy as np
import pytest

from heatlab import reports as rp
from heatlab.field_grid import Field, gen_bump, gen_near_delta, make_grid
from heatlab.heat_flow import build_ladder
from heatlab.params import ProofParameters

P5 = ProofParameters(d=1, K=5)


@pytest.fixture(scope="module")
def grid():
    return make_grid(1, 16384, 10.0)


@pytest.fixture(scope="module")
def spike(grid):
    return rp.analyze_atoms(build_ladder(gen_near_delta(grid, 0.01), 3, 5), P5)


@pytest.fixture(scope="module")
def dipole(grid):
    d = gen_bump(grid, [-0.1], 0.03) - gen_bump(grid, [0.1], 0.03)
    return Field(grid, d[None])


def test_embedding_zero_and_prefix(grid):
    zero = Field(grid, np.zeros((1, grid.N)))
    rows = rp.embedding_report(zero, P5)
    assert len(rows) == 6 and all(r.term == 0 and r.partial_sum == 0 and r.ratio == 0 for r in rows)
    f = gen_near_delta(grid, 0.05)
    short = rp.embedding_report(f, P5.with_(K=3))
    long = rp.embedding_report(f, P5.with_(K=5))
    assert long[:4] == short


def test_embedding_row_fields(grid):
    rows = rp.embedding_report(gen_near_delta(grid, 0.05), P5)
    assert [r.k for r in rows] == list(range(6))
    np.testing.assert_allclose(np.cumsum([r.term for r in rows]), [r.partial_sum for r in rows])


def test_convex_report(spike, dipole):
    assert rp.convex_sum_report(spike).lhs == 0.0
    P = ProofParameters(d=1, K=5)
    a = rp.convex_sum_report(rp.analyze_atoms(build_ladder(dipole, 3, 5), P))
    b = rp.convex_sum_report(rp.analyze_atoms(build_ladder(dipole * 5.0, 3, 5), P))
    assert a.lhs > 0 and np.isfinite(a.ratio)
    assert abs(a.ratio - b.ratio) <= 1e-9 * a.ratio
    assert all(0 <= c <= 1 for c in a.coverage)


def test_tree_report_spike(spike):
    rows = rp.tree_budget_report(spike)
    mass = sorted((sum(v for _, v in r.depth_mass) for r in rows), reverse=True)
    assert mass[0] >= 3 * mass[1]
    top = max(rows, key=lambda r: sum(v for _, v in r.depth_mass))
    assert top.root_k == 0 and top.root_j == (0,)
    assert np.isfinite(top.decay_rate) and top.decay_rate > 0
    audit = rp.telescoping_audit(spike)
    assert audit["passed"] and audit["tree_budgets"] <= audit["bound"] * (1 + 1e-6)
    assert sum(r.budget for r in rows) == pytest.approx(audit["tree_budgets"])


def test_tree_report_without_flat_atoms(dipole):
    an = rp.analyze_atoms(build_ladder(dipole, 3, 5), ProofParameters(d=1, K=5, epsilon=1e-6))
    if not any(t.flat.any() for t in an.tables):
        assert rp.tree_budget_report(an) == []
    an.forest.roots.clear()
    assert rp.tree_budget_report(an) == []


def test_partition_audit(spike, dipole):
    for an in (spike, rp.analyze_atoms(build_ladder(dipole, 3, 5), P5)):
        audit = rp.partition_audit(an)
        assert audit["passed"] and audit["orphans"] == 0
        assert audit["convex"] + audit["in_trees"] + audit["degenerate"] == audit["atoms"]


def test_resolvable_levels(grid):
    lad = build_ladder(gen_near_delta(grid, 0.05), 3, 5)
    assert list(rp.resolvable_levels(lad)) == [0, 1, 2]
    coarse = make_grid(1, 512, 10.0)
    lad2 = build_ladder(gen_near_delta(coarse, 0.2), 3, 3, resolution="content")
    assert list(rp.resolvable_levels(lad2)) == [0]
