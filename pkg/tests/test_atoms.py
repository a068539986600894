import numpy as np
import pytest
from hypothesis import given, strategies as st

from heatlab import atoms as at
from heatlab.field_grid import Field, gen_bump, gen_near_delta, make_grid
from heatlab.heat_flow import build_ladder
from heatlab.params import ProofParameters

P4 = ProofParameters(d=1, K=4)


@pytest.fixture(scope="module")
def delta_ladder():
    g = make_grid(1, 8192, 16.0)
    return build_ladder(gen_near_delta(g, 0.05, center=[1.0]), 3, 4)


@pytest.fixture(scope="module")
def dipole_ladder():
    g = make_grid(1, 16384, 10.0)
    d = gen_bump(g, [-0.1], 0.03) - gen_bump(g, [0.1], 0.03)
    return build_ladder(Field(g, d[None]), 3, 5)


def test_parent_index_nesting():
    for A in (3, 5):
        half = (A - 1) // 2
        for j in range(-20, 21):
            kids = A * j + np.arange(-half, half + 1)
            assert all(int(at.parent_index([c], A)[0]) == j for c in kids)


def test_cube_labels_match_parent():
    g = make_grid(1, 512, 4.0)
    l0 = at.cube_labels(g, 0, 3)
    l1 = at.cube_labels(g, 1, 3)
    np.testing.assert_array_equal(at.parent_index(l1, 3), l0)


@pytest.mark.parametrize("k", range(4))
def test_partition_defect(k):
    assert at.partition_defect(make_grid(1, 2048, 8.0), k, 3, 6.0) <= 1e-10


def test_star_peaks_at_source(delta_ladder):
    for k, j0 in ((0, 1), (1, 3)):
        t = at.build_atom_table(delta_ladder, k, P4.with_(K=4)) if k + 3 <= 4 else None
        idx = t.indices[np.argmax(t.star), 0]
        assert idx == j0
        assert at.atom_star(delta_ladder, k, [j0], P4) == pytest.approx(t.star[t.position(j0)],
                                                                       rel=1e-12)


def test_star_translation_covariance():
    g = make_grid(1, 8192, 16.0)
    f = gen_near_delta(g, 0.1, center=[0.5])
    shifted = Field(g, np.roll(f.data, round(1 / g.h), axis=1))
    a = at.build_atom_table(build_ladder(f, 3, 4), 0, P4)
    b = at.build_atom_table(build_ladder(shifted, 3, 4), 0, P4)
    scale = a.star.max()
    for n, j in enumerate(a.indices[:, 0]):
        q = b.get([j + 1])
        if q is not None:
            assert abs(b.star[q] - a.star[n]) <= 1e-8 * scale


def test_zero_field():
    g = make_grid(1, 2048, 10.0)
    lad = build_ladder(Field(g, np.zeros((1, 2048))), 3, 3)
    assert at.atom_star(lad, 0, [0], P4) == 0.0
    c = at.classify_atom(lad, 0, [0], 0.01, P4)
    assert c.degenerate and not c.convex and c.label == "Flat" and c.defect == 0.0
    r = at.concentration_check(lad, 0, [0], 10.0, P4)
    assert r.passed and r.degenerate


def test_rank_one_nonnegative_is_flat(delta_ladder):
    scale = float(np.sum(delta_ladder.base.magnitude())) * delta_ladder.grid.h
    t = at.build_atom_table(delta_ladder, 0, P4)
    assert not t.convex.any()
    assert np.max(np.abs(t.defect)) <= 1e-9 * scale


def test_dipole_has_convex_scale(dipole_ladder):
    P = ProofParameters(d=1, K=5)
    convex = [at.classify_atom(dipole_ladder, k, [0], 0.01, P).convex for k in range(3)]
    assert any(convex)


def test_per_atom_positivity_on_signed_data():
    g = make_grid(1, 4096, 10.0)
    rng = np.random.default_rng(7)
    d = sum(rng.normal() * gen_bump(g, [c], 0.08) for c in rng.uniform(-3, 3, 8))
    lad = build_ladder(Field(g, d[None]), 3, 4)
    scale = float(np.sum(np.abs(d))) * g.h
    t = at.build_atom_table(lad, 0, P4)
    assert t.defect.min() >= -1e-9 * scale
    l1 = at.level_l1(lad)
    assert np.all(np.diff(l1) >= -1e-9 * scale)


def test_maximal_function_examples():
    idx = np.arange(-6, 7)[:, None]
    star = np.zeros(13)
    star[8] = 5.0  # j0 = 2
    t = at.AtomTable(0, idx, star)
    for j in range(-6, 7):
        M, arg = at.maximal_function(t, [j], 3.0)
        assert M == pytest.approx((1 + abs(j - 2)) ** -3.0 * 5.0, rel=1e-14)
        assert arg == (2,)
    const = at.AtomTable(0, idx, np.full(13, 2.0))
    M, arg = at.maximal_all(const.indices, const.star, 3.0)
    np.testing.assert_array_equal(M, 2.0)
    np.testing.assert_array_equal(arg, np.arange(13))


def test_maximal_window_certificate():
    idx = np.arange(-30, 31)[:, None]
    star = np.exp(-np.abs(idx[:, 0]).astype(float))
    t = at.AtomTable(0, idx, star)
    assert at.maximal_function(t, [0], 3.0, window_radius=30)[0] == 1.0
    with pytest.raises(ValueError, match="window too small"):
        at.maximal_function(t, [20], 3.0, window_radius=2)


@given(seed=st.integers(0, 10**6), d=st.sampled_from([1, 2]))
def test_maximal_brute_force(seed, d):
    rng = np.random.default_rng(seed)
    idx = rng.integers(-6, 7, size=(25, d))
    idx = np.unique(idx, axis=0)
    star = rng.exponential(size=len(idx)) * (rng.random(len(idx)) < 0.7)
    M, arg = at.maximal_all(idx, star, 3.0)
    for n in range(len(idx)):
        vals = [(1 + np.linalg.norm(idx[i] - idx[n])) ** -3.0 * star[i] for i in range(len(idx))]
        assert M[n] == pytest.approx(max(vals), rel=1e-13, abs=0)
        assert vals[arg[n]] == pytest.approx(M[n], rel=1e-13, abs=0)


def test_graph_examples():
    lam, th = ProofParameters().lam, 3.0
    idx = np.arange(-5, 6)[:, None]
    spike = np.zeros(11)
    spike[5] = 1.0
    g = at.build_horizontal_graph(idx, spike, lam, th)
    assert sorted(t for _, t in g.arrows) == [n for n in range(11) if n != 5]
    assert all(s == 5 for s, _ in g.arrows)
    M, _ = at.maximal_all(idx, spike, th)
    sat = at.saturation(M, spike)
    assert np.flatnonzero(sat).tolist() == [5]
    flat = np.ones(11)
    assert at.build_horizontal_graph(idx, flat, lam, th).arrows == []
    assert at.saturation(*at.maximal_all(idx, flat, th)[:1], flat).all()
    assert at.build_horizontal_graph(idx, np.zeros(11), lam, th).arrows == []
    with pytest.raises(ValueError):
        at.build_horizontal_graph(idx, flat, lam, th, choice="nope")


@pytest.mark.parametrize("choice", ["argmax", "first"])
def test_random_graphs_have_no_two_paths(choice):
    rng = np.random.default_rng(11)
    for d in (1, 2):
        lam = ProofParameters(d=d).lam
        th = ProofParameters(d=d).theta4
        for _ in range(150):
            n = rng.integers(5, 30)
            idx = np.unique(rng.integers(-8, 9, size=(n, d)), axis=0)
            star = rng.exponential(size=len(idx)) ** 3
            M, arg = at.maximal_all(idx, star, th)
            g = at.build_horizontal_graph(idx, star, lam, th, choice=choice, maximal=(M, arg))
            v = at.graph_violations(g, M, star)
            assert v == {"two_paths": 0, "arrowless_unsaturated": 0, "sources_unsaturated": 0,
                         "self_loops": 0}
            hat = np.where(g.src >= 0, g.src, np.arange(len(idx)))
            r = np.linalg.norm(idx[hat] - idx, axis=1)
            assert np.all(M <= lam * (1 + r) ** -th * star[hat] * (1 + 1e-12))


def _flat_table(k, idx, star):
    t = at.AtomTable(k, np.asarray(idx)[:, None], star, heated3=np.ones(len(star)),
                     plain=np.ones(len(star)))
    t.maximal, t.argmax = at.maximal_all(t.indices, t.star, 3.0)
    t.saturated = at.saturation(t.maximal, t.star)
    return t


def test_forest_hand_traced():
    lam = ProofParameters().lam
    top = _flat_table(0, [-1, 0, 1], np.array([0.0, 1.0, 0.0]))
    bot = _flat_table(1, list(range(-4, 5)), np.where(np.arange(-4, 5) == 0, 1.0, 0.0))
    graphs = [at.build_horizontal_graph(t.indices, t.star, lam, 3.0, t.k,
                                        maximal=(t.maximal, t.argmax)) for t in (top, bot)]
    forest = at.build_vertical_forest([top, bot], graphs, 3)
    root = (0, 1)
    members = forest.depth_members(root)
    assert sorted(members[1]) == list(range(9))
    assert all(forest.parent[(1, n)] == root for n in range(9))
    others = [r for r in forest.roots if r != root]
    assert sorted(others) == [(0, 0), (0, 2)]
    assert all(len(forest.children.get(r, [])) == 0 for r in others)
    for child, par in forest.parent.items():
        assert child[0] == par[0] + 1
    with pytest.raises(ValueError):
        at.build_vertical_forest([top, bot], graphs, 4)


def test_forest_empty_without_flat_atoms():
    t = at.AtomTable(0, np.arange(3)[:, None], np.ones(3), heated3=np.ones(3),
                     plain=np.zeros(3))
    t.maximal, t.argmax = at.maximal_all(t.indices, t.star, 3.0)
    t.saturated = at.saturation(t.maximal, t.star)
    g = at.build_horizontal_graph(t.indices, t.star, 1.5, 3.0)
    f = at.build_vertical_forest([t, t], [g, g], 3)
    assert f.vertices == [] and f.roots == []


def test_forest_invariants_on_real_input(dipole_ladder):
    from heatlab.reports import analyze_atoms
    an = analyze_atoms(dipole_ladder, ProofParameters(d=1, K=5, epsilon=0.5))
    f = an.forest
    assert len(set(f.parent)) == len(f.parent)
    for child, par in f.parent.items():
        assert child[0] == par[0] + 1
        t = an.tables[par[0] - an.tables[0].k]
        assert t.saturated[par[1]] and t.flat[par[1]] and not t.degenerate[par[1]]
    assert set(f.tree_of) == set(f.vertices)


def test_concentration(delta_ladder):
    C = at.saturated_concentration_constant(P4)
    t = at.build_atom_table(delta_ladder, 0, P4)
    for n in np.flatnonzero(t.saturated):
        assert at.concentration_check(delta_ladder, 0, t.indices[n], C, P4).passed
    near = at.concentration_check(delta_ladder, 0, [1], C, P4)
    assert near.passed and 0.5 < near.ratio < 10
    # moving the atom away from the mass makes the ratio grow linearly
    r10 = at.concentration_check(delta_ladder, 0, [-9], C, P4).ratio
    r14 = at.concentration_check(delta_ladder, 0, [-13], C, P4).ratio
    assert r14 > r10 > near.ratio
    assert 1.2 < r14 / r10 < 2.0
    assert not at.concentration_check(delta_ladder, 0, [-13], 1.5 * near.ratio, P4).passed
    with pytest.raises(ValueError):
        at.concentration_check(delta_ladder, 0, [0], C, P4, theta2=3.0)


def test_sum_of_weights_and_rows(delta_ladder):
    c = at.sum_of_weights_constant(3, 6.0, 1)
    assert 1.0 <= c < 10
    t = at.build_atom_table(delta_ladder, 0, P4)
    header, rows = at.table_rows([t])
    assert header == ("k", "j", "star", "flag", "maximal", "saturated", "h_arrow_src",
                      "v_arrow_dst")
    assert len(rows) == len(t)


def test_shallow_ladder_rejected():
    g = make_grid(1, 2048, 10.0)
    lad = build_ladder(Field(g, gen_bump(g, width=1.0)[None]), 3, 2)
    with pytest.raises(ValueError, match="shallow"):
        at.build_atom_table(lad, 0, P4)
    with pytest.raises(ValueError, match="shallow"):
        at.atom_star(lad, 1, [0], P4)
