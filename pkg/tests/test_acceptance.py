"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed in
the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import time

import numpy as np
from scipy.special import gamma

from heatlab import atoms as at
from heatlab import reports as rp
from heatlab.cli import random_measure
from heatlab.field_grid import (Field, PointMeasure, gen_bump, gen_divfree_field,
                                gen_gradient_field, gen_near_delta, make_grid)
from heatlab.heat_flow import build_ladder, heat_extend, heat_weight, semigroup_defect
from heatlab.monotonicity import (ConeSample, QpSolver, bct_identity_defect, improved_exponent,
                                  line_measure, monotonicity_scan)
from heatlab.norms import lorentz_norm, lorentz_split_defect, lp_norm
from heatlab.params import ProofParameters
from heatlab.spectral import (BandFilter, apply_multiplier, band_is_resolvable, besov_band,
                              cancellation_defect, divfree_symbol, gradient_symbol,
                              riesz_potential)
from heatlab.weights import PolyDecay, Unit

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def summary_lines() -> list[str]:
    return [f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
            for n, (ok, detail) in sorted(RESULTS.items())]


def _weighted_lp(data: np.ndarray, w: np.ndarray, p: float, dv: float) -> float:
    mag = np.sqrt(np.sum(data * data, axis=0))
    return (dv * math.fsum((mag**p * w).ravel())) ** (1 / p)


# ---------------------------------------------------------------------------

def test_c01_bct_identity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for i in range(120):
        d = 1 + i % 2
        p = (1.25, 1.5, 2.0)[(i // 2) % 3]
        mu = random_measure(rng, d, int(rng.integers(1, 9)))
        G = PolyDecay(4.0 * d + 9, d)
        t = float(rng.uniform(0.2, 0.8))
        worst = max(worst, bct_identity_defect(mu, G, p, t).defect)
        n += 1
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-3 and dt <= 120,
           f"{n} instances, max defect {worst:.2e} (<= 1e-3), {dt:.1f} s")


def test_c02_delta_constancy():
    worst = 0.0
    for d, p in ((1, 1.5), (1, 2.0), (2, 1.25), (2, 2.0)):
        S = QpSolver(PointMeasure.delta(d), PolyDecay(4.0 * d + 9, d), p, 0.1)
        q1 = S.qp(1.0)
        for t in np.linspace(0.1, 1.0, 10):
            worst = max(worst, abs(S.qp(float(t)) / q1 - 1))
    flat = 0.0
    for d, p in ((1, 2.0), (1, 1.5), (2, 2.0), (3, 1.5)):
        expect = (4 * math.pi) ** (-d * (p - 1) / 2) * p ** (-d / 2)
        got = QpSolver(PointMeasure.delta(d), Unit(d), p, 0.3).qp(0.3)
        flat = max(flat, abs(got / expect - 1))
    value = QpSolver(PointMeasure.delta(1), Unit(1), 2.0, 0.5).qp(0.5)
    ok = worst <= 1e-6 and flat <= 1e-8 and abs(value - 1 / math.sqrt(8 * math.pi)) <= 1e-8
    record(2, ok, f"constancy {worst:.1e} (<= 1e-6), flat closed form {flat:.1e} (<= 1e-8), "
                  f"d=1 p=2 value {value:.8f}")


def test_c03_karamata():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    ts = np.geomspace(0.1, 1.0, 10)
    bad = 0
    for i in range(100):
        d = 1 if i % 4 else 2
        p = (1.25, 1.5, 2.0)[i % 3]
        mu = random_measure(rng, d, int(rng.integers(1, 9)))
        res = monotonicity_scan(mu, PolyDecay(4.0 * d + 9, d), p, ts, slack=1e-8)
        bad += res.verdict != "PASS"
    dt = time.perf_counter() - t0
    record(3, bad == 0 and dt <= 60, f"100 measures, {bad} non-monotone, {dt:.1f} s")


def test_c04_weighted_contraction():
    rng = np.random.default_rng(404)
    g = make_grid(1, 1024, 14.0)
    dv = g.cell_volume
    worst = -np.inf
    for _ in range(100):
        ell = int(rng.integers(1, 4))
        data = np.zeros((ell, g.N))
        for _ in range(int(rng.integers(1, 5))):
            data += rng.normal(size=(ell, 1)) * gen_bump(g, [rng.uniform(-3, 3)],
                                                          rng.uniform(0.2, 1.0))[None]
        f = Field(g, data)
        p = float(rng.uniform(1.0, 4.0))
        t = float(rng.uniform((2 * g.h) ** 2, 2.0))
        w = PolyDecay(float(rng.uniform(1.5, 8.0)), 1, center=(rng.uniform(-2, 2),)).on_grid(g)
        hw = heat_extend(Field(g, w[None]), t).data[0]
        lhs = _weighted_lp(heat_extend(f, t).data, w, p, dv)
        rhs = _weighted_lp(f.data, hw, p, dv)
        scale = rhs
        worst = max(worst, (lhs - rhs) / scale)
    # equality case: nonnegative rank one, p = 1
    h = gen_bump(g, [0.5], 0.4) + 0.5 * gen_bump(g, [-1.0], 0.7)
    a = np.array([0.6, 0.0, -0.8])
    f = Field(g, a[:, None] * h[None])
    w = PolyDecay(3.0, 1).on_grid(g)
    hw = heat_extend(Field(g, w[None]), 0.3).data[0]
    gap = _weighted_lp(f.data, hw, 1.0, dv) - _weighted_lp(heat_extend(f, 0.3).data, w, 1.0, dv)
    eq = abs(gap) / _weighted_lp(f.data, hw, 1.0, dv)
    record(4, worst <= 1e-9 and eq <= 1e-9,
           f"100 tuples, max relative excess {worst:.1e}; rank-one equality defect {eq:.1e}")


def test_c05_lorentz():
    g = make_grid(1, 64, 8.0)
    ind_err = 0.0
    for nodes in (4, 8, 20):
        d = np.zeros((1, 64))
        d[0, 5:5 + nodes] = 1.0
        m = nodes * g.h
        for p in (1.5, 2.0, 3.0):
            ind_err = max(ind_err, abs(lorentz_norm(Field(g, d), p, 1.0) - p * m ** (1 / p)))
    rng = np.random.default_rng(505)
    pp = 0.0
    for _ in range(200):
        f = Field(g, rng.normal(size=(int(rng.integers(1, 3)), 64)))
        p = float(rng.uniform(1.0, 5.0))
        pp = max(pp, abs(lorentz_norm(f, p, p) - lp_norm(f, p)) / lp_norm(f, p))
    split = np.inf
    for _ in range(500):
        f = Field(g, rng.normal(size=(1, 64)) * (rng.random(64) < 0.8))
        labels = rng.integers(0, int(rng.integers(2, 6)), 64)
        regions = [labels == i for i in np.unique(labels)]
        p = float(rng.uniform(1.1, 4.0))
        q = float(rng.choice([1.0, 2.0]))
        split = min(split, lorentz_split_defect(f, p, regions, q))
    ok = ind_err <= 1e-12 and pp <= 1e-10 and split >= -1e-10
    record(5, ok, f"indicator error {ind_err:.1e}, L_pp vs L_p {pp:.1e} (200 fields), "
                  f"min split defect {split:.2e} (500 partitions)")


def test_c06_partition_of_unity():
    worst = 0.0
    for d, N, L in ((1, 4096, 8.0), (2, 256, 8.0)):
        theta1 = ProofParameters(d=d).theta1
        g = make_grid(d, N, L)
        for k in range(6):
            worst = max(worst, at.partition_defect(g, k, 3, theta1))
    record(6, worst <= 1e-10, f"max deviation {worst:.1e} over k=0..5, A=3, d=1,2")


def test_c07_heated_envelope():
    cases = 0
    for d in (1, 2):
        for theta in (d + 1.0, 2.0 * d + 4):
            for t in (1e-4, 0.5, 1.0, 2.0):
                heat_weight(PolyDecay(theta, d), t)
                cases += 1
    record(7, True, f"{cases} (d, theta, t) cases inside the certified envelope")


def test_c08_graph_combinatorics():
    rng = np.random.default_rng(808)
    t0 = time.perf_counter()
    totals = {"two_paths": 0, "arrowless_unsaturated": 0, "sources_unsaturated": 0, "self_loops": 0}
    for i in range(1000):
        d = 1 + i % 3
        P = ProofParameters(d=d)
        n = int(rng.integers(4, 40))
        idx = np.unique(rng.integers(-6, 7, size=(n, d)), axis=0)
        star = rng.exponential(size=len(idx)) ** float(rng.uniform(1, 6))
        star *= rng.random(len(idx)) < 0.85
        M, arg = at.maximal_all(idx, star, P.theta4)
        choice = "argmax" if i % 2 else "first"
        graph = at.build_horizontal_graph(idx, star, P.lam, P.theta4, choice=choice, maximal=(M, arg))
        for k, v in at.graph_violations(graph, M, star).items():
            totals[k] += v
    dt = time.perf_counter() - t0
    ok = not any(totals.values()) and dt <= 30
    record(8, ok, f"1000 tables, violations {totals}, {dt:.1f} s")


def _c_infinity(d, p):
    omega = math.pi ** (d / 2) / gamma(d / 2 + 1)
    return p * omega ** (1 / p) * gamma(1 + d / (2 * p)) * 4 ** (d / (2 * p)) * (4 * math.pi) ** (-d / 2)


def test_c09_divergence_vs_boundedness():
    t0 = time.perf_counter()
    P = ProofParameters(d=1, A=3, K=6, p=2.0)
    g = make_grid(1, 65536, 10.0)
    sigma = 2 * g.h
    rows = rp.embedding_report(gen_near_delta(g, sigma), P)
    c = rows[2].term
    growth = min(r.partial_sum / (0.8 * c * r.k) for r in rows[2:])
    oracle = max(abs(r.term / (_c_infinity(1, 2.0) * (1 + sigma**2 * 9.0**r.k / 2) ** (-P.alpha / 2)) - 1)
                 for r in rows)
    ratios = {}
    g2 = make_grid(2, 128, 10.0)
    g1 = make_grid(1, 4096, 10.0)
    for name, f in (("vortex d=2", gen_divfree_field(g2, width=1.0)),
                    ("gradient d=2", gen_gradient_field(g2, width=1.0)),
                    ("gradient d=1", gen_gradient_field(g1, width=1.0))):
        Pd = ProofParameters(d=f.grid.d, A=3, K=6, p=2.0)
        rr = rp.embedding_report(f, Pd, resolution="content")
        ratios[name] = rr[6].ratio / rr[2].ratio
    dt = time.perf_counter() - t0
    ok = (growth >= 1 and oracle <= 1e-3 and all(0.5 <= q <= 2 for q in ratios.values())
          and dt <= 300)
    shown = ", ".join(f"{k} {v:.3f}" for k, v in ratios.items())
    record(9, ok, f"near-delta S_K/(0.8 c K) >= {growth:.3f}, term vs closed form {oracle:.1e}; "
                  f"ratio K=6/K=2: {shown}; {dt:.1f} s")


def test_c10_spectral_identities():
    g = make_grid(1, 256, 10.0)
    x = g.axis()
    band = Field(g, (np.cos(2 * np.pi * x / 5) * np.exp(-x**2 / 4))[None])
    sg = max(semigroup_defect(band, 0.1, 0.1), semigroup_defect(band, 0.05, 0.6))
    # dilation law on matching node sets
    ga, gb = make_grid(1, 1024, 32.0), make_grid(1, 1024, 16.0)
    xa = ga.axis()
    dip = (xa * np.exp(-xa**2))[None]
    fa = Field(ga, dip)
    fb = Field(gb, dip)
    lhs = riesz_potential(fb, 0.5).field.data
    rhs = 2.0 ** -0.5 * riesz_potential(fa, 0.5).field.data
    scaling = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
    rng = np.random.default_rng(1010)
    g2 = make_grid(2, 32, 4.0)
    flt = BandFilter(3.0, 1.0, 2.0)
    h = apply_multiplier(Field(g2, rng.normal(size=(1, 32, 32))), flt.lowpass_multiplier(g2, 1))
    h = Field(g2, h.data - h.data.mean())
    comp_a = riesz_potential(riesz_potential(h, 0.3).field, 0.5).field.data
    comp_b = riesz_potential(h, 0.8).field.data
    comp = float(np.max(np.abs(comp_a - comp_b)) / np.max(np.abs(comp_b)))
    g3 = make_grid(1, 512, 8.0)
    f = Field(g3, rng.normal(size=(1, 512)))
    f = Field(g3, f.data - f.data.mean())
    top = 0
    while band_is_resolvable(g3, top + 1, flt):
        top += 1
    total = sum(besov_band(f, k, flt).data for k in range(-6, top + 1))
    expect = apply_multiplier(f, flt.lowpass_multiplier(g3, top) - flt.lowpass_multiplier(g3, -7)).data
    tele = float(np.max(np.abs(total - expect)))
    ok = sg <= 1e-10 and scaling <= 1e-6 and comp <= 1e-10 and tele <= 1e-10
    record(10, ok, f"semigroup {sg:.1e}, Riesz scaling {scaling:.1e}, composition {comp:.1e}, "
                   f"band telescoping {tele:.1e}")


def test_c11_cancellation():
    grad2 = cancellation_defect(gradient_symbol(2), 8).defect
    grad3 = cancellation_defect(gradient_symbol(3), 40).defect
    div2 = cancellation_defect(divfree_symbol(2), 8).defect
    one = cancellation_defect(gradient_symbol(1))
    ok = min(grad2, grad3, div2) > 0.5 and one.defect <= 1e-8 and one.witness is not None
    record(11, ok, f"gradient d=2 {grad2:.3f}, d=3 {grad3:.3f}, div-free {div2:.3f}; "
                   f"d=1 gradient {one.defect:.1e} with witness {np.round(one.witness, 6).tolist()}")


def test_c12_improved_exponent():
    t0 = time.perf_counter()
    ts = np.geomspace(0.1, 1.0, 7)
    delta = improved_exponent(ConeSample("delta", (PointMeasure.delta(2),)), PolyDecay(17.0, 2), 2.0, ts)
    line = improved_exponent(ConeSample("Mq", (line_measure(2, 21, 8.0),), q=1,
                                        free=np.array([[0.0, 1.0]])), PolyDecay(17.0, 2), 2.0, ts)
    dt = time.perf_counter() - t0
    ok = delta.minimum <= 1e-6 and line.minimum > 0 and dt <= 180
    record(12, ok, f"delta exponent {delta.minimum:.1e}; line measure exponent {line.minimum:.4f} "
                   f"(fit {line.fit[0]:.4f}, margin above 0 = {line.minimum:.4f}); {dt:.1f} s")


def _generator_inputs():
    g1 = make_grid(1, 16384, 10.0)
    g2 = make_grid(2, 128, 10.0)
    dip = gen_bump(g1, [-0.1], 0.03) - gen_bump(g1, [0.1], 0.03)
    yield "bump d=1", Field(g1, gen_bump(g1, width=0.5)[None]), 5, "scale"
    yield "gradient d=1", gen_gradient_field(g1, width=0.5), 5, "scale"
    yield "near_delta d=1", gen_near_delta(g1, 2 * g1.h), 5, "scale"
    yield "dipole d=1", Field(g1, dip[None]), 5, "scale"
    yield "zero d=1", Field(g1, np.zeros((1, g1.N))), 5, "scale"
    yield "bump d=2", Field(g2, gen_bump(g2, width=1.0)[None]), 4, "content"
    yield "gradient d=2", gen_gradient_field(g2, width=1.0), 4, "content"
    yield "vortex d=2", gen_divfree_field(g2, width=1.0), 4, "content"
    yield "near_delta d=2", gen_near_delta(g2, 4 * g2.h), 4, "content"


def test_c13_telescoping_audit():
    worst, lines = 0.0, []
    ok = True
    for name, f, K, mode in _generator_inputs():
        P = ProofParameters(d=f.grid.d, K=K)
        an = rp.analyze_atoms(build_ladder(f, 3, K, resolution=mode), P)
        assert [t.k for t in an.tables] == list(range(K - 2))
        a = rp.telescoping_audit(an)
        ok &= a["passed"]
        frac = a["gains"] / a["bound"] if a["bound"] > 0 else 0.0
        worst = max(worst, frac)
        lines.append(f"{name} {frac:.3f}")
    record(13, ok, f"gains / (3 ||f||_L1): worst {worst:.3f} over {len(lines)} inputs "
                   f"({'; '.join(lines)})")


if __name__ == "__main__":  # pragma: no cover
    import sys
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
            except Exception as exc:
                n = int(name[6:8])
                RESULTS[n] = (False, f"error: {exc}")
                print(f"criterion {n:2d}: FAIL  error: {exc}")
                failed += 1
    sys.exit(1 if failed else 0)
