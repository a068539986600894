import numpy as np
import pytest
from hypothesis import given, strategies as st

from heatlab.weights import (Heated, LatticeNormalized, PolyDecay, Rho, Unit, atom_weight,
                             envelope_constants, eval_weight, smoothness_function)


def test_polydecay_basics():
    assert PolyDecay(3.0, 1)(np.zeros(1))[0] == 1.0
    assert PolyDecay(3.0, 2, center=(1, 1))([[1, 1]])[0] == 1.0
    with pytest.raises(ValueError):
        PolyDecay(1.0, 1)
    with pytest.raises(ValueError):
        PolyDecay(3.0, 2, center=(1.0,))
    assert Rho(2.0, 2).theta == 6.0
    np.testing.assert_array_equal(Unit(2)(np.zeros((4, 2))), 1.0)


@pytest.mark.parametrize("d,theta", [(1, 6.0), (2, 8.0), (3, 10.0)])
def test_partition_of_unity_on_lattice(d, theta):
    w = LatticeNormalized(theta, d)
    rng = np.random.default_rng(d)
    x = rng.integers(-3, 4, size=(5, d)).astype(float) + rng.random((5, d))
    offs = np.stack(np.meshgrid(*([np.arange(-w.radius, w.radius + 1)] * d), indexing="ij"),
                    -1).reshape(-1, d)
    for xi in x:
        total = np.sum(w(xi - offs))
        # the d=3 lattice sum is capped, so its certified tail sets the tolerance
        assert abs(total - 1) <= max(1e-10, 2 * w.tail_bound)
    if d < 3:
        assert w.tail_bound <= 1e-12


def test_lattice_weight_bounds():
    w = LatticeNormalized(6.0, 1)
    c, C = w.bounds
    x = np.linspace(-40, 40, 4001)[:, None]
    base = (1 + np.abs(x[:, 0])) ** -6.0
    v = w(x)
    assert np.all(v >= c * base) and np.all(v <= C * base)
    assert w == LatticeNormalized(6.0, 1) and hash(w) == hash(LatticeNormalized(6.0, 1))


def test_lattice_sum_fast_path_matches_direct():
    w = LatticeNormalized(8.0, 2)
    pts = np.random.default_rng(0).uniform(-30, 30, (50, 2))
    np.testing.assert_allclose(w.lattice_sum(pts), w.lattice_sum_direct(pts), rtol=1e-12)


@given(x=st.floats(-5, 5))
def test_atom_weight_dilation(x):
    w = LatticeNormalized(6.0, 1)
    assert atom_weight(1, 0, [x], 6.0, 3, weight=w)[0] == w([3 * x])[0]
    assert atom_weight(2, 4, [x], 6.0, 3, weight=w)[0] == w([9 * x - 4])[0]


def test_smoothness():
    assert smoothness_function(PolyDecay(3.0, 1), 1.0).upper == 8.0
    assert smoothness_function(PolyDecay(3.0, 1), 1.0).exact
    for w in (PolyDecay(3.0, 2), LatticeNormalized(6.0, 1), Heated(PolyDecay(3.0, 1), 0.3)):
        assert smoothness_function(w, 0.0).lower == 1.0
        s = smoothness_function(w, 1.0)
        assert 1.0 <= s.lower <= s.upper
    with pytest.raises(ValueError):
        smoothness_function(PolyDecay(3.0, 1), -1)


def test_smoothness_monotone_in_zeta():
    w = LatticeNormalized(6.0, 1)
    vals = [smoothness_function(w, z).lower for z in (0.25, 0.5, 1.0, 2.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_heated_weight_against_quadrature():
    from scipy import integrate
    w = PolyDecay(3.0, 1)
    t = 0.4
    for x in (0.0, 0.7, 5.0):
        ref, _ = integrate.quad(lambda y: (1 + abs(y)) ** -3 * np.exp(-(x - y) ** 2 / (4 * t))
                                / np.sqrt(4 * np.pi * t), -60, 60, points=[0.0], limit=400,
                                epsabs=1e-14)
        assert Heated(w, t)([x])[0] == pytest.approx(ref, rel=1e-9)


def test_envelope_constants():
    c, C, th = envelope_constants(PolyDecay(3.0, 1, center=(2.0,)))
    assert (c, C, th) == (3.0 ** -3, 27.0, 3.0)
    with pytest.raises(ValueError):
        envelope_constants(Unit(1))
    assert eval_weight(Unit(1), [0.0])[0] == 1.0
