import numpy as np
import pytest

from excited_nls.grid import RadialGrid
from excited_nls.linearization import random_radial_fields
from excited_nls.potential import (
    MultipleBoundStates,
    NoBoundState,
    PotentialSpec,
    admissibility_report,
    count_bound_states,
    depth_window,
    eigen_residual,
    ground_eigenpair,
)

G = RadialGrid(4096, 40.0)


def test_default_gaussian_depth_in_single_bound_state_window():
    a, b = depth_window("gaussian", RadialGrid(2048, 40.0), sigma=1.0)
    assert a < 6.0 < b
    assert count_bound_states(PotentialSpec.gaussian(), G) == 1


def test_ground_eigenpair_gaussian():
    e0, phi0 = ground_eigenpair(PotentialSpec.gaussian(), G)
    assert e0 < 0
    assert G.l2(phi0.values) == pytest.approx(1.0, abs=1e-12)
    assert eigen_residual(PotentialSpec.gaussian(), e0, phi0) <= 1e-8
    assert np.all(phi0.values[:-1] > 0)


def test_ground_eigenvalue_richardson():
    V = PotentialSpec.gaussian()
    e = [ground_eigenpair(V, RadialGrid(n, 40.0))[0] for n in (1024, 2048, 4096)]
    d1, d2 = e[0] - e[1], e[1] - e[2]
    assert 3.0 < d1 / d2 < 5.0


def test_rayleigh_bound(rng):
    V = PotentialSpec.gaussian()
    e0, _ = ground_eigenpair(V, G)
    Vg = V.on_grid(G).V
    for f in random_radial_fields(G, 30, rng, complex_valued=False):
        assert G.inner(G.apply_op(Vg, f), f) >= e0 * G.l2sq(f) - 1e-10


def test_no_bound_state_and_multiple():
    with pytest.raises(NoBoundState):
        ground_eigenpair(PotentialSpec.zero(), G)
    with pytest.raises(NoBoundState):
        ground_eigenpair(PotentialSpec.gaussian(c=0.5), G)
    with pytest.raises(MultipleBoundStates):
        ground_eigenpair(PotentialSpec.gaussian(c=60.0), G)


def test_scaling_derivatives_match_differences():
    r = np.linspace(0.3, 4.0, 200)
    step = 1e-5
    for V in (PotentialSpec.gaussian(), PotentialSpec.power_core()):
        d = V.evaluate(r)
        vp = V.evaluate(r * (1 + step)).V
        vm = V.evaluate(r * (1 - step)).V
        np.testing.assert_allclose(d.rVr, (vp - vm) / (2 * step), rtol=1e-7, atol=1e-9)
        s2 = 1e-3
        vp2, vm2 = V.evaluate(r * (1 + s2)).V, V.evaluate(r * (1 - s2)).V
        np.testing.assert_allclose(d.r2Vrr, (vp2 - 2 * d.V + vm2) / s2**2, rtol=1e-4, atol=1e-5)


def test_rescaled_potential():
    V = PotentialSpec.gaussian()
    om = 100.0
    d = V.on_grid(G, om)
    np.testing.assert_allclose(d.V, V.evaluate(G.r / 10.0).V / om)


def test_table_potential_matches_family(tmp_path):
    r = np.linspace(0.01, 8.0, 800)
    V = PotentialSpec.gaussian()
    p = tmp_path / "v.csv"
    np.savetxt(p, np.column_stack([r, V.evaluate(r).V]), delimiter=",", header="r,V", comments="")
    T = PotentialSpec.from_csv(p)
    x = np.linspace(0.5, 5.0, 50)
    np.testing.assert_allclose(T.evaluate(x).V, V.evaluate(x).V, atol=1e-7)


def test_validation():
    with pytest.raises(ValueError):
        PotentialSpec("nope", {})
    with pytest.raises(ValueError):
        PotentialSpec.power_core(a=1.6)
    with pytest.raises(ValueError):
        PotentialSpec.gaussian(c=-1.0)


def test_admissibility():
    rep = admissibility_report(PotentialSpec.gaussian(), RadialGrid(2048, 40.0))
    assert rep["pass"]
    assert not admissibility_report(PotentialSpec.zero(), RadialGrid(2048, 40.0))["pass"]
    r = np.geomspace(0.1, 1e4, 400)
    slow = PotentialSpec.from_table(r, -1.0 / r)
    assert not admissibility_report(slow, RadialGrid(2048, 40.0))["pass"]
