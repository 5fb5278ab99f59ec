import numpy as np
import pytest

from excited_nls.evolve import (
    Evolver,
    blowup_weight,
    classify,
    ejection_probe,
    evolve,
    max_dt,
    phi_profile,
    run_trajectory,
    scattering_weight,
    sponge_profile,
    sub_threshold_intervals,
    virial_blowup_monitor,
    virial_rate_general,
    virial_scattering_monitor,
)
from excited_nls.functionals import evaluate_frame, mass


def bump(sol, amp=1.0):
    r = sol.grid.r
    return amp * (1.2 * sol.q + 0.3j * sol.q * np.exp(-(r**2) / 4))


@pytest.mark.parametrize("scheme", ["relaxation", "midpoint"])
def test_mass_conserved_without_sponge(sol, scheme):
    g = sol.grid
    u0 = bump(sol, 0.8)
    u = evolve(u0, sol.frame(), 1.0, dt=1e-3, scheme=scheme)
    assert abs(mass(g, u) - mass(g, u0)) < 1e-11 * mass(g, u0)


def test_midpoint_conserves_energy(sol):
    fr = sol.frame()
    u0 = bump(sol, 0.8)
    u = evolve(u0, fr, 0.5, dt=1e-3, scheme="midpoint")
    e0, e1 = evaluate_frame(fr, u0).E, evaluate_frame(fr, u).E
    assert abs(e1 - e0) < 1e-9 * abs(e0)


def test_soliton_is_stationary(sol):
    g = sol.grid
    u = evolve(sol.q.astype(complex), sol.frame(), 2.0, dt=1e-3)
    assert g.h1(u - np.exp(-2j) * sol.q) < 1e-6 * g.h1(sol.q)


@pytest.mark.parametrize("scheme", ["relaxation", "midpoint", "strang"])
def test_second_order_in_time(sol, scheme):
    g, fr = sol.grid, sol.frame()
    u0 = bump(sol, 0.8)
    us = [evolve(u0, fr, 0.2, dt=dt, scheme=scheme) for dt in (4e-3, 2e-3, 1e-3)]
    ratio = g.h1(us[0] - us[1]) / g.h1(us[1] - us[2])
    assert 3.6 < ratio < 4.4


def test_midpoint_time_reversible(sol):
    g, fr = sol.grid, sol.frame()
    u0 = bump(sol, 0.8)
    u = evolve(u0, fr, 0.3, dt=1e-3, scheme="midpoint")
    back = evolve(u, fr, 0.3, dt=1e-3, scheme="midpoint", backward=True)
    assert g.h1(back - u0) < 1e-10 * g.h1(u0)


def test_gauge_covariance(sol):
    g, fr = sol.grid, sol.frame()
    u0 = bump(sol, 0.8)
    a = evolve(u0, fr, 0.3)
    b = evolve(np.exp(0.9j) * u0, fr, 0.3)
    assert g.h1(b - np.exp(0.9j) * a) < 1e-12 * g.h1(a)


def test_sponge_absorbs_outgoing_mass(sol):
    g = sol.grid
    u0 = 0.2 * np.exp(-(g.r**2) / 2).astype(complex)
    ev = Evolver(sol.frame(), 1e-2, sponge=sponge_profile(g, 0.25 * g.r_max, 2.0))
    _, u = ev.run(u0, 40.0)
    assert mass(g, u) < 0.05 * mass(g, u0)


def test_step_policy():
    u = np.array([0.0, 10.0])
    assert max_dt(u, 1e-3) == pytest.approx(5e-4)
    assert max_dt(np.zeros(3), 1e-3) == 1e-3


def test_sampling_does_not_change_the_step_sequence(sol, pencil, cfg):
    u0 = sol.q + 1e-4 * pencil.g_plus
    a = run_trajectory(u0, sol, pencil, cfg, 1.0, sample_dt=0.01, detect=False)
    b = run_trajectory(u0, sol, pencil, cfg, 1.0, sample_dt=0.05, detect=False)
    ta, tb = a.times, b.times
    ia = np.searchsorted(ta, tb[:-1] - 1e-9)
    np.testing.assert_allclose(ta[ia], tb[:-1], atol=1e-12)
    np.testing.assert_array_equal(a.column("b_plus")[ia], b.column("b_plus")[:-1])


def test_backward_run_is_forward_run_of_conjugate(sol, pencil, cfg):
    u0 = sol.q + 1e-4 * pencil.g_minus + 2e-4j * sol.q
    a = run_trajectory(u0, sol, pencil, cfg, 0.5, "backward", detect=False)
    b = run_trajectory(np.conj(u0), sol, pencil, cfg, 0.5, "forward", detect=False)
    np.testing.assert_allclose(a.times, -b.times)
    np.testing.assert_allclose(a.column("M"), b.column("M"), rtol=1e-14)
    np.testing.assert_allclose(a.column("d0"), b.column("d0"), rtol=1e-12)


@pytest.mark.parametrize("s,verdict", [(1, "ScatterPhi"), (-1, "BlowUp")])
def test_unstable_direction_verdicts(sol, pencil, cfg, s, verdict):
    u0 = sol.q + s * 1e-3 * pencil.g_plus
    c = classify(u0, sol, pencil, cfg, horizon=20.0, directions=("forward",))
    assert c.forward == verdict


def test_ejection_rate_and_sign(sol, pencil, cfg):
    for s in (1, -1):
        res = ejection_probe(sol.q + s * 1e-4 * pencil.g_plus, sol, pencil, cfg)
        assert res.sigma == s
        assert abs(res.growth_rate - pencil.alpha) < 0.05 * pencil.alpha


@pytest.mark.parametrize("kind", ["blowup", "scattering"])
def test_virial_monitor_routes_agree(sol, kind):
    fr = sol.frame()
    g = sol.grid
    u = bump(sol, 0.9) * np.exp(0.5j * g.r**2 / 20)
    m = 4.0
    if kind == "blowup":
        _, rate = virial_blowup_monitor(fr, u, m)
        gen = virial_rate_general(fr, u, blowup_weight(g.r, m))
    else:
        _, rate = virial_scattering_monitor(fr, u, m)
        gen = virial_rate_general(fr, u, scattering_weight(g.r, m))
    assert abs(rate - gen) < 0.05 * max(abs(gen), 1.0)


def test_virial_rate_matches_time_derivative(sol):
    fr, g = sol.frame(), sol.grid
    u0 = bump(sol, 0.9)
    m, dt = 4.0, 2e-3
    up = evolve(u0, fr, dt, dt=dt / 8, scheme="midpoint")
    um = evolve(u0, fr, dt, dt=dt / 8, scheme="midpoint", backward=True)
    vp, _ = virial_blowup_monitor(fr, up, m)
    vm, _ = virial_blowup_monitor(fr, um, m)
    _, rate = virial_blowup_monitor(fr, u0, m)
    assert (vp - vm) / (2 * dt) == pytest.approx(rate, rel=0.05)


def test_phi_profile_shape():
    s = np.linspace(0.01, 3, 300)
    p, p1, _, _ = phi_profile(s)
    np.testing.assert_allclose(p[s <= 1], s[s <= 1])
    np.testing.assert_allclose(p[s >= 2], 1.5)
    assert np.all(np.diff(p) >= -1e-15) and np.all(p1 >= -1e-15)


def test_sub_threshold_intervals():
    t = np.arange(8.0)
    d = np.array([0.2, 0.01, 0.01, 0.2, 0.2, 0.01, 0.2, 0.2])
    entries, exits = sub_threshold_intervals(t, d, 0.05)
    assert entries == [1.0, 5.0] and exits == [3.0, 6.0]
