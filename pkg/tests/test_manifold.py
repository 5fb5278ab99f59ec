import numpy as np
import pytest

from excited_nls.linearization import energy_norm, random_radial_fields
from excited_nls.manifold import (
    BracketFailure,
    bisect_G,
    eject_sign,
    initial_datum,
    intersection_point,
    project_Z,
    zeta_basis,
    zeta_from_coeffs,
)


def test_project_Z_orthogonality(sol, pencil, rng):
    g = sol.grid
    for f in random_radial_fields(g, 5, rng):
        z = project_Z(f, sol, pencil)
        n = g.h1(z)
        assert abs(g.inner(1j * z, pencil.g_plus)) < 1e-9 * n
        assert abs(g.inner(1j * z, pencil.g_minus)) < 1e-9 * n
        assert abs(g.inner(1j * z, sol.qp)) < 1e-9 * n
        assert g.h1(project_Z(z, sol, pencil) - z) < 1e-9 * n


def test_zeta_basis(sol, pencil):
    basis = zeta_basis(sol, pencil, dim=4)
    assert len(basis) == 4
    for z in basis:
        assert energy_norm(z, pencil, strict=False) == pytest.approx(1.0, rel=1e-10)
        assert np.max(np.abs(z.imag)) == 0.0 or np.max(np.abs(z.real)) < 1e-6 * np.max(np.abs(z))
    z = zeta_from_coeffs([0.01, 0.0, 0.0, 0.0], basis)
    assert sol.grid.h1(z - 0.01 * basis[0]) == 0.0
    assert zeta_from_coeffs([0.0] * 4, basis) is None


def test_eject_sign_reads_unstable_direction(sol, pencil, cfg):
    for s in (1, -1):
        t = eject_sign(initial_datum(sol, pencil, s * 1e-3, 0.0), sol, pencil, cfg, 20.0)
        assert t.outcome == s
    t = eject_sign(initial_datum(sol, pencil, 0.0, 0.0), sol, pencil, cfg, 20.0)
    assert t.outcome == 0


def test_graph_through_soliton(sol, pencil, cfg):
    tol = 1e-9
    s = bisect_G(0.0, None, sol, pencil, cfg, tol=tol)
    assert abs(s.G_value) <= tol
    assert s.bracket_width <= tol
    w = s.witnesses()
    assert "ejected_plus" in w and "ejected_minus" in w


def test_graph_is_quadratically_tangent(sol, pencil, cfg):
    vals = []
    for lm in (0.01, 0.02):
        s = bisect_G(lm, None, sol, pencil, cfg, tol=1e-10)
        assert s.bracket_width <= 1e-10
        vals.append(s.G_value / lm**2)
    assert all(0.2 < abs(v) < 2.0 for v in vals)
    assert vals[0] == pytest.approx(vals[1], rel=0.2)


def test_intersection_at_soliton_for_zero_zeta(sol, pencil, cfg):
    bp, bm = intersection_point(None, sol, pencil, cfg, tol=1e-7)
    assert abs(bp) <= 1e-7 and abs(bm) <= 1e-7


def test_bracket_failure(sol, pencil, cfg):
    with pytest.raises(BracketFailure):
        bisect_G(0.01, None, sol, pencil, cfg, tol=1e-6, delta_plus=1e-6)
