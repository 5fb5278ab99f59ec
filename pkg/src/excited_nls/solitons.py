"""Soliton branches.

* ``Q``: the positive radial solution of ``-Delta Q + Q = Q^3``, obtained by
  shooting on the radial ODE and polished by Newton's method on the discrete
  equation.
* ``Phi[z]``: small ground states bifurcating from the bound state ``phi0`` of
  ``H = -Delta + V``, ``(H + Omega) Phi = |Phi|^2 Phi``, ``Phi = z phi0 + gamma``.
* ``Q_om``: rescaled first excited states, ``(-Delta + V^om + 1) Q_om = Q_om^3``,
  built by the contraction ``v <- L_+^{-1} [3 Q v^2 + v^3 - V^om (Q + v)]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp

from .functionals import Frame, action_gradient, energy, mass
from .grid import RadialField, RadialGrid
from .potential import PotentialSpec, ground_eigenpair

log = logging.getLogger(__name__)

# Q(0) from the shooting oracle (rtol 1e-13); see tests/test_solitons.py.
Q0_SHOOTING = 4.337387679987824

SHOOT_BRACKET = (3.5, 5.0)
SHOOT_RMAX = 12.0


class ShootingBracketFailure(RuntimeError):
    pass


class ContractionDiverged(RuntimeError):
    pass


class LinearSolveSingular(RuntimeError):
    pass


def hm1_norm(g: RadialGrid, f: NDArray) -> float:
    """``||f||_{H^-1} = <(1 - Delta)^{-1} f|f>^{1/2}``."""
    return float(np.sqrt(max(g.inner(g.solve_op(1.0, f), f), 0.0)))


# -- the limit soliton Q ----------------------------------------------------------


def _shoot(a: float, r_end: float, rtol: float = 1e-13):
    """Integrate ``Q'' + 2Q'/r - Q + Q^3 = 0`` from ``Q(0) = a``.

    Returns +1 if the profile crosses zero (initial value too large), -1 if it
    turns back up while positive (too small), 0 if neither happened by ``r_end``.
    """

    def rhs(r, y):
        return [y[1], -2.0 * y[1] / r + y[0] - y[0] ** 3]

    def crossing(r, y):
        return y[0]

    crossing.terminal = True

    def turning(r, y):
        return y[1]

    turning.terminal = True
    turning.direction = 1

    r0 = 1e-6
    # series Q = a + (a - a^3) r^2 / 6
    y0 = [a + (a - a**3) * r0**2 / 6, (a - a**3) * r0 / 3]
    sol = solve_ivp(
        rhs, (r0, r_end), y0, method="DOP853", rtol=rtol, atol=1e-15,
        events=(crossing, turning), dense_output=True,
    )
    if len(sol.t_events[0]):
        return 1, sol
    if len(sol.t_events[1]):
        return -1, sol
    return 0, sol


def shoot_Q0(bracket=SHOOT_BRACKET, r_end: float = SHOOT_RMAX, iters: int = 60) -> float:
    """Bisection on ``Q(0)`` between decaying-then-rising and sign-changing profiles."""
    lo, hi = bracket
    if _shoot(lo, r_end)[0] != -1 or _shoot(hi, r_end)[0] != 1:
        raise ShootingBracketFailure(
            f"no change of shooting outcome in [{lo}, {hi}] up to r = {r_end}"
        )
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        out = _shoot(mid, r_end)[0]
        if out == 1:
            hi = mid
        elif out == -1:
            lo = mid
        else:
            break
    return 0.5 * (lo + hi)


def _initial_profile(g: RadialGrid, a: float) -> NDArray:
    """Shooting profile on the grid, continued by the ``e^{-r}/r`` tail."""
    _, sol = _shoot(a, min(SHOOT_RMAX, g.r_max))
    r_cut = min(sol.t[-1], 10.0)
    q = np.zeros(g.n_points)
    inside = g.r <= r_cut
    q[inside] = sol.sol(g.r[inside])[0]
    q_cut = sol.sol(r_cut)[0]
    rr = g.r[~inside]
    q[~inside] = q_cut * r_cut / rr * np.exp(-(rr - r_cut))
    q[-1] = 0.0
    return q


def newton_polish(g: RadialGrid, q: NDArray, V: NDArray | float = 0.0, tol: float = 1e-14, max_iter=30):
    """Newton iteration for ``(-Delta + V + 1) q = q^3`` on the grid."""
    d = 1.0 + np.asarray(V)
    for _ in range(max_iter):
        F = g.apply_op(d - q**2, q)
        dq = g.solve_op(d - 3.0 * q**2, F)
        q = q - dq
        if g.h1(dq) < tol * g.h1(q):
            break
    return q


@lru_cache(maxsize=16)
def _Q_cached(g: RadialGrid) -> NDArray:
    if g.r_max < 8.0:
        raise ShootingBracketFailure("grid too short to hold the soliton tail (r_max < 8)")
    a = shoot_Q0(r_end=min(SHOOT_RMAX, g.r_max))
    q = newton_polish(g, _initial_profile(g, a))
    if np.any(q[:-1] <= 0):
        raise ShootingBracketFailure("Newton polish lost positivity")
    q.setflags(write=False)
    return q


def compute_Q(grid: RadialGrid | None = None) -> RadialField:
    grid = grid or RadialGrid()
    return RadialField(grid, _Q_cached(grid).copy())


def Q_residuals(q: RadialField) -> dict[str, float]:
    g = q.grid
    F = g.apply_op(1.0 - q.values**2, q.values)
    return {"L2": g.l2(F), "Hm1": hm1_norm(g, F)}


def Q_prime_scaling(q: RadialField) -> RadialField:
    """``Q' = (x . grad + 1) Q / 2`` by finite differences."""
    return RadialField(q.grid, 0.5 * (q.grid.r_dr(q.values) + q.values))


# -- ground-state branch ------------------------------------------------------------


@dataclass
class GroundBranchPoint:
    z: complex
    Phi: RadialField
    Omega: float
    residual: float
    gamma: RadialField
    iterations: int = 0


def ground_branch(
    z: complex,
    V: PotentialSpec,
    grid: RadialGrid | None = None,
    tol: float = 1e-13,
    max_iter: int = 200,
    eigenpair=None,
) -> GroundBranchPoint:
    """Small ground state ``Phi[z] = z phi0 + gamma``, ``gamma`` orthogonal to ``phi0``.

    Alternates between ``Omega`` from the ``phi0``-component of the equation and
    ``gamma`` from inverting ``H + Omega`` on the complement of ``phi0``.  The
    branch is computed at ``|z|`` and rotated by the phase of ``z``.
    """
    grid = grid or RadialGrid()
    e0, phi0f = eigenpair or ground_eigenpair(V, grid)
    phi0 = phi0f.values.real
    a = abs(z)
    phase = z / a if a > 0 else 1.0
    Vg = V.on_grid(grid).V
    if a == 0:
        zero = grid.zeros()
        return GroundBranchPoint(z, RadialField(grid, zero.astype(complex)), -e0, 0.0,
                                 RadialField(grid, zero))
    gamma = grid.zeros()
    Omega = -e0
    prev = np.inf
    for it in range(1, max_iter + 1):
        Phi = a * phi0 + gamma
        cube = Phi**3
        Omega = -e0 + grid.inner(cube, phi0) / a
        rhs = cube - grid.inner(cube, phi0) * phi0
        new = grid.solve_op(Vg + Omega, rhs)
        new -= grid.inner(new, phi0) * phi0
        inc = grid.h1(new - gamma)
        gamma = new
        if not np.isfinite(inc) or (it > 5 and inc > prev and inc > 1e-3 * a):
            raise ContractionDiverged(f"ground-branch iteration diverged at |z| = {a:g}")
        prev = inc
        if inc < tol * max(a, 1e-300):
            break
    else:
        raise ContractionDiverged(f"no convergence at |z| = {a:g} in {max_iter} iterations")
    Phi = a * phi0 + gamma
    res = grid.l2(grid.apply_op(Vg + Omega, Phi) - grid.clean(Phi**3))
    return GroundBranchPoint(
        z, RadialField(grid, phase * Phi), float(Omega), res, RadialField(grid, phase * gamma), it
    )


# -- excited branch -------------------------------------------------------------------


@dataclass
class ExcitedSoliton:
    omega: float
    Q: RadialField
    Qprime: RadialField
    residual: float
    residual_hm1: float
    residual_prime: float
    potential: PotentialSpec
    iterations: int = 0
    increments: list[float] = field(default_factory=list, repr=False)

    @property
    def grid(self) -> RadialGrid:
        return self.Q.grid

    def frame(self) -> Frame:
        return Frame(self.grid, self.potential, self.omega)

    @property
    def q(self) -> NDArray:
        return self.Q.values.real

    @property
    def qp(self) -> NDArray:
        return self.Qprime.values.real

    def metadata(self) -> dict:
        fr = self.frame()
        return {
            "omega": self.omega,
            "residual_L2": self.residual,
            "residual_Hm1": self.residual_hm1,
            "residual_prime": self.residual_prime,
            "iterations": self.iterations,
            "M": mass(self.grid, self.q),
            "E_om": energy(fr, self.q),
            "mu": mass(self.grid, self.q) * self.omega**-0.5 if np.isfinite(self.omega) else 0.0,
        }


def excited_soliton(
    omega: float,
    V: PotentialSpec,
    grid: RadialGrid | None = None,
    tol: float = 1e-12,
    max_iter: int = 2000,
) -> ExcitedSoliton:
    """Rescaled excited state ``Q_om = Q + v`` and ``Q_om' = -(L_+^om)^{-1} Q_om``."""
    grid = grid or RadialGrid()
    q0 = _Q_cached(grid)
    fr = Frame(grid, V, omega)
    Vw = fr.V
    d_plus = 1.0 - 3.0 * q0**2
    v = grid.zeros()
    increments = []
    it = 0
    if not (V.is_zero or np.isinf(omega)):
        for it in range(1, max_iter + 1):
            rhs = 3.0 * q0 * v**2 + v**3 - Vw * (q0 + v)
            new = grid.solve_op(d_plus, rhs)
            if not np.all(np.isfinite(new)):
                raise LinearSolveSingular("L_+ solve produced non-finite values")
            inc = grid.h1(new - v)
            increments.append(inc)
            v = new
            if inc < tol:
                break
            if it > 3 and inc > increments[-2] and inc > 1e-8:
                raise ContractionDiverged(f"increments grow at omega = {omega:g}")
        else:
            raise ContractionDiverged(f"no convergence at omega = {omega:g} in {max_iter} steps")
    q = q0 + v
    F = grid.apply_op(Vw + 1.0 - q**2, q)
    d_plus_om = 1.0 + Vw - 3.0 * q**2
    qp = grid.solve_op(d_plus_om, -q)
    res_p = grid.l2(grid.apply_op(d_plus_om, qp) + grid.clean(q))
    return ExcitedSoliton(
        omega=float(omega),
        Q=RadialField(grid, q),
        Qprime=RadialField(grid, qp),
        residual=grid.l2(F),
        residual_hm1=hm1_norm(grid, F),
        residual_prime=res_p,
        potential=V,
        iterations=it,
        increments=increments,
    )


def limit_soliton(grid: RadialGrid | None = None) -> ExcitedSoliton:
    """``Q`` with ``Q' = -L_+^{-1} Q`` packaged as the ``omega = inf`` member."""
    return excited_soliton(np.inf, PotentialSpec.zero(), grid)


def find_omega_star(V: PotentialSpec, grid: RadialGrid, omegas=None) -> float:
    """Smallest sampled ``omega`` for which the excited-state contraction converges."""
    omegas = omegas if omegas is not None else np.geomspace(1.0, 1e6, 25)
    best = np.inf
    for om in sorted(omegas, reverse=True):
        try:
            excited_soliton(om, V, grid, tol=1e-10, max_iter=500)
        except (ContractionDiverged, LinearSolveSingular):
            break
        best = om
    return float(best)


def find_z_star(V: PotentialSpec, grid: RadialGrid, z_max: float = 5.0, steps: int = 30) -> float:
    """Largest sampled ``|z|`` for which the ground-branch iteration converges."""
    pair = ground_eigenpair(V, grid)
    best = 0.0
    for a in np.linspace(z_max / steps, z_max, steps):
        try:
            ground_branch(a, V, grid, tol=1e-10, eigenpair=pair)
        except ContractionDiverged:
            break
        best = float(a)
    return best


# -- energy curves --------------------------------------------------------------------


def branch_point(omega: float, V: PotentialSpec, grid: RadialGrid) -> tuple[float, float, ExcitedSoliton]:
    """``(mu, E_1)`` of ``Psi[omega]`` computed in the rescaled frame.

    ``mu = M(Psi) = omega^{-1/2} M(Q_om)`` and ``E(Psi) = omega^{1/2} E^om(Q_om)``
    by the scaling laws of ``S_om``.
    """
    sol = excited_soliton(omega, V, grid)
    mu = omega**-0.5 * mass(grid, sol.q)
    E1 = omega**0.5 * energy(sol.frame(), sol.q)
    return mu, E1, sol


def energy_curves(omegas, V: PotentialSpec, grid: RadialGrid | None = None, rel_step: float = 1e-2):
    """Table of ``(omega, mu, E1, E1', E1'')`` along the excited branch.

    ``E1'`` and ``E1''`` come from the quadratic through the branch points at
    ``omega (1 - s), omega, omega (1 + s)`` viewed as a function of ``mu``.
    """
    grid = grid or RadialGrid()
    MQ = mass(grid, _Q_cached(grid))
    rows = []
    for om in omegas:
        pts = [branch_point(om * f, V, grid)[:2] for f in (1 - rel_step, 1.0, 1 + rel_step)]
        mu = np.array([p[0] for p in pts])
        E = np.array([p[1] for p in pts])
        # divided differences on the nonuniform mu stencil
        d01 = (E[1] - E[0]) / (mu[1] - mu[0])
        d12 = (E[2] - E[1]) / (mu[2] - mu[1])
        E2 = 2.0 * (d12 - d01) / (mu[2] - mu[0])
        E1p = d01 + (d12 - d01) * (mu[1] - mu[0]) / (mu[2] - mu[0])
        m0, e0 = mu[1], E[1]
        rows.append({
            "omega": float(om),
            "mu": float(m0),
            "E1": float(e0),
            "E1p": float(E1p),
            "E1pp": float(E2),
            "muE1_over_MQ2_minus_1": float(m0 * e0 / MQ**2 - 1.0),
            "E1p_plus_omega_rel": float(abs(E1p + om) / om),
            "mu3E1pp_over_2MQ2_minus_1": float(m0**3 * E2 / (2.0 * MQ**2) - 1.0),
        })
    return rows


def residual_action(sol: ExcitedSoliton) -> NDArray:
    """``(A^om)'(Q_om)``, zero at an exact discrete solution."""
    return action_gradient(sol.frame(), sol.q, 1.0)
