"""Linearization around the rescaled excited state.

With ``v = v1 + i v2`` the linearized flow is ``v_t = i L v``, where

    L v = L_+ v1 + i L_- v2,
    L_+ = -Delta + 1 + V^om - 3 Q_om^2,    L_- = -Delta + 1 + V^om - Q_om^2.

The unstable eigenpair ``i L g_+ = alpha g_+``, ``g_+ = g1 + i g2`` reads

    L_+ g1 = alpha g2,    -L_- g2 = alpha g1,

so ``g1`` solves ``L_- L_+ g1 = -alpha^2 g1``.  It is computed by shifted inverse
iteration on the real 2x2 block system; each step is one pentadiagonal solve
with ``L_- L_+ + sigma^2``.  Normalization: ``alpha <i g_+|g_-> = 2``, i.e.
``<g1|g2> = -1/alpha``; sign: ``<Q|g2> > 0``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eigh_tridiagonal, solve_banded

from .functionals import Frame, virial_gradient
from .grid import RadialField, RadialGrid
from .solitons import ExcitedSoliton, limit_soliton

log = logging.getLogger(__name__)


class EigenNotIsolated(RuntimeError):
    pass


class NegativeQuadraticForm(RuntimeError):
    pass


class SingularSystem(RuntimeError):
    pass


def _bands(g: RadialGrid, d: NDArray):
    """Symmetric tridiagonal ``(diag, off)`` of ``-Delta + d`` on ``w = r f``."""
    _, diag, off = g.tridiag(d)
    return diag, off


def _tri_mul(diag, off, x):
    y = diag * x
    y[1:] += off * x[:-1]
    y[:-1] += off * x[1:]
    return y


def _product_bands(dm, om, dp, op, shift):
    """Banded storage (2, 2) of ``T_- T_+ + shift`` for tridiagonal ``T_-``, ``T_+``."""
    m = len(dm)
    ab = np.zeros((5, m))
    # main diagonal
    main = dm * dp
    main[1:] += om * op
    main[:-1] += om * op
    ab[2] = main + shift
    # first super / sub diagonals: (T_- T_+)[i, i+1] = dm_i op_i + om_i dp_{i+1}
    sup1 = dm[:-1] * op + om * dp[1:]
    sub1 = om * dp[:-1] + dm[1:] * op
    ab[1, 1:] = sup1
    ab[3, :-1] = sub1
    # second diagonals: (T_- T_+)[i, i+2] = om_i op_{i+1}
    sup2 = om[:-1] * op[1:]
    sub2 = om[1:] * op[:-1]
    ab[0, 2:] = sup2
    ab[4, :-2] = sub2
    return ab


@dataclass
class LinearizedPencil:
    sol: ExcitedSoliton
    alpha: float
    g1: NDArray
    g2: NDArray
    d_plus: NDArray
    d_minus: NDArray
    residual: float
    iterations: int = 0

    @property
    def grid(self) -> RadialGrid:
        return self.sol.grid

    @property
    def omega(self) -> float:
        return self.sol.omega

    @property
    def g_plus(self) -> NDArray:
        return self.g1 + 1j * self.g2

    @property
    def g_minus(self) -> NDArray:
        return self.g1 - 1j * self.g2

    def normalization(self) -> float:
        """``alpha <i g_+|g_->``; equals 2 by construction."""
        return self.alpha * self.grid.inner(1j * self.g_plus, self.g_minus)

    def Lplus(self, f: NDArray) -> NDArray:
        return self.grid.apply_op(self.d_plus, f)

    def Lminus(self, f: NDArray) -> NDArray:
        return self.grid.apply_op(self.d_minus, f)

    def L(self, v: NDArray) -> NDArray:
        return self.Lplus(v.real) + 1j * self.Lminus(v.imag)

    def quad(self, v: NDArray) -> float:
        """``<L v|v> = <L_+ v1|v1> + <L_- v2|v2>`` in the symmetric discrete form."""
        g = self.grid
        v1, v2 = v.real, np.imag(v)
        return (
            g.grad_sq(v1) + g.inner(self.d_plus * v1, v1)
            + g.grad_sq(v2) + g.inner(self.d_minus * v2, v2)
        )

    def solve_Lplus(self, rhs: NDArray) -> NDArray:
        out = self.grid.solve_op(self.d_plus, rhs)
        if not np.all(np.isfinite(out)):
            raise SingularSystem("L_+ solve failed")
        return out

    def solve_Lminus_perpQ(self, rhs: NDArray) -> NDArray:
        """Solve ``L_- x = rhs`` on the complement of ``Q_om`` (null direction)."""
        g, q = self.grid, self.sol.q
        qq = g.l2sq(q)
        c = g.inner(rhs, q) / qq
        if abs(c) * np.sqrt(qq) > 1e-10 * max(g.l2(rhs), 1e-300):
            warnings.warn("right side not orthogonal to Q_om; projecting", stacklevel=2)
        rhs = rhs - c * q
        out = g.solve_op(self.d_minus, rhs)
        if not np.all(np.isfinite(out)):
            raise SingularSystem("L_- solve failed")
        return out - g.inner(out, q) / qq * q

    def K2_derivative_pairing(self) -> dict[str, float]:
        """``<(K2^om)'(Q_om)|g1>`` directly and through the eigen-relations."""
        g, q = self.grid, self.sol.q
        fr = self.sol.frame()
        direct = g.inner(virial_gradient(fr, q), self.g1)
        s32 = fr.rVr + 2.0 * fr.V
        via = 0.5 * self.alpha * g.inner(q, self.g2) - g.inner(s32 * q, self.g1)
        return {"direct": direct, "via_eigen": via, "alpha_Q_g2": self.alpha * g.inner(q, self.g2)}

    def eigen_residuals(self) -> dict[str, float]:
        g = self.grid
        scale = self.alpha * (g.l2(self.g1) + g.l2(self.g2))
        r1 = g.l2(self.Lplus(self.g1) - self.alpha * g.clean(self.g2))
        r2 = g.l2(self.Lminus(self.g2) + self.alpha * g.clean(self.g1))
        return {"Lplus": r1 / scale, "Lminus": r2 / scale}

    def gauge_residual(self) -> float:
        """``||L_- Q_om||_2 / ||Q_om||_2``."""
        g, q = self.grid, self.sol.q
        return g.l2(self.Lminus(q)) / g.l2(q)

    def generalized_kernel_residual(self) -> float:
        """``||L_+ Q_om' + Q_om||_2 / ||Q_om||_2``."""
        g, q = self.grid, self.sol.q
        return g.l2(self.Lplus(self.sol.qp) + g.clean(q)) / g.l2(q)

    def spectrum_counts(self, tol: float = 1e-8) -> dict[str, float]:
        """Number of negative eigenvalues of ``L_+`` and the bottom of ``L_-``."""
        dp, op = _bands(self.grid, self.d_plus)
        dm, om = _bands(self.grid, self.d_minus)
        ep = eigh_tridiagonal(dp, op, eigvals_only=True, select="i", select_range=(0, 2))
        em = eigh_tridiagonal(dm, om, eigvals_only=True, select="i", select_range=(0, 1))
        return {
            "Lplus_negative": int(np.sum(ep < -tol)),
            "Lplus_lowest": float(ep[0]),
            "Lminus_lowest": float(em[0]),
            "Lminus_second": float(em[1]),
        }


def _inverse_iteration(g, d_plus, d_minus, sigma2, x, tol=1e-14, max_iter=200):
    """Inverse iteration for the eigenvalue ``-alpha^2`` of ``T_- T_+`` (``w`` variables)."""
    dp, op = _bands(g, d_plus)
    dm, om = _bands(g, d_minus)
    ab = _product_bands(dm, om, dp, op, sigma2)
    a2 = sigma2
    it = 0
    for it in range(1, max_iter + 1):
        y = solve_banded((2, 2), ab, x, check_finite=False)
        x = y / np.linalg.norm(y)
        z = _tri_mul(dp, op, x)
        # alpha^2 = -<T_- z, z> / <T_+ x, x>, stationary in the eigenvector
        new = -float(z @ _tri_mul(dm, om, z)) / float(z @ x)
        done = abs(new - a2) < tol * abs(new)
        a2 = new
        if done and it > 2:
            break
        if it % 4 == 0:
            ab = _product_bands(dm, om, dp, op, a2 * (1 + 1e-10))
    return a2, x, it, (dm, om, dp, op)


def _next_eigenvalue(bands, a2, x, iters=40):
    """Nearest other eigenvalue of ``T_- T_+`` to ``-alpha^2`` (deflated inverse iteration)."""
    dm, om, dp, op = bands
    ab = _product_bands(dm, om, dp, op, a2 * (1 + 1e-7))
    left = _tri_mul(dp, op, x)
    denom = float(left @ x)
    rng = np.random.default_rng(0)
    y = rng.standard_normal(len(x))
    mu = np.nan
    for _ in range(iters):
        y -= (left @ y) / denom * x
        y = solve_banded((2, 2), ab, y, check_finite=False)
        y -= (left @ y) / denom * x
        y /= np.linalg.norm(y)
        ty = _tri_mul(dm, om, _tri_mul(dp, op, y))
        mu = float(y @ ty)
    return mu


def _coarse_seed(g: RadialGrid, q: NDArray, d_plus: NDArray, d_minus: NDArray):
    """Seed ``(alpha^2, g1)`` from a dense eigensolve on a coarse copy of the grid."""
    r_c = min(g.r_max, 30.0)
    gc = RadialGrid(300, r_c)
    qc = g.sample(q, gc.r)
    Vc = g.sample(d_minus - 1.0 + q**2, gc.r)  # V^om on the coarse grid
    dpc, opc = _bands(gc, 1.0 + Vc - 3.0 * qc**2)
    dmc, omc = _bands(gc, 1.0 + Vc - qc**2)
    Tp = np.diag(dpc) + np.diag(opc, 1) + np.diag(opc, -1)
    Tm = np.diag(dmc) + np.diag(omc, 1) + np.diag(omc, -1)
    ev, vec = np.linalg.eig(Tm @ Tp)
    k = int(np.argmin(ev.real))
    a2 = float(-ev[k].real)
    wc = vec[:, k].real
    fc = np.zeros(gc.n_points)
    fc[:-1] = wc / gc.r[:-1]
    f = gc.sample(fc, g.r)
    f[g.r > r_c] = 0.0
    return a2, g.r[:-1] * f[:-1]


def build_pencil(sol: ExcitedSoliton, seed: "LinearizedPencil | None" = None,
                 check_isolation: bool = True) -> LinearizedPencil:
    """Operators ``L_pm`` and the normalized unstable eigenpair at ``sol``."""
    g = sol.grid
    q = sol.q
    V = sol.frame().V
    d_plus = 1.0 + V - 3.0 * q**2
    d_minus = 1.0 + V - q**2
    if seed is None and np.isfinite(sol.omega):
        seed = limit_pencil(g)
    if seed is not None and seed.grid == g:
        a2, x = seed.alpha**2, g.r[:-1] * seed.g1[:-1]
    else:
        a2, x = _coarse_seed(g, q, d_plus, d_minus)
    x = x / np.linalg.norm(x)
    a2, x, it, bands = _inverse_iteration(g, d_plus, d_minus, a2 * (1 + 1e-6), x)
    if not a2 > 0:
        raise EigenNotIsolated("no negative eigenvalue of L_- L_+ found")
    alpha = float(np.sqrt(a2))
    if check_isolation:
        mu = _next_eigenvalue(bands, a2, x)
        if mu < 0 and abs(np.sqrt(-mu) - alpha) < 1e-6 * alpha:
            raise EigenNotIsolated(f"second real eigenvalue {np.sqrt(-mu):.8g} within 1e-6 of alpha")
    g1 = g.zeros()
    g1[:-1] = x / g.r[:-1]
    g2 = g.apply_op(d_plus, g1) / alpha
    s = np.sqrt(-1.0 / (alpha * g.inner(g1, g2)))
    g1, g2 = s * g1, s * g2
    if g.inner(q, g2) < 0:
        g1, g2 = -g1, -g2
    p = LinearizedPencil(sol, alpha, g1, g2, d_plus, d_minus, 0.0, it)
    p.residual = max(p.eigen_residuals().values())
    return p


@lru_cache(maxsize=8)
def limit_pencil(grid: RadialGrid) -> LinearizedPencil:
    """Pencil of the potential-free problem (``omega = inf``) built from scratch."""
    return build_pencil(limit_soliton(grid), seed=None)


# -- projections and norms ------------------------------------------------------------


@dataclass
class Projection:
    lam_plus: float
    lam_minus: float
    lam1: float
    lam2: float
    zeta: NDArray

    def as_tuple(self):
        return self.lam_plus, self.lam_minus, self.lam1, self.lam2, self.zeta


def project(v: NDArray, pencil: LinearizedPencil) -> Projection:
    """``lam_pm = pm alpha <i v|g_mp>/2``, ``zeta = v - lam_+ g_+ - lam_- g_-``."""
    g, a = pencil.grid, pencil.alpha
    v1, v2 = np.real(v), np.imag(v)
    a12 = g.inner(v1, pencil.g2)
    a21 = g.inner(v2, pencil.g1)
    lp = 0.5 * a * (-a12 - a21)
    lm = -0.5 * a * (a12 - a21)
    zeta = v - lp * pencil.g_plus - lm * pencil.g_minus
    return Projection(lp, lm, lp + lm, lp - lm, zeta)


def energy_norm_sq(v: NDArray, pencil: LinearizedPencil, strict: bool = True) -> float:
    """``||v||_om^2 = lam_+^2 + lam_-^2 + <iQ'|v>^2/2 + <L zeta|zeta>/2``."""
    p = project(v, pencil)
    g = pencil.grid
    iq = g.inner(1j * pencil.sol.qp, v)
    qf = pencil.quad(p.zeta)
    if qf < -1e-8 * max(1.0, g.h1sq(p.zeta)):
        if strict:
            raise NegativeQuadraticForm(f"<L zeta|zeta> = {qf:.3e} < 0")
        qf = 0.0
    return p.lam_plus**2 + p.lam_minus**2 + 0.5 * iq**2 + 0.5 * max(qf, 0.0)


def energy_norm(v: NDArray, pencil: LinearizedPencil, strict: bool = True) -> float:
    return float(np.sqrt(energy_norm_sq(v, pencil, strict)))


def coercivity_form(phi: NDArray, pencil: LinearizedPencil, C: float) -> float:
    """``<L phi|phi> + C <phi1|g2>^2 + C <phi2|Q'>^2``."""
    g = pencil.grid
    return (
        pencil.quad(phi)
        + C * g.inner(np.real(phi), pencil.g2) ** 2
        + C * g.inner(np.imag(phi), pencil.sol.qp) ** 2
    )


def coercivity_constant(fields, pencils, candidates=None) -> float:
    """Smallest tabulated ``C`` with ``||phi||^2/C <= form_C(phi) <= C^2 ||phi||^2`` for all inputs."""
    candidates = candidates if candidates is not None else np.geomspace(1.0, 1e4, 81)
    for C in candidates:
        ok = True
        for p in pencils:
            g = p.grid
            for phi in fields:
                n2 = g.h1sq(phi)
                f = coercivity_form(phi, p, C)
                if not (n2 / C <= f <= C**2 * n2):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return float(C)
    return np.inf


def cubic_remainder(v: NDArray, q: NDArray, g: RadialGrid) -> float:
    """``C(v) = <|v|^2 v|Q> + G(v)``."""
    return g.inner(np.abs(v) ** 2 * v, q) + 0.25 * float(np.dot(g.weights, np.abs(v) ** 4))


def Pc_ground(phi: RadialField, phi0: RadialField) -> RadialField:
    """``phi - phi0 (phi|phi0)`` for ``||phi0||_2 = 1``."""
    g = phi.grid
    c = g.cinner(phi.values, phi0.values)
    return RadialField(g, phi.values - c * phi0.values)


def random_radial_fields(g: RadialGrid, count: int, rng, complex_valued=True, width=(0.3, 4.0)):
    """Smooth random radial fields: sums of shifted Gaussians, unit ``H^1`` norm."""
    out = []
    for _ in range(count):
        f = np.zeros(g.n_points, dtype=complex if complex_valued else float)
        for _ in range(rng.integers(1, 5)):
            s = rng.uniform(*width)
            c0 = rng.uniform(0.0, 6.0)
            amp = rng.standard_normal() + (1j * rng.standard_normal() if complex_valued else 0.0)
            f = f + amp * np.exp(-((g.r - c0) / s) ** 2)
        f[-1] = 0.0
        out.append(f / g.h1(f))
    return out


def expansion_defect(theta: float, v: NDArray, pencil: LinearizedPencil) -> float:
    """``A^om(e^{i theta}(Q + v)) - A^om(Q) - <L v|v>/2 + C(v)``, zero up to the soliton residual."""
    from .functionals import action

    sol = pencil.sol
    fr = sol.frame()
    q = sol.q
    lhs = action(fr, np.exp(1j * theta) * (q + v)) - action(fr, q)
    return lhs - 0.5 * pencil.quad(v) + cubic_remainder(v, q, pencil.grid)
