"""Radial potentials, their rescalings and the linear ground state.

A potential is described by a :class:`PotentialSpec`.  It knows how to
evaluate ``V``, ``r V_r`` (the scaling derivative ``x . grad V``) and
``r^2 V_rr`` at arbitrary radii, analytically for the built-in families and
through a cubic spline for tabulated data.  The rescaled potential
``V^omega(x) = V(x / sqrt(omega)) / omega`` is obtained with
:meth:`PotentialSpec.on_grid`.

Families
--------
``zero``        V = 0
``gaussian``    V = -c exp(-r^2 / sigma^2)
``power_core``  V = -c r^(-a) exp(-r^2 / sigma^2), 0 < a < 3/2
``table``       cubic spline through (r, V) samples, zero beyond the table
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal, lapack

from .grid import RadialField, RadialGrid

BOUND_TOL = 1e-10

FAMILIES = ("zero", "gaussian", "power_core", "table")

# Calibrated defaults (see the `calibrate` CLI subcommand and tests/test_potential.py).
DEFAULT_GAUSSIAN = {"c": 6.0, "sigma": 1.0}
DEFAULT_POWER_CORE = {"c": 2.0, "a": 1.45, "sigma": 1.0}


class NoBoundState(RuntimeError):
    pass


class MultipleBoundStates(RuntimeError):
    pass


@dataclass(frozen=True)
class OnGrid:
    """Potential samples on a grid: ``V``, ``r V_r`` and ``r^2 V_rr``."""

    V: NDArray
    rVr: NDArray
    r2Vrr: NDArray


@dataclass
class PotentialSpec:
    family: str = "gaussian"
    params: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_GAUSSIAN))
    table_r: NDArray | None = None
    table_v: NDArray | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")
        p = self.params
        if self.family in ("gaussian", "power_core"):
            if not (p.get("c", 0) > 0 and p.get("sigma", 0) > 0):
                raise ValueError("depth c and width sigma must be positive")
        if self.family == "power_core" and not 0 < p.get("a", 0) < 1.5:
            raise ValueError("power_core exponent a must lie in (0, 3/2)")
        if self.family == "table":
            if self.table_r is None or self.table_v is None:
                raise ValueError("table potential needs r and V samples")
            r = np.asarray(self.table_r, float)
            v = np.asarray(self.table_v, float)
            if r.ndim != 1 or r.shape != v.shape or len(r) < 4 or np.any(np.diff(r) <= 0):
                raise ValueError("table needs >= 4 increasing radii with matching values")
            self.table_r, self.table_v = r, v

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls("zero", {})

    @classmethod
    def gaussian(cls, c: float = DEFAULT_GAUSSIAN["c"], sigma: float = DEFAULT_GAUSSIAN["sigma"]):
        return cls("gaussian", {"c": float(c), "sigma": float(sigma)})

    @classmethod
    def power_core(
        cls,
        c: float = DEFAULT_POWER_CORE["c"],
        a: float = DEFAULT_POWER_CORE["a"],
        sigma: float = DEFAULT_POWER_CORE["sigma"],
    ):
        return cls("power_core", {"c": float(c), "a": float(a), "sigma": float(sigma)})

    @classmethod
    def from_table(cls, r, v) -> "PotentialSpec":
        return cls("table", {}, np.asarray(r, float), np.asarray(v, float))

    @classmethod
    def from_csv(cls, path) -> "PotentialSpec":
        data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=_header_rows(path))
        return cls.from_table(data[:, 0], data[:, 1])

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "PotentialSpec":
        family = cfg.get("family", "gaussian")
        if family == "table":
            return cls.from_csv(cfg["path"])
        params = {k: float(v) for k, v in cfg.items() if k not in ("family", "path")}
        if family == "gaussian":
            return cls.gaussian(**{**DEFAULT_GAUSSIAN, **params})
        if family == "power_core":
            return cls.power_core(**{**DEFAULT_POWER_CORE, **params})
        return cls(family, params)

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family, **self.params}
        if self.family == "table":
            out["r"] = self.table_r.tolist()
            out["V"] = self.table_v.tolist()
        return out

    @property
    def is_zero(self) -> bool:
        return self.family == "zero"

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, r: NDArray) -> OnGrid:
        """``V``, ``r V_r`` and ``r^2 V_rr`` at radii ``r`` (unit scale)."""
        r = np.asarray(r, float)
        fam, p = self.family, self.params
        if fam == "zero":
            z = np.zeros_like(r)
            return OnGrid(z, z.copy(), z.copy())
        if fam == "gaussian":
            s2 = (r / p["sigma"]) ** 2
            v = -p["c"] * np.exp(-s2)
            return OnGrid(v, v * (-2.0 * s2), v * (4.0 * s2**2 - 2.0 * s2))
        if fam == "power_core":
            a = p["a"]
            s2 = (r / p["sigma"]) ** 2
            v = -p["c"] * r**-a * np.exp(-s2)
            g = a + 2.0 * s2
            return OnGrid(v, -v * g, v * (g**2 + a - 2.0 * s2))
        spline = CubicSpline(self.table_r, self.table_v, bc_type="natural")
        inside = r <= self.table_r[-1]
        rc = np.clip(r, self.table_r[0], self.table_r[-1])
        v = np.where(inside, spline(rc), 0.0)
        below = r < self.table_r[0]
        dv = np.where(inside & ~below, spline(rc, 1), 0.0)
        d2v = np.where(inside & ~below, spline(rc, 2), 0.0)
        return OnGrid(v, r * dv, r**2 * d2v)

    def on_grid(self, grid: RadialGrid, omega: float | None = None) -> OnGrid:
        """Samples of ``V^omega`` (or ``V`` when ``omega`` is None) on the grid.

        ``V^omega(x) = V(x/sqrt(omega))/omega``; the scaling derivatives rescale
        the same way since ``x . grad`` commutes with dilations.
        """
        if omega is None:
            return self.evaluate(grid.r)
        if not omega > 0:
            raise ValueError("omega must be positive")
        raw = self.evaluate(grid.r / np.sqrt(omega))
        return OnGrid(raw.V / omega, raw.rVr / omega, raw.r2Vrr / omega)

    def scaling_derivative(self, grid: RadialGrid, p: float, omega: float | None = None):
        """``S_p' V = (x . grad + 3/p) V`` on the grid (``p = inf`` allowed)."""
        d = self.on_grid(grid, omega)
        return d.rVr + (0.0 if np.isinf(p) else 3.0 / p) * d.V


def _header_rows(path) -> int:
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(x) for x in first.split(",")]
        return 0
    except ValueError:
        return 1


# -- linear ground state ------------------------------------------------------


def radial_eigenvalues(V: PotentialSpec, grid: RadialGrid, count: int = 2) -> NDArray:
    """Lowest ``count`` eigenvalues of ``-Delta + V`` on the radial grid."""
    v = V.on_grid(grid).V
    _, diag, upper = grid.tridiag(v)
    return eigh_tridiagonal(
        diag, upper, eigvals_only=True, select="i", select_range=(0, count - 1)
    )


def _inverse_iteration(diag, off, shift, x, tol=BOUND_TOL, max_iter=100):
    """Rayleigh-quotient inverse iteration for a symmetric tridiagonal matrix."""
    lam = shift
    for _ in range(max_iter):
        dl, d, du, du2, ipiv, info = lapack.dgttrf(off, diag - lam, off)
        if info > 0:
            # exact hit on an eigenvalue: nudge the shift
            lam = lam * (1 + 1e-14) + 1e-14
            continue
        y, info = lapack.dgttrs(dl, d, du, du2, ipiv, x)
        x = y / np.linalg.norm(y)
        ax = diag * x
        ax[1:] += off * x[:-1]
        ax[:-1] += off * x[1:]
        lam = float(x @ ax)
        res = np.linalg.norm(ax - lam * x)
        if res < tol * max(1.0, abs(lam)):
            return lam, x
    return lam, x


def ground_eigenpair(V: PotentialSpec, grid: RadialGrid | None = None):
    """Lowest eigenpair ``(e0, phi0)`` of ``H = -Delta + V`` on radial functions.

    The eigenvalue estimate from a tridiagonal eigensolver seeds a
    Rayleigh-quotient inverse iteration on the reduced tridiagonal operator.
    ``phi0`` is positive and normalized in ``L^2(R^3)``.
    """
    grid = grid or RadialGrid()
    if V.is_zero:
        raise NoBoundState("V = 0 has no bound state")
    ev = radial_eigenvalues(V, grid, 2)
    if ev[0] >= -BOUND_TOL:
        raise NoBoundState(f"lowest radial eigenvalue {ev[0]:.3e} is not negative")
    if ev[1] < -BOUND_TOL:
        raise MultipleBoundStates(f"second radial eigenvalue {ev[1]:.3e} is negative")
    v = V.on_grid(grid).V
    _, diag, off = grid.tridiag(v)
    r = grid.r[:-1]
    w0 = r * np.exp(-r)
    e0, w = _inverse_iteration(diag, off, ev[0] - 1e-9 * max(1.0, abs(ev[0])), w0 / np.linalg.norm(w0))
    f = grid.zeros()
    f[:-1] = w / r
    f /= grid.l2(f)
    if f[np.argmax(np.abs(f))] < 0:
        f = -f
    return e0, RadialField(grid, f)


def eigen_residual(V: PotentialSpec, e0: float, phi0: RadialField) -> float:
    g = phi0.grid
    f = phi0.values.real
    return g.l2(g.apply_op(V.on_grid(g).V, f) - e0 * f)


def count_bound_states(V: PotentialSpec, grid: RadialGrid, limit: int = 4) -> int:
    ev = radial_eigenvalues(V, grid, limit)
    return int(np.sum(ev < -BOUND_TOL))


def depth_window(family: str, grid: RadialGrid, c_hi: float = 200.0, tol: float = 1e-6, **params):
    """Depth interval ``(a, b)`` of ``c`` with exactly one negative radial eigenvalue.

    Found by bisection on the sign of the first and second eigenvalues.
    """

    def ev(c, k):
        spec = PotentialSpec(family, {**params, "c": c})
        return radial_eigenvalues(spec, grid, 2)[k]

    def threshold(k):
        lo, hi = 1e-6, c_hi
        if ev(hi, k) >= 0:
            return np.inf
        while hi - lo > tol * hi:
            mid = 0.5 * (lo + hi)
            if ev(mid, k) < -BOUND_TOL:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    return threshold(0), threshold(1)


# -- admissibility --------------------------------------------------------------


def _power_exponent(r, f):
    """Slope of ``log|f|`` against ``log r`` over the sample (least squares)."""
    mask = np.abs(f) > 0
    if mask.sum() < 2:
        return -np.inf
    return float(np.polyfit(np.log(r[mask]), np.log(np.abs(f[mask])), 1)[0])


def _radial_integral(r, f):
    """``int f dx`` over the sampled shell range, trapezoid in ``log r``."""
    return float(np.trapezoid(4 * np.pi * r**3 * f, np.log(r)))


def admissibility_report(V: PotentialSpec, grid: RadialGrid | None = None) -> dict[str, Any]:
    """Numerical verification of the computable assumptions on ``V``.

    (i) radial and real: true by construction.
    (ii) ``V in L^2 cap |x| L^1`` and ``x grad V, x^2 grad^2 V in L^2 + L^inf_0``:
    quadrature over a log-spaced range plus power-law extrapolation of the
    behaviour at both ends.
    (iii) exactly one negative radial eigenvalue.
    (iv) wave-operator bounds: assumed, not verified.
    """
    grid = grid or RadialGrid()
    if V.family == "table":
        r_lo, r_hi = V.table_r[0], V.table_r[-1]
    else:
        scale = V.params.get("sigma", 1.0)
        r_lo, r_hi = 1e-8 * scale, 50.0 * scale
    r = np.geomspace(r_lo, r_hi, 4000)
    d = V.evaluate(r)
    n_end = 400
    head, tail = slice(0, n_end), slice(-n_end, None)

    checks: dict[str, Any] = {}

    def integrable(name, f, power_weight, local_only=False):
        # int |f|^q r^2 dr near 0 needs q*p0 < 3, at infinity q*p_inf > 3
        val = _radial_integral(r, f)
        p0 = -_power_exponent(r[head], f[head]) if np.any(f[head]) else -np.inf
        pinf = -_power_exponent(r[tail], f[tail]) if np.any(f[tail]) else np.inf
        ok_origin = p0 < 3.0 - 1e-3
        decays = np.max(np.abs(f[tail])) < 1e-12 * max(1.0, np.max(np.abs(f))) or pinf > 3.0 + 1e-3
        checks[name] = {
            "value": val,
            "origin_exponent": p0,
            "tail_exponent": pinf,
            "pass": bool(np.isfinite(val) and ok_origin and (local_only or decays)),
        }

    integrable("V in L2", d.V**2, 2)
    integrable("V in |x|L1", np.abs(d.V) / r, 1)
    for key, f in (("x.gradV in L2+Linf0", d.rVr), ("x^2 grad^2 V in L2+Linf0", d.r2Vrr)):
        # local L^2 part near the origin, vanishing sup at infinity
        integrable(key, np.where(r < 1.0, f, 0.0) ** 2, 2, local_only=True)
        checks[key]["tail_sup"] = float(np.max(np.abs(f[tail])))
        checks[key]["pass"] = bool(checks[key]["pass"] and abs(f[-1]) <= abs(f[len(f) // 2]) + 1e-300
                                   and checks[key]["tail_sup"] < 1e-2 * max(1.0, np.max(np.abs(f))))

    n_bound = count_bound_states(V, grid) if not V.is_zero else 0
    checks["unique negative eigenvalue"] = {"count": n_bound, "pass": n_bound == 1}
    checks["wave operator bounds"] = {"status": "assumed, not verified", "pass": None}
    report = {
        "family": V.family,
        "params": dict(V.params),
        "checks": checks,
        "pass": all(c["pass"] for c in checks.values() if c["pass"] is not None),
    }
    return report
