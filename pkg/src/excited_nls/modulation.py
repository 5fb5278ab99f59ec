"""Modulation coordinates around the rescaled excited state.

A field near the orbit ``{e^{i theta} Q_om}`` is written

    phi = e^{i theta} (Q_om + v),    v = b_+ g_+ + b_- g_- + zeta,

with ``theta`` fixed by ``<i v|Q_om'> = 0``.  The module also provides the
phase rate, the three distances to the orbit and the sign functional.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar

from .functionals import action, kinetic, mass, virial, virial_by_dilation
from .grid import RadialGrid
from .linearization import LinearizedPencil, energy_norm_sq, project
from .solitons import ExcitedSoliton

log = logging.getLogger(__name__)

CALIBRATION_ENV = "EXCITED_NLS_CALIBRATION"


class TooFarFromOrbit(ValueError):
    pass


class DegenerateDenominator(ZeroDivisionError):
    pass


class CaseOverlapDisagreement(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


# -- thresholds ---------------------------------------------------------------


@dataclass
class ThresholdConfig:
    """Small and large constants of the near-orbit analysis, with their provenance.

    The tables ``eps_table``/``kappa_table`` hold ``eps_V(delta)`` and
    ``kappa_V(delta)`` on the grid ``delta_table``.
    """

    delta_X: float = 0.1
    delta_E: float = 0.2
    delta_V: float = 0.04
    delta_I: float = 0.15
    delta_D: float = 0.5
    delta_M: float = 0.1
    delta_star: float = 0.05
    c_X: float = 0.1
    c_star: float = 0.05
    eps_S: float = 0.05
    omega_star: float = 10.0
    omega_star2: float = 100.0
    C_D: float = 2.0
    C_M: float | None = None
    C_equiv: float = 4.0
    trap_window_efolds: float = 20.0
    scatter_window: float = 4.0
    scatter_l4_fraction: float = 0.35
    blowup_grad_factor: float = 3.0
    mollifier_time: float = 0.2
    delta_table: list[float] = field(default_factory=lambda: [0.01, 0.03, 0.1, 0.3])
    eps_table: list[float] = field(default_factory=lambda: [0.01, 0.02, 0.04, 0.08])
    kappa_table: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4])
    provenance: dict = field(default_factory=lambda: {"source": "defaults"})

    def validate(self) -> "ThresholdConfig":
        d = self
        problems = []
        if not (d.delta_star <= d.delta_I <= d.delta_E <= d.delta_D / 2):
            problems.append("need delta_* <= delta_I <= delta_E <= delta_D/2")
        if not d.delta_V < d.delta_X / 2:
            problems.append("need delta_V < delta_X/2")
        if not d.delta_X <= d.delta_I:
            problems.append("need delta_X <= delta_I")
        for name in ("delta_X", "delta_E", "delta_V", "delta_I", "delta_D", "delta_M",
                     "delta_star", "c_X", "c_star", "eps_S"):
            if not getattr(d, name) > 0:
                problems.append(f"{name} must be positive")
        if len(d.delta_table) != len(d.eps_table) or len(d.delta_table) != len(d.kappa_table):
            problems.append("calibration tables have different lengths")
        if np.any(np.diff(d.delta_table) <= 0):
            problems.append("delta_table must increase")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def eps_V(self, delta: float) -> float:
        return _monotone_interp(delta, self.delta_table, self.eps_table)

    def kappa_V(self, delta: float) -> float:
        return _monotone_interp(delta, self.delta_table, self.kappa_table)

    def C_S(self, MH0_Q: float) -> float:
        return max(self.C_D, 2.0 + 1.0 / MH0_Q)

    def C_M_value(self, A_Q: float) -> float:
        return self.C_M if self.C_M is not None else 2.0 * (1.0 + self.C_D) * A_Q

    def trap_window(self, alpha: float) -> float:
        return self.trap_window_efolds / alpha

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ThresholdConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown threshold keys: {sorted(extra)}")
        return cls(**data).validate()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path=None) -> "ThresholdConfig":
        """From ``path``, else the file named by ``$EXCITED_NLS_CALIBRATION``, else defaults."""
        path = path or os.environ.get(CALIBRATION_ENV)
        if not path:
            return cls().validate()
        return cls.from_json(json.loads(Path(path).read_text()))


def _monotone_interp(x, xs, ys):
    """Log-linear interpolation, forced nondecreasing; linear to zero below the table."""
    ys = np.maximum.accumulate(np.asarray(ys, dtype=float))
    if x < xs[0]:
        return float(ys[0] * x / xs[0])
    return float(np.interp(np.log(x), np.log(xs), ys))


# -- decomposition ------------------------------------------------------------


@dataclass
class Decomposition:
    theta: float
    b_plus: float
    b_minus: float
    zeta: NDArray
    omega: float
    v: NDArray | None = None

    @property
    def b1(self) -> float:
        return self.b_plus + self.b_minus

    @property
    def b2(self) -> float:
        return self.b_plus - self.b_minus


def orthogonal_phase(phi: NDArray, sol: ExcitedSoliton) -> tuple[float, NDArray]:
    """Phase with ``<i v|Q'> = 0`` and the smaller ``||v||_{H^1}`` of the two branches."""
    g, q = sol.grid, sol.q
    th0 = float(np.angle(g.cinner(phi, sol.qp)))
    best = None
    for th in (th0, th0 + np.pi):
        v = np.exp(-1j * th) * phi - q
        n = g.h1sq(v)
        if best is None or n < best[0]:
            best = (n, th, v)
    th = float(np.mod(best[1], 2 * np.pi))
    return th, best[2]


def decompose_near(phi: NDArray, sol: ExcitedSoliton, pencil: LinearizedPencil,
                   cfg: ThresholdConfig | None = None, check: bool = True) -> Decomposition:
    cfg = cfg or ThresholdConfig()
    th, v = orthogonal_phase(np.asarray(phi, dtype=complex), sol)
    if check and sol.grid.h1(v) >= cfg.delta_D * cfg.C_equiv:
        raise TooFarFromOrbit(f"||v||_H1 = {sol.grid.h1(v):.3g} outside the chart")
    p = project(v, pencil)
    return Decomposition(th, p.lam_plus, p.lam_minus, p.zeta, sol.omega, v)


def reconstruct(dec: Decomposition, sol: ExcitedSoliton, pencil: LinearizedPencil) -> NDArray:
    v = dec.b_plus * pencil.g_plus + dec.b_minus * pencil.g_minus + dec.zeta
    return np.exp(1j * dec.theta) * (sol.q + v)


def nonlinear_part(v: NDArray, q: NDArray) -> NDArray:
    """``N(v) = 2 Q |v|^2 + Q v^2 + |v|^2 v``."""
    a2 = np.abs(v) ** 2
    return 2.0 * q * a2 + q * v**2 + a2 * v


def phase_rate(v: NDArray, sol: ExcitedSoliton) -> float:
    """``m(v)`` from ``<Q+v|Q'> m + <v|Q> + <N(v)|Q'> = 0``; ``theta' = m - 1``."""
    g, q, qp = sol.grid, sol.q, sol.qp
    den = g.inner(q + v, qp)
    if abs(den) < 1e-8 * mass(g, q):
        raise DegenerateDenominator("<Q+v|Q'> vanishes")
    return -(g.inner(v, q) + g.inner(nonlinear_part(v, q), qp)) / den


# -- distances ----------------------------------------------------------------


def chi(t):
    """Smooth even cutoff: 1 on ``|t| <= 1``, 0 on ``|t| >= 2``."""
    t = np.abs(np.asarray(t, dtype=float))
    s = np.clip(t - 1.0, 0.0, 1.0)

    def e(x):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    return e(1.0 - s) / (e(1.0 - s) + e(s))


def dist0(phi: NDArray, sol: ExcitedSoliton, method: str = "closed") -> float:
    """``inf_theta ||phi - e^{i theta} Q_om||_{H^1}``."""
    g, q = sol.grid, sol.q
    c = g.h1_cinner(phi, q)
    if method == "closed":
        val = g.h1sq(phi) + g.h1sq(q) - 2.0 * abs(c)
        return float(np.sqrt(max(val, 0.0)))

    def f(th):
        return g.h1sq(phi - np.exp(1j * th) * q)

    ths = np.linspace(0.0, 2 * np.pi, 17)
    k = int(np.argmin([f(t) for t in ths]))
    res = minimize_scalar(f, bracket=(ths[k] - ths[1], ths[k], ths[k] + ths[1]), method="golden",
                          options={"xtol": 1e-10})
    # refine with the closed form of the stationarity condition
    th = float(np.angle(c)) if abs(c) > 0 else res.x
    return float(np.sqrt(max(min(res.fun, f(th)), 0.0)))


def tube_norm_sq(phi: NDArray, sol: ExcitedSoliton, pencil: LinearizedPencil) -> float:
    """``||v||_om^2`` for the modulation ``v`` of ``phi``."""
    _, v = orthogonal_phase(np.asarray(phi, dtype=complex), sol)
    return energy_norm_sq(v, pencil, strict=False)


def dist1(phi: NDArray, sol: ExcitedSoliton, pencil: LinearizedPencil, tau: float = 1.0,
          dt: float = 2e-3, every: int = 10, scheme: str = "relaxation") -> tuple[float, bool]:
    """Time-mollified tube norm; returns ``(d1, ok)``.

    ``d1^2 = int chi(-t/tau) ||v(t)||_om^2 dt / int chi(t/tau) dt`` over
    ``|t| <= 2 tau``.  ``tau`` sets the mollification time; the normalization
    makes ``d1 = ||v||_om`` along a stationary modulation.
    """
    from .evolve import Evolver, StepRejected

    fr = sol.frame()
    dt = min(dt, tau / 20.0)
    n = int(round(2.0 * tau / dt))
    every = max(1, min(every, n // 4))
    n -= n % every
    T = n * dt
    halves = []
    for backward in (False, True):
        u = np.conj(phi) if backward else np.asarray(phi, dtype=complex).copy()
        ev = Evolver(fr, dt, scheme)
        vals = [tube_norm_sq(phi, sol, pencil)]
        try:
            for k in range(1, n + 1):
                u = ev.step(u)
                if k % every == 0:
                    uu = np.conj(u) if backward else u
                    vals.append(tube_norm_sq(uu, sol, pencil))
        except StepRejected:
            return np.nan, False
        if not np.all(np.isfinite(vals)):
            return np.nan, False
        halves.append(np.array(vals))
    ts = np.linspace(0.0, T, len(halves[0]))
    w = chi(ts / tau)
    total = simpson(w * halves[0], x=ts) + simpson(w * halves[1], x=ts)
    return float(np.sqrt(max(total / (2.0 * simpson(w, x=ts)), 0.0))), True


def blend(d0: float, d1: float, delta_E: float) -> float:
    c = float(chi(d0 / delta_E))
    if c == 0.0:
        return d0
    return c * d1 + (1.0 - c) * d0


def dist(phi: NDArray, sol: ExcitedSoliton, pencil: LinearizedPencil,
         cfg: ThresholdConfig | None = None, **kw) -> tuple[float, dict]:
    """Blended distance ``chi(d0/delta_E) d1 + (1 - chi(d0/delta_E)) d0`` and details."""
    cfg = cfg or ThresholdConfig()
    d0 = dist0(phi, sol)
    info = {"d0": d0, "d1": None, "flag": None}
    if d0 >= 2.0 * cfg.delta_E:
        return d0, info
    kw.setdefault("tau", cfg.mollifier_time)
    d1, ok = dist1(phi, sol, pencil, **kw)
    info["d1"] = d1
    if not ok:
        info["flag"] = "propagation_failure"
        return d0, info
    return blend(d0, d1, cfg.delta_E), info


def distance_series(times: NDArray, d0: NDArray, vnorm_sq: NDArray, delta_E: float,
                    tau: float = 1.0) -> NDArray:
    """Blended distance along a sampled trajectory.

    The mollified norm ``d1`` is taken from the samples where the full window
    ``[t - 2 tau, t + 2 tau]`` is available (and ``||v||`` is defined); elsewhere
    the entry falls back to ``||v(t)||_om``, or to ``d0`` outside the chart.
    """
    times = np.asarray(times, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    nv = np.asarray(vnorm_sq, dtype=float)
    out = d0.copy()
    if len(times) < 3:
        return out
    dtm = np.median(np.diff(times))
    k = int(round(2.0 * tau / dtm))
    s = np.arange(-k, k + 1) * dtm
    w = chi(s / tau)
    w = w / np.sum(w)
    for i in range(len(times)):
        c = float(chi(d0[i] / delta_E))
        if c == 0.0:
            continue
        lo, hi = i - k, i + k + 1
        if lo >= 0 and hi <= len(times) and np.all(np.isfinite(nv[lo:hi])):
            d1 = np.sqrt(max(float(np.sum(w * nv[lo:hi])), 0.0))
        elif np.isfinite(nv[i]):
            d1 = np.sqrt(max(nv[i], 0.0))
        else:
            continue
        out[i] = c * d1 + (1.0 - c) * d0[i]
    return out


# -- sign functional ----------------------------------------------------------


@dataclass
class SignOutcome:
    value: int | None
    case: str
    applicable: dict = field(default_factory=dict)

    @property
    def in_domain(self) -> bool:
        return self.case != "NotInDomain"


NOT_IN_DOMAIN = "NotInDomain"


def sign_functional(phi: NDArray, sol: ExcitedSoliton, pencil: LinearizedPencil,
                    cfg: ThresholdConfig | None = None, d: float | None = None) -> SignOutcome:
    """Sign of the ejection direction from cases (i) small, (ii) near, (iii) virial."""
    cfg = cfg or ThresholdConfig()
    g, q = sol.grid, sol.q
    fr = sol.frame()
    om = sol.omega
    phi = np.asarray(phi, dtype=complex)
    if d is None:
        d, _ = dist(phi, sol, pencil, cfg)
    dA = action(fr, phi) - action(fr, q)
    if not dA < min(cfg.eps_S**2, cfg.c_X * d**2):
        return SignOutcome(None, NOT_IN_DOMAIN)
    M, H0 = mass(g, phi), kinetic(g, phi)
    MQ, H0Q = mass(g, q), kinetic(g, q)
    AQ = action(fr, q)
    results = {}
    if cfg.C_S(MQ * H0Q) * M * H0 <= 1.0:
        results["i"] = 1
    if d < 2.0 * cfg.delta_V:
        dec = decompose_near(phi, sol, pencil, cfg, check=False)
        results["ii"] = 1 if dec.b1 >= 0 else -1
    big = (M + (om if np.isfinite(om) else 1.0) * H0) > cfg.C_M_value(AQ)
    if dA < cfg.eps_V(max(d, 1e-12)) ** 2 and big:
        k2 = virial_by_dilation(fr, phi)
        results["iii"] = 1 if k2 >= 0 else -1
    if not results:
        return SignOutcome(None, "uncovered", results)
    vals = set(results.values())
    if len(vals) > 1:
        log.error("sign cases disagree: %s", results)
        raise CaseOverlapDisagreement(str(results))
    case = next(iter(results))
    return SignOutcome(vals.pop(), case, results)


# -- calibration --------------------------------------------------------------


def variational_samples(sol: ExcitedSoliton, pencil: LinearizedPencil, rng, count: int = 400):
    """Radial fields around and away from ``Q_om``: rescaled, dilated and perturbed copies."""
    from .functionals import dilate
    from .linearization import random_radial_fields

    g, q = sol.grid, sol.q
    fields = random_radial_fields(g, count, rng)
    out = []
    for k, f in enumerate(fields):
        if k % 2 == 0:
            a = rng.uniform(0.6, 1.4)
            lam = rng.uniform(0.7, 1.4)
            eps = 10 ** rng.uniform(-2.5, 0.0)
            out.append(dilate(g, q, lam) * a + eps * f)
        else:
            c1, c2 = rng.standard_normal(2)
            amp = 10 ** rng.uniform(-2.5, -0.5)
            v = c1 * pencil.g1 + 1j * c2 * pencil.g2 + rng.uniform(0.0, 3.0) * f
            out.append(q + amp * v / g.h1(v))
    return out


def calibrate_variational(sol: ExcitedSoliton, pencil: LinearizedPencil, cfg: ThresholdConfig,
                          rng, count: int = 400,
                          deltas=None, eps_grid=None) -> tuple[list, list, list]:
    """Tabulate ``eps_V`` and ``kappa_V``.

    For each ``delta`` the largest ``eps`` on ``eps_grid`` is kept for which the
    sampled fields with ``d0 >= delta``, ``A^om < A^om(Q_om) + eps^2`` and
    ``(M + om H0) > C_M`` have ``|K2^om|`` bounded away from zero; ``kappa_V``
    is the observed minimum (halved as a margin).
    """
    g, q = sol.grid, sol.q
    fr = sol.frame()
    deltas = list(deltas if deltas is not None else cfg.delta_table)
    eps_grid = np.sort(np.asarray(eps_grid if eps_grid is not None else np.geomspace(1e-3, 0.3, 16)))
    AQ = action(fr, q)
    CM = cfg.C_M_value(AQ)
    om = sol.omega if np.isfinite(sol.omega) else 1.0
    rows = []
    for f in variational_samples(sol, pencil, rng, count):
        M, H0 = mass(g, f), kinetic(g, f)
        if not (M + om * H0) > CM:
            continue
        rows.append((dist0(f, sol), action(fr, f) - AQ, abs(virial_by_dilation(fr, f))))
    rows = np.array(rows) if rows else np.zeros((0, 3))
    eps_out, kap_out = [], []
    for dl in deltas:
        best_eps, best_k = eps_grid[0], np.inf
        for e in eps_grid:
            sel = (rows[:, 0] >= dl) & (rows[:, 1] < e**2) if len(rows) else np.zeros(0, bool)
            kmin = float(rows[sel, 2].min()) if np.any(sel) else np.inf
            if kmin > 1e-3:
                best_eps, best_k = float(e), kmin
        eps_out.append(best_eps)
        kap_out.append(float(min(0.5 * best_k, 1.0)) if np.isfinite(best_k) else 0.5)
    # near Q_om the action grows quadratically along the dispersive directions, so
    # eps_V(delta) is kept below delta / 2
    eps_out = [min(e, 0.5 * dl) for e, dl in zip(eps_out, deltas)]
    eps_out = list(np.maximum.accumulate(eps_out))
    kap_out = list(np.maximum.accumulate(kap_out))
    return deltas, eps_out, kap_out
