"""Time integration of the radial cubic equation with a potential.

The evolution equation is written as

    i u_t = Delta u - W u + |u|^2 u

where ``W`` is either ``V`` (original frame) or ``V^om`` (rescaled frame).  The
soliton of the rescaled frame is ``e^{-it} Q_om``.

Three schemes share the tridiagonal reduction ``w = r u``:

* ``relaxation`` (default): Crank-Nicolson for the linear part with the
  nonlinear potential taken at half steps from the relaxation recursion
  ``phi^{n+1/2} = 2|u^n|^2 - phi^{n-1/2}``.  One complex tridiagonal solve per
  step, exact discrete mass conservation, second order.
* ``midpoint``: the energy and mass conserving implicit midpoint scheme,
  solved by fixed-point iteration.
* ``strang``: diagonal half steps around a Crank-Nicolson Laplacian step.

Backward evolution is forward evolution of the complex conjugate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import lapack

from .functionals import Frame, evaluate_frame, kinetic, mass, quartic, virial, weighted
from .grid import RadialField, RadialGrid

log = logging.getLogger(__name__)

SCHEMES = ("relaxation", "midpoint", "strang")


class StepRejected(RuntimeError):
    pass


class BlowUpDetected(RuntimeError):
    pass


def sponge_profile(g: RadialGrid, width: float, strength: float = 1.0) -> NDArray:
    """Absorbing layer ``strength * s^2`` over the last ``width`` of the box."""
    s = np.clip((g.r - (g.r_max - width)) / width, 0.0, None)
    return strength * s**2


class Evolver:
    """Stepper for one trajectory; holds the relaxation variable between steps."""

    def __init__(self, frame: Frame, dt: float = 1e-3, scheme: str = "relaxation",
                 sponge: NDArray | None = None, mass_tol: float = 1e-8):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.frame = frame
        self.grid = frame.grid
        self.W = np.asarray(frame.V, dtype=float)
        self.scheme = scheme
        self.sponge = sponge
        self.mass_tol = mass_tol
        self._phi: NDArray | None = None
        self._dt = None
        self._set_dt(dt)

    # -- linear algebra ---------------------------------------------------

    def _set_dt(self, dt: float):
        if dt == self._dt:
            return
        g = self.grid
        self._dt = float(dt)
        self._off = np.full(g.m - 1, -0.5 / g.h**2, dtype=complex)
        self._phi = None

    @property
    def dt(self) -> float:
        return self._dt

    def _lap_w(self, w: NDArray) -> NDArray:
        h2 = self.grid.h**2
        out = -2.0 * w
        out[1:] += w[:-1]
        out[:-1] += w[1:]
        return out / h2

    def _cn(self, u: NDArray, pot: NDArray, dt: float) -> NDArray:
        """Solve ``(i/dt - (Delta + pot)/2) u+ = (i/dt + (Delta + pot)/2) u``."""
        g = self.grid
        r = g.r[:-1]
        w = r * u[:-1]
        a = 1j / dt
        p = pot[:-1]
        rhs = a * w + 0.5 * (self._lap_w(w) + p * w)
        diag = a + 1.0 / g.h**2 - 0.5 * p
        _, _, _, x, info = lapack.zgtsv(self._off.copy(), diag.astype(complex), self._off.copy(), rhs)
        if info != 0:
            raise StepRejected(f"tridiagonal solve failed (info={info})")
        out = np.zeros(g.n_points, dtype=complex)
        out[:-1] = x / r
        return out

    def _absorb(self, pot: NDArray) -> NDArray:
        if self.sponge is None:
            return pot
        return pot - 1j * self.sponge

    # -- steps -------------------------------------------------------------

    def reset(self):
        self._phi = None

    def step(self, u: NDArray, dt: float | None = None) -> NDArray:
        if dt is not None:
            self._set_dt(dt)
        dt = self._dt
        m0 = self.grid.l2sq(u)
        if self.scheme == "relaxation":
            if self._phi is None:
                self._phi = np.abs(u) ** 2
            self._phi = 2.0 * np.abs(u) ** 2 - self._phi
            out = self._cn(u, self._absorb(self._phi - self.W), dt)
        elif self.scheme == "midpoint":
            out = self._midpoint(u, dt)
        else:
            out = self._strang(u, dt)
        if not np.all(np.isfinite(out)):
            raise StepRejected("non-finite field")
        if self.sponge is None:
            m1 = self.grid.l2sq(out)
            if abs(m1 - m0) > self.mass_tol * max(m0, 1e-300):
                raise StepRejected(f"mass jump {abs(m1 - m0) / m0:.2e}")
        return out

    def _midpoint(self, u, dt, tol=1e-13, max_iter=100):
        new = u.copy()
        for _ in range(max_iter):
            phi = 0.5 * (np.abs(new) ** 2 + np.abs(u) ** 2)
            nxt = self._cn(u, self._absorb(phi - self.W), dt)
            err = np.max(np.abs(nxt - new))
            new = nxt
            if err < tol * max(1.0, np.max(np.abs(new))):
                return new
        raise StepRejected("midpoint iteration did not converge")

    def _strang(self, u, dt):
        def diag(f, tau):
            return f * np.exp(-1j * tau * self._absorb(np.abs(f) ** 2 - self.W))

        v = diag(u, 0.5 * dt)
        v = self._cn(v, np.zeros(self.grid.n_points), dt)
        return diag(v, 0.5 * dt)

    def run(self, u0: NDArray, t_end: float, every: int = 1, callback=None):
        """Fixed-step run; ``callback(t, u)`` every ``every`` steps (may return True to stop)."""
        u = np.asarray(u0, dtype=complex).copy()
        self.reset()
        n = int(round(t_end / self._dt))
        t = 0.0
        if callback is not None and callback(t, u):
            return t, u
        for k in range(1, n + 1):
            u = self.step(u)
            t = k * self._dt
            if callback is not None and k % every == 0 and callback(t, u):
                break
        return t, u


def max_dt(u: NDArray, dt0: float, c: float = 0.05) -> float:
    """Step policy: ``dt <= c / ||u||_inf^2`` capped at ``dt0``."""
    amp = float(np.max(np.abs(u))) ** 2
    return dt0 if amp <= 0 else min(dt0, c / amp)


def evolve(u0: NDArray, frame: Frame, t_end: float, dt: float = 1e-3, scheme: str = "relaxation",
           backward: bool = False, sponge: NDArray | None = None) -> NDArray:
    """Field at time ``t_end`` (or ``-t_end`` when ``backward``) by fixed steps."""
    ev = Evolver(frame, dt, scheme, sponge)
    u = np.conj(u0) if backward else np.asarray(u0, dtype=complex)
    _, u = ev.run(u, t_end)
    return np.conj(u) if backward else u


# -- virial monitors ---------------------------------------------------------


def smoothstep(s):
    """``C^3`` step from 0 on ``s <= 0`` to 1 on ``s >= 1``, with two derivatives."""
    s = np.clip(s, 0.0, 1.0)
    S = s**4 * (35 - 84 * s + 70 * s**2 - 20 * s**3)
    S1 = 140 * s**3 * (1 - s) ** 3
    S2 = 420 * s**2 * (1 - s) ** 2 * (1 - 2 * s)
    return S, S1, S2


def phi_profile(s):
    """Cutoff ``phi`` with ``phi = s`` on ``s <= 1``, ``3/2`` on ``s >= 2`` and derivatives to third order."""
    s = np.asarray(s, dtype=float)
    t = np.clip(s - 1.0, 0.0, 1.0)
    # antiderivative of the smoothstep
    I = t**5 * (7 - 14 * t + 10 * t**2 - 2.5 * t**3)
    phi = np.where(s <= 2.0, s - I, 1.5)
    S, S1, S2 = smoothstep(s - 1.0)
    return phi, 1.0 - S, -S1, -S2


def psi_profile(s):
    s = np.asarray(s, dtype=float)
    return 1.0 / (1.0 + s)


@dataclass
class VirialWeight:
    """Radial weight through ``a'`` and its derivatives to third order."""

    a1: NDArray
    a2: NDArray
    a3: NDArray
    a4: NDArray

    def laplacian(self, r):
        return self.a2 + 2.0 * self.a1 / r

    def bilaplacian(self, r):
        return self.a4 + 4.0 * self.a3 / r


def blowup_weight(r, m: float) -> VirialWeight:
    p, p1, p2, p3 = phi_profile(r / m)
    return VirialWeight(m * p, p1, p2 / m, p3 / m**2)


def scattering_weight(r, m: float) -> VirialWeight:
    s = r / m
    psi = 1.0 / (1.0 + s)
    # a' = r psi(r/m) = m s/(1+s)
    a1 = m * s * psi
    a2 = psi**2
    a3 = -2.0 * psi**3 / m
    a4 = 6.0 * psi**4 / m**2
    return VirialWeight(a1, a2, a3, a4)


def _radial_derivative(g: RadialGrid, u: NDArray) -> NDArray:
    return g.dr(u)


def virial_value(g: RadialGrid, u: NDArray, a1: NDArray) -> float:
    """``V_m = <a' u | i d_r u> = Im int a' u conj(d_r u)``."""
    ur = _radial_derivative(g, u)
    return float(np.dot(g.weights, a1 * (u * np.conj(ur)).imag))


def virial_rate_general(fr: Frame, u: NDArray, wgt: VirialWeight) -> float:
    """``2 int a''|u_r|^2 - 1/2 int Delta^2 a |u|^2 - 1/2 int Delta a |u|^4 - int a' W_r |u|^2``."""
    g = fr.grid
    r = g.r
    ur = _radial_derivative(g, u)
    W_r = fr.rVr / r
    integrand = (
        2.0 * wgt.a2 * np.abs(ur) ** 2
        - 0.5 * wgt.bilaplacian(r) * np.abs(u) ** 2
        - 0.5 * wgt.laplacian(r) * np.abs(u) ** 4
        - wgt.a1 * W_r * np.abs(u) ** 2
    )
    return float(np.dot(g.weights, integrand))


def _K2_local(fr: Frame, f: NDArray) -> float:
    """``2 H0 - 3 G - <x.grad W>`` with the derivative in the same form as the monitors."""
    g = fr.grid
    fr_ = _radial_derivative(g, f)
    return (
        float(np.dot(g.weights, np.abs(fr_) ** 2))
        - 3.0 * quartic(g, f)
        - weighted(g, fr.rVr, f)
    )


def virial_blowup_monitor(fr: Frame, u: NDArray, m: float) -> tuple[float, float]:
    """``V_m = <m phi_m u | i u_r>`` and its rate assembled term by term."""
    g = fr.grid
    r = g.r
    s = r / m
    p, p1, p2, p3 = phi_profile(s)
    ur = _radial_derivative(g, u)
    Vm = virial_value(g, u, m * p)
    f0 = 1.0 - p1
    # f1 = -s^2 Delta_s (phi'/2 + phi/s), f2 = 3/2 - (phi'/2 + phi/s)
    h0 = 0.5 * p1 + p / s
    h1 = 0.5 * p2 + p1 / s - p / s**2
    h2 = 0.5 * p3 + p2 / s - 2.0 * p1 / s**2 + 2.0 * p / s**3
    f1 = -(s**2) * (h2 + 2.0 * h1 / s)
    f2 = 1.5 - h0
    # potential correction: int (r - m phi_m) W_r |u|^2 = int (1 - phi(s)/s) (r W_r) |u|^2
    pot_coef = 1.0 - p / s
    w = g.weights
    rate = (
        2.0 * _K2_local(fr, u)
        - float(np.dot(w, 2.0 * f0 * np.abs(ur) ** 2))
        + float(np.dot(w, f1 * np.abs(u / r) ** 2))
        + float(np.dot(w, f2 * np.abs(u) ** 4))
        + float(np.dot(w, pot_coef * fr.rVr * np.abs(u) ** 2))
    )
    return Vm, rate


def virial_scattering_monitor(fr: Frame, u: NDArray, m: float) -> tuple[float, float]:
    """``V_m = <psi_m u | i S_2' u>`` and its rate assembled term by term."""
    g = fr.grid
    r = g.r
    s = r / m
    psi = psi_profile(s)
    Vm = virial_value(g, u, r * psi)
    f3 = (1.0 + s) ** -4
    f4 = (1.0 + s) ** -4 * s * (s**2 + 3.5 * s + 4.0)
    pu = psi * u
    w = g.weights
    rate = (
        2.0 * _K2_local(fr, pu)
        + float(np.dot(w, f3 * np.abs(u / m) ** 2))
        - float(np.dot(w, f4 * np.abs(u) ** 4))
        - float(np.dot(w, r * fr.rVr * np.abs(pu) ** 2)) / m
    )
    return Vm, rate


# -- trajectories and verdicts -------------------------------------------------

VERDICTS = ("ScatterPhi", "BlowUp", "TrappedPsi", "Undetermined")
SERIES = ("t", "M", "A_om", "L4", "grad", "d0", "vnorm_sq", "b_plus", "b_minus",
          "zeta_norm", "K2_om", "V_m")


@dataclass
class Classification:
    forward: str = "Undetermined"
    backward: str = "Undetermined"
    evidence: dict = field(default_factory=dict)

    def as_tuple(self) -> tuple[str, str]:
        return self.forward, self.backward


@dataclass
class TrajectoryRecord:
    """Sampled diagnostics of one run; ``times`` are signed (negative for backward runs)."""

    series: dict
    snapshots: list = field(default_factory=list)
    verdict: str = "Undetermined"
    evidence: dict = field(default_factory=dict)
    direction: str = "forward"

    @property
    def times(self) -> NDArray:
        return np.asarray(self.series["t"])

    def column(self, name) -> NDArray:
        return np.asarray(self.series[name], dtype=float)

    def distance(self, delta_E: float, tau: float) -> NDArray:
        from .modulation import distance_series

        t = np.abs(self.times)
        return distance_series(t, self.column("d0"), self.column("vnorm_sq"), delta_E, tau)

    def to_csv(self, path) -> None:
        cols = list(SERIES)
        data = np.column_stack([self.column(c) for c in cols])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.12e")


class Monitor:
    """Diagnostics of a rescaled-frame field relative to ``Q_om``."""

    def __init__(self, sol, pencil, cfg, virial_radius: float = 5.0):
        self.sol, self.pencil, self.cfg = sol, pencil, cfg
        self.g = sol.grid
        self.fr = sol.frame()
        self.m = virial_radius
        self.L4Q = self.g.l4(sol.q)
        self.gradQ = float(np.sqrt(self.g.grad_sq(sol.q)))

    def sample(self, t: float, u: NDArray) -> dict:
        from .linearization import energy_norm_sq, project
        from .modulation import dist0, orthogonal_phase

        g, fr = self.g, self.fr
        row = {
            "t": t,
            "M": mass(g, u),
            "A_om": evaluate_frame(fr, u).E + mass(g, u),
            "L4": g.l4(u),
            "grad": float(np.sqrt(g.grad_sq(u))),
            "d0": dist0(u, self.sol),
            "K2_om": virial(fr, u),
            "V_m": virial_value(g, u, self.m * phi_profile(g.r / self.m)[0]),
        }
        nan = float("nan")
        row.update(vnorm_sq=nan, b_plus=nan, b_minus=nan, zeta_norm=nan)
        if row["d0"] < self.cfg.delta_D * self.cfg.C_equiv:
            _, v = orthogonal_phase(u, self.sol)
            p = project(v, self.pencil)
            row.update(
                vnorm_sq=energy_norm_sq(v, self.pencil, strict=False),
                b_plus=p.lam_plus,
                b_minus=p.lam_minus,
                zeta_norm=float(np.sqrt(max(self.pencil.quad(p.zeta), 0.0))),
            )
        return row


def run_trajectory(u0: NDArray, sol, pencil, cfg=None, horizon: float = 20.0, direction: str = "forward",
                   dt: float = 1e-3, sample_dt: float = 0.01, snapshot_dt: float | None = None,
                   detect: bool = True, stop=None, sponge_width: float | None = None,
                   scheme: str = "relaxation", virial_radius: float = 5.0) -> TrajectoryRecord:
    """Evolve ``u0`` in the rescaled frame of ``sol`` and classify the run.

    ``direction='backward'`` evolves ``conj(u0)`` forward and reports the
    diagnostics of ``u(-t) = conj(w(t))``.  ``stop(row)`` may end the run early.
    """
    from .modulation import ThresholdConfig

    cfg = cfg or ThresholdConfig()
    g = sol.grid
    back = direction == "backward"
    if direction not in ("forward", "backward"):
        raise ValueError(direction)
    sponge = None
    width = sponge_width if sponge_width is not None else 0.25 * g.r_max
    if width > 0:
        sponge = sponge_profile(g, width, 2.0)
    ev = Evolver(sol.frame(), dt, scheme, sponge)
    mon = Monitor(sol, pencil, cfg, virial_radius)
    w = np.conj(u0) if back else np.asarray(u0, dtype=complex).copy()
    series = {k: [] for k in SERIES}
    snaps = []
    sign = -1.0 if back else 1.0
    grad_ref = max(float(np.sqrt(g.grad_sq(w))), mon.gradQ)
    trap_w = cfg.trap_window(pencil.alpha)
    verdict, evidence = "Undetermined", {}
    last_out = 0.0  # last sample time outside the tube
    last_big_L4 = 0.0
    # Steps live on a lattice of base steps dt, halved dyadically when the
    # amplitude requires it, so the step sequence does not depend on sample_dt.
    every = max(1, int(round(sample_dt / dt)))
    snap_every = None if snapshot_dt is None else max(1, int(round(snapshot_dt / dt)))
    n_total = int(round(horizon / dt))
    n = 0
    while True:
        t = n * dt
        if n % every == 0 or n == n_total:
            u = np.conj(w) if back else w
            row = mon.sample(sign * t, u)
            for k in SERIES:
                series[k].append(row[k])
            if snap_every is not None and n % snap_every == 0:
                snaps.append((sign * t, u.copy()))
            inside = online_distance(row) < cfg.delta_X
            if not inside:
                last_out = t
            if row["L4"] > cfg.scatter_l4_fraction * mon.L4Q:
                last_big_L4 = t
            if stop is not None and stop(row):
                evidence = {"detector": "stop", "t": sign * t}
                break
            if detect:
                if row["grad"] >= cfg.blowup_grad_factor * grad_ref and row["K2_om"] < 0:
                    verdict = "BlowUp"
                    evidence = {"detector": "gradient", "t": sign * t, "grad_ratio": row["grad"] / grad_ref}
                    break
                if inside and t - last_out >= trap_w - 1e-9:
                    verdict = "TrappedPsi"
                    evidence = {"detector": "tube", "t": sign * t, "window": trap_w}
                    break
                if not inside and t - last_big_L4 >= cfg.scatter_window and row["K2_om"] > 0:
                    verdict = "ScatterPhi"
                    evidence = {"detector": "L4", "t": sign * t, "L4_ratio": row["L4"] / mon.L4Q}
                    break
        if n >= n_total:
            evidence = evidence or {"detector": "horizon", "t": sign * t}
            break
        sub = 1
        while dt / sub > max_dt(w, dt) * (1 + 1e-12):
            sub *= 2
        if dt / sub < 1e-12:
            verdict = "BlowUp"
            evidence = {"detector": "dt_collapse", "t": sign * t}
            break
        try:
            for _ in range(sub):
                w = ev.step(w, dt / sub)
        except StepRejected as exc:
            evidence = {"detector": "step_rejected", "t": sign * t, "reason": str(exc)}
            if detect and mon.sample(sign * t, w)["K2_om"] < 0:
                verdict = "BlowUp"
            break
        n += 1
    return TrajectoryRecord(series, snaps, verdict, evidence, direction)


def online_distance(row: dict) -> float:
    """``||v||_om`` inside the modulation chart, ``d0`` outside it."""
    v = row["vnorm_sq"]
    return float(np.sqrt(max(v, 0.0))) if np.isfinite(v) else row["d0"]


def classify(u0: NDArray, sol, pencil, cfg=None, horizon: float = 20.0, dt: float = 1e-3,
             directions=("forward", "backward"), **kw) -> Classification:
    out = Classification()
    for d in directions:
        rec = run_trajectory(u0, sol, pencil, cfg, horizon, d, dt, **kw)
        setattr(out, d, rec.verdict)
        out.evidence[d] = rec.evidence
    return out


# -- ejection and one-pass probes ----------------------------------------------


class NoEjection(RuntimeError):
    pass


@dataclass
class EjectionResult:
    growth_rate: float
    sigma: int
    t_exit: float
    K2_exit: float
    fit_window: tuple
    record: TrajectoryRecord = field(repr=False, default=None)


def ejection_probe(u0: NDArray, sol, pencil, cfg=None, horizon: float = 10.0, dt: float = 1e-3,
                   sample_dt: float = 0.005, fit_lo: float = 2.0, fit_hi: float = 0.25) -> EjectionResult:
    """Run until ``d`` reaches ``delta_X``; fit ``log d`` against time.

    The fit uses samples with ``fit_lo * d(0) <= d <= fit_hi * delta_X``.
    """
    from .modulation import ThresholdConfig

    cfg = cfg or ThresholdConfig()
    rec = run_trajectory(u0, sol, pencil, cfg, horizon, "forward", dt, sample_dt=sample_dt,
                         detect=False, stop=lambda row: online_distance(row) >= 2.0 * cfg.delta_X)
    t = rec.times
    d = np.sqrt(np.maximum(rec.column("vnorm_sq"), 0.0))
    bad = ~np.isfinite(d)
    d[bad] = rec.column("d0")[bad]
    hit = np.nonzero(d >= cfg.delta_X)[0]
    if len(hit) == 0:
        raise NoEjection(f"distance stayed below delta_X up to t = {t[-1]:.3g}")
    i_x = int(hit[0])
    lo, hi = fit_lo * d[0], fit_hi * cfg.delta_X
    sel = (d >= lo) & (d <= hi) & (np.arange(len(d)) < i_x)
    if sel.sum() < 5:
        raise NoEjection("too few samples in the growth window")
    rate = float(np.polyfit(t[sel], np.log(d[sel]), 1)[0])
    b1 = rec.column("b_plus")[i_x] + rec.column("b_minus")[i_x]
    return EjectionResult(rate, int(np.sign(b1)), float(t[i_x]), float(rec.column("K2_om")[i_x]),
                          (float(t[sel][0]), float(t[sel][-1])), rec)


@dataclass
class OnePassReport:
    intervals: int
    entries: list
    exits: list
    delta: float
    record: TrajectoryRecord = field(repr=False, default=None)

    @property
    def violated(self) -> bool:
        return self.intervals >= 2


def sub_threshold_intervals(t: NDArray, d: NDArray, delta: float):
    """Maximal runs of consecutive samples with ``d < delta``."""
    inside = np.asarray(d) < delta
    entries, exits = [], []
    for k in range(len(inside)):
        if inside[k] and (k == 0 or not inside[k - 1]):
            entries.append(float(t[k]))
        if not inside[k] and k > 0 and inside[k - 1]:
            exits.append(float(t[k]))
    return entries, exits


def one_pass_probe(u0: NDArray, sol, pencil, cfg=None, delta: float | None = None,
                   horizon: float = 6.0, dt: float = 1e-3, sample_dt: float = 0.01) -> OnePassReport:
    """Count sub-``delta`` intervals of the blended distance along the forward run."""
    from .modulation import ThresholdConfig

    cfg = cfg or ThresholdConfig()
    delta = cfg.delta_star if delta is None else delta
    rec = run_trajectory(u0, sol, pencil, cfg, horizon, "forward", dt, sample_dt=sample_dt)
    d = rec.distance(cfg.delta_E, cfg.mollifier_time)
    entries, exits = sub_threshold_intervals(rec.times, d, delta)
    return OnePassReport(len(entries), entries, exits, delta, rec)


def one_pass_samples(sol, pencil, cfg, rng, count: int, delta: float | None = None,
                     max_tries: int = 100000) -> list[NDArray]:
    """Random ``u0 = e^{i theta}(Q + v)`` with ``||v||_om < delta`` and ``A^om(u0) < A^om(Q) + c_X delta^2``.

    ``v`` mixes the unstable pair with a random dispersive part; the energy
    condition is enforced by rejection.
    """
    from .functionals import action
    from .linearization import energy_norm, project, random_radial_fields

    delta = cfg.delta_star if delta is None else delta
    fr = sol.frame()
    AQ = action(fr, sol.q)
    g = sol.grid
    out = []
    for _ in range(max_tries):
        if len(out) == count:
            break
        z = project(random_radial_fields(g, 1, rng)[0], pencil).zeta
        z = z / energy_norm(z, pencil, strict=False)
        c = rng.standard_normal(3)
        v = c[0] * pencil.g_plus + c[1] * pencil.g_minus + rng.uniform(0.0, 2.0) * c[2] * z
        v = v * (rng.uniform(0.2, 0.95) * delta / energy_norm(v, pencil, strict=False))
        u0 = np.exp(1j * rng.uniform(0, 2 * np.pi)) * (sol.q + v)
        if action(fr, u0) < AQ + cfg.c_X * delta**2:
            out.append(u0)
    if len(out) < count:
        raise RuntimeError(f"only {len(out)} of {count} samples met the energy condition")
    return out
