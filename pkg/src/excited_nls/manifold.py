"""Bisection for the center-stable graph ``b_+ = G_om(b_-, zeta)``.

Initial data ``Q_om + b_+ g_+ + b_- g_- + zeta`` (phase fixed to zero) are
evolved until they leave the tube ``d < delta_X``.  The sign of ``b_1`` at the
exit splits the ``b_+`` axis into two sides; the graph sits at the interface.
Backward trapping uses the conjugate data, since ``conj g_+ = g_-``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eigh_tridiagonal

from .evolve import classify, online_distance, run_trajectory
from .grid import RadialGrid
from .linearization import LinearizedPencil, energy_norm, project
from .modulation import ThresholdConfig
from .solitons import ExcitedSoliton

log = logging.getLogger(__name__)


class BracketFailure(RuntimeError):
    pass


class HorizonExhausted(RuntimeError):
    def __init__(self, msg, lo=None, hi=None):
        super().__init__(msg)
        self.lo, self.hi = lo, hi


class IterationDiverged(RuntimeError):
    pass


# -- the dispersive subspace ---------------------------------------------------


def project_Z(v: NDArray, sol: ExcitedSoliton, pencil: LinearizedPencil) -> NDArray:
    """Component of ``v`` with ``<i z|g_pm> = 0`` and ``<i z|Q'> = 0``."""
    g = sol.grid
    z = project(np.asarray(v, dtype=complex), pencil).zeta
    c = g.inner(np.imag(z), sol.qp) / g.inner(sol.q, sol.qp)
    return z - 1j * c * sol.q


def zeta_basis(sol: ExcitedSoliton, pencil: LinearizedPencil, dim: int = 4,
               r_cut: float = 10.0) -> list[NDArray]:
    """Low modes of ``L_-`` (real) and ``L_+`` (imaginary) on ``r < r_cut``, moved into Z.

    Each vector has unit ``||.||_om`` norm.
    """
    g = sol.grid
    n_c = int(np.searchsorted(g.r, r_cut))
    sub = RadialGrid(n_c + 1, float(g.r[n_c]))
    out = []
    n_real = (dim + 1) // 2
    for d, count, imag in ((pencil.d_minus, n_real, False), (pencil.d_plus, dim - n_real, True)):
        _, diag, off = sub.tridiag(d[: n_c + 1])
        # the lowest mode is the ground direction (Q for L_-, the negative one for L_+)
        _, vec = eigh_tridiagonal(diag, off[: len(diag) - 1], select="i", select_range=(1, count))
        for k in range(count):
            f = g.zeros()
            f[:n_c] = vec[:, k] / sub.r[:-1]
            f = f.astype(complex) * (1j if imag else 1.0)
            z = project_Z(f, sol, pencil)
            out.append(z / energy_norm(z, pencil, strict=False))
    return out


def initial_datum(sol: ExcitedSoliton, pencil: LinearizedPencil, b_plus: float, b_minus: float,
                  zeta: NDArray | None = None) -> NDArray:
    u = sol.q + b_plus * pencil.g_plus + b_minus * pencil.g_minus
    if zeta is not None:
        u = u + zeta
    return u.astype(complex)


# -- bisection -----------------------------------------------------------------


@dataclass
class Trial:
    b_plus: float
    outcome: int  # +1 / -1 ejection sign of b_1, 0 confined
    t_exit: float


@dataclass
class ManifoldSample:
    b_minus: float
    zeta_coeffs: NDArray | None
    G_value: float
    bracket: tuple[float, float]
    trials: list = field(default_factory=list, repr=False)
    trapped_hit: bool = False

    @property
    def bracket_width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def witnesses(self) -> dict:
        """Closest trials on each side and the confined trial, if any."""
        out = {}
        for key, sign in (("ejected_plus", 1), ("ejected_minus", -1), ("trapped", 0)):
            hits = [t for t in self.trials if t.outcome == sign]
            if hits:
                best = min(hits, key=lambda t: abs(t.b_plus - self.G_value))
                out[key] = {"b_plus": best.b_plus, "t_exit": best.t_exit}
        return out

    def to_json(self) -> dict:
        return {
            "b_minus": self.b_minus,
            "zeta_coeffs": None if self.zeta_coeffs is None else np.asarray(self.zeta_coeffs).tolist(),
            "G_value": self.G_value,
            "bracket": list(self.bracket),
            "bracket_width": self.bracket_width,
            "trapped_hit": self.trapped_hit,
            "trials": len(self.trials),
            "witnesses": self.witnesses(),
        }


def eject_sign(u0: NDArray, sol, pencil, cfg: ThresholdConfig, horizon: float,
               dt: float = 1e-3, sample_dt: float = 0.01, certify: bool = True) -> Trial:
    """Sign of ``b_1`` when ``d`` first reaches ``delta_X``; 0 if confined for the trapping window.

    The run uses the same step lattice, sampling and sponge as ``classify``, so
    a confined trial is also certified trapped there.  With ``certify=False``
    confinement is not accepted and the run goes on to the horizon.
    """
    window = np.ceil(cfg.trap_window(pencil.alpha) / sample_dt - 1e-9) * sample_dt
    if not certify:
        window = np.inf
    rec = run_trajectory(
        u0, sol, pencil, cfg, min(horizon, window), "forward", dt, sample_dt=sample_dt,
        detect=False, stop=lambda row: online_distance(row) >= cfg.delta_X,
    )
    ev = rec.evidence
    if ev.get("detector") == "stop":
        b1 = rec.series["b_plus"][-1] + rec.series["b_minus"][-1]
        if not np.isfinite(b1):
            raise HorizonExhausted("left the chart before the sign could be read")
        return Trial(0.0, 1 if b1 > 0 else -1, float(rec.times[-1]))
    if ev.get("detector") == "horizon" and window <= horizon:
        return Trial(0.0, 0, float(rec.times[-1]))
    raise HorizonExhausted(f"no ejection and no confinement certificate ({ev})")


def bisect_G(b_minus: float, zeta: NDArray | None, sol: ExcitedSoliton, pencil: LinearizedPencil,
             cfg: ThresholdConfig | None = None, tol: float = 1e-10, delta_plus: float = 0.02,
             horizon: float = 20.0, dt: float = 1e-3, zeta_coeffs=None) -> ManifoldSample:
    """Interface between the two ejection sides on ``b_+ in (-delta_+, delta_+)``."""
    cfg = cfg or ThresholdConfig()
    if zeta is not None:
        zeta = project_Z(zeta, sol, pencil)

    def trial(bp, certify=True):
        t = eject_sign(initial_datum(sol, pencil, bp, b_minus, zeta), sol, pencil, cfg, horizon, dt,
                       certify=certify)
        t.b_plus = bp
        trials.append(t)
        return t

    trials: list[Trial] = []
    lo, hi = -delta_plus, delta_plus
    tl, th = trial(lo), trial(hi)
    if tl.outcome != -1 or th.outcome != 1:
        raise BracketFailure(f"endpoint outcomes ({tl.outcome}, {th.outcome}); widen delta_+")
    width = hi - lo
    certify, trapped = True, False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        t = trial(mid, certify)
        if t.outcome == 0:
            # Confinement over the trapping window only places mid within about
            # delta_X e^{-alpha T} of the graph, which can exceed tol; from here
            # on every trial runs until it ejects.
            trapped, certify = True, False
            try:
                t = trial(mid, certify)
            except HorizonExhausted as exc:
                raise HorizonExhausted(f"{exc}; graph inside the confined bracket", lo, hi) from exc
        if t.outcome > 0:
            hi = mid
        else:
            lo = mid
        new_width = hi - lo
        assert lo < hi and abs(new_width - 0.5 * width) <= 1e-12 * max(width, 1e-300) + 1e-18
        width = new_width
    return ManifoldSample(b_minus, zeta_coeffs, 0.5 * (lo + hi), (lo, hi), trials, trapped_hit=trapped)


def intersection_point(zeta: NDArray | None, sol, pencil, cfg=None, tol: float = 1e-12,
                       max_iter: int = 8, **kw) -> tuple[float, float]:
    """Fixed point of ``b_+ = G(b_-, zeta)``, ``b_- = G(b_+, conj zeta)``."""
    cfg = cfg or ThresholdConfig()
    zc = None if zeta is None else np.conj(zeta)
    bp = bm = 0.0
    hist = []
    for _ in range(max_iter):
        bp_new = bisect_G(bm, zeta, sol, pencil, cfg, tol=tol, **kw).G_value
        bm_new = bisect_G(bp_new, zc, sol, pencil, cfg, tol=tol, **kw).G_value
        step = max(abs(bp_new - bp), abs(bm_new - bm))
        hist.append(step)
        bp, bm = bp_new, bm_new
        if step <= 4 * tol:
            return bp, bm
        if len(hist) > 2 and hist[-1] > hist[-2] > hist[-3]:
            raise IterationDiverged(f"increments grow: {hist}")
    if hist[-1] > 1e3 * tol:
        raise IterationDiverged(f"no convergence: {hist}")
    return bp, bm


# -- nine-class explorer ------------------------------------------------------


@dataclass
class CatalogEntry:
    offsets: tuple[int, int]
    b_plus: float
    b_minus: float
    forward: str
    backward: str
    evidence: dict

    def to_json(self) -> dict:
        return {
            "offsets": list(self.offsets),
            "b_plus": self.b_plus,
            "b_minus": self.b_minus,
            "forward": self.forward,
            "backward": self.backward,
            "evidence": self.evidence,
        }


PREDICTED = {1: "ScatterPhi", -1: "BlowUp", 0: "TrappedPsi"}


def zeta_from_coeffs(coeffs, basis: list[NDArray]) -> NDArray | None:
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.any(coeffs):
        return None
    return sum(c * z for c, z in zip(coeffs, basis))


def nine_class_explorer(sol, pencil, cfg=None, zeta: NDArray | None = None, eta: float = 2e-3,
                        horizon: float = 20.0, tol: float = 1e-12, dt: float = 1e-3, **kw) -> dict:
    """Witnesses for the nine (forward, backward) classes around an intersection point.

    Offsets ``(s_+, s_-)`` in ``{-1, 0, 1}^2`` shift ``b_+`` and ``b_-`` by
    ``s eta``.  On a one-sided slice the unshifted coordinate is recomputed
    on its graph so that the trapped direction stays on the manifold.
    """
    cfg = cfg or ThresholdConfig()
    zc = None if zeta is None else np.conj(zeta)
    bp0, bm0 = intersection_point(zeta, sol, pencil, cfg, tol=tol, horizon=horizon, dt=dt, **kw)
    entries = []
    for sp in (1, 0, -1):
        for sm in (1, 0, -1):
            bp, bm = bp0 + sp * eta, bm0 + sm * eta
            if sp == 0 and sm != 0:
                bp = bisect_G(bm, zeta, sol, pencil, cfg, tol=tol, horizon=horizon, dt=dt, **kw).G_value
            if sm == 0 and sp != 0:
                bm = bisect_G(bp, zc, sol, pencil, cfg, tol=tol, horizon=horizon, dt=dt, **kw).G_value
            u0 = initial_datum(sol, pencil, bp, bm, zeta)
            c = classify(u0, sol, pencil, cfg, horizon=horizon, dt=dt)
            entries.append(CatalogEntry((sp, sm), bp, bm, c.forward, c.backward, c.evidence))
    classes = {}
    for e in entries:
        key = f"{e.forward}/{e.backward}"
        classes.setdefault(key, []).append(e.to_json())
    mismatched = [e.to_json() for e in entries
                  if e.forward not in (PREDICTED[e.offsets[0]], "Undetermined")
                  or e.backward not in (PREDICTED[e.offsets[1]], "Undetermined")]
    definite = {f"{e.forward}/{e.backward}" for e in entries
                if "Undetermined" not in (e.forward, e.backward)}
    return {
        "omega": sol.omega,
        "intersection": {"b_plus": bp0, "b_minus": bm0},
        "eta": eta,
        "entries": [e.to_json() for e in entries],
        "classes": classes,
        "definite_classes": sorted(definite),
        "n_definite": len(definite),
        "mismatched": mismatched,
    }
