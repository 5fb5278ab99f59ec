"""Scalar functionals of radial fields, in original and rescaled form.

Notation (all integrals over R^3):

    M = 1/2 ||f||_2^2          H0 = 1/2 ||grad f||_2^2     G = 1/4 ||f||_4^4
    <w>(f) = 1/2 <w f|f>        E0 = H0 - G                 E = E0 + <V>
    K2 = 2 H0 - 3 G - <x.grad V>
    A_om = E + om M             K0_om = 2 (A_om - G)

and, with the rescaled potential ``V^om``,

    E^om = E0 + <V^om>          A^om = E^om + M
    K2^om = 2 H0 - 3 G - <x.grad V^om>
    J^om = A^om - K2^om / 2
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .grid import GridError, RadialField, RadialGrid
from .potential import OnGrid, PotentialSpec


@dataclass(frozen=True)
class Frame:
    """A grid together with the potential seen at a given scale.

    ``omega=None`` means the unscaled potential ``V``; ``omega=inf`` means no
    potential at all (the limit problem).
    """

    grid: RadialGrid
    potential: PotentialSpec
    omega: float | None = None

    @cached_property
    def pot(self) -> OnGrid:
        if self.omega is not None and np.isinf(self.omega):
            return PotentialSpec.zero().on_grid(self.grid)
        return self.potential.on_grid(self.grid, self.omega)

    @property
    def V(self) -> NDArray:
        return self.pot.V

    @property
    def rVr(self) -> NDArray:
        return self.pot.rVr

    def __hash__(self):
        return hash((self.grid, id(self.potential), self.omega))


def mass(g: RadialGrid, f: NDArray) -> float:
    return 0.5 * g.l2sq(f)


def kinetic(g: RadialGrid, f: NDArray) -> float:
    return 0.5 * g.grad_sq(f)


def quartic(g: RadialGrid, f: NDArray) -> float:
    return 0.25 * float(np.dot(g.weights, np.abs(f) ** 4))


def weighted(g: RadialGrid, w: NDArray, f: NDArray) -> float:
    """``<w>(f) = 1/2 <w f|f>``."""
    return 0.5 * float(np.dot(g.weights, w * np.abs(f) ** 2))


def energy0(g, f) -> float:
    return kinetic(g, f) - quartic(g, f)


def energy(fr: Frame, f) -> float:
    """``E0 + <V>`` with the frame's potential (this is ``E^om`` in a rescaled frame)."""
    return energy0(fr.grid, f) + weighted(fr.grid, fr.V, f)


def action(fr: Frame, f, omega: float = 1.0) -> float:
    """``E + omega M``; in a rescaled frame with ``omega=1`` this is ``A^om``."""
    return energy(fr, f) + omega * mass(fr.grid, f)


def virial(fr: Frame, f) -> float:
    """``K2 = 2 H0 - 3 G - <x.grad V>`` with the frame's potential."""
    g = fr.grid
    return 2.0 * kinetic(g, f) - 3.0 * quartic(g, f) - weighted(g, fr.rVr, f)


def action_gradient(fr: Frame, f, omega: float = 1.0) -> NDArray:
    """``A'(f) = (-Delta + V + omega) f - |f|^2 f`` (as an L^2 gradient)."""
    g = fr.grid
    return g.apply_op(fr.V + omega, f) - g.clean(np.abs(f) ** 2 * f)


def virial_gradient(fr: Frame, f) -> NDArray:
    """``K2'(f) = -2 Delta f - 3 |f|^2 f - (x.grad V) f``."""
    g = fr.grid
    return 2.0 * g.apply_op(0.0, f) - g.clean(3.0 * np.abs(f) ** 2 * f + fr.rVr * f)


@dataclass
class FunctionalValues:
    M: float
    H0: float
    G: float
    V_quad: float
    E: float
    E0: float
    K2: float
    Aom: float | None = None
    K0om: float | None = None
    E_om: float | None = None
    A_om: float | None = None
    K2_om: float | None = None
    J_om: float | None = None

    def to_json(self) -> dict[str, float]:
        names = {
            "V_quad": "Vquad",
            "E_om": "E^om",
            "A_om": "A^om",
            "K2_om": "K2^om",
            "J_om": "J^om",
        }
        return {names.get(k, k): v for k, v in asdict(self).items() if v is not None}


def evaluate(phi: RadialField, V: PotentialSpec, omega: float | None = None) -> FunctionalValues:
    """All functionals of ``phi``; the rescaled family too when ``omega`` is given."""
    return evaluate_frame(Frame(phi.grid, V, None), phi.values, omega)


def evaluate_frame(fr: Frame, f: NDArray, omega: float | None = None) -> FunctionalValues:
    g = fr.grid
    if len(f) != g.n_points:
        raise GridError("field and potential live on different grids")
    M, H0, G = mass(g, f), kinetic(g, f), quartic(g, f)
    Vq = weighted(g, fr.V, f)
    E0 = H0 - G
    vals = FunctionalValues(
        M=M, H0=H0, G=G, V_quad=Vq, E=E0 + Vq, E0=E0, K2=2 * H0 - 3 * G - weighted(g, fr.rVr, f)
    )
    if omega is not None:
        vals.Aom = vals.E + omega * M
        vals.K0om = 2.0 * (vals.Aom - G)
        fo = Frame(g, fr.potential, omega)
        Eo = E0 + weighted(g, fo.V, f)
        vals.E_om = Eo
        vals.A_om = Eo + M
        vals.K2_om = virial(fo, f)
        vals.J_om = vals.A_om - 0.5 * vals.K2_om
    return vals


def scaling_derivative(phi: RadialField, p: float) -> RadialField:
    """``S_p' phi = (x . grad + 3/p) phi``; ``p = inf`` gives ``x . grad phi``."""
    g = phi.grid
    out = g.r_dr(phi.values) + (0.0 if np.isinf(p) else 3.0 / p) * phi.values
    return RadialField(g, out)


def dilate(g: RadialGrid, f: NDArray, lam: float) -> NDArray:
    """``lam^{3/2} f(lam x)``, the L^2-preserving dilation, by spline sampling."""
    out = lam**1.5 * g.sample(f, lam * g.r)
    out[-1] = 0.0
    return out


def virial_by_dilation(fr: Frame, f: NDArray, step: float = 1e-4) -> float:
    """``d/dlam E(lam^{3/2} f(lam x))`` at ``lam = 1`` by centered differences."""
    ep = energy(fr, dilate(fr.grid, f, 1.0 + step))
    em = energy(fr, dilate(fr.grid, f, 1.0 - step))
    return (ep - em) / (2.0 * step)
