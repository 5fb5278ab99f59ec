"""Radial discretization of R^3.

Radial fields are sampled at the nodes ``r_i = (i+1) h``, ``i = 0..n-1``,
``h = r_max / n``.  The node at ``r = 0`` is excluded and all second-order
operators act on the reduced unknown ``w = r f`` with ``w(0) = 0``.  The last
node sits at ``r_max`` and carries the Dirichlet condition ``w(r_max) = 0``, so
only the first ``n - 1`` samples are free.

With the substitution ``w = r f`` the radial Laplacian becomes ``w''/r`` and
every operator of the form ``-Delta + d(r)`` turns into a symmetric
tridiagonal matrix acting on ``w``.  The quadrature weight ``4 pi h r_i^2``
makes the discrete inner product and the discrete Laplacian exactly
symmetric.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

MIN_POINTS = 8


class GridError(ValueError):
    """Raised for malformed grids or mismatched fields."""


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid with the reduced-variable finite-difference calculus."""

    n_points: int = 4096
    r_max: float = 60.0

    def __post_init__(self):
        if self.n_points < MIN_POINTS:
            raise GridError(f"need at least {MIN_POINTS} points, got {self.n_points}")
        if not self.r_max > 0:
            raise GridError("r_max must be positive")

    @cached_property
    def h(self) -> float:
        return self.r_max / self.n_points

    @cached_property
    def r(self) -> NDArray[np.float64]:
        return self.h * np.arange(1, self.n_points + 1, dtype=float)

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        w = 4.0 * np.pi * self.h * self.r**2
        w[-1] *= 0.5
        return w

    @property
    def m(self) -> int:
        """Number of free unknowns."""
        return self.n_points - 1

    def spec(self) -> dict:
        return {"n_points": self.n_points, "r_max": self.r_max}

    # -- quadrature -----------------------------------------------------------

    def integrate(self, f: NDArray) -> float:
        """``int_{R^3} f dx`` for a radial integrand."""
        return float(np.dot(self.weights, f).real)

    def inner(self, f: NDArray, g: NDArray) -> float:
        """Real inner product ``<f|g> = Re int f conj(g) dx``."""
        return float(np.dot(self.weights, (f * np.conj(g)).real))

    def cinner(self, f: NDArray, g: NDArray) -> complex:
        """Complex inner product ``(f|g) = int f conj(g) dx``."""
        return complex(np.dot(self.weights, f * np.conj(g)))

    def l2sq(self, f: NDArray) -> float:
        return float(np.dot(self.weights, np.abs(f) ** 2))

    def l2(self, f: NDArray) -> float:
        return float(np.sqrt(self.l2sq(f)))

    def l4(self, f: NDArray) -> float:
        return float(np.dot(self.weights, np.abs(f) ** 4)) ** 0.25

    def grad_sq(self, f: NDArray) -> float:
        """``||grad f||_2^2`` in the form consistent with :meth:`laplacian`.

        Equals ``<-Delta f|f>`` exactly: the edge sum of squared differences of
        ``w = r f`` including the edges to ``w(0) = 0`` and ``w(r_max) = 0``.
        """
        w = self.r[:-1] * f[:-1]
        dw = np.diff(w, prepend=0.0, append=0.0)
        return float(4.0 * np.pi / self.h * np.sum(np.abs(dw) ** 2))

    def h1sq(self, f: NDArray) -> float:
        return self.grad_sq(f) + self.l2sq(f)

    def h1(self, f: NDArray) -> float:
        return float(np.sqrt(self.h1sq(f)))

    def h1_inner(self, f: NDArray, g: NDArray) -> float:
        """Real ``H^1`` inner product ``<grad f|grad g> + <f|g>``."""
        wf = np.diff(self.r[:-1] * f[:-1], prepend=0.0, append=0.0)
        wg = np.diff(self.r[:-1] * g[:-1], prepend=0.0, append=0.0)
        return float(4.0 * np.pi / self.h * np.sum((wf * np.conj(wg)).real)) + self.inner(f, g)

    def h1_cinner(self, f: NDArray, g: NDArray) -> complex:
        """Complex ``H^1`` inner product ``(grad f|grad g) + (f|g)``."""
        wf = np.diff(self.r[:-1] * f[:-1], prepend=0.0, append=0.0)
        wg = np.diff(self.r[:-1] * g[:-1], prepend=0.0, append=0.0)
        return complex(4.0 * np.pi / self.h * np.sum(wf * np.conj(wg))) + self.cinner(f, g)

    def h1om_sq(self, f: NDArray, omega: float) -> float:
        """``||f||_{H^1_omega}^2 = int omega^{-1/2}|grad f|^2 + omega^{1/2}|f|^2``."""
        return omega**-0.5 * self.grad_sq(f) + omega**0.5 * self.l2sq(f)

    def hdot_half_proxy(self, f: NDArray) -> float:
        """Interpolation proxy ``(||f||_2 ||grad f||_2)^{1/2}`` for ``||f||_{H^{1/2}}``."""
        return float(np.sqrt(self.l2(f) * np.sqrt(self.grad_sq(f))))

    # -- differential operators ----------------------------------------------

    def laplacian(self, f: NDArray) -> NDArray:
        """``Delta f`` via ``(w_{i+1} - 2 w_i + w_{i-1}) / (h^2 r_i)``."""
        w = self.r * f
        w[-1] = 0.0
        padded = np.concatenate(([0.0], w, [0.0]))
        out = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / (self.h**2 * self.r)
        out[-1] = 0.0
        return out

    def r_dr(self, f: NDArray) -> NDArray:
        """``r d/dr f = w' - f`` with centered differences on ``w``.

        Odd reflection of ``w`` is used at both ends, matching ``w(0) = 0`` and
        the Dirichlet node at ``r_max``.
        """
        w = self.r * f
        w[-1] = 0.0
        padded = np.concatenate(([0.0], w, [-w[-2]]))
        dw = (padded[2:] - padded[:-2]) / (2.0 * self.h)
        out = dw - f
        out[-1] = dw[-1]
        return out

    def dr(self, f: NDArray) -> NDArray:
        """``d/dr f``."""
        return self.r_dr(f) / self.r

    # -- tridiagonal algebra in the reduced variable -------------------------

    def tridiag(self, d: NDArray | float, scale: complex = 1.0, shift: complex = 0.0):
        """Bands of ``scale * (-Delta + d) + shift`` acting on ``w`` (free nodes only).

        Returns ``(lower, diag, upper)`` with ``len(diag) = n - 1``.
        """
        m = self.m
        d = np.broadcast_to(np.asarray(d), (self.n_points,))[:m]
        diag = scale * (2.0 / self.h**2 + d) + shift
        off = np.full(m - 1, -scale / self.h**2, dtype=np.result_type(scale, float))
        return off, diag, off.copy()

    def apply_op(self, d: NDArray | float, f: NDArray) -> NDArray:
        """``(-Delta + d) f``."""
        d = np.broadcast_to(np.asarray(d), (self.n_points,))
        out = -self.laplacian(f) + d * f
        out[-1] = 0.0
        return out

    def solve_op(self, d: NDArray | float, rhs: NDArray) -> NDArray:
        """Solve ``(-Delta + d) f = rhs`` with the Dirichlet conditions."""
        lower, diag, upper = self.tridiag(d)
        ab = np.zeros((3, self.m), dtype=np.result_type(diag, rhs))
        ab[0, 1:] = upper
        ab[1] = diag
        ab[2, :-1] = lower
        w = solve_banded((1, 1), ab, self.r[:-1] * rhs[:-1])
        out = np.zeros(self.n_points, dtype=w.dtype)
        out[:-1] = w / self.r[:-1]
        return out

    def zeros(self, dtype=float) -> NDArray:
        return np.zeros(self.n_points, dtype=dtype)

    def clean(self, f: NDArray) -> NDArray:
        """Copy of ``f`` with the Dirichlet node zeroed."""
        out = np.array(f, copy=True)
        out[-1] = 0.0
        return out

    def check_same(self, other: "RadialGrid"):
        if other != self:
            raise GridError("fields live on different grids")

    # -- interpolation --------------------------------------------------------

    def sample(self, f: NDArray, radii: NDArray) -> NDArray:
        """Cubic interpolation of ``f`` at arbitrary radii, zero beyond ``r_max``.

        The even extension ``f(-r) = f(r)`` is used so the spline is accurate at
        the origin.
        """
        radii = np.abs(np.asarray(radii, dtype=float))
        k = min(16, self.n_points - 1)
        nodes = np.concatenate((-self.r[k - 1 :: -1], self.r))
        vals = np.concatenate((f[k - 1 :: -1], f))
        out = np.zeros(radii.shape, dtype=np.result_type(f, float))
        inside = radii <= self.r_max
        for part in (np.real, np.imag) if np.iscomplexobj(f) else (np.real,):
            spline = CubicSpline(nodes, part(vals))
            piece = spline(radii[inside])
            if part is np.imag:
                out[inside] += 1j * piece
            else:
                out[inside] += piece
        return out


@dataclass
class RadialField:
    """A radially symmetric complex field sampled on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: NDArray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n_points,):
            raise GridError(
                f"field has {self.values.shape} samples, grid has {self.grid.n_points}"
            )

    def norms(self) -> dict[str, float]:
        g = self.grid
        return {
            "L2": g.l2(self.values),
            "L4": g.l4(self.values),
            "H1": g.h1(self.values),
            "Hhalf_proxy": g.hdot_half_proxy(self.values),
        }

    def to_csv(self, path) -> None:
        v = np.asarray(self.values, dtype=complex)
        data = np.column_stack((self.grid.r, v.real, v.imag))
        np.savetxt(path, data, delimiter=",", header="r,re,im", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, grid: RadialGrid | None = None) -> "RadialField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        r = data[:, 0]
        if grid is None:
            grid = RadialGrid(len(r), float(r[-1]))
        if len(r) != grid.n_points or not np.allclose(r, grid.r, rtol=1e-12, atol=1e-12):
            raise GridError("CSV radii do not match the grid")
        return cls(grid, data[:, 1] + 1j * data[:, 2])

    def to_bytes(self) -> bytes:
        """Little-endian dump: ``<u8 n><f8 r_max>`` then interleaved ``re, im`` float64."""
        v = np.asarray(self.values, dtype=np.complex128)
        header = struct.pack("<Qd", self.grid.n_points, self.grid.r_max)
        body = np.empty(2 * len(v), dtype="<f8")
        body[0::2] = v.real
        body[1::2] = v.imag
        return header + body.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RadialField":
        n, r_max = struct.unpack("<Qd", blob[:16])
        body = np.frombuffer(blob[16:], dtype="<f8")
        if len(body) != 2 * n:
            raise GridError("truncated field dump")
        return cls(RadialGrid(int(n), float(r_max)), body[0::2] + 1j * body[1::2])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "RadialField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def laplacian3d_radial(f: RadialField) -> RadialField:
    return RadialField(f.grid, f.grid.laplacian(f.values))


def rescale_values(
    grid: RadialGrid,
    f: NDArray,
    omega: float,
    direction: Literal["forward", "inverse"] = "forward",
) -> NDArray:
    """``S_omega f(x) = omega^{-1/2} f(omega^{-1/2} x)`` or its inverse."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    if direction == "forward":
        s = omega**-0.5
    elif direction == "inverse":
        s = omega**0.5
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if omega == 1.0:
        return np.array(f, copy=True)
    out = s * grid.sample(f, s * grid.r)
    out[-1] = 0.0
    return out


def rescale(
    f: RadialField, omega: float, direction: Literal["forward", "inverse"] = "forward"
) -> RadialField:
    return RadialField(f.grid, rescale_values(f.grid, f.values, omega, direction))
