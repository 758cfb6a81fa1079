"""Velocity fields and backward characteristic tracing.

Characteristic feet solve the final-value problem dx/dt = a(x, t) with the
position prescribed at the later time; the classical RK4 scheme with a fixed
number of substeps integrates the trajectory.  All tracing routines are
vectorized over points, and feet are returned unwrapped (periodic wrapping is
the remap geometry's job).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Mesh1D, Mesh2D

# Gauss-Lobatto interpolation points on the reference cell, by degree.
# For k = 0 the single point is the cell midpoint.
GL_POINTS = {0: (0.0,), 1: (-0.5, 0.5), 2: (-0.5, 0.0, 0.5)}

# Reference positions of the traced cell points in 2D: counterclockwise
# corners first, then edge midpoints (bottom, right, top, left), then center.
CELL_POINTS_4 = ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5))
CELL_POINTS_9 = CELL_POINTS_4 + ((0.0, -0.5), (0.5, 0.0), (0.0, 0.5), (-0.5, 0.0), (0.0, 0.0))


@dataclass(frozen=True)
class VelocityField:
    """Analytic advection field with a per-direction speed bound.

    ``fn`` maps (x, t) -> a for 1D fields and (x, y, t) -> (a, b) for 2D
    fields, operating on numpy arrays.  ``max_speed`` bounds |a| (and |b|)
    over the domain and time window and feeds the CFL -> dt conversion;
    ``time_dependent`` marks fields whose geometry cannot be reused across
    time intervals of equal length.
    """

    ndim: int
    fn: Callable
    max_speed: tuple[float, ...]
    time_dependent: bool = False
    name: str = "custom"

    def __call__(self, *args):
        return self.fn(*args)


def constant_1d(speed: float = 1.0) -> VelocityField:
    return VelocityField(1, lambda x, t: np.full_like(np.asarray(x, float), speed),
                         (abs(speed),), False, f"constant({speed})")


def sine_1d() -> VelocityField:
    return VelocityField(1, lambda x, t: np.sin(x), (1.0,), False, "sin(x)")


def zero_field(ndim: int) -> VelocityField:
    if ndim == 1:
        return VelocityField(1, lambda x, t: np.zeros_like(np.asarray(x, float)), (0.0,), False, "zero")
    return VelocityField(
        2,
        lambda x, y, t: (np.zeros_like(np.asarray(x, float)), np.zeros_like(np.asarray(y, float))),
        (0.0, 0.0), False, "zero",
    )


def constant_2d(ax: float = 1.0, ay: float = 1.0) -> VelocityField:
    def fn(x, y, t):
        x = np.asarray(x, float)
        return np.full_like(x, ax), np.full_like(x, ay)

    return VelocityField(2, fn, (abs(ax), abs(ay)), False, f"constant({ax},{ay})")


def rigid_rotation(xmax: float = 2.0 * math.pi, ymax: float = 2.0 * math.pi) -> VelocityField:
    """(a, b) = (-y, x); speed bounds follow from the domain extents."""
    return VelocityField(2, lambda x, y, t: (-y, x), (ymax, xmax), False, "rigid rotation")


def swirling(T: float) -> VelocityField:
    """Time-reversing swirling deformation on [-pi, pi]^2."""

    def fn(x, y, t):
        f = math.cos(math.pi * t / T) * math.pi
        a = -np.cos(x / 2.0) ** 2 * np.sin(y) * f
        b = np.sin(x) * np.cos(y / 2.0) ** 2 * f
        return a, b

    return VelocityField(2, fn, (math.pi, math.pi), True, f"swirling(T={T})")


def default_substeps(cfl: float) -> int:
    """RK4 substep count keeping the tracing error below the DIRK4 error."""
    return max(4, int(math.ceil(4.0 * max(cfl, 0.0))))


def substeps_for(mesh, v: VelocityField, t_end: float, t_start: float) -> int:
    """Substep policy expressed through the interval's effective CFL number."""
    span = abs(t_end - t_start)
    if isinstance(mesh, Mesh1D):
        cfl = span * v.max_speed[0] / mesh.dx
    else:
        cfl = span * max(v.max_speed[0] / mesh.dx, v.max_speed[1] / mesh.dy)
    return default_substeps(cfl)


def trace_back(points, t_end: float, t_start: float, v: VelocityField, substeps: int):
    """Solve the characteristic ODE from (points, t_end) to t_start with RK4.

    1D fields take and return an array; 2D fields take and return a pair of
    arrays.  ``t_start`` may exceed ``t_end`` (the trajectory is then followed
    forward), which intermediate Runge-Kutta stages require.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = (t_start - t_end) / substeps
    if v.ndim == 1:
        x = np.array(points, dtype=float, copy=True)
        t = t_end
        for _ in range(substeps):
            k1 = v(x, t)
            k2 = v(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = v(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = v(x + h * k3, t + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        return x
    x = np.array(points[0], dtype=float, copy=True)
    y = np.array(points[1], dtype=float, copy=True)
    t = t_end
    for _ in range(substeps):
        k1x, k1y = v(x, y, t)
        k2x, k2y = v(x + 0.5 * h * k1x, y + 0.5 * h * k1y, t + 0.5 * h)
        k3x, k3y = v(x + 0.5 * h * k2x, y + 0.5 * h * k2y, t + 0.5 * h)
        k4x, k4y = v(x + h * k3x, y + h * k3y, t + h)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        t += h
    return x, y


@dataclass(frozen=True)
class TracedPoint:
    """A characteristic foot: end point at t_end traced back to t_start."""

    end: tuple[float, ...]
    t_end: float
    start: tuple[float, ...]
    t_start: float


def trace_interval_feet(mesh: Mesh1D, j: int, t_end: float, t_start: float,
                        v: VelocityField, k: int, substeps: int | None = None) -> list[TracedPoint]:
    """Feet of the k+1 Gauss-Lobatto points of cell j (midpoint when k = 0)."""
    if substeps is None:
        substeps = substeps_for(mesh, v, t_end, t_start)
    xc = mesh.x_a + mesh.dx * (j + 0.5)
    src = np.array([xc + mesh.dx * p for p in GL_POINTS[k]])
    feet = trace_back(src, t_end, t_start, v, substeps)
    return [TracedPoint((s,), t_end, (f,), t_start) for s, f in zip(src, feet)]


def trace_cell_vertices(mesh: Mesh2D, j: int, t_end: float, t_start: float,
                        v: VelocityField, mode: str = "quad",
                        substeps: int | None = None) -> list[TracedPoint]:
    """Feet of the 4 corners (quad) or 9 uniformly spaced points (qc) of E_j."""
    if mode not in ("quad", "qc"):
        raise ValueError("mode must be 'quad' or 'qc'")
    if substeps is None:
        substeps = substeps_for(mesh, v, t_end, t_start)
    ix, iy = j % mesh.nx, j // mesh.nx
    cx = mesh.x_a + mesh.dx * (ix + 0.5)
    cy = mesh.y_a + mesh.dy * (iy + 0.5)
    ref = CELL_POINTS_4 if mode == "quad" else CELL_POINTS_9
    sx = np.array([cx + mesh.dx * p for p, _ in ref])
    sy = np.array([cy + mesh.dy * q for _, q in ref])
    fx, fy = trace_back((sx, sy), t_end, t_start, v, substeps)
    return [
        TracedPoint((a, b), t_end, (c, d), t_start)
        for a, b, c, d in zip(sx, sy, fx, fy)
    ]
