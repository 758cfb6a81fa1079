"""Diagonally implicit Runge-Kutta stepping along characteristics.

Every stage solves a backward-Euler-like system: the new stage coefficients
are determined by the remapped old solution plus time-weighted remaps of the
diffusion and source fields of the earlier stages, with the implicit
diffusion contribution of the current stage on the left-hand side.  Because
the tableaus are stiffly accurate, the final stage is the step solution.

Upstream geometries (one sparse remap operator per ordered pair of stage
times) are cached and, for velocity fields without explicit time dependence,
reused across steps; the implicit matrix is assembled once per distinct
diagonal coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .characteristics import VelocityField
from .core import DGField, Mesh1D, mass_vector, project
from .ldg import FluxChoice, LDGOperator, assemble_ldg_1d, assemble_ldg_2d
from .remap1d import assemble_remap_1d
from .remap2d_matrix import assemble_remap_2d


@dataclass(frozen=True)
class ButcherTableau:
    """Lower-triangular RK coefficients with nonzero diagonal."""

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def stages(self) -> int:
        return self.b.size

    def validate(self, tol: float = 1e-14) -> None:
        s = self.stages
        if self.A.shape != (s, s) or self.c.shape != (s,):
            raise ValueError("inconsistent tableau shapes")
        if np.max(np.abs(np.triu(self.A, 1))) > 0.0:
            raise ValueError("tableau is not lower triangular")
        if np.min(np.abs(np.diag(self.A))) == 0.0:
            raise ValueError("tableau has a zero diagonal entry")
        if np.max(np.abs(self.A[-1] - self.b)) > tol:
            raise ValueError("tableau is not stiffly accurate")
        if np.max(np.abs(self.A.sum(axis=1) - self.c)) > tol:
            raise ValueError("tableau row sums do not match abscissae")


def _dirk2() -> ButcherTableau:
    nu = 1.0 - math.sqrt(2.0) / 2.0
    A = np.array([[nu, 0.0], [1.0 - nu, nu]])
    return ButcherTableau("dirk2", A, A[-1].copy(), np.array([nu, 1.0]))


def _dirk3() -> ButcherTableau:
    g = 0.435866521508459
    b1 = -1.5 * g * g + 4.0 * g - 0.25
    b2 = 1.5 * g * g - 5.0 * g + 1.25
    A = np.array([[g, 0.0, 0.0], [(1.0 - g) / 2.0, g, 0.0], [b1, b2, g]])
    return ButcherTableau("dirk3", A, A[-1].copy(), np.array([g, (1.0 + g) / 2.0, 1.0]))


def _dirk4() -> ButcherTableau:
    A = np.array(
        [
            [1 / 4, 0, 0, 0, 0],
            [1 / 2, 1 / 4, 0, 0, 0],
            [17 / 50, -1 / 25, 1 / 4, 0, 0],
            [371 / 1360, -137 / 2720, 15 / 544, 1 / 4, 0],
            [25 / 24, -49 / 48, 125 / 16, -85 / 12, 1 / 4],
        ]
    )
    c = np.array([1 / 4, 3 / 4, 11 / 20, 1 / 2, 1.0])
    return ButcherTableau("dirk4", A, A[-1].copy(), c)


_TABLEAUS: dict[str, Callable[[], ButcherTableau]] = {
    "be": lambda: ButcherTableau("be", np.array([[1.0]]), np.array([1.0]), np.array([1.0])),
    "dirk2": _dirk2,
    "dirk3": _dirk3,
    "dirk4": _dirk4,
}


def tableau(name: str) -> ButcherTableau:
    try:
        tab = _TABLEAUS[name]()
    except KeyError:
        raise ValueError(f"unknown tableau {name!r}; choose from {sorted(_TABLEAUS)}") from None
    tab.validate()
    return tab


@dataclass(frozen=True)
class LinearSolverConfig:
    """Stage-system solver selection: GMRES (with threshold) or sparse LU."""

    method: str = "gmres"
    tol: float = 1e-12
    restart: int = 60
    maxiter: int = 5000

    def __post_init__(self):
        if self.method not in ("gmres", "direct"):
            raise ValueError("solver method must be 'gmres' or 'direct'")
        if self.tol <= 0.0:
            raise ValueError("solver tolerance must be positive")


class SolverError(RuntimeError):
    """Stage system failed to reach the requested residual."""


def cfl_to_dt(cfl: float, mesh, v: VelocityField) -> float:
    """Time step realizing a prescribed CFL number for the given field."""
    if cfl <= 0.0:
        raise ValueError("CFL must be positive")
    if isinstance(mesh, Mesh1D):
        denom = v.max_speed[0] / mesh.dx
    else:
        denom = v.max_speed[0] / mesh.dx + v.max_speed[1] / mesh.dy
    if denom == 0.0:
        raise ValueError("zero velocity bound: choose dt directly")
    return cfl / denom


class Stepper:
    """Advances one convection-diffusion problem on a fixed mesh.

    Holds the assembled diffusion operator, the per-geometry remap matrices
    and the factorized/cached implicit systems.  Instances are not thread
    safe; use one stepper per concurrent run.
    """

    def __init__(self, mesh, k: int, velocity: VelocityField, eps: float = 0.0,
                 source: Callable | None = None, tab: ButcherTableau | str = "dirk4",
                 solver: LinearSolverConfig | None = None, flux: FluxChoice | None = None,
                 mode: str = "quad", bc: str = "periodic", substeps: int | None = None):
        if bc != "periodic":
            raise ValueError("the semi-Lagrangian stepper supports periodic boundaries only")
        self.mesh = mesh
        self.k = k
        self.ndim = 1 if isinstance(mesh, Mesh1D) else 2
        self.velocity = velocity
        self.eps = float(eps)
        self.source = source
        self.tableau = tableau(tab) if isinstance(tab, str) else tab
        self.tableau.validate()
        self.solver = solver or LinearSolverConfig()
        self.mode = mode
        self.substeps = substeps
        self.mass = mass_vector(mesh, k)
        if self.ndim == 1:
            self.ldg: LDGOperator = assemble_ldg_1d(mesh, k, flux, bc)
        else:
            self.ldg = assemble_ldg_2d(mesh, k, flux, bc)
        self._remap_cache: dict = {}
        self._system_cache: dict = {}
        self.last_residual = 0.0

    # -- remap operators ----------------------------------------------------

    def _remap(self, t_hi: float, t_lo: float):
        """Sparse remap operator for the pair (t_hi -> t_lo); None = identity."""
        if abs(t_hi - t_lo) < 1e-14:
            return None
        if self.velocity.time_dependent:
            key = (round(t_hi, 12), round(t_lo, 12))
        else:
            key = round(t_hi - t_lo, 12)
        R = self._remap_cache.get(key)
        if R is None:
            if self.ndim == 1:
                R = assemble_remap_1d(self.mesh, self.k, t_hi, t_lo, self.velocity, self.substeps)
            else:
                R = assemble_remap_2d(self.mesh, self.k, t_hi, t_lo, self.velocity,
                                      self.mode, self.substeps)
            self._remap_cache[key] = R
        return R

    def _apply_remap(self, R, coeffs: np.ndarray) -> np.ndarray:
        if R is None:
            return self.mass * coeffs.ravel()
        return R @ coeffs.ravel()

    # -- implicit stage systems ----------------------------------------------

    def _apply_system(self, gamma: float, x: np.ndarray) -> np.ndarray:
        """(I - gamma D) x through the factored sweeps (exact nullspace)."""
        return x - gamma * self.ldg.apply_flat(x)

    def solve_stage(self, gamma: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (M - gamma * M D) x = rhs to the configured residual."""
        if gamma == 0.0:
            self.last_residual = 0.0
            return rhs / self.mass
        b = rhs / self.mass
        if self.solver.method == "direct":
            x = self._system_lu(gamma).solve(b)
        else:
            x = self._gmres(gamma, b)
        resid = np.linalg.norm(self.mass * self._apply_system(gamma, x) - rhs)
        bound = self.solver.tol * max(1.0, np.linalg.norm(rhs))
        if resid > bound:
            if self.solver.method == "gmres":
                x = self._gmres(gamma, b, tighten=100.0, x0=x)
                resid = np.linalg.norm(self.mass * self._apply_system(gamma, x) - rhs)
            if resid > bound:
                raise SolverError(
                    f"stage solve residual {resid:.3e} exceeds {bound:.3e}"
                )
        self.last_residual = float(resid)
        return x

    def _system_lu(self, gamma: float):
        key = round(gamma, 15)
        lu = self._system_cache.get(key)
        if lu is None:
            n = self.mass.size
            mat = (sp.identity(n, format="csc") - gamma * self.ldg.op).tocsc()
            lu = spla.splu(mat)
            self._system_cache[key] = lu
        return lu

    def _gmres(self, gamma: float, b: np.ndarray, tighten: float = 1.0, x0=None) -> np.ndarray:
        op = spla.LinearOperator(
            (b.size, b.size),
            matvec=lambda x: self._apply_system(gamma, np.asarray(x, dtype=float)),
            dtype=np.float64,
        )
        rtol = self.solver.tol / tighten
        x, info = spla.gmres(op, b, x0=x0, rtol=rtol, atol=0.25 * rtol * np.linalg.norm(b),
                             restart=self.solver.restart, maxiter=self.solver.maxiter)
        if info > 0:
            resid = np.linalg.norm(self._apply_system(gamma, x) - b)
            raise SolverError(f"GMRES exhausted {info} iterations, residual {resid:.3e}")
        if info < 0:
            raise SolverError("GMRES reported an illegal input or breakdown")
        return x

    # -- stepping -------------------------------------------------------------

    def step(self, u: DGField, dt: float) -> DGField:
        """One DIRK step from u.time to u.time + dt."""
        t = u.time
        if self.velocity.time_dependent:
            self._remap_cache.clear()
        A, c = self.tableau.A, self.tableau.c
        s = self.tableau.stages

        if self.eps == 0.0 and self.source is None:
            load = self._apply_remap(self._remap(t + dt, t), u.coeffs)
            return DGField(self.mesh, self.k, (load / self.mass).reshape(u.coeffs.shape), t + dt)

        stage_p: list[np.ndarray | None] = [None] * s
        stage_g: list[np.ndarray | None] = [None] * s
        x = u.coeffs.ravel()
        for ii in range(s):
            t_ii = t + c[ii] * dt
            rhs = self._apply_remap(self._remap(t_ii, t), u.coeffs)
            for jj in range(ii):
                if A[ii, jj] == 0.0:
                    continue
                parts = []
                if self.eps != 0.0:
                    parts.append(self.eps * stage_p[jj])
                if stage_g[jj] is not None:
                    parts.append(stage_g[jj])
                if not parts:
                    continue
                combo = parts[0] if len(parts) == 1 else parts[0] + parts[1]
                rhs = rhs + A[ii, jj] * dt * self._apply_remap(
                    self._remap(t_ii, t + c[jj] * dt), combo
                )
            if self.source is not None:
                g_ii = self._project_source(t_ii)
                stage_g[ii] = g_ii
                rhs = rhs + A[ii, ii] * dt * (self.mass * g_ii)
            x = self.solve_stage(A[ii, ii] * dt * self.eps, rhs)
            if self.eps != 0.0:
                stage_p[ii] = self.ldg.apply_flat(x)
        return DGField(self.mesh, self.k, x.reshape(u.coeffs.shape), t + dt)

    def _project_source(self, t_at: float) -> np.ndarray:
        if self.ndim == 1:
            f = lambda xx: self.source(xx, t_at)
        else:
            f = lambda xx, yy: self.source(xx, yy, t_at)
        return project(f, self.mesh, self.k).coeffs.ravel()

    def run(self, u0: DGField, T: float, dt: float,
            callback: Callable[[DGField], None] | None = None) -> DGField:
        """March from u0.time to T with fixed dt and a truncated final step."""
        u = u0
        remaining = T - u.time
        if remaining <= 0.0:
            return u
        nsteps = max(1, math.ceil(remaining / dt - 1e-9))
        for n in range(nsteps):
            step_dt = dt if n < nsteps - 1 else T - u.time
            u = self.step(u, step_dt)
            if callback is not None:
                callback(u)
        return u
