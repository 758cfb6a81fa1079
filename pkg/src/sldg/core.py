"""Meshes, scaled Legendre bases, quadrature and DG coefficient fields.

The discrete solution space is piecewise polynomial of total degree at most
k (k = 0, 1, 2) over a uniform mesh.  On every cell the basis is the scaled
Legendre family written in the local coordinate xi = (x - x_c) / dx, which
runs over [-1/2, 1/2]:

    1D:  {1, xi, xi^2 - 1/12}
    2D:  {1, xi, eta, xi^2 - 1/12, xi*eta, eta^2 - 1/12}

These functions are mutually orthogonal on the reference cell, so the mass
matrix is diagonal and is stored as a per-mode diagonal only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

SUPPORTED_DEGREES = (0, 1, 2)

# 1D modal exponents and reference mass diagonal for {1, xi, xi^2 - 1/12}.
_MASS_1D = np.array([1.0, 1.0 / 12.0, 1.0 / 180.0])

# 2D modes in canonical order (pairs of 1D mode indices).
_MODES_2D = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def basis_dim(k: int, ndim: int) -> int:
    """Dimension of the local polynomial space P^k."""
    _check_degree(k)
    return k + 1 if ndim == 1 else (k + 1) * (k + 2) // 2


def _check_degree(k: int) -> None:
    if k not in SUPPORTED_DEGREES:
        raise ValueError(f"polynomial degree must be one of {SUPPORTED_DEGREES}, got {k}")


def _legendre_1d(xi: np.ndarray, mode: int) -> np.ndarray:
    if mode == 0:
        return np.ones_like(xi)
    if mode == 1:
        return xi
    return xi * xi - 1.0 / 12.0


def _legendre_1d_deriv(xi: np.ndarray, mode: int) -> np.ndarray:
    if mode == 0:
        return np.zeros_like(xi)
    if mode == 1:
        return np.ones_like(xi)
    return 2.0 * xi


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1/2, 1/2] with weights summing to 1."""
    if n < 1:
        raise ValueError("quadrature rule needs at least one node")
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * x
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule on the reference cell ([-1/2,1/2] or its tensor square)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @staticmethod
    def gauss_1d(n: int) -> "QuadratureRule":
        nodes, weights = gauss_rule(n)
        return QuadratureRule(nodes=nodes, weights=weights, order=2 * n - 1)

    @staticmethod
    def gauss_2d(n: int) -> "QuadratureRule":
        """Tensor-product rule; nodes have shape (n*n, 2)."""
        x, w = gauss_rule(n)
        xx, yy = np.meshgrid(x, x, indexing="ij")
        nodes = np.column_stack([xx.ravel(), yy.ravel()])
        weights = np.outer(w, w).ravel()
        return QuadratureRule(nodes=nodes, weights=weights, order=2 * n - 1)


@dataclass(frozen=True)
class Basis:
    """Scaled Legendre basis of total degree k in 1 or 2 dimensions."""

    k: int
    ndim: int

    def __post_init__(self):
        _check_degree(self.k)
        if self.ndim not in (1, 2):
            raise ValueError("ndim must be 1 or 2")

    @property
    def dim(self) -> int:
        return basis_dim(self.k, self.ndim)

    @property
    def modes(self) -> tuple:
        """2D only: (i, j) exponent pairs of the tensor factors."""
        return _MODES_2D[: self.dim]

    def mass_diag(self) -> np.ndarray:
        """Diagonal of the reference mass matrix (unit cell measure)."""
        if self.ndim == 1:
            return _MASS_1D[: self.dim].copy()
        return np.array([_MASS_1D[i] * _MASS_1D[j] for i, j in self.modes])

    def eval(self, xi: np.ndarray, eta: np.ndarray | None = None) -> np.ndarray:
        """Basis values at local coordinates; result shape (..., dim)."""
        xi = np.asarray(xi, dtype=float)
        if self.ndim == 1:
            out = np.empty(xi.shape + (self.dim,))
            out[..., 0] = 1.0
            if self.dim > 1:
                out[..., 1] = xi
            if self.dim > 2:
                out[..., 2] = xi * xi - 1.0 / 12.0
            return out
        eta = np.asarray(eta, dtype=float)
        shape = np.broadcast_shapes(xi.shape, eta.shape)
        out = np.empty(shape + (self.dim,))
        out[..., 0] = 1.0
        if self.dim > 1:
            out[..., 1] = xi
            out[..., 2] = eta
        if self.dim > 3:
            out[..., 3] = xi * xi - 1.0 / 12.0
            out[..., 4] = xi * eta
            out[..., 5] = eta * eta - 1.0 / 12.0
        return out

    def eval_deriv(self, xi: np.ndarray, eta: np.ndarray | None = None, axis: int = 0) -> np.ndarray:
        """Derivative with respect to the local coordinate on the given axis."""
        xi = np.asarray(xi, dtype=float)
        if self.ndim == 1:
            return np.stack([_legendre_1d_deriv(xi, m) for m in range(self.dim)], axis=-1)
        eta = np.asarray(eta, dtype=float)
        vals = []
        for i, j in self.modes:
            if axis == 0:
                vals.append(_legendre_1d_deriv(xi, i) * _legendre_1d(eta, j))
            else:
                vals.append(_legendre_1d(xi, i) * _legendre_1d_deriv(eta, j))
        return np.stack(vals, axis=-1)


@dataclass(frozen=True)
class Mesh1D:
    """Uniform partition of [x_a, x_b] into n cells."""

    x_a: float
    x_b: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("mesh needs at least 2 cells")
        if not self.x_b > self.x_a:
            raise ValueError("x_b must exceed x_a")

    @property
    def dx(self) -> float:
        return (self.x_b - self.x_a) / self.n

    @property
    def length(self) -> float:
        return self.x_b - self.x_a

    @property
    def ncells(self) -> int:
        return self.n

    def nodes(self) -> np.ndarray:
        return self.x_a + self.dx * np.arange(self.n + 1)

    def centers(self) -> np.ndarray:
        return self.x_a + self.dx * (np.arange(self.n) + 0.5)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        return self.x_a + np.mod(x - self.x_a, self.length)

    def locate(self, x: np.ndarray, side: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Containing cell index and local coordinate of (wrapped) points.

        ``side`` selects the one-sided trace at cell interfaces: points within
        1e-12 cells of an interior interface are attributed to the left or
        right neighbour explicitly.
        """
        r = (self.wrap(np.asarray(x, dtype=float)) - self.x_a) / self.dx
        if side is not None:
            near = np.abs(r - np.round(r)) < 1e-12
            r = np.where(near, np.round(r) + (-1e-9 if side == "left" else 1e-9), r)
        j = np.clip(np.floor(r).astype(int), 0, self.n - 1)
        xi = r - j - 0.5
        return j, xi


@dataclass(frozen=True)
class Mesh2D:
    """Uniform rectangular partition; cells indexed c = ix + nx * iy."""

    x_a: float
    x_b: float
    y_a: float
    y_b: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("mesh needs at least 2 cells per direction")
        if not (self.x_b > self.x_a and self.y_b > self.y_a):
            raise ValueError("upper bounds must exceed lower bounds")

    @property
    def dx(self) -> float:
        return (self.x_b - self.x_a) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_b - self.y_a) / self.ny

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    @property
    def lengths(self) -> tuple[float, float]:
        return (self.x_b - self.x_a, self.y_b - self.y_a)

    def cell_index(self, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
        return np.mod(ix, self.nx) + self.nx * np.mod(iy, self.ny)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        cx = self.x_a + self.dx * (np.arange(self.nx) + 0.5)
        cy = self.y_a + self.dy * (np.arange(self.ny) + 0.5)
        return cx, cy

    def wrap(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lx, ly = self.lengths
        return self.x_a + np.mod(x - self.x_a, lx), self.y_a + np.mod(y - self.y_a, ly)

    def locate(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xw, yw = self.wrap(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        rx = (xw - self.x_a) / self.dx
        ry = (yw - self.y_a) / self.dy
        ix = np.clip(np.floor(rx).astype(int), 0, self.nx - 1)
        iy = np.clip(np.floor(ry).astype(int), 0, self.ny - 1)
        return ix + self.nx * iy, rx - ix - 0.5, ry - iy - 0.5


Mesh = Mesh1D | Mesh2D


@dataclass
class DGField:
    """Piecewise polynomial field: one block of modal coefficients per cell."""

    mesh: Mesh
    k: int
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        _check_degree(self.k)
        dim = basis_dim(self.k, self.ndim)
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=float).reshape(
            self.mesh.ncells, dim
        )

    @property
    def ndim(self) -> int:
        return 1 if isinstance(self.mesh, Mesh1D) else 2

    @property
    def basis(self) -> Basis:
        return Basis(self.k, self.ndim)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def copy(self) -> "DGField":
        return replace(self, coeffs=self.coeffs.copy())

    @staticmethod
    def zeros(mesh: Mesh, k: int, time: float = 0.0) -> "DGField":
        ndim = 1 if isinstance(mesh, Mesh1D) else 2
        return DGField(mesh, k, np.zeros((mesh.ncells, basis_dim(k, ndim))), time)

    def __add__(self, other: "DGField") -> "DGField":
        return replace(self, coeffs=self.coeffs + other.coeffs)

    def __sub__(self, other: "DGField") -> "DGField":
        return replace(self, coeffs=self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "DGField":
        return replace(self, coeffs=self.coeffs * scalar)

    __rmul__ = __mul__

    def evaluate(self, x, y=None, side: str | None = None) -> np.ndarray:
        """Point values of the cell-local polynomials (periodic wrap applied)."""
        if self.ndim == 1:
            j, xi = self.mesh.locate(x, side=side)
            phi = self.basis.eval(xi)
            return np.einsum("...d,...d->...", self.coeffs[j], phi)
        c, xi, eta = self.mesh.locate(x, y)
        phi = self.basis.eval(xi, eta)
        return np.einsum("...d,...d->...", self.coeffs[c], phi)


def cell_measure(mesh: Mesh) -> float:
    return mesh.dx if isinstance(mesh, Mesh1D) else mesh.dx * mesh.dy


def mass_vector(mesh: Mesh, k: int) -> np.ndarray:
    """Diagonal of the global mass matrix, flattened over (cell, mode)."""
    ndim = 1 if isinstance(mesh, Mesh1D) else 2
    diag = Basis(k, ndim).mass_diag() * cell_measure(mesh)
    return np.tile(diag, mesh.ncells)


def _cell_quad_points(mesh: Mesh, n: int):
    """Physical quadrature points per cell, plus local nodes and weights."""
    if isinstance(mesh, Mesh1D):
        nodes, weights = gauss_rule(n)
        x = mesh.centers()[:, None] + mesh.dx * nodes[None, :]
        return (x,), nodes, weights
    rule = QuadratureRule.gauss_2d(n)
    cx, cy = mesh.centers()
    cxg, cyg = np.meshgrid(cx, cy, indexing="ij")
    # cell order must follow c = ix + nx*iy
    cxf = cxg.T.reshape(-1, 1)
    cyf = cyg.T.reshape(-1, 1)
    x = cxf + mesh.dx * rule.nodes[None, :, 0]
    y = cyf + mesh.dy * rule.nodes[None, :, 1]
    return (x, y), rule.nodes, rule.weights


def project(f: Callable, mesh: Mesh, k: int, time: float = 0.0) -> DGField:
    """L2 projection of a scalar function onto the DG space.

    Uses k+2 Gauss points per direction and inverts the quadrature Gram
    matrix (analytically diagonal, numerically near-diagonal), so members of
    the DG space are reproduced to rounding.
    """
    _check_degree(k)
    ndim = 1 if isinstance(mesh, Mesh1D) else 2
    basis = Basis(k, ndim)
    pts, local, weights = _cell_quad_points(mesh, k + 2)
    fvals = f(*pts)
    if ndim == 1:
        phi = basis.eval(local)
    else:
        phi = basis.eval(local[:, 0], local[:, 1])
    rhs = np.einsum("q,qd,cq->cd", weights, phi, np.asarray(fvals, dtype=float))
    gram = np.einsum("q,qd,qe->de", weights, phi, phi)
    coeffs = np.linalg.solve(gram, rhs.T).T
    return DGField(mesh, k, coeffs, time)


def norms(field: DGField, exact: Callable, t: float | None = None) -> tuple[float, float, float]:
    """(L1, L2, Linf) error norms against ``exact`` evaluated at time t.

    The rule is fixed at k+3 Gauss points per direction; Linf is the maximum
    over those quadrature nodes.
    """
    t = field.time if t is None else t
    mesh = field.mesh
    pts, local, weights = _cell_quad_points(mesh, field.k + 3)
    if field.ndim == 1:
        phi = Basis(field.k, 1).eval(local)
        ref = exact(pts[0], t)
    else:
        phi = Basis(field.k, 2).eval(local[:, 0], local[:, 1])
        ref = exact(pts[0], pts[1], t)
    uh = field.coeffs @ phi.T
    err = uh - ref
    meas = cell_measure(mesh)
    l1 = float(meas * np.sum(weights[None, :] * np.abs(err)))
    l2 = float(np.sqrt(meas * np.sum(weights[None, :] * err**2)))
    linf = float(np.max(np.abs(err)))
    return l1, l2, linf


def total_mass(field: DGField) -> float:
    """Integral of the field: only the constant mode carries mass."""
    return float(cell_measure(field.mesh) * field.coeffs[:, 0].sum())
