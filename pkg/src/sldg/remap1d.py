"""Conservative 1D remap: upstream intervals, test reconstruction, loads.

Updating the transported part of the solution requires, for every cell and
every test basis function Psi_m, the inner product of the old solution with
the backward-traced test function over the upstream interval.  The traced
test function is reconstructed as the degree-k polynomial interpolating
Psi_m's values through the characteristic feet of the cell's Gauss-Lobatto
points, the upstream interval is split against the background mesh, and each
piece is integrated with a Gauss rule that is exact for the degree-2k
integrand.

The module offers per-cell operations mirroring that description plus a
vectorized assembler producing the whole remap operator as a sparse matrix
(load = R @ coefficients), which the time stepper reuses across steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .characteristics import GL_POINTS, VelocityField, substeps_for, trace_back
from .core import Basis, DGField, Mesh1D, gauss_rule

# Feet within this fraction of a cell width of a mesh node are snapped onto
# it, so cell assignment is stable and zero-length slivers cannot appear.
SNAP_TOL = 1e-12


class GeometryError(RuntimeError):
    """Raised when traced geometry is unusable (non-monotone feet, over-long upstream)."""


@dataclass(frozen=True)
class TestPoly1D:
    """Degree-k interpolants of all test basis functions over one upstream interval.

    ``nodes`` are the characteristic feet; column i of ``values`` holds
    Psi_m at the matching Gauss-Lobatto source point, so evaluation is plain
    Lagrange interpolation (constant in the k = 0 case).
    """

    nodes: np.ndarray          # (k+1,) feet
    values: np.ndarray         # (dim, k+1) Psi_m at source points

    def eval(self, x: np.ndarray) -> np.ndarray:
        """Values of every interpolant at x; shape (..., dim)."""
        L = lagrange_weights(self.nodes[None, :], np.asarray(x, float)[None, :])[0]
        return L @ self.values.T


@dataclass(frozen=True)
class UpstreamInterval:
    """Upstream image of one Eulerian cell between two time levels."""

    j: int
    t_end: float
    t_start: float
    lo: float
    hi: float
    feet: np.ndarray
    test: TestPoly1D


@dataclass(frozen=True)
class SubInterval:
    """Piece of an upstream interval inside a single background cell."""

    lo: float
    hi: float
    cell: int          # wrapped background index
    shift: float       # subtract to land the piece in the primary domain


def lagrange_weights(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lagrange basis values L_i(x) for small node sets.

    nodes: (..., p) interpolation points, x: (..., q) evaluation points;
    returns (..., q, p).
    """
    p = nodes.shape[-1]
    diff = x[..., :, None] - nodes[..., None, :]          # (..., q, p)
    out = np.ones_like(diff)
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            out[..., i] *= diff[..., j] / (nodes[..., i] - nodes[..., j])[..., None]
    return out


def _snap(r: np.ndarray) -> np.ndarray:
    rounded = np.round(r)
    return np.where(np.abs(r - rounded) < SNAP_TOL, rounded, r)


def _trace_all_feet(mesh: Mesh1D, k: int, t_end: float, t_start: float,
                    v: VelocityField, substeps: int | None):
    """Trace mesh nodes (and midpoints for k != 1) once, shared across cells."""
    if substeps is None:
        substeps = substeps_for(mesh, v, t_end, t_start)
    edges = mesh.nodes()
    mids = mesh.centers() if k != 1 else None
    pts = edges if mids is None else np.concatenate([edges, mids])
    feet = trace_back(pts, t_end, t_start, v, substeps)
    fe = feet[: edges.size]
    fm = feet[edges.size:] if mids is not None else None
    if np.any(np.diff(fe) <= 0):
        raise GeometryError("traced cell boundaries are non-monotone; reduce the time step")
    if (fe[-1] - fe[0]) > mesh.length * (1.0 + 1e-9):
        raise GeometryError("upstream region longer than the domain (CFL too large)")
    return fe, fm


def _interval_feet(mesh: Mesh1D, k: int, fe: np.ndarray, fm):
    if k == 0:
        return fm[:, None]
    if k == 1:
        return np.column_stack([fe[:-1], fe[1:]])
    return np.column_stack([fe[:-1], fm, fe[1:]])


def build_upstream_1d(mesh: Mesh1D, j: int, t_end: float, t_start: float,
                      v: VelocityField, k: int, substeps: int | None = None) -> UpstreamInterval:
    """Trace cell j's Gauss-Lobatto points and set up its test interpolants."""
    fe, fm = _trace_all_feet(mesh, k, t_end, t_start, v, substeps)
    feet = _interval_feet(mesh, k, fe, fm)[j]
    if np.any(np.diff(feet) <= 0):
        raise GeometryError(f"non-monotone feet in cell {j}")
    basis = Basis(k, 1)
    values = basis.eval(np.array(GL_POINTS[k])).T       # (dim, k+1)
    test = TestPoly1D(nodes=feet, values=values)
    return UpstreamInterval(j, t_end, t_start, fe[j], fe[j + 1], feet, test)


def split_subintervals(up: UpstreamInterval, mesh: Mesh1D) -> list[SubInterval]:
    """Cut the upstream interval at every background cell boundary it crosses."""
    rlo = float(_snap(np.array([(up.lo - mesh.x_a) / mesh.dx]))[0])
    rhi = float(_snap(np.array([(up.hi - mesh.x_a) / mesh.dx]))[0])
    first = int(np.floor(rlo)) + 1
    last = int(np.ceil(rhi)) - 1
    cuts = [rlo] + [float(n) for n in range(first, last + 1)] + [rhi]
    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0.0:
            continue
        idx = int(np.floor((lo + hi) / 2.0))
        wrapped = idx % mesh.n
        shift = (idx - wrapped) // mesh.n * mesh.length
        out.append(SubInterval(mesh.x_a + lo * mesh.dx, mesh.x_a + hi * mesh.dx, wrapped, shift))
    return out


def remap_term1_1d(u: DGField, up: UpstreamInterval) -> np.ndarray:
    """Load vector of cell ``up.j``: (u, Psi*_m) over the upstream interval."""
    mesh: Mesh1D = u.mesh
    k = u.k
    nodes, weights = gauss_rule(k + 1)
    basis = u.basis
    load = np.zeros(basis.dim)
    for sub in split_subintervals(up, mesh):
        mid, half = 0.5 * (sub.lo + sub.hi), 0.5 * (sub.hi - sub.lo)
        x = mid + 2.0 * half * nodes
        xi = (x - sub.shift - mesh.x_a) / mesh.dx - sub.cell - 0.5
        uvals = basis.eval(xi) @ u.coeffs[sub.cell]
        psivals = up.test.eval(x)                        # (q, dim)
        load += (sub.hi - sub.lo) * np.einsum("q,q,qd->d", weights, uvals, psivals)
    return load


def assemble_remap_1d(mesh: Mesh1D, k: int, t_end: float, t_start: float,
                      v: VelocityField, substeps: int | None = None) -> sp.csr_matrix:
    """Sparse remap operator over global coefficients: load = R @ u.

    Row block j holds the loads of cell j; the construction is the vectorized
    counterpart of build_upstream_1d / split_subintervals / remap_term1_1d.
    """
    fe, fm = _trace_all_feet(mesh, k, t_end, t_start, v, substeps)
    feet = _interval_feet(mesh, k, fe, fm)               # (N, k+1)
    d = k + 1
    N = mesh.n

    re = _snap((fe - mesh.x_a) / mesh.dx)
    rlo, rhi = re[:-1], re[1:]
    first = np.floor(rlo).astype(int) + 1
    ncuts = np.maximum(np.ceil(rhi).astype(int) - 1 - first + 1, 0)
    nsub = ncuts + 1

    # ragged list of breakpoints per cell -> flat (lo, hi, owner) arrays
    owner = np.repeat(np.arange(N), nsub)
    offs = np.concatenate([[0], np.cumsum(nsub)])
    total = offs[-1]
    lo = np.empty(total)
    hi = np.empty(total)
    pos = np.arange(total) - offs[owner]                 # piece rank within its cell
    lo[:] = np.where(pos == 0, rlo[owner], first[owner] + pos - 1)
    hi[:] = np.where(pos == nsub[owner] - 1, rhi[owner], first[owner] + pos)

    keep = hi - lo > 0.0
    lo, hi, owner = lo[keep], hi[keep], owner[keep]
    idx = np.floor(0.5 * (lo + hi)).astype(int)
    bg = np.mod(idx, N)

    nodes, weights = gauss_rule(k + 1)
    r_nodes = lo[:, None] + (nodes[None, :] + 0.5) * (hi - lo)[:, None]   # (S, q) index coords
    xi = r_nodes - idx[:, None] - 0.5
    basis = Basis(k, 1)
    phi = basis.eval(xi)                                  # (S, q, d) values of background basis

    x_nodes = mesh.x_a + r_nodes * mesh.dx
    L = lagrange_weights(feet[owner], x_nodes)            # (S, q, d) Lagrange basis at nodes
    src_vals = basis.eval(np.array(GL_POINTS[k])).T       # (d_m, k+1)
    psi = np.einsum("sqp,mp->sqm", L, src_vals)           # (S, q, d_m)

    scale = ((hi - lo) * mesh.dx)[:, None]
    blocks = np.einsum("q,sqm,sqn->smn", weights, psi, phi) * scale[..., None]

    rows = (owner[:, None, None] * d + np.arange(d)[None, :, None])
    cols = (bg[:, None, None] * d + np.arange(d)[None, None, :])
    rows = np.broadcast_to(rows, blocks.shape).ravel()
    cols = np.broadcast_to(cols, blocks.shape).ravel()
    R = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(N * d, N * d))
    return R.tocsr()
