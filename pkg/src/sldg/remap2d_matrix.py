"""Vectorized assembly of the 2D remap operator as a sparse matrix.

The remap load vector is linear in the old solution's coefficients, so the
whole remap for one (later time, earlier time) pair is a sparse matrix R
with load = R @ coefficients.  The stepper builds R once per traced geometry
and reuses it across stages and steps whenever the velocity field allows.

The assembly avoids region chaining altogether by anchoring the Green
auxiliary function globally per upstream cell: with Q(x, y) the
x-antiderivative of the integrand started at a grid line left of the whole
upstream cell, horizontal boundary pieces contribute nothing (dy = 0) and
all vertical grid lines become interior to Q's definition, so only the
upstream boundary pieces themselves carry contour contributions.  Q at a
point inside background column ix splits into full-column integrals S over
the columns between the anchor and ix (polynomials in y) plus the partial
integral inside column ix; both are evaluated by Gauss rules that are exact
for the polynomial integrands.  Any per-owner anchor gives the same loads
because two anchors change Q by a function of y only, whose contour
integral over the closed upstream boundary vanishes.

Exactness of all quadrature makes the operator reproduce the mass matrix
for zero velocity and the projection of the translated field for constant
velocity, to rounding.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .characteristics import VelocityField, substeps_for, trace_back
from .core import Basis, Mesh2D, basis_dim, gauss_rule
from .remap1d import GeometryError
from .remap2d import (
    eval_quadratic,
    eval_quadratic_deriv,
    quadratic_range,
    quadratic_through,
    snap_index,
    split_edges_at_gridlines,
    tracked_points,
)

_CHUNK = 40_000


def _traced_cell_points(mesh: Mesh2D, t_end: float, t_start: float, v: VelocityField,
                        npts: int, substeps: int | None) -> np.ndarray:
    """Feet of every cell's tracked points, shared through the mesh nodes.

    Grid nodes, edge midpoints and centers are traced once and gathered per
    cell, so neighbouring cells see bitwise identical shared feet; feet are
    then recentred into the primary domain per cell and snapped onto grid
    lines within the geometric tolerance.
    """
    if substeps is None:
        substeps = substeps_for(mesh, v, t_end, t_start)
    nx, ny = mesh.nx, mesh.ny
    gx = mesh.x_a + mesh.dx * np.arange(nx + 1)
    gy = mesh.y_a + mesh.dy * np.arange(ny + 1)

    batches_x = [np.repeat(gx, ny + 1)]
    batches_y = [np.tile(gy, nx + 1)]
    counts = [(nx + 1) * (ny + 1)]
    if npts == 9:
        hx = mesh.x_a + mesh.dx * (np.arange(nx) + 0.5)
        batches_x += [np.repeat(hx, ny + 1), np.repeat(gx, ny), np.repeat(hx, ny)]
        batches_y += [np.tile(gy, nx), np.tile(gy[:-1] + 0.5 * mesh.dy, nx + 1),
                      np.tile(gy[:-1] + 0.5 * mesh.dy, nx)]
        counts += [nx * (ny + 1), (nx + 1) * ny, nx * ny]
    fx, fy = trace_back((np.concatenate(batches_x), np.concatenate(batches_y)),
                        t_end, t_start, v, substeps)
    splits = np.cumsum(counts)[:-1]
    fxs = np.split(fx, splits)
    fys = np.split(fy, splits)
    corner_x = fxs[0].reshape(nx + 1, ny + 1)
    corner_y = fys[0].reshape(nx + 1, ny + 1)

    ix = np.tile(np.arange(nx), ny)
    iy = np.repeat(np.arange(ny), nx)
    feet = np.empty((mesh.ncells, npts, 2))
    feet[:, 0, 0] = corner_x[ix, iy]
    feet[:, 0, 1] = corner_y[ix, iy]
    feet[:, 1, 0] = corner_x[ix + 1, iy]
    feet[:, 1, 1] = corner_y[ix + 1, iy]
    feet[:, 2, 0] = corner_x[ix + 1, iy + 1]
    feet[:, 2, 1] = corner_y[ix + 1, iy + 1]
    feet[:, 3, 0] = corner_x[ix, iy + 1]
    feet[:, 3, 1] = corner_y[ix, iy + 1]
    if npts == 9:
        hx_x = fxs[1].reshape(nx, ny + 1)
        hx_y = fys[1].reshape(nx, ny + 1)
        vx_x = fxs[2].reshape(nx + 1, ny)
        vx_y = fys[2].reshape(nx + 1, ny)
        cc_x = fxs[3].reshape(nx, ny)
        cc_y = fys[3].reshape(nx, ny)
        feet[:, 4, 0] = hx_x[ix, iy]
        feet[:, 4, 1] = hx_y[ix, iy]
        feet[:, 5, 0] = vx_x[ix + 1, iy]
        feet[:, 5, 1] = vx_y[ix + 1, iy]
        feet[:, 6, 0] = hx_x[ix, iy + 1]
        feet[:, 6, 1] = hx_y[ix, iy + 1]
        feet[:, 7, 0] = vx_x[ix, iy]
        feet[:, 7, 1] = vx_y[ix, iy]
        feet[:, 8, 0] = cc_x[ix, iy]
        feet[:, 8, 1] = cc_y[ix, iy]

    lx, ly = mesh.lengths
    cx = 0.5 * (feet[:, :4, 0].min(axis=1) + feet[:, :4, 0].max(axis=1))
    cy = 0.5 * (feet[:, :4, 1].min(axis=1) + feet[:, :4, 1].max(axis=1))
    feet[:, :, 0] -= np.floor((cx - mesh.x_a) / lx)[:, None] * lx
    feet[:, :, 1] -= np.floor((cy - mesh.y_a) / ly)[:, None] * ly
    feet[:, :, 0] = mesh.x_a + snap_index((feet[:, :, 0] - mesh.x_a) / mesh.dx) * mesh.dx
    feet[:, :, 1] = mesh.y_a + snap_index((feet[:, :, 1] - mesh.y_a) / mesh.dy) * mesh.dy
    return feet


def _check_simple_batch(corners: np.ndarray) -> None:
    x, y = corners[:, :, 0], corners[:, :, 1]
    area2 = np.einsum("cq,cq->c", x, np.roll(y, -1, axis=1)) - np.einsum(
        "cq,cq->c", y, np.roll(x, -1, axis=1)
    )
    if np.any(area2 <= 0.0):
        bad = int(np.argmin(area2))
        raise GeometryError(f"upstream quadrilateral of cell {bad} is degenerate or flipped")


def _fit_tests_batch(feet: np.ndarray, k: int, dx: float, dy: float):
    """Batched least-squares reconstruction coefficients for all cells."""
    basis = Basis(k, 2)
    npts = feet.shape[1]
    src = np.array(tracked_points("qc" if npts == 9 else "quad", k)[:npts])
    B = basis.eval(src[:, 0], src[:, 1])                     # (npts, m)
    centers = feet.mean(axis=1)                              # (C, 2)
    A = basis.eval(
        (feet[:, :, 0] - centers[:, None, 0]) / dx,
        (feet[:, :, 1] - centers[:, None, 1]) / dy,
    )                                                        # (C, npts, d)
    G = np.einsum("cqd,cqe->cde", A, A)
    rhs = np.einsum("cqd,qm->cdm", A, B)
    sol = np.linalg.solve(G, rhs)                            # (C, d, m)
    return centers, np.ascontiguousarray(np.swapaxes(sol, 1, 2))   # (C, m, d)


def assemble_remap_2d(mesh: Mesh2D, k: int, t_end: float, t_start: float,
                      v: VelocityField, mode: str = "quad",
                      substeps: int | None = None) -> sp.csr_matrix:
    """Sparse 2D remap operator over global coefficients: load = R @ u."""
    if mode not in ("quad", "qc"):
        raise ValueError("mode must be 'quad' or 'qc'")
    d = basis_dim(k, 2)
    basis = Basis(k, 2)
    npts = len(tracked_points(mode, k))
    feet = _traced_cell_points(mesh, t_end, t_start, v, npts, substeps)
    _check_simple_batch(feet[:, :4])
    centers, cfit = _fit_tests_batch(feet, k, mesh.dx, mesh.dy)

    corners = feet[:, :4]
    if npts == 9 and mode == "qc":
        mids = feet[:, 4:8]
    else:
        mids = 0.5 * (corners + np.roll(corners, -1, axis=1))
    edges = quadratic_through(corners, mids, np.roll(corners, -1, axis=1))   # (C, 4, 2, 3)

    eflat = edges.reshape(-1, 2, 3).copy()
    eflat[:, 0, :] /= mesh.dx
    eflat[:, 0, 0] -= mesh.x_a / mesh.dx
    eflat[:, 1, :] /= mesh.dy
    eflat[:, 1, 0] -= mesh.y_a / mesh.dy
    edge_owner = np.repeat(np.arange(mesh.ncells), 4)

    rx_lo, rx_hi = quadratic_range(eflat[:, 0, :])
    ry_lo, ry_hi = quadratic_range(eflat[:, 1, :])
    span_x = rx_hi.reshape(-1, 4).max(axis=1) - rx_lo.reshape(-1, 4).min(axis=1)
    span_y = ry_hi.reshape(-1, 4).max(axis=1) - ry_lo.reshape(-1, 4).min(axis=1)
    if span_x.max() >= min(mesh.nx, mesh.ny) or span_y.max() >= min(mesh.nx, mesh.ny):
        raise GeometryError("an upstream cell spans the whole domain (CFL too large)")
    anchor_col = np.floor(snap_index(rx_lo.reshape(-1, 4).min(axis=1))).astype(int)

    eid, s0, s1 = split_edges_at_gridlines(eflat)
    owner = edge_owner[eid]

    # straight pieces carry a degree 2k+1 integrand in the parameter, curved
    # ones degree 4k+3; both node counts are exact for those degrees
    ng = (k + 2) if mode != "qc" else (2 * k + 2)
    ref, ref_w = gauss_rule(ng)
    it, iw = gauss_rule(k + 1)

    smid = 0.5 * (s0 + s1)
    rx_m = snap_index(eval_quadratic(eflat[eid, 0, :], smid))
    ry_m = snap_index(eval_quadratic(eflat[eid, 1, :], smid))
    pix = np.floor(rx_m).astype(int)
    piy = np.floor(ry_m).astype(int)

    sg = smid[:, None] + (s1 - s0)[:, None] * ref[None, :]                  # (P, G)
    rxg = eval_quadratic(eflat[eid, 0, :][:, None, :], sg)
    ryg = eval_quadratic(eflat[eid, 1, :][:, None, :], sg)
    dyg = eval_quadratic_deriv(eflat[eid, 1, :][:, None, :], sg) * mesh.dy  # physical dy/ds
    wg = ref_w[None, :] * (s1 - s0)[:, None] * dyg                          # contour weight per node

    eta = ryg - piy[:, None] - 0.5
    xi_hi = rxg - pix[:, None] - 0.5

    rows_all, cols_all, vals_all = [], [], []

    def _emit(rows, cols, vals):
        rows_all.append(rows.ravel())
        cols_all.append(cols.ravel())
        vals_all.append(vals.ravel())

    marange = np.arange(d)

    def _blocks(phi, fit, own, w_nodes):
        """blocks[p, m, n] = sum_{g,t} w[p,g] * iw[t] * psi_m * phi_n."""
        p = phi.shape[0]
        gt = ng * it.size
        psi = np.matmul(fit.reshape(p, gt, d), np.swapaxes(cfit[own], 1, 2))
        A = np.ascontiguousarray((phi * iw[None, None, :, None]).reshape(p, gt, d))
        psi *= np.repeat(w_nodes, it.size, axis=1)[:, :, None]
        out = np.empty((p, d, d))
        for m in range(d):
            out[:, m, :] = np.einsum("pj,pjn->pn", psi[:, :, m], A)
        return mesh.dx * out

    # partial-column contributions inside each piece's own background cell
    npieces = eid.size
    for a in range(0, npieces, _CHUNK):
        sl = slice(a, min(a + _CHUNK, npieces))
        width = xi_hi[sl] + 0.5                                             # (p, G)
        xi_t = -0.5 + width[:, :, None] * (it[None, None, :] + 0.5)         # (p, G, T)
        eta_t = eta[sl][:, :, None]
        phi = basis.eval(xi_t, eta_t)                                       # (p, G, T, n)
        xph = mesh.x_a + (pix[sl][:, None, None] + xi_t + 0.5) * mesh.dx
        yph = mesh.y_a + ryg[sl][:, :, None] * mesh.dy
        own = owner[sl]
        fit = basis.eval(
            (xph - centers[own, 0][:, None, None]) / mesh.dx,
            (yph - centers[own, 1][:, None, None]) / mesh.dy,
        )                                                                   # (p, G, T, d)
        blocks = _blocks(phi, fit, own, wg[sl] * width)
        cell = mesh.cell_index(pix[sl], piy[sl])
        rows = own[:, None, None] * d + marange[None, :, None]
        cols = cell[:, None, None] * d + marange[None, None, :]
        _emit(np.broadcast_to(rows, blocks.shape), np.broadcast_to(cols, blocks.shape), blocks)

    # full-column contributions of the columns between the anchor and the piece
    nleft = pix - anchor_col[owner]
    if np.any(nleft < 0):
        raise GeometryError("piece column left of its owner's anchor (geometry bug)")
    pair_piece = np.repeat(np.arange(npieces), nleft)
    offs = np.concatenate([[0], np.cumsum(nleft)])
    pair_col = anchor_col[owner][pair_piece] + (np.arange(pair_piece.size) - offs[pair_piece])
    for a in range(0, pair_piece.size, _CHUNK):
        b = min(a + _CHUNK, pair_piece.size)
        pc = pair_piece[a:b]
        co = pair_col[a:b]
        own = owner[pc]
        xi_t = np.broadcast_to(it[None, None, :], (pc.size, ng, it.size))
        phi = basis.eval(xi_t, eta[pc][:, :, None])
        xph = mesh.x_a + (co[:, None, None] + xi_t + 0.5) * mesh.dx
        yph = mesh.y_a + ryg[pc][:, :, None] * mesh.dy
        fit = basis.eval(
            (xph - centers[own, 0][:, None, None]) / mesh.dx,
            (yph - centers[own, 1][:, None, None]) / mesh.dy,
        )
        blocks = _blocks(phi, fit, own, wg[pc])
        cell = mesh.cell_index(co, piy[pc])
        rows = own[:, None, None] * d + marange[None, :, None]
        cols = cell[:, None, None] * d + marange[None, None, :]
        _emit(np.broadcast_to(rows, blocks.shape), np.broadcast_to(cols, blocks.shape), blocks)

    n = mesh.ncells * d
    R = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(n, n),
    )
    return R.tocsr()
