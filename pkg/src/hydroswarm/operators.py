"""Discrete operators: upwind fluxes, masked gradients, viscous matrices.

Conventions.  Fields are cell-centered; faces sit between axis neighbors.
Three face types occur:

* open        - both cells belong to the computational domain (transport) or
                both are fluid (viscosity); normal upwind flux / gradient.
* wall        - the face lies on the domain boundary (box faces, or the ball
                surface in ball mode): zero normal mass flux, no-slip velocity
                via a mirrored ghost (u_ghost = -u_cell).
* stress-free - a fluid cell against a vacuum cell inside the domain: the
                vacuum exerts no stress (u_ghost = u_cell), and no gradient
                row is emitted, so an isolated blob exchanges no momentum
                with distant walls.

The viscous operator is mu * G^T G + (lam + mu) * D^T D built from the face
gradient G and cell divergence D below; u^T V u * h^d is exactly the viscous
dissipation the energy ledger reports, which makes the discrete energy
inequality telescope against the implicit solve.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fields import Grid

__all__ = [
    "domain_mask",
    "transport_open_faces",
    "upwind_flux_divergence",
    "pressure_gradient",
    "gradient_faces",
    "divergence_cells",
    "viscous_matrix",
    "neumann_laplacian",
    "velocity_gradient_sq",
    "divergence_sq",
]


def _slice(d: int, axis: int, s: slice):
    out = [slice(None)] * d
    out[axis] = s
    return tuple(out)


def domain_mask(grid: Grid) -> np.ndarray:
    return grid.interior_mask()


def transport_open_faces(grid: Grid, mask: np.ndarray | None = None) -> list[np.ndarray]:
    """Per axis: True on interior faces connecting two in-domain cells."""
    if mask is None:
        mask = domain_mask(grid)
    faces = []
    for axis in range(grid.d):
        lo = _slice(grid.d, axis, slice(None, -1))
        hi = _slice(grid.d, axis, slice(1, None))
        faces.append(mask[lo] & mask[hi])
    return faces


def upwind_flux_divergence(grid: Grid, quantity: np.ndarray, u: np.ndarray,
                           open_faces: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """div of upwind face fluxes of `quantity` advected by u.

    Face velocity is the neighbor average, the advected value comes from the
    upwind side, and fluxes across closed faces vanish, so the cell sum of
    the result telescopes to zero exactly (discrete conservation).  Also
    returns the outward flux the domain walls suppressed, as a leak indicator.
    """
    div = np.zeros(grid.shape)
    blocked = 0.0
    for axis in range(grid.d):
        h = grid.h[axis]
        lo = _slice(grid.d, axis, slice(None, -1))
        hi = _slice(grid.d, axis, slice(1, None))
        uf = 0.5 * (u[axis][lo] + u[axis][hi])
        up = np.where(uf > 0.0, quantity[lo], quantity[hi])
        flux = np.where(open_faces[axis], uf * up, 0.0)
        div[lo] += flux / h
        div[hi] -= flux / h
        first = _slice(grid.d, axis, slice(0, 1))
        last = _slice(grid.d, axis, slice(-1, None))
        area = grid.cell_volume / h
        blocked += float(np.maximum(-u[axis][first] * quantity[first], 0.0).sum()) * area
        blocked += float(np.maximum(u[axis][last] * quantity[last], 0.0).sum()) * area
    return div, blocked


def pressure_gradient(grid: Grid, p: np.ndarray,
                      open_faces: list[np.ndarray] | None = None) -> np.ndarray:
    """Conservative face-form gradient: differences of averaged face values.

    Interior contributions telescope, so the domain-summed gradient reduces
    to boundary face values (walls pushing on the fluid).
    """
    out = np.zeros((grid.d,) + grid.shape)
    for axis in range(grid.d):
        h = grid.h[axis]
        lo = _slice(grid.d, axis, slice(None, -1))
        hi = _slice(grid.d, axis, slice(1, None))
        pf = 0.5 * (p[lo] + p[hi])
        if open_faces is not None:
            # closed interior faces act as walls: face pressure = own cell's
            pf = np.where(open_faces[axis], pf, 0.0)
        g = out[axis]
        g[lo] += pf / h
        g[hi] -= pf / h
        if open_faces is not None:
            closed = ~open_faces[axis]
            g[lo] += np.where(closed, p[lo], 0.0) / h
            g[hi] -= np.where(closed, p[hi], 0.0) / h
        first = _slice(grid.d, axis, slice(0, 1))
        last = _slice(grid.d, axis, slice(-1, None))
        g[first] -= p[first] / h
        g[last] += p[last] / h
    return out


def _neighbor_indices(grid: Grid):
    return np.arange(grid.n_cells).reshape(grid.shape)


def _face_masks(grid: Grid, fluid: np.ndarray, axis: int):
    """(open, lo_wall, hi_wall) for the viscous stencils along one axis.

    open: interior faces between two fluid cells.  lo_wall/hi_wall: fluid
    cells whose lower/upper face along `axis` is a wall (domain edge, or the
    ball surface).  Fluid-vacuum faces are neither: stress-free.
    """
    d = grid.d
    lo = _slice(d, axis, slice(None, -1))
    hi = _slice(d, axis, slice(1, None))
    open_faces = fluid[lo] & fluid[hi]

    lo_wall = np.zeros(grid.shape, dtype=bool)
    hi_wall = np.zeros(grid.shape, dtype=bool)
    first = _slice(d, axis, slice(0, 1))
    last = _slice(d, axis, slice(-1, None))
    lo_wall[first] = fluid[first]
    hi_wall[last] = fluid[last]
    if grid.domain_kind == "ball":
        inside = grid.interior_mask()
        # fluid cell with an out-of-ball neighbor: that face is the ball surface
        lo_wall[hi] |= fluid[hi] & ~inside[lo]
        hi_wall[lo] |= fluid[lo] & ~inside[hi]
    return open_faces, lo_wall, hi_wall


def gradient_faces(grid: Grid, fluid: np.ndarray) -> sp.csr_matrix:
    """Face gradient G: open faces (u_hi - u_lo)/h, wall faces +/- 2 u/h."""
    idx = _neighbor_indices(grid)
    rows_parts, cols_parts, vals_parts = [], [], []
    r = 0
    for axis in range(grid.d):
        h = grid.h[axis]
        open_faces, lo_wall, hi_wall = _face_masks(grid, fluid, axis)
        lo = _slice(grid.d, axis, slice(None, -1))
        hi = _slice(grid.d, axis, slice(1, None))
        i_lo = idx[lo][open_faces]
        i_hi = idx[hi][open_faces]
        nf = i_lo.size
        rows_parts.append(np.repeat(np.arange(r, r + nf), 2))
        cols_parts.append(np.column_stack([i_lo, i_hi]).ravel())
        vals_parts.append(np.tile([-1.0 / h, 1.0 / h], nf))
        r += nf
        for wall, sign in ((lo_wall, 2.0 / h), (hi_wall, -2.0 / h)):
            cw = idx[wall]
            rows_parts.append(np.arange(r, r + cw.size))
            cols_parts.append(cw)
            vals_parts.append(np.full(cw.size, sign))
            r += cw.size
    rows = np.concatenate(rows_parts) if rows_parts else np.empty(0, int)
    cols = np.concatenate(cols_parts) if cols_parts else np.empty(0, int)
    vals = np.concatenate(vals_parts) if vals_parts else np.empty(0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, grid.n_cells))


def divergence_cells(grid: Grid, fluid: np.ndarray) -> sp.csr_matrix:
    """Cell divergence D on stacked components, centered differences with
    mirrored ghosts at walls and copied ghosts at stress-free faces."""
    n_cells = grid.n_cells
    idx = _neighbor_indices(grid)
    rows_parts, cols_parts, vals_parts = [], [], []
    for axis in range(grid.d):
        h = grid.h[axis]
        shift = axis * n_cells
        open_faces, lo_wall, hi_wall = _face_masks(grid, fluid, axis)
        lo = _slice(grid.d, axis, slice(None, -1))
        hi = _slice(grid.d, axis, slice(1, None))

        # neighbor-availability masks per cell
        hi_fluid = np.zeros(grid.shape, dtype=bool)
        lo_fluid = np.zeros(grid.shape, dtype=bool)
        hi_fluid[lo] = open_faces
        lo_fluid[hi] = open_faces
        hi_idx = np.zeros(grid.shape, dtype=int)
        lo_idx = np.zeros(grid.shape, dtype=int)
        hi_idx[lo] = idx[hi]
        lo_idx[hi] = idx[lo]

        for nb_fluid, nb_idx, wall, s_open, s_wall, s_free in (
            (hi_fluid, hi_idx, hi_wall, 0.5 / h, -0.5 / h, 0.5 / h),
            (lo_fluid, lo_idx, lo_wall, -0.5 / h, 0.5 / h, -0.5 / h),
        ):
            sel = fluid & nb_fluid
            rows_parts.append(idx[sel])
            cols_parts.append(shift + nb_idx[sel])
            vals_parts.append(np.full(sel.sum(), s_open))
            sel = fluid & wall
            rows_parts.append(idx[sel])
            cols_parts.append(shift + idx[sel])
            vals_parts.append(np.full(sel.sum(), s_wall))
            sel = fluid & ~nb_fluid & ~wall
            rows_parts.append(idx[sel])
            cols_parts.append(shift + idx[sel])
            vals_parts.append(np.full(sel.sum(), s_free))
    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_cells, grid.d * n_cells))


def viscous_matrix(grid: Grid, fluid: np.ndarray, mu: float, lam: float):
    """(V, G, D) with V = mu G^T G + (lam + mu) D^T D on stacked components."""
    G = gradient_faces(grid, fluid)
    D = divergence_cells(grid, fluid)
    GtG = (G.T @ G).tocsr()
    if grid.d == 1:
        V = mu * GtG
    else:
        V = sp.block_diag([mu * GtG] * grid.d, format="csr")
    V = V + (lam + mu) * (D.T @ D)
    return V.tocsr(), G, D


def neumann_laplacian(grid: Grid, mask: np.ndarray | None = None) -> sp.csr_matrix:
    """Zero-flux Laplacian over in-domain cells; row sums vanish, so implicit
    diffusion solves conserve the cell sum exactly (up to round-off)."""
    if mask is None:
        mask = domain_mask(grid)
    idx = _neighbor_indices(grid)
    rows_parts, cols_parts, vals_parts = [], [], []
    for axis in range(grid.d):
        h2 = grid.h[axis] ** 2
        lo = _slice(grid.d, axis, slice(None, -1))
        hi = _slice(grid.d, axis, slice(1, None))
        open_faces = mask[lo] & mask[hi]
        a = idx[lo][open_faces]
        b = idx[hi][open_faces]
        rows_parts.append(np.concatenate([a, a, b, b]))
        cols_parts.append(np.concatenate([a, b, b, a]))
        n = a.size
        vals_parts.append(
            np.concatenate(
                [
                    np.full(n, -1.0 / h2),
                    np.full(n, 1.0 / h2),
                    np.full(n, -1.0 / h2),
                    np.full(n, 1.0 / h2),
                ]
            )
        )
    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_cells, grid.n_cells))


def velocity_gradient_sq(grid: Grid, fluid: np.ndarray, u: np.ndarray,
                         G: sp.csr_matrix | None = None) -> float:
    """sum_k |G u_k|^2 h^d -- the gradient part of the viscous dissipation."""
    if G is None:
        G = gradient_faces(grid, fluid)
    total = 0.0
    for k in range(grid.d):
        g = G @ u[k].ravel()
        total += float(g @ g)
    return total * grid.cell_volume


def divergence_sq(grid: Grid, fluid: np.ndarray, u: np.ndarray,
                  D: sp.csr_matrix | None = None) -> float:
    """|D u|^2 h^d -- the divergence part of the viscous dissipation."""
    if D is None:
        D = divergence_cells(grid, fluid)
    div = D @ u.reshape(grid.d, -1).ravel()
    return float(div @ div) * grid.cell_volume
