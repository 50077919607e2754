"""Discrete convolutions K*rho, grad K*rho and the alignment exchange term.

The density is extended by zero outside the grid, so linear (non-periodic)
convolution is required.  The spectral path zero-pads every axis to twice the
cell count, which makes the circular FFT convolution coincide with the linear
one on the original cells; the direct path is a literal double sum over cells
and serves as the independent oracle.

All kernels are sampled at cell-center displacement vectors (2N-1 offsets per
axis); power-law kernels are sampled in their mollified form so force fields
stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import Grid, ScalarField, State, VectorField
from .potentials import KernelSpec, eval_gradient, eval_potential

__all__ = ["ConvolutionPlan", "conv_scalar", "conv_force", "conv_alignment"]

SPECTRAL = "spectral"
DIRECT = "direct"


def _offset_coords(grid: Grid) -> np.ndarray:
    """Displacement vectors x_i - x_j between cell centers, shape (d, 2N-1, ...)."""
    axes = []
    for k in range(grid.d):
        h = grid.h[k]
        n = grid.n[k]
        axes.append(h * np.arange(-(n - 1), n))
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def _sample_kernel(spec: KernelSpec, grid: Grid, gradient: bool) -> np.ndarray:
    if spec.kind == "power-law":
        spec = replace(spec, mollify_radius=min(grid.h) / 2.0)
    pts = _offset_coords(grid)
    if gradient:
        return eval_gradient(spec, pts)  # (d, 2N-1, ...)
    return eval_potential(spec, pts)  # (2N-1, ...)


def _circulant_embed(table: np.ndarray, grid: Grid) -> np.ndarray:
    """Arrange an offset table (2N-1 per axis) into the padded 2N circulant
    layout: index k holds offset k*h for k < N and (k-2N)*h for k > N; the
    unused slot k = N never touches valid outputs."""
    padded_shape = tuple(2 * n for n in grid.n)
    out = np.zeros(padded_shape)
    idx = []
    for n in table.shape[-grid.d:]:
        nn = (n + 1) // 2  # = N
        order = np.empty(n + 1, dtype=int)  # map padded index -> table index
        order[:nn] = np.arange(nn - 1, 2 * nn - 1)  # offsets 0 .. N-1
        order[nn + 1 :] = np.arange(0, nn - 1)  # offsets -(N-1) .. -1
        order[nn] = 2 * nn - 2  # dead slot, any value
        idx.append(order)
    if grid.d == 1:
        out[:] = table[idx[0]]
    else:
        out[:] = table[np.ix_(idx[0], idx[1])]
    return out


@dataclass(frozen=True)
class ConvolutionPlan:
    """Precomputed kernel samples/spectra for one grid.

    Holds the interaction kernel K, its analytic gradient components, and the
    (optional) alignment kernel psi.  Immutable; safe to share across runs.
    """

    grid: Grid
    method: str
    tables: dict
    spectra: dict

    @classmethod
    def build(
        cls,
        grid: Grid,
        kernel: KernelSpec | None = None,
        psi: KernelSpec | None = None,
        method: str = SPECTRAL,
    ) -> "ConvolutionPlan":
        if method not in (SPECTRAL, DIRECT):
            raise ValueError(f"unknown convolution method {method!r}")
        tables: dict[str, np.ndarray] = {}
        if kernel is not None and not kernel.is_zero:
            tables["K"] = _sample_kernel(kernel, grid, gradient=False)
            gk = _sample_kernel(kernel, grid, gradient=True)
            for k in range(grid.d):
                tables[f"gradK{k}"] = gk[k]
        if psi is not None and not psi.is_zero:
            tab = _sample_kernel(psi, grid, gradient=False)
            if np.any(tab < -1e-14 * max(1.0, np.abs(tab).max())):
                raise ValueError("alignment kernel psi must be nonnegative")
            tables["psi"] = np.maximum(tab, 0.0)
        spectra = {
            name: np.fft.rfftn(_circulant_embed(tab, grid))
            for name, tab in tables.items()
        }
        return cls(grid=grid, method=method, tables=tables, spectra=spectra)

    def has(self, name: str) -> bool:
        return name in self.tables


def _convolve_values(plan: ConvolutionPlan, values: np.ndarray, name: str) -> np.ndarray:
    grid = plan.grid
    if name not in plan.tables:
        return np.zeros(grid.shape)
    if plan.method == SPECTRAL:
        padded = tuple(2 * n for n in grid.n)
        axes = tuple(range(grid.d))
        spec = np.fft.rfftn(values, s=padded, axes=axes)
        out = np.fft.irfftn(spec * plan.spectra[name], s=padded, axes=axes)
        sl = tuple(slice(0, n) for n in grid.n)
        return out[sl] * grid.cell_volume
    return _direct_sum(plan.tables[name], values, grid) * grid.cell_volume


def _direct_sum(table: np.ndarray, values: np.ndarray, grid: Grid) -> np.ndarray:
    """out[i] = sum_j table[i - j + N - 1] values[j]; literal accumulation."""
    out = np.zeros(grid.shape)
    if grid.d == 1:
        (n,) = grid.n
        for j in range(n):
            w = values[j]
            if w == 0.0:
                continue
            out += w * table[n - 1 - j : 2 * n - 1 - j]
        return out
    n0, n1 = grid.n
    for j0 in range(n0):
        row = values[j0]
        block = table[n0 - 1 - j0 : 2 * n0 - 1 - j0]
        for j1 in range(n1):
            w = row[j1]
            if w == 0.0:
                continue
            out += w * block[:, n1 - 1 - j1 : 2 * n1 - 1 - j1]
    return out


def conv_scalar(plan: ConvolutionPlan, f: ScalarField, kernel: str = "K") -> ScalarField:
    """(kernel * f)(x_i) = sum_j kernel(x_i - x_j) f_j h^d, zero-extended."""
    if not plan.grid.compatible(f.grid):
        raise ValueError("field grid does not match convolution plan")
    if kernel not in ("K", "psi"):
        raise ValueError(f"conv_scalar kernel must be 'K' or 'psi', got {kernel!r}")
    return ScalarField(f.grid, _convolve_values(plan, f.values, kernel))


def conv_force(plan: ConvolutionPlan, rho: ScalarField) -> VectorField:
    """grad K * rho per component, from the analytically sampled gradient."""
    if not plan.grid.compatible(rho.grid):
        raise ValueError("field grid does not match convolution plan")
    comps = [
        _convolve_values(plan, rho.values, f"gradK{k}") for k in range(plan.grid.d)
    ]
    return VectorField(rho.grid, np.stack(comps))


def conv_alignment(plan: ConvolutionPlan, s: State, floor: float = 0.0) -> VectorField:
    """Velocity-exchange force rho (psi*(rho u)) - rho u (psi*rho).

    Splitting the integral of psi(x-y) (u(y) - u(x)) rho(y) against rho(x)
    into the two convolutions above; vanishes identically for spatially
    constant u and sums to zero over cells for symmetric psi.
    """
    if not plan.grid.compatible(s.grid):
        raise ValueError("state grid does not match convolution plan")
    if not plan.has("psi"):
        return VectorField.zeros(s.grid)
    rho = s.rho.values
    psi_rho = _convolve_values(plan, rho, "psi")
    out = np.empty_like(s.mom.values)
    for k in range(s.grid.d):
        psi_mom = _convolve_values(plan, s.mom.values[k], "psi")
        out[k] = rho * psi_mom - s.mom.values[k] * psi_rho
    return VectorField(s.grid, out)
