"""Cell-centered fields on uniform Cartesian grids and their integral functionals.

The state of the flow at one instant is a nonnegative density rho and a
momentum density m = rho*u, both stored cell-centered on a uniform mesh over
a box [-L, L]^d, d in {1, 2}.  Two domain flavors exist: a plain truncation
box standing in for the whole space (mass kept away from the faces by the
confinement potential) and a discrete ball |x| < r cut out of the box, with
cells outside the ball treated as solid wall.

Reductions (mass, moments, Lp norms) are midpoint Riemann sums with cell
volume h^d.  Fields are treated as immutable snapshots once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "State",
    "total_mass",
    "first_moment",
    "lp_norm",
    "write_field",
    "read_field",
]

BOX = "box"
BALL = "ball"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh over [-L0, L0] x ... with N cells per axis.

    domain_kind is "box" (whole-space truncation) or "ball" (cells with
    center inside |x| < ball_radius are fluid, the rest is wall).
    """

    d: int
    n: tuple[int, ...]
    extent: tuple[float, ...]
    domain_kind: str = BOX
    ball_radius: float | None = None

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.d}")
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        extent = tuple(float(v) for v in np.atleast_1d(self.extent))
        if len(n) == 1 and self.d == 2:
            n = n * 2
        if len(extent) == 1 and self.d == 2:
            extent = extent * 2
        if len(n) != self.d or len(extent) != self.d:
            raise ValueError("per-axis sizes do not match dimension")
        if any(v < 4 for v in n):
            raise ValueError(f"need at least 4 cells per axis, got {n}")
        if any(v <= 0 for v in extent):
            raise ValueError(f"extent must be positive, got {extent}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "extent", extent)
        if self.domain_kind not in (BOX, BALL):
            raise ValueError(f"unknown domain_kind {self.domain_kind!r}")
        if self.domain_kind == BALL:
            r = self.ball_radius
            if r is None or r <= 0 or r > min(extent):
                raise ValueError("ball domain needs 0 < ball_radius <= min extent")

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(2.0 * L / nk for L, nk in zip(self.extent, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis_centers(self, axis: int) -> np.ndarray:
        L, nk = self.extent[axis], self.n[axis]
        h = 2.0 * L / nk
        return -L + (np.arange(nk) + 0.5) * h

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape (d, *shape)."""
        axes = [self.axis_centers(k) for k in range(self.d)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def radii(self) -> np.ndarray:
        return np.sqrt((self.centers() ** 2).sum(axis=0))

    def interior_mask(self) -> np.ndarray:
        """True on fluid cells: everything for a box, |center| < r for a ball."""
        if self.domain_kind == BOX:
            return np.ones(self.shape, dtype=bool)
        return self.radii() < self.ball_radius

    def compatible(self, other: "Grid") -> bool:
        return (
            self.d == other.d
            and self.n == other.n
            and self.extent == other.extent
            and self.domain_kind == other.domain_kind
            and self.ball_radius == other.ball_radius
        )

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(
            self.d,
            tuple(factor * v for v in self.n),
            self.extent,
            self.domain_kind,
            self.ball_radius,
        )


def _check_values(grid: Grid, values: np.ndarray, vector: bool) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    want = (grid.d,) + grid.shape if vector else grid.shape
    if values.shape != want:
        raise ValueError(f"field shape {values.shape} does not match grid {want}")
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    return values


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, False))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if not self.grid.compatible(other.grid):
            raise ValueError("grid mismatch")
        return ScalarField(self.grid, self.values + other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    """d values per cell, stored component-major: values[k] is component k."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_values(self.grid, self.values, True)
        )

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.d,) + grid.shape))


@dataclass(frozen=True)
class State:
    """Density and momentum snapshot at time t.

    Invariants: rho >= 0 everywhere, and momentum vanishes wherever the
    density does (initial compatibility m0 = 0 whenever rho0 = 0, preserved
    by the solver's vacuum handling).
    """

    t: float
    rho: ScalarField
    mom: VectorField

    def __post_init__(self):
        if not self.rho.grid.compatible(self.mom.grid):
            raise ValueError("rho and mom live on different grids")
        if np.any(self.rho.values < 0):
            raise ValueError("density must be nonnegative")
        vac = self.rho.values == 0.0
        if np.any(self.mom.values[:, vac] != 0.0):
            raise ValueError("momentum must vanish on vacuum cells")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def velocity(self, floor: float = 0.0) -> np.ndarray:
        """u = m/rho with u := 0 below the vacuum floor, shape (d, *shape)."""
        rho = self.rho.values
        keep = rho > max(floor, 0.0)
        u = np.zeros_like(self.mom.values)
        np.divide(self.mom.values, rho, out=u, where=keep[None])
        u[:, ~keep] = 0.0
        return u


def total_mass(s: State) -> float:
    """Sum of rho * h^d over all cells."""
    return float(s.rho.values.sum() * s.grid.cell_volume)


def first_moment(s: State) -> np.ndarray:
    """Integral of x * rho, one entry per axis (center of mass times mass)."""
    x = s.grid.centers()
    return (x * s.rho.values).reshape(s.grid.d, -1).sum(axis=1) * s.grid.cell_volume


def lp_norm(f: ScalarField, p: float) -> float:
    """(sum |f|^p h^d)^(1/p); p must be finite and >= 1."""
    p = float(p)
    if not np.isfinite(p) or p < 1.0:
        raise ValueError(f"lp_norm needs finite p >= 1, got {p}")
    return float((np.abs(f.values) ** p).sum() * f.grid.cell_volume) ** (1.0 / p)


# --- snapshot format -------------------------------------------------------
#
# Text header (ascii, one "key value" pair per line, terminated by "end"),
# then raw row-major little-endian float64 cell values.  Vector fields store
# component blocks back to back.

_MAGIC = "hydroswarm-field 1"


def write_field(path, field: ScalarField | VectorField, time: float = 0.0) -> None:
    grid = field.grid
    kind = "scalar" if isinstance(field, ScalarField) else "vector"
    lines = [
        _MAGIC,
        f"kind {kind}",
        f"dim {grid.d}",
        "n " + " ".join(str(v) for v in grid.n),
        "extent " + " ".join(repr(float(v)) for v in grid.extent),
        f"domain {grid.domain_kind}"
        + (f" {grid.ball_radius!r}" if grid.domain_kind == BALL else ""),
        f"time {float(time)!r}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path) -> tuple[ScalarField | VectorField, float]:
    with open(path, "rb") as fh:
        header: dict[str, str] = {}
        first = fh.readline().decode("ascii").strip()
        if first != _MAGIC:
            raise ValueError(f"{path}: not a field snapshot (bad magic {first!r})")
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "end":
                break
            if not line:
                raise ValueError(f"{path}: truncated header")
            key, _, rest = line.partition(" ")
            header[key] = rest
        payload = fh.read()

    d = int(header["dim"])
    n = tuple(int(v) for v in header["n"].split())
    extent = tuple(float(v) for v in header["extent"].split())
    dom = header["domain"].split()
    grid = Grid(
        d,
        n,
        extent,
        domain_kind=dom[0],
        ball_radius=float(dom[1]) if len(dom) > 1 else None,
    )
    time = float(header["time"])
    n_cells = grid.n_cells
    values = np.frombuffer(payload, dtype="<f8")
    if header["kind"] == "scalar":
        if values.size != n_cells:
            raise ValueError(f"{path}: expected {n_cells} values, got {values.size}")
        return ScalarField(grid, values.reshape(grid.shape).copy()), time
    if values.size != d * n_cells:
        raise ValueError(f"{path}: expected {d * n_cells} values, got {values.size}")
    return VectorField(grid, values.reshape((d,) + grid.shape).copy()), time
