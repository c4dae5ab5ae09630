"""
Uniform 1D/2D lattices, scalar/vector fields on them, and the smoothing
pipeline used to prepare Lipschitz initial data.

Arrays are stored row-major with axis 0 running along x. A Dirichlet grid
keeps a one-cell frame on every side that time stepping never touches; a
periodic grid has no frame and every cell is interior.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from plmodica import kernels

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
_BOUNDARIES = (PERIODIC, DIRICHLET)

PLMF_MAGIC = b"PLMF"
PLMF_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform lattice with spacing ``h`` and cell ``i`` at ``origin + i*h``."""

    shape: tuple[int, ...]
    h: float
    origin: tuple[float, ...] | None = None
    boundary: str = DIRICHLET

    def __post_init__(self):
        shape = tuple(int(c) for c in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if any(c < 4 for c in shape):
            raise ValueError("need at least 4 cells per axis")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError("spacing h must be positive")
        if self.boundary not in _BOUNDARIES:
            raise ValueError(f"unknown boundary policy {self.boundary!r}")
        origin = (0.0,) * len(shape) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(shape):
            raise ValueError("origin must have one entry per axis")
        object.__setattr__(self, "origin", origin)

    @classmethod
    def from_extent(cls, extent, h, boundary=DIRICHLET):
        """Build a grid covering ``extent`` = ((lo, hi), ...) at spacing ``h``.

        Dirichlet grids include both endpoints (they become frame cells);
        periodic grids cover the half-open box [lo, hi).
        """
        extent = [tuple(map(float, e)) for e in extent]
        counts = []
        for lo, hi in extent:
            if not hi > lo:
                raise ValueError("extent must satisfy lo < hi")
            cells = (hi - lo) / h
            k = round(cells)
            if abs(cells - k) > 1e-8 * max(1.0, cells):
                raise ValueError(f"extent length {hi - lo} is not a multiple of h={h}")
            counts.append(k if boundary == PERIODIC else k + 1)
        return cls(tuple(counts), float(h), tuple(lo for lo, _ in extent), boundary)

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.h * np.arange(self.shape[k])

    def coords(self) -> list[np.ndarray]:
        """Coordinate arrays broadcast to the grid shape (``indexing='ij'``)."""
        return np.meshgrid(*(self.axis(k) for k in range(self.n)), indexing="ij")

    def interior(self) -> tuple[slice, ...]:
        if self.periodic:
            return (slice(None),) * self.n
        return (slice(1, -1),) * self.n

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.interior()] = True
        return mask


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.isfinite(v).all():
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, grid: Grid, func) -> "ScalarField":
        return cls(grid, np.broadcast_to(func(*grid.coords()), grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior()]

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)


@dataclass(frozen=True)
class VectorField:
    """Components stacked along axis 0: ``components[k]`` is the x_k part."""

    grid: Grid
    components: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.ascontiguousarray(self.components, dtype=np.float64)
        if c.shape != (self.grid.n, *self.grid.shape):
            raise ValueError("vector field must have n components of grid shape")
        if not np.isfinite(c).all():
            raise ValueError("vector field contains non-finite values")
        c.setflags(write=False)
        object.__setattr__(self, "components", c)

    def norm(self) -> np.ndarray:
        """Pointwise Euclidean length."""
        return np.sqrt(np.sum(self.components**2, axis=0))

    def sup_norm(self, interior_only: bool = False) -> float:
        mag = self.norm()
        if interior_only:
            mag = mag[self.grid.interior()]
        return float(mag.max())


def sup_norm(field: ScalarField | np.ndarray) -> float:
    values = field.values if isinstance(field, ScalarField) else np.asarray(field)
    if values.size == 0:
        raise ValueError("empty field")
    return float(np.max(np.abs(values)))


def gradient_array(values: np.ndarray, h: float, periodic: bool) -> np.ndarray:
    """Central differences; wrapped when periodic, first-order one-sided on the frame otherwise."""
    out = np.empty((values.ndim, *values.shape))
    for k in range(values.ndim):
        if periodic:
            out[k] = (np.roll(values, -1, axis=k) - np.roll(values, 1, axis=k)) / (2.0 * h)
            continue
        d = np.empty_like(values)
        v = np.moveaxis(values, k, 0)
        dv = np.moveaxis(d, k, 0)
        dv[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
        dv[0] = (v[1] - v[0]) / h
        dv[-1] = (v[-1] - v[-2]) / h
        out[k] = d
    return out


def gradient(u: ScalarField) -> VectorField:
    return VectorField(u.grid, gradient_array(u.values, u.grid.h, u.grid.periodic))


def bump_kernel(radius: float, h: float, n: int) -> np.ndarray:
    """Unit-mass discrete bump exp(-1/(1 - |x/r|^2)) on an odd stencil.

    Returned shape is (2W+1,) * n where W = floor(radius / h).
    """
    if radius < h:
        raise ValueError("kernel under-resolved")
    half = int(math.floor(radius / h + 1e-12))
    offsets = np.arange(-half, half + 1) * h
    rr = sum(o**2 for o in np.meshgrid(*([offsets] * n), indexing="ij")) / radius**2
    w = np.zeros_like(rr)
    inside = rr < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - rr[inside]))
    return w / w.sum()


def pad_for_kernel(values: np.ndarray, half: int, periodic: bool) -> np.ndarray:
    """Extend by ``half`` cells: wrap for periodic data, replicate the frame otherwise.

    Edge replication is a Lipschitz extension with the same sup-norm and
    gradient bound as the datum.
    """
    return np.pad(values, half, mode="wrap" if periodic else "edge")


def mollify(g: ScalarField, radius: float) -> ScalarField:
    w = bump_kernel(radius, g.grid.h, g.grid.n)
    half = w.shape[0] // 2
    padded = pad_for_kernel(g.values, half, g.grid.periodic)
    return g.with_values(kernels.convolve(padded, w))


@dataclass
class JensenReport:
    worst_violation: float
    location: tuple[int, ...]
    passed: bool
    tolerance: float = 1e-10

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        return [
            f"jensen worst violation {self.worst_violation:.3e} at cell {self.location} "
            f"threshold {self.tolerance:.1e} {status}"
        ]


def jensen_report(g: ScalarField, p: float, radius: float, tol: float = 1e-10) -> JensenReport:
    """Check |D(g_k)|^p <= (|Dg|^p)_k on interior cells, where ``_k`` is mollification."""
    if not 1.0 < p <= 2.0:
        raise ValueError("p must lie in (1, 2]")
    gk = mollify(g, radius)
    lhs = gradient(gk).norm() ** p
    rhs = mollify(g.with_values(gradient(g).norm() ** p), radius).values
    excess = (lhs - rhs)[g.grid.interior()]
    idx = np.unravel_index(int(np.argmax(excess)), excess.shape)
    if not g.grid.periodic:
        idx = tuple(i + 1 for i in idx)
    worst = float(excess.max())
    return JensenReport(worst, tuple(int(i) for i in idx), worst <= tol, tol)


def write_plmf(path, field: ScalarField, time: float = 0.0) -> Path:
    """Binary snapshot: magic, u32 version, u32 n, u64 counts, f64 h, f64 time, f64 values (LE, row-major)."""
    path = Path(path)
    grid = field.grid
    header = PLMF_MAGIC + struct.pack("<II", PLMF_VERSION, grid.n)
    header += struct.pack(f"<{grid.n}Q", *grid.shape)
    header += struct.pack("<dd", grid.h, float(time))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))
    return path


@dataclass
class Snapshot:
    values: np.ndarray
    h: float
    time: float

    @property
    def shape(self):
        return self.values.shape


def read_plmf(path) -> Snapshot:
    data = Path(path).read_bytes()
    if data[:4] != PLMF_MAGIC:
        raise ValueError(f"{path}: not a PLMF snapshot")
    version, n = struct.unpack_from("<II", data, 4)
    if version != PLMF_VERSION:
        raise ValueError(f"{path}: unsupported PLMF version {version}")
    if n not in (1, 2):
        raise ValueError(f"{path}: bad dimension {n}")
    off = 12
    shape = struct.unpack_from(f"<{n}Q", data, off)
    off += 8 * n
    h, time = struct.unpack_from("<dd", data, off)
    off += 16
    count = int(np.prod(shape))
    if len(data) - off != 8 * count:
        raise ValueError(f"{path}: payload size does not match header")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
    return Snapshot(values, h, time)
