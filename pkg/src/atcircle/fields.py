"""Grids, circle-valued fields and their diagnostics.

Fields live on the nodes of a uniform box grid.  Arrays are indexed
``[i]`` in 1-D and ``[i, j]`` in 2-D with ``i`` running along x.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigurationError,
    DegeneratePlaquetteError,
    DimensionError,
    DomainError,
)

TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Reduce angles to ``[0, 2*pi)``."""
    t = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    return np.where(t >= TWO_PI, t - TWO_PI, t)


def principal_difference(d):
    """Representative of ``d`` modulo ``2*pi`` in ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(d, dtype=float), TWO_PI)


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on a box ``origin + [0, extents]``."""

    extents: tuple
    resolution: tuple
    origin: tuple = None

    def __post_init__(self):
        ext = tuple(float(e) for e in np.atleast_1d(self.extents))
        res = tuple(int(r) for r in np.atleast_1d(self.resolution))
        if len(ext) not in (1, 2) or len(res) != len(ext):
            raise DimensionError(f"grid must be 1-D or 2-D, got extents={ext} resolution={res}")
        if any(r < 2 for r in res):
            raise DomainError(f"resolution must be >= 2 per axis, got {res}")
        if any(e <= 0 for e in ext):
            raise DomainError(f"extents must be positive, got {ext}")
        org = (0.0,) * len(ext) if self.origin is None else tuple(float(o) for o in np.atleast_1d(self.origin))
        if len(org) != len(ext):
            raise DimensionError("origin and extents differ in length")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "origin", org)
        spacing = tuple(e / (r - 1) for e, r in zip(ext, res))
        if len(spacing) == 2 and abs(spacing[0] - spacing[1]) > 1e-12 * max(spacing):
            raise DimensionError(f"2-D grids must have square cells, got spacing {spacing}")

    @classmethod
    def interval(cls, n, length=1.0, origin=0.0):
        return cls((length,), (n,), (origin,))

    @classmethod
    def square(cls, n, side=1.0, origin=(0.0, 0.0)):
        return cls((side, side), (n, n), origin)

    @property
    def dim(self):
        return len(self.extents)

    @property
    def shape(self):
        return self.resolution

    @property
    def cell_shape(self):
        return tuple(r - 1 for r in self.resolution)

    @property
    def h(self):
        return self.extents[0] / (self.resolution[0] - 1)

    @property
    def cell_volume(self):
        return self.h ** self.dim

    @property
    def diameter(self):
        return float(np.hypot.reduce(self.extents)) if self.dim == 2 else self.extents[0]

    @property
    def face_length(self):
        """Measure of the face shared by two adjacent cells (1 in 1-D: counting measure)."""
        return 1.0 if self.dim == 1 else self.h

    def axes(self):
        return [o + np.linspace(0.0, e, r) for o, e, r in zip(self.origin, self.extents, self.resolution)]

    def coords(self):
        """Node coordinates, one array per axis, each of ``self.shape``."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def cell_centers(self):
        return np.meshgrid(*[0.5 * (a[:-1] + a[1:]) for a in self.axes()], indexing="ij")

    def node_weights(self):
        """Trapezoid quadrature weights at the nodes."""
        w = np.ones(self.shape)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            w[tuple(idx)] *= 0.5
            idx[axis] = -1
            w[tuple(idx)] *= 0.5
        return w * self.cell_volume

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        return mask

    def locate_cell(self, point):
        """Index of the cell containing ``point`` (interior points only)."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for axis in range(self.dim):
            rel = (p[axis] - self.origin[axis]) / self.h
            i = int(np.floor(rel))
            if not 0 <= i < self.cell_shape[axis]:
                raise DomainError(f"point {tuple(p)} lies outside the grid")
            idx.append(i)
        return tuple(idx)

    def snap_to_cell_center(self, point):
        """Nearest cell center to ``point``; ties go to the larger coordinate."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        out = []
        for axis in range(self.dim):
            rel = (p[axis] - self.origin[axis]) / self.h - 0.5
            i = int(np.floor(rel + 0.5))
            i = min(max(i, 0), self.cell_shape[axis] - 1)
            out.append(self.origin[axis] + (i + 0.5) * self.h)
        return np.array(out)


def _check_shape(grid, values, what):
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise DimensionError(f"{what} has shape {values.shape}, grid expects {grid.shape}")
    return values


@dataclass(frozen=True, eq=False)
class CircleField:
    """Map ``u = (cos theta, sin theta)`` stored by its base angle in ``[0, 2*pi)``."""

    grid: GridSpec
    theta: np.ndarray

    def __post_init__(self):
        theta = wrap_angle(_check_shape(self.grid, self.theta, "theta"))
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_vectors(cls, grid, u):
        u = np.asarray(u, dtype=float)
        return cls(grid, np.arctan2(u[..., 1], u[..., 0]))

    @property
    def u(self):
        return np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)

    @property
    def values(self):
        return self.theta


@dataclass(frozen=True, eq=False)
class AngleField:
    """Real-valued angle field, typically a lifting ``phi`` with ``exp(i phi) = u``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(_check_shape(self.grid, self.values, "phi"), dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def to_circle(self):
        return CircleField(self.grid, self.values)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Phase field ``v``; evaluators require ``0 <= v <= 1``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(_check_shape(self.grid, self.values, "v"), dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))


@dataclass(frozen=True, eq=False)
class ShiftField:
    """Integer shifts ``k`` turning base angles into the lifting ``theta + 2*pi*k``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(_check_shape(self.grid, self.values, "k"))
        if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
            raise DomainError("shift field must hold finite integers")
        vals = raw.astype(np.int64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class VortexConfig:
    """Point singularities with charges +-1."""

    positions: np.ndarray
    charges: np.ndarray = field(default=None)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        q = np.asarray(self.charges if self.charges is not None else [], dtype=np.int64).reshape(-1)
        if len(q) != len(pos):
            raise ConfigurationError("one charge per vortex position is required")
        if np.any(np.abs(q) != 1):
            raise ConfigurationError("charges must be +1 or -1")
        for a in range(len(pos)):
            for b in range(a + 1, len(pos)):
                if np.allclose(pos[a], pos[b]):
                    raise ConfigurationError(f"vortices {a} and {b} coincide")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "charges", q)

    @classmethod
    def dipole(cls, center=(0.5, 0.5), distance=0.5, axis=0):
        c = np.asarray(center, dtype=float)
        off = np.zeros(2)
        off[axis] = 0.5 * distance
        return cls([c - off, c + off], [1, -1])

    @property
    def total_charge(self):
        return int(self.charges.sum())

    def __len__(self):
        return len(self.charges)

    def snapped(self, grid):
        """Copy with every vortex moved to the nearest cell center of ``grid``."""
        if len(self) == 0:
            return self
        pos = np.array([grid.snap_to_cell_center(p) for p in self.positions])
        return VortexConfig(pos, self.charges)


# --------------------------------------------------------------------------
# constructors


def make_step_map(grid, delta):
    """Two constant pieces: angle 0 left of the x-midline, ``delta`` right of it."""
    if not 0.0 < delta <= np.pi:
        raise DomainError(f"delta must lie in (0, pi], got {delta}")
    x = grid.coords()[0]
    mid = grid.origin[0] + 0.5 * grid.extents[0]
    return CircleField(grid, np.where(x < mid, 0.0, float(delta)))


def make_step_lifting(grid, jump):
    """Lifting with a single jump of size ``jump`` across the x-midline."""
    x = grid.coords()[0]
    mid = grid.origin[0] + 0.5 * grid.extents[0]
    return AngleField(grid, np.where(x < mid, 0.0, float(jump)))


def _vortex_angle_sum(grid, config, balanced=True):
    if grid.dim != 2:
        raise DimensionError("vortex maps need a 2-D grid")
    if balanced and config.total_charge != 0:
        raise ConfigurationError(
            f"charges sum to {config.total_charge}; only balanced configurations are supported on a box"
        )
    cfg = config.snapped(grid)
    if len(cfg) and len({tuple(p) for p in np.round(cfg.positions / grid.h, 6)}) != len(cfg):
        raise ConfigurationError("two vortices share a cell on this grid")
    for p in cfg.positions:
        grid.locate_cell(p)
    x, y = grid.coords()
    phi = np.zeros(grid.shape)
    for p, q in zip(cfg.positions, cfg.charges):
        phi += q * np.arctan2(y - p[1], x - p[0])
    return phi, cfg


def make_dipole_map(grid, config):
    """Sum of +-atan2 vortices (placed at cell centers), reduced mod 2*pi."""
    phi, _ = _vortex_angle_sum(grid, config)
    return CircleField(grid, phi)


def make_vortex_map(grid, config):
    """Like :func:`make_dipole_map` without the balance requirement (local patches)."""
    phi, _ = _vortex_angle_sum(grid, config, balanced=False)
    return CircleField(grid, phi)


def make_dipole_lifting(grid, config):
    """Unreduced angle sum.

    Each atan2 branch cut runs from its vortex in the -x direction, so for
    pairs aligned with the x-axis the cuts cancel outside the segment and the
    lifting jumps by 2*pi exactly across the segment joining the pair.
    """
    phi, _ = _vortex_angle_sum(grid, config)
    return AngleField(grid, phi)


# --------------------------------------------------------------------------
# diagnostics


def _plaquette_differences(theta):
    a = theta[:-1, :-1]
    b = theta[1:, :-1]
    c = theta[1:, 1:]
    d = theta[:-1, 1:]
    return [principal_difference(b - a), principal_difference(c - b),
            principal_difference(d - c), principal_difference(a - d)]


def plaquette_windings(u, check_degenerate=True):
    """Winding of ``u`` around every cell, counterclockwise."""
    if u.grid.dim != 2:
        raise DimensionError("plaquette windings need a 2-D grid")
    diffs = _plaquette_differences(u.theta)
    if check_degenerate:
        bad = np.zeros(u.grid.cell_shape, dtype=bool)
        for d in diffs:
            bad |= np.isclose(np.abs(d), np.pi, rtol=0.0, atol=1e-12)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DegeneratePlaquetteError(f"edge difference of +-pi on cell ({i}, {j})")
    total = diffs[0] + diffs[1] + diffs[2] + diffs[3]
    return np.rint(total / TWO_PI).astype(np.int64)


def plaquette_winding(u, cell):
    """Winding of ``u`` around a single cell ``(i, j)``."""
    if u.grid.dim != 2:
        raise DimensionError("plaquette windings need a 2-D grid")
    i, j = cell
    if not (0 <= i < u.grid.cell_shape[0] and 0 <= j < u.grid.cell_shape[1]):
        raise DomainError(f"cell {cell} is not a cell of the grid")
    sub = CircleField(GridSpec.square(2, u.grid.h), u.theta[i:i + 2, j:j + 2])
    return int(plaquette_windings(sub)[0, 0])


def loop_winding(u, i0, i1, j0, j1):
    """Winding along the boundary of the node rectangle ``[i0, i1] x [j0, j1]``."""
    t = u.theta
    path = ([t[i, j0] for i in range(i0, i1 + 1)]
            + [t[i1, j] for j in range(j0 + 1, j1 + 1)]
            + [t[i, j1] for i in range(i1 - 1, i0 - 1, -1)]
            + [t[i0, j] for j in range(j1 - 1, j0 - 1, -1)])
    path = np.asarray(path)
    return int(np.rint(principal_difference(np.diff(path)).sum() / TWO_PI))


def lift_field(u, k):
    """``phi = theta + 2*pi*k``."""
    if k.grid.shape != u.grid.shape:
        raise DimensionError(f"shift field shape {k.grid.shape} != field shape {u.grid.shape}")
    return AngleField(u.grid, u.theta + TWO_PI * k.values)


def shifts_of(u, phi, atol=1e-9):
    """Recover the integer shifts ``k`` with ``phi = theta + 2*pi*k``."""
    r = (phi.values - u.theta) / TWO_PI
    k = np.rint(r)
    if np.max(np.abs(r - k), initial=0.0) > atol:
        raise DomainError("phi is not a lifting of u")
    return ShiftField(u.grid, k)


def _cell_values_and_face(phi, h):
    if isinstance(phi, (AngleField, CircleField, ScalarField)):
        return phi.values, phi.grid.h if h is None else h
    if h is None:
        raise DomainError("spacing h is required for raw arrays")
    return np.asarray(phi, dtype=float), h


def sigma_jump_length(phi, sigma, h=None):
    """Length of the edges across which ``phi`` jumps by at least ``sigma``.

    Values are read as one constant per cell; only nonzero jumps count.
    Each edge contributes ``h`` (1-D and 2-D alike).
    """
    if sigma < 0:
        raise DomainError(f"sigma must be nonnegative, got {sigma}")
    vals, h = _cell_values_and_face(phi, h)
    total = 0
    for axis in range(vals.ndim):
        jumps = np.abs(np.diff(vals, axis=axis))
        total += int(np.count_nonzero((jumps > 1e-12) & (jumps >= sigma)))
    return total * h


def jump_regions(labels):
    """Connected components of constant integer value (4-connectivity).

    Returns ``(region_ids, region_values)`` where ``region_ids`` has the shape
    of ``labels``.
    """
    labels = np.asarray(labels)
    ids = np.full(labels.shape, -1, dtype=np.int64)
    values = []
    next_id = 0
    for val in np.unique(labels):
        comp, n = ndimage.label(labels == val)
        for c in range(1, n + 1):
            ids[comp == c] = next_id
            values.append(val)
            next_id += 1
    return ids, np.asarray(values)


# --------------------------------------------------------------------------
# snapshots

_KINDS = {"theta": (1, CircleField), "phi": (2, AngleField), "v": (3, ScalarField), "k": (4, ShiftField)}
_KIND_BY_CODE = {code: (name, cls) for name, (code, cls) in _KINDS.items()}
_KIND_BY_CLASS = {cls: name for name, (code, cls) in _KINDS.items()}
_MAGIC = b"ATCF"
_HEADER = struct.Struct("<4sBBBx")


def save_field_csv(path, fld):
    """Write ``index, i[, j], x[, y], <kind>`` rows, one per node."""
    grid = fld.grid
    kind = _KIND_BY_CLASS[type(fld)]
    coords = grid.coords()
    idx = np.indices(grid.shape)
    axes = "ij"[: grid.dim]
    names = "xy"[: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *axes, *names, kind])
        for n, multi in enumerate(np.ndindex(*grid.shape)):
            val = fld.values[multi]
            w.writerow([n, *[int(idx[a][multi]) for a in range(grid.dim)],
                        *[repr(float(coords[a][multi])) for a in range(grid.dim)],
                        int(val) if kind == "k" else repr(float(val))])


def load_field_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    kind = header[-1]
    if kind not in _KINDS:
        raise ConfigurationError(f"unknown field column {kind!r}")
    dim = (len(header) - 2) // 2
    data = np.array(body, dtype=float)
    ij = data[:, 1:1 + dim].astype(int)
    xy = data[:, 1 + dim:1 + 2 * dim]
    res = tuple(int(ij[:, a].max()) + 1 for a in range(dim))
    origin = tuple(float(xy[:, a].min()) for a in range(dim))
    extents = tuple(float(xy[:, a].max() - xy[:, a].min()) for a in range(dim))
    grid = GridSpec(extents, res, origin)
    values = np.zeros(res)
    values[tuple(ij.T)] = data[:, -1]
    return _KINDS[kind][1](grid, values)


def save_field_binary(path, fld):
    """Self-describing binary: magic, kind, dims, resolution, origin, extents, payload (<f8)."""
    grid = fld.grid
    code = _KINDS[_KIND_BY_CLASS[type(fld)]][0]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, code, grid.dim))
        fh.write(np.asarray(grid.resolution, dtype="<u8").tobytes())
        fh.write(np.asarray(grid.origin, dtype="<f8").tobytes())
        fh.write(np.asarray(grid.extents, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_field_binary(path):
    raw = Path(path).read_bytes()
    magic, version, code, dim = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC or version != 1 or code not in _KIND_BY_CODE:
        raise ConfigurationError(f"{path} is not a field snapshot")
    off = _HEADER.size
    res = tuple(int(r) for r in np.frombuffer(raw, "<u8", dim, off))
    off += 8 * dim
    origin = tuple(np.frombuffer(raw, "<f8", dim, off))
    off += 8 * dim
    extents = tuple(np.frombuffer(raw, "<f8", dim, off))
    off += 8 * dim
    n = int(np.prod(res))
    if len(raw) - off != 8 * n:
        raise DimensionError(f"payload holds {(len(raw) - off) // 8} values, expected {n}")
    values = np.frombuffer(raw, "<f8", n, off).reshape(res).copy()
    return _KIND_BY_CODE[code][1](GridSpec(extents, res, origin), values)
