"""Model functions, the truncated jump cost and the discrete phase-field energies."""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError
from .fields import AngleField, CircleField, GridSpec, ScalarField, principal_difference

GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


@dataclass(frozen=True)
class ModelFunction:
    """A scalar function with an optional analytic derivative."""

    name: str
    fn: Callable
    deriv: Optional[Callable] = None

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def d(self, x):
        x = np.asarray(x, dtype=float)
        if self.deriv is not None:
            return self.deriv(x)
        step = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self.fn(x + step) - self.fn(x - step)) / (2.0 * step)


PSI = {
    "quadratic": ModelFunction("quadratic", lambda t: t * t, lambda t: 2.0 * t),
    "linear": ModelFunction("linear", lambda t: t * 1.0, lambda t: np.ones_like(t)),
    "cubic": ModelFunction("cubic", lambda t: t ** 3, lambda t: 3.0 * t * t),
}

F = {
    "linear": ModelFunction("linear", lambda t: t * 1.0, lambda t: np.ones_like(t)),
    "area": ModelFunction("area", lambda t: np.sqrt(1.0 + t * t), lambda t: t / np.sqrt(1.0 + t * t)),
    "area_shifted": ModelFunction("area_shifted", lambda t: np.sqrt(1.0 + t * t) - 1.0,
                                  lambda t: t / np.sqrt(1.0 + t * t)),
}

W = {
    "quadratic_well": ModelFunction("quadratic_well", lambda s: (1.0 - s) ** 2, lambda s: -2.0 * (1.0 - s)),
    "linear_well": ModelFunction("linear_well", lambda s: 1.0 - s, lambda s: -np.ones_like(s)),
    "quartic_well": ModelFunction("quartic_well", lambda s: (1.0 - s) ** 4, lambda s: -4.0 * (1.0 - s) ** 3),
}

_REGISTRIES = {"psi": PSI, "f": F, "W": W}


def resolve_function(spec, kind):
    """Turn a string tag or a callable into a :class:`ModelFunction`."""
    if isinstance(spec, ModelFunction):
        return spec
    if isinstance(spec, str):
        try:
            return _REGISTRIES[kind][spec]
        except KeyError:
            known = ", ".join(sorted(_REGISTRIES[kind]))
            raise ConfigurationError(f"unknown {kind} tag {spec!r} (known: {known})") from None
    if callable(spec):
        return ModelFunction(getattr(spec, "__name__", kind), spec)
    raise ConfigurationError(f"{kind} must be a tag or a callable, got {type(spec).__name__}")


def _check_hypotheses(psi, f, w):
    t = np.linspace(0.0, 1.0, 1001)
    p = psi(t)
    if abs(p[0]) > 1e-14 or abs(p[-1] - 1.0) > 1e-12:
        raise ConfigurationError(f"psi must satisfy psi(0)=0, psi(1)=1 (got {p[0]}, {p[-1]})")
    if np.any(np.diff(p) < -1e-12) or np.any(p[1:] <= 0.0):
        raise ConfigurationError("psi must be nondecreasing and positive on (0, 1]")
    s = np.linspace(0.0, 100.0, 2001)
    fs = f(s)
    if np.any(fs < -1e-14) or np.any(np.diff(fs) < -1e-12):
        raise ConfigurationError("f must be nonnegative and nondecreasing")
    if np.any(fs[2:] - 2.0 * fs[1:-1] + fs[:-2] < -1e-9):
        raise ConfigurationError("f must be convex")
    if abs(float(f(1e4)) / 1e4 - 1.0) > 0.01:
        raise ConfigurationError("f must have recession slope 1 (f(t)/t -> 1)")
    ws = w(t)
    if abs(ws[-1]) > 1e-14 or np.any(ws < 0.0):
        raise ConfigurationError("W must be nonnegative with W(1) = 0")
    if w(np.linspace(0.0, 1.0 - 1e-3, 1001)).min() <= 0.0:
        raise ConfigurationError("W must vanish only at s = 1")


@dataclass(frozen=True)
class EnergyParams:
    """The triple (psi, f, W), the length scale epsilon and numerical knobs.

    ``eta=None`` selects ``1e-6 * diameter`` of whatever grid the energy is
    evaluated on.
    """

    psi_spec: object = "quadratic"
    f_spec: object = "linear"
    W_spec: object = "quadratic_well"
    epsilon: float = 0.1
    eta: Optional[float] = None
    g_table_resolution: int = 1024

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.eta is not None and self.eta < 0:
            raise DomainError(f"eta must be nonnegative, got {self.eta}")
        if self.g_table_resolution < 3:
            raise DomainError("g_table_resolution must be at least 3")
        _check_hypotheses(self.psi, self.f, self.W)

    @cached_property
    def psi(self):
        return resolve_function(self.psi_spec, "psi")

    @cached_property
    def f(self):
        return resolve_function(self.f_spec, "f")

    @cached_property
    def W(self):
        return resolve_function(self.W_spec, "W")

    @property
    def is_default_pair(self):
        """True when the v-problem is linear (psi quadratic, W quadratic well)."""
        return self.psi.name == "quadratic" and self.W.name == "quadratic_well"

    @property
    def closed_form_tag(self):
        if self.is_default_pair:
            return "2z/(z+2)"
        return None

    def with_epsilon(self, epsilon):
        return dataclasses.replace(self, epsilon=float(epsilon))

    def eta_for(self, grid):
        return 1e-6 * grid.diameter if self.eta is None else float(self.eta)

    @cached_property
    def _cw(self):
        return _CwQuadrature(self.W)

    @cached_property
    def _g_grid(self):
        t = np.linspace(0.0, 1.0, self.g_table_resolution)
        return t, self.psi(t), 2.0 * self._cw(t)


# --------------------------------------------------------------------------
# c_W and g

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


class _CwQuadrature:
    """``2 * int_t^1 sqrt(W(s)) ds`` by composite 5-point Gauss-Legendre."""

    panels = 4096

    def __init__(self, w):
        self.sqrt_w = lambda s: np.sqrt(np.maximum(w(s), 0.0))
        edges = np.linspace(0.0, 1.0, self.panels + 1)
        per_panel = self._integrate(edges[:-1], edges[1:])
        self.edges = edges
        self.tail = np.concatenate([np.cumsum(per_panel[::-1])[::-1], [0.0]])

    def _integrate(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[..., None] + half[..., None] * _GL_X
        return half * (self.sqrt_w(nodes) @ _GL_W)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.floor(t * self.panels).astype(np.int64), 0, self.panels - 1)
        right = self.edges[j + 1]
        return 2.0 * (self.tail[j + 1] + self._integrate(t, right))


def eval_cW(params, t):
    """Optimal-profile constant ``2 * int_t^1 sqrt(W)``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0) or np.any(~np.isfinite(t_arr)):
        raise DomainError(f"c_W needs 0 <= t <= 1, got {t}")
    out = params._cw(t_arr)
    return float(out) if out.ndim == 0 else out


def _golden(fun, a, b, iters=60):
    """Vectorized golden-section search on brackets ``[a, b]``."""
    for _ in range(iters):
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        left = fun(c) <= fun(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    x = 0.5 * (a + b)
    return x, fun(x)


def eval_g_many(params, z):
    """Vectorized :func:`eval_g`; returns ``(values, argmins)`` arrays."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z < 0) or np.any(~np.isfinite(z)):
        raise DomainError("g is defined for finite z >= 0")
    t, psi_t, two_cw = params._g_grid
    n = len(t)
    vals = np.empty_like(z)
    args = np.empty_like(z)
    for start in range(0, len(z), 2048):
        zz = z[start:start + 2048]
        table = psi_t[None, :] * zz[:, None] + two_cw[None, :]
        idx = np.argmin(table, axis=1)
        best_v = table[np.arange(len(zz)), idx]
        best_t = t[idx]

        def obj(tt, zz=zz):
            return params.psi(tt) * zz + 2.0 * params._cw(tt)

        for lo, hi in ((np.maximum(idx - 1, 0), idx), (idx, np.minimum(idx + 1, n - 1))):
            a, b = t[lo], t[hi]
            x, fx = _golden(obj, a, b)
            better = (hi > lo) & ((fx < best_v) | ((fx == best_v) & (x < best_t)))
            best_v = np.where(better, fx, best_v)
            best_t = np.where(better, x, best_t)
        vals[start:start + 2048] = best_v
        args[start:start + 2048] = best_t
    return vals, args


def eval_g(params, z):
    """Truncated jump cost ``min_t psi(t) z + 2 c_W(t)`` and its smallest argmin."""
    if not np.isscalar(z) and np.ndim(z) != 0:
        raise DomainError("eval_g takes a scalar; use eval_g_many for arrays")
    v, t = eval_g_many(params, [float(z)])
    return float(v[0]), float(t[0])


@dataclass(frozen=True, eq=False)
class JumpCost:
    """Tabulated ``g`` with its argmin ``t*``; piecewise-linear in between samples."""

    params: EnergyParams
    samples: np.ndarray
    closed_form_tag: Optional[str] = None

    @classmethod
    def build(cls, params, z_max=40.0, n=4001):
        z = np.linspace(0.0, z_max, n)
        g, t = eval_g_many(params, z)
        return cls(params, np.column_stack([z, g, t]), params.closed_form_tag)

    @property
    def z(self):
        return self.samples[:, 0]

    @property
    def z_max(self):
        return self.samples[-1, 0]

    @cached_property
    def sup(self):
        """``2 c_W(0)``, the limit of g at infinity."""
        return 2.0 * eval_cW(self.params, 0.0)

    def _lookup(self, z, column):
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise DomainError("g is defined for z >= 0")
        out = np.interp(z, self.z, self.samples[:, column])
        far = z > self.z_max
        if np.any(far):
            vals, args = eval_g_many(self.params, z[far])
            out = np.array(out)
            out[far] = vals if column == 1 else args
        return out if out.ndim else float(out)

    def __call__(self, z):
        return self._lookup(z, 1)

    def argmin(self, z):
        return self._lookup(z, 2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "g", "t_star"])
            for z, g, t in self.samples:
                w.writerow([f"{z:.12g}", f"{g:.15g}", f"{t:.15g}"])


# --------------------------------------------------------------------------
# discrete calculus
#
# Gradients are forward differences along edges; the squared cell gradient
# averages the two parallel edges of a 2-D cell, which keeps the Dirichlet
# form a graph Laplacian with no checkerboard kernel.


def edge_differences(values):
    return [np.diff(values, axis=a) for a in range(values.ndim)]


def chord_differences(theta):
    """Signed chord lengths ``2 sin(dtheta/2)`` along the edges."""
    return [2.0 * np.sin(0.5 * d) for d in edge_differences(theta)]


def cell_sq_gradient(diffs, h):
    if len(diffs) == 1:
        return (diffs[0] / h) ** 2
    dx, dy = diffs
    return (0.5 * (dx[:, :-1] ** 2 + dx[:, 1:] ** 2) + 0.5 * (dy[:-1, :] ** 2 + dy[1:, :] ** 2)) / h ** 2


def cell_sq_gradient_adjoint(cell_weights, diffs, h):
    """Derivative of ``sum(cell_weights * cell_sq_gradient(diffs))`` w.r.t. each edge difference."""
    if len(diffs) == 1:
        return [2.0 * cell_weights * diffs[0] / h ** 2]
    dx, dy = diffs
    wx = np.zeros(dx.shape)
    wx[:, :-1] += cell_weights
    wx[:, 1:] += cell_weights
    wy = np.zeros(dy.shape)
    wy[:-1, :] += cell_weights
    wy[1:, :] += cell_weights
    return [wx * dx / h ** 2, wy * dy / h ** 2]


def edges_to_nodes(edge_grads, shape):
    """Adjoint of :func:`edge_differences`."""
    out = np.zeros(shape)
    for axis, g in enumerate(edge_grads):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] -= g
        out[tuple(hi)] += g
    return out


def cell_mean(nodal):
    if nodal.ndim == 1:
        return 0.5 * (nodal[:-1] + nodal[1:])
    return 0.25 * (nodal[:-1, :-1] + nodal[1:, :-1] + nodal[:-1, 1:] + nodal[1:, 1:])


def cell_mean_adjoint(cell_vals, shape):
    out = np.zeros(shape)
    if len(shape) == 1:
        out[:-1] += 0.5 * cell_vals
        out[1:] += 0.5 * cell_vals
        return out
    q = 0.25 * cell_vals
    out[:-1, :-1] += q
    out[1:, :-1] += q
    out[:-1, 1:] += q
    out[1:, 1:] += q
    return out


def smoothed_norm(sq, eta):
    return np.sqrt(sq + eta * eta) - eta


# --------------------------------------------------------------------------
# energies


@dataclass(frozen=True)
class EnergyBreakdown:
    bulk: float = 0.0
    phase_field: float = 0.0
    jump: float = 0.0
    transport: float = 0.0
    cantor: float = 0.0

    def __post_init__(self):
        for name in ("bulk", "phase_field", "jump", "transport", "cantor"):
            val = float(getattr(self, name))
            if val < 0:
                raise DomainError(f"energy component {name} is negative ({val})")
            object.__setattr__(self, name, val)

    @property
    def total(self):
        return self.bulk + self.phase_field + self.jump + self.transport + self.cantor

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["total"] = self.total
        return d


def _check_v(v, grid):
    if v.grid.shape != grid.shape:
        raise DimensionError(f"v has shape {v.grid.shape}, field has {grid.shape}")
    vals = v.values
    if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
        raise DomainError(f"v must lie in [0, 1] (range [{vals.min()}, {vals.max()}])")
    return np.clip(vals, 0.0, 1.0)


def bulk_density(diffs, v, params, grid):
    """Per-cell ``vol * mean(psi(v)) * f(|grad|_eta)``."""
    sq = cell_sq_gradient(diffs, grid.h)
    n = smoothed_norm(sq, params.eta_for(grid))
    return grid.cell_volume * cell_mean(params.psi(v)) * params.f(n)


def phase_field_density(v, params, grid):
    """Per-cell ``vol * (eps |grad v|^2 + mean(W(v)) / eps)``."""
    eps = params.epsilon
    sq = cell_sq_gradient(edge_differences(v), grid.h)
    return grid.cell_volume * (eps * sq + cell_mean(params.W(v)) / eps)


def _breakdown(diffs, v, params, grid):
    vv = _check_v(v, grid)
    bulk = float(np.sum(bulk_density(diffs, vv, params, grid)))
    pf = float(np.sum(phase_field_density(vv, params, grid)))
    return EnergyBreakdown(bulk=bulk, phase_field=pf)


def eval_F_eps_lifting(phi, v, params, grid=None):
    """Phase-field energy of a real lifting ``phi`` (|grad u| = |grad phi|)."""
    grid = phi.grid if grid is None else grid
    if phi.grid.shape != grid.shape:
        raise DimensionError("phi is not defined on the given grid")
    return _breakdown(edge_differences(phi.values), v, params, grid)


def eval_F_eps_direct(u, v, params, grid=None):
    """Phase-field energy of a circle-valued ``u`` with chordal edge differences."""
    grid = u.grid if grid is None else grid
    if u.grid.shape != grid.shape:
        raise DimensionError("u is not defined on the given grid")
    return _breakdown(chord_differences(u.theta), v, params, grid)


def eval_F_eps(field, v, params, grid=None):
    if isinstance(field, CircleField):
        return eval_F_eps_direct(field, v, params, grid)
    if isinstance(field, AngleField):
        return eval_F_eps_lifting(field, v, params, grid)
    raise DimensionError(f"unsupported field type {type(field).__name__}")


JUMP_METRICS = ("chord", "arc")


def jump_distance(dtheta, metric):
    """Distance on S^1 between endpoints whose angles differ by ``dtheta``."""
    if metric == "chord":
        return np.abs(2.0 * np.sin(0.5 * np.asarray(dtheta, dtype=float)))
    if metric == "arc":
        return np.abs(principal_difference(dtheta))
    raise ConfigurationError(f"unknown jump metric {metric!r} (use 'chord' or 'arc')")


def eval_sharp_energy(u, g, metric="chord", jump_edges=None, params=None, mg_value=None):
    """Energy of a map with a marked jump set.

    ``jump_edges`` holds one boolean array per axis, shaped like the edge
    differences.  Marked edges are removed from the gradient and priced by
    ``g(d(u+, u-))`` times the face length.  When ``mg_value`` is supplied the
    jump term is replaced by that transport value.
    """
    if metric not in JUMP_METRICS:
        raise ConfigurationError(f"unknown jump metric {metric!r} (use 'chord' or 'arc')")
    params = g.params if params is None else params
    grid = u.grid
    raw = edge_differences(u.theta)
    if jump_edges is None:
        jump_edges = [np.zeros(d.shape, dtype=bool) for d in raw]
    if len(jump_edges) != len(raw) or any(m.shape != d.shape for m, d in zip(jump_edges, raw)):
        raise DimensionError("jump_edges must match the edge layout of the grid")
    chords = [np.where(m, 0.0, 2.0 * np.sin(0.5 * d)) for d, m in zip(raw, jump_edges)]
    ones = np.ones(grid.shape)
    bulk = float(np.sum(bulk_density(chords, ones, params, grid)))
    jump = 0.0
    for d, m in zip(raw, jump_edges):
        if m.any():
            jump += float(np.sum(g(jump_distance(d[m], metric)))) * grid.face_length
    if mg_value is not None:
        return EnergyBreakdown(bulk=bulk, transport=float(mg_value))
    return EnergyBreakdown(bulk=bulk, jump=jump)


def eval_sharp_lifting_energy(phi, g, jump_edges=None, params=None):
    """Sharp energy of a real lifting: ``|grad phi|`` off the marked edges and
    ``g(|jump|)`` times the face length on them (default marks: jumps >= pi)."""
    params = g.params if params is None else params
    grid = phi.grid
    raw = edge_differences(phi.values)
    if jump_edges is None:
        jump_edges = [np.abs(d) >= np.pi for d in raw]
    if len(jump_edges) != len(raw) or any(m.shape != d.shape for m, d in zip(jump_edges, raw)):
        raise DimensionError("jump_edges must match the edge layout of the grid")
    smooth = [np.where(m, 0.0, d) for d, m in zip(raw, jump_edges)]
    bulk = float(np.sum(bulk_density(smooth, np.ones(grid.shape), params, grid)))
    jump = sum(float(np.sum(g(np.abs(d[m])))) for d, m in zip(raw, jump_edges) if m.any())
    return EnergyBreakdown(bulk=bulk, jump=jump * grid.face_length)


def unit_grid(dim, n):
    return GridSpec.interval(n) if dim == 1 else GridSpec.square(n)


__all__ = [
    "EnergyParams", "JumpCost", "EnergyBreakdown", "ModelFunction", "PSI", "F", "W",
    "eval_cW", "eval_g", "eval_g_many", "eval_F_eps_lifting", "eval_F_eps_direct",
    "eval_F_eps", "eval_sharp_energy", "eval_sharp_lifting_energy", "jump_distance", "resolve_function",
    "AngleField", "CircleField", "ScalarField",
]
