"""Minimal liftings of piecewise-constant circle-valued maps.

A map is given by one base angle per cell.  A lifting adds ``2*pi*k`` with an
integer label ``k`` per cell, and its cost is the sum over interior edges of
``g(|jump|) * face_length``.  Labels are kept in ``[-K, K]`` with the first
cell pinned to ``k = 0`` (the global ``2*pi`` shift does not change the cost).
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from ._accel import HAVE_NUMBA
from .errors import ConfigurationError, ConsistencyError, DimensionError, DomainError, SizeError
from .fields import TWO_PI, AngleField, ShiftField, jump_regions, principal_difference, wrap_angle

BRUTEFORCE_LIMIT = 10 ** 7


@dataclass(frozen=True, eq=False)
class LiftingProblem:
    """Cells with base angles, a jump cost and a label bound ``K``."""

    theta: np.ndarray
    g: object
    K: int = 2
    face_length: float = 1.0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim not in (1, 2) or theta.size < 1:
            raise DimensionError("base angles must form a 1-D or 2-D array of cells")
        if int(self.K) < 1:
            raise DomainError(f"label bound K must be >= 1, got {self.K}")
        theta = wrap_angle(theta)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "K", int(self.K))

    @classmethod
    def from_field(cls, u, g, K=2):
        """Read the nodal angles of ``u`` as cells of the dual grid."""
        return cls(u.theta, g, K, u.grid.face_length)

    @property
    def shape(self):
        return self.theta.shape

    @property
    def ncells(self):
        return self.theta.size

    @property
    def grid_dims(self):
        return (self.shape[0], 1) if self.theta.ndim == 1 else self.shape

    @cached_property
    def edges(self):
        """``(tail, head)`` flat cell indices, one row per interior edge."""
        idx = np.arange(self.ncells).reshape(self.shape)
        tails, heads = [], []
        for axis in range(self.theta.ndim):
            lo = [slice(None)] * self.theta.ndim
            hi = [slice(None)] * self.theta.ndim
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            tails.append(idx[tuple(lo)].ravel())
            heads.append(idx[tuple(hi)].ravel())
        return np.concatenate(tails).astype(np.int64), np.concatenate(heads).astype(np.int64)

    @cached_property
    def raw_jumps(self):
        a, b = self.edges
        t = self.theta.ravel()
        return t[b] - t[a]

    @cached_property
    def lengths(self):
        return np.full(len(self.raw_jumps), float(self.face_length))

    @cached_property
    def costs(self):
        """``costs[e, dk + 2K + 1] = g(|jump_e + 2*pi*dk|) * length_e``."""
        span = np.arange(-2 * self.K - 1, 2 * self.K + 2)
        z = np.abs(self.raw_jumps[:, None] + TWO_PI * span[None, :])
        return np.ascontiguousarray(np.asarray(self.g(z)) * self.lengths[:, None])

    @cached_property
    def adjacency(self):
        """CSR lists ``(neighbor, edge, sign)``; sign +1 when the cell is the tail."""
        a, b = self.edges
        n = self.ncells
        cells = np.concatenate([a, b])
        nbrs = np.concatenate([b, a])
        eids = np.concatenate([np.arange(len(a)), np.arange(len(a))])
        signs = np.concatenate([np.ones(len(a)), -np.ones(len(a))]).astype(np.int64)
        order = np.argsort(cells, kind="stable")
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(ptr, cells + 1, 1)
        return (np.cumsum(ptr), nbrs[order].astype(np.int64), eids[order].astype(np.int64), signs[order])

    @cached_property
    def principal_baseline(self):
        """``sum g(|principal jump|) * length``: a lower bound of the objective for every ``k``."""
        return float(np.sum(np.asarray(self.g(np.abs(principal_difference(self.raw_jumps)))) * self.lengths))


@dataclass(frozen=True, eq=False)
class LiftingSolution:
    """A label field with its objective.

    ``nonlocal_cost`` is the part of the objective carried by edges where the
    lifting jumps by at least ``pi``: for a continuous base map these are the
    ``2*pi``-type jumps that the map itself does not see, so this is the
    discrete ``m_g`` value compared against transport costs.  ``excess`` is the
    objective minus the principal-jump lower bound; it differs from
    ``nonlocal_cost`` by terms of order ``h log(1/h)`` near vortex cores.
    """

    k: np.ndarray
    objective: float
    optimality_tag: str
    baseline: float = 0.0
    nonlocal_cost: float = 0.0

    @property
    def excess(self):
        return self.objective - self.baseline

    def shift_field(self, grid):
        return ShiftField(grid, self.k.reshape(grid.shape))


def _labels(problem, k):
    arr = np.asarray(k.values if isinstance(k, ShiftField) else k)
    if arr.shape != problem.shape:
        raise DimensionError(f"labels have shape {arr.shape}, problem has {problem.shape}")
    if np.any(np.abs(arr) > problem.K):
        raise DomainError(f"labels must lie in [-{problem.K}, {problem.K}]")
    return np.ascontiguousarray(arr.ravel(), dtype=np.int64)


def lifted_jumps(problem, k):
    lab = _labels(problem, k)
    a, b = problem.edges
    return problem.raw_jumps + TWO_PI * (lab[b] - lab[a])


def nonlocal_cost(problem, k, sigma=np.pi):
    """Objective restricted to edges whose lifted jump is at least ``sigma``."""
    z = np.abs(lifted_jumps(problem, k))
    return float(np.sum(np.where(z >= sigma, np.asarray(problem.g(z)), 0.0) * problem.lengths))


def _solution(problem, k, value, tag):
    k = np.asarray(k, dtype=np.int64).reshape(problem.shape)
    return LiftingSolution(k, float(value), tag, problem.principal_baseline, nonlocal_cost(problem, k))


def mg_objective(problem, k):
    """Sum over interior edges of ``g(|jump of theta + 2*pi*k|) * length``."""
    a, b = problem.edges
    return float(_kernels.objective(_labels(problem, k), a, b, problem.costs))


def reevaluate(problem, k):
    """Objective recomputed edge by edge straight from ``g`` (no cost table)."""
    z = np.abs(lifted_jumps(problem, k))
    return float(np.sum(np.asarray(problem.g(z)) * problem.lengths))


def mg_bruteforce(problem, use_numba=None):
    """Exact minimizer by exhaustive enumeration (lexicographically smallest on ties)."""
    size = (2 * problem.K + 1) ** problem.ncells
    if size > BRUTEFORCE_LIMIT:
        raise SizeError(
            f"(2K+1)^cells = {2 * problem.K + 1}^{problem.ncells} exceeds the enumeration bound {BRUTEFORCE_LIMIT:.0e}"
        )
    a, b = problem.edges
    use_numba = HAVE_NUMBA if use_numba is None else use_numba
    if problem.ncells == 1:
        k = np.zeros(1, dtype=np.int64)
        best = float(_kernels.objective(k, a, b, problem.costs))
    elif use_numba:
        k, best = _kernels.bruteforce(problem.ncells, a, b, problem.costs, problem.K, 0)
    else:
        k, best = _kernels.bruteforce_numpy(problem.ncells, a, b, problem.costs, problem.K, 0)
    return _solution(problem, k, best, "exhaustive")


def mg_local_search(problem, seed=0, restarts=8, init=None, tol=1e-13):
    """Iterated region shifts.

    Regions are prefixes of breadth-first orders grown from a random cell
    (4- and 8-neighborhoods alternately) or from a whole side of the box;
    the best prefix for a +1 or -1 shift is applied while it lowers the
    objective.  Every restart starts from ``init`` (default all zeros) with
    its own random stream; the best result is kept.
    """
    nx, ny = problem.grid_dims
    ptr, nbr, eid, sgn = problem.adjacency
    a, b = problem.edges
    ss = np.random.SeedSequence(seed)
    best = None
    for child in ss.spawn(max(1, restarts)):
        rng = np.random.default_rng(child)
        k0 = np.zeros(problem.ncells, dtype=np.int64) if init is None else _labels(problem, init).copy()
        k0 -= k0[0]
        if np.any(np.abs(k0) > problem.K):
            k0 = np.clip(k0, -problem.K, problem.K)
            k0[0] = 0
        state = int(rng.integers(1, 2 ** 31 - 1))
        k, _, _ = _kernels.local_search(k0, nx, ny, ptr, nbr, eid, sgn, problem.costs,
                                        problem.K, 0, state, tol)
        val = float(_kernels.objective(k, a, b, problem.costs))
        if best is None or val < best[1]:
            best = (k.copy(), val)
    return _solution(problem, best[0], best[1], "local_search")


def dipole_transport_estimate(config, g):
    """``g(2*pi)`` times the shortest perfect matching of + to - charges.

    Straight segments of multiplicity ``2*pi`` only, so this is an upper
    bound for transport plans that may branch.
    """
    q = np.asarray(config.charges)
    if q.sum() != 0:
        raise ConfigurationError(f"charges sum to {int(q.sum())}; a matching needs a balanced configuration")
    pos = np.asarray(config.positions)
    plus = pos[q > 0]
    minus = pos[q < 0]
    if len(plus) == 0:
        return 0.0
    if len(plus) > 8:
        raise SizeError("exact matching is enumerated only up to 8 pairs")
    dist = np.linalg.norm(plus[:, None, :] - minus[None, :, :], axis=-1)
    best = min(sum(dist[i, p] for i, p in enumerate(perm)) for perm in itertools.permutations(range(len(minus))))
    return float(g(TWO_PI)) * float(best)


def normalize_mod_2pi(phis, reference, atol=1e-9):
    """Split each lifting into ``reference + 2*pi*d`` and report the regions of constant ``d``.

    Returns one ``(ShiftField d, AngleField normalized, region_ids)`` per input;
    ``normalized = phi - 2*pi*d`` coincides with the reference.
    """
    ref = reference.values
    out = []
    for n, phi in enumerate(phis):
        if phi.grid.shape != reference.grid.shape:
            raise ConsistencyError(f"field {n} lives on a different grid")
        r = (phi.values - ref) / TWO_PI
        d = np.rint(r)
        if np.max(np.abs(r - d), initial=0.0) > atol:
            raise ConsistencyError(f"field {n} does not lift the same circle-valued map as the reference")
        ids, _ = jump_regions(d.astype(np.int64))
        out.append((ShiftField(phi.grid, d), AngleField(phi.grid, phi.values - TWO_PI * d), ids))
    return out


def save_problem_csv(path, problem, solution=None):
    """Rows ``cell, base_angle, k``."""
    k = np.zeros(problem.ncells, dtype=np.int64) if solution is None else np.asarray(solution.k).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "base_angle", "k"])
        for c, (t, kk) in enumerate(zip(problem.theta.ravel(), k)):
            w.writerow([c, repr(float(t)), int(kk)])


def load_problem_csv(path, g, shape=None, K=2, face_length=1.0):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    theta = np.array([float(r["base_angle"]) for r in rows])
    k = np.array([int(r["k"]) for r in rows], dtype=np.int64)
    if shape is not None:
        theta = theta.reshape(shape)
        k = k.reshape(shape)
    return LiftingProblem(theta, g, K, face_length), k


__all__ = [
    "LiftingProblem", "LiftingSolution", "lifted_jumps", "nonlocal_cost", "mg_objective", "mg_bruteforce", "mg_local_search",
    "dipole_transport_estimate", "normalize_mod_2pi", "reevaluate", "save_problem_csv",
    "load_problem_csv",
]
