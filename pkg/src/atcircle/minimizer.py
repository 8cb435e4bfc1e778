"""Alternating minimization of the phase-field energy, 1-D optimal profiles and
recovery sequences."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.linalg import solve_banded
from scipy.optimize import minimize as sp_minimize
from scipy.sparse.linalg import cg

from .energy_core import (
    EnergyBreakdown,
    EnergyParams,
    JumpCost,
    cell_mean,
    cell_mean_adjoint,
    cell_sq_gradient,
    cell_sq_gradient_adjoint,
    chord_differences,
    edge_differences,
    edges_to_nodes,
    eval_F_eps,
    resolve_function,
    smoothed_norm,
)
from .errors import (
    ATCircleError,
    DimensionError,
    DomainError,
    LayerCollisionError,
    SolverError,
    StepError,
)
from .fields import AngleField, CircleField, GridSpec, ScalarField

log = logging.getLogger(__name__)

LIFTING = "lifting"
DIRECT = "direct"


@dataclass(frozen=True)
class Schedule:
    epsilon_list: tuple = (0.1, 0.05, 0.025, 0.0125)
    max_outer_iters: int = 50
    tol_energy: float = 1e-6
    tol_step: float = 1e-8
    max_inner_iters: int = 100

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilon_list)
        if not eps or any(e <= 0 for e in eps):
            raise DomainError("epsilon_list must hold positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError(f"epsilon_list must be strictly decreasing, got {eps}")
        if self.tol_energy <= 0 or self.tol_step <= 0:
            raise DomainError("tolerances must be positive")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise DomainError("iteration limits must be at least 1")
        object.__setattr__(self, "epsilon_list", eps)


@dataclass
class EpsilonResult:
    epsilon: float
    field: object
    v: ScalarField
    energy: EnergyBreakdown
    outer_iters: int


@dataclass
class MinimizeResult:
    field: object
    v: ScalarField
    energy: EnergyBreakdown
    trace: list = field(default_factory=list)
    per_epsilon: list = field(default_factory=list)
    mode: str = LIFTING

    def trace_rows(self):
        """Rows ``(epsilon, outer_iter, bulk, phase_field, total)``."""
        return [(r[0], r[1], r[2].bulk, r[2].phase_field, r[2].total) for r in self.trace]


# --------------------------------------------------------------------------
# v-step


@lru_cache(maxsize=16)
def _stiffness(grid):
    """``sum_cells vol * |grad v|^2`` as ``v^T K v`` (sparse, symmetric)."""
    n = int(np.prod(grid.shape))
    idx = np.arange(n).reshape(grid.shape)
    rows, cols, vals = [], [], []
    h = grid.h
    for axis in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        a = idx[tuple(lo)]
        b = idx[tuple(hi)]
        if grid.dim == 1:
            c = np.full(a.shape, 1.0 / h)
        else:
            # edges on the boundary belong to a single cell
            c = np.ones(a.shape)
            other = 1 - axis
            sl = [slice(None)] * 2
            sl[other] = 0
            c[tuple(sl)] = 0.5
            sl[other] = -1
            c[tuple(sl)] = 0.5
        a, b, c = a.ravel(), b.ravel(), c.ravel()
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [c, c, -c, -c]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _field_diffs(fld):
    if isinstance(fld, CircleField):
        return chord_differences(fld.theta)
    if isinstance(fld, AngleField):
        return edge_differences(fld.values)
    raise DimensionError(f"unsupported field type {type(fld).__name__}")


def _bulk_forcing(fld, params, grid):
    """Node coefficients ``a`` with ``sum_c vol f_c mean(psi(v)) = sum_n a_n psi(v_n)``."""
    diffs = _field_diffs(fld)
    n = smoothed_norm(cell_sq_gradient(diffs, grid.h), params.eta_for(grid))
    return cell_mean_adjoint(grid.cell_volume * params.f(n), grid.shape)


def v_objective(v, a, params, grid):
    eps = params.epsilon
    K = _stiffness(grid)
    vf = v.ravel()
    w = grid.node_weights().ravel()
    return float(a.ravel() @ params.psi(vf) + eps * vf @ (K @ vf) + w @ params.W(vf) / eps)


def v_step(fld, params, grid=None, v0=None):
    """Exact minimizer of the energy in ``v`` with the field frozen."""
    grid = fld.grid if grid is None else grid
    a = _bulk_forcing(fld, params, grid).ravel()
    w = grid.node_weights().ravel()
    eps = params.epsilon
    K = _stiffness(grid)
    x0 = np.ones(a.size) if v0 is None else np.clip(np.asarray(v0.values, float).ravel(), 0.0, 1.0)
    if params.is_default_pair:
        A = (sp.diags(a + w / eps) + eps * K).tocsr()
        b = w / eps
        if grid.dim == 1:
            # tridiagonal: direct solve, CG stalls once eps/h is large
            ab = np.zeros((3, a.size))
            ab[0, 1:] = A.diagonal(1)
            ab[1] = A.diagonal()
            ab[2, :-1] = A.diagonal(-1)
            sol = solve_banded((1, 1), ab, b)
            return ScalarField(grid, np.clip(sol, 0.0, 1.0).reshape(grid.shape))
        M = sp.diags(1.0 / A.diagonal())
        sol, info = cg(A, b, x0=x0, rtol=1e-10, atol=0.0, maxiter=10_000, M=M)
        if info != 0:
            res = float(np.linalg.norm(A @ sol - b) / np.linalg.norm(b))
            raise SolverError(f"v-step CG stopped after {info} iterations, relative residual {res:.3e}", res)
    else:
        def fun(vf):
            Kv = K @ vf
            val = a @ params.psi(vf) + eps * vf @ Kv + w @ params.W(vf) / eps
            grad = a * params.psi.d(vf) + 2.0 * eps * Kv + w * params.W.d(vf) / eps
            return val, grad

        out = sp_minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * a.size,
                          options={"maxiter": 10_000, "ftol": 1e-15, "gtol": 1e-10})
        if not out.success and out.nit >= 10_000:
            raise SolverError(f"v-step projected descent did not converge: {out.message}")
        sol = out.x
    return ScalarField(grid, np.clip(sol, 0.0, 1.0).reshape(grid.shape))


# --------------------------------------------------------------------------
# u-step


def u_objective_and_grad(values, mode, v, params, grid):
    """Objective ``sum_c vol mean(psi(v)) f(|grad u|_eta)`` and its nodal gradient."""
    if mode == LIFTING:
        diffs = edge_differences(values)
    elif mode == DIRECT:
        raw = edge_differences(values)
        diffs = [2.0 * np.sin(0.5 * d) for d in raw]
    else:
        raise DomainError(f"unknown mode {mode!r}")
    eta = params.eta_for(grid)
    sq = cell_sq_gradient(diffs, grid.h)
    root = np.sqrt(sq + eta * eta)
    n = root - eta
    weight = grid.cell_volume * cell_mean(params.psi(v))
    val = float(np.sum(weight * params.f(n)))
    omega = weight * params.f.d(n) / (2.0 * root)
    egrads = cell_sq_gradient_adjoint(omega, diffs, grid.h)
    if mode == DIRECT:
        egrads = [g * np.cos(0.5 * d) for g, d in zip(egrads, raw)]
    return val, edges_to_nodes(egrads, values.shape)


def _descent(values, mode, v, params, grid, pinned, max_iters, tol_step, max_step, memory=8):
    """L-BFGS with Armijo backtracking on the free nodes; never increases the objective."""
    free = ~pinned
    x = values.copy()
    fx, gx = u_objective_and_grad(x, mode, v, params, grid)
    gx[pinned] = 0.0
    s_hist, y_hist = [], []
    for it in range(max_iters):
        gnorm = np.max(np.abs(gx), initial=0.0)
        if gnorm == 0.0:
            break
        d = -gx.copy()
        if s_hist:
            q = gx[free].copy()
            alphas = []
            for s, y in zip(reversed(s_hist), reversed(y_hist)):
                a = (s @ q) / (y @ s)
                alphas.append(a)
                q -= a * y
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
                q += s * (a - (y @ q) / (y @ s))
            d[free] = -q
            if d[free] @ gx[free] >= 0:
                d = -gx.copy()
                s_hist, y_hist = [], []
        dmax = np.max(np.abs(d))
        alpha = 1.0 if s_hist else min(1.0, grid.h / dmax)
        if max_step is not None and alpha * dmax > max_step:
            alpha = max_step / dmax
        slope = float(d[free] @ gx[free])
        accepted = False
        for _ in range(60):
            xn = x + alpha * d
            fn, gn = u_objective_and_grad(xn, mode, v, params, grid)
            if not np.isfinite(fn):
                raise StepError(f"non-finite objective at iteration {it}")
            if fn <= fx + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if s_hist:
                s_hist, y_hist = [], []
                continue
            break  # no representable decrease left
        gn[pinned] = 0.0
        step = alpha * d
        s, y = step[free], (gn - gx)[free]
        if y @ s > 1e-12 * np.sqrt((y @ y) * (s @ s)):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        decrease = fx - fn
        x, fx, gx = xn, fn, gn
        if np.max(np.abs(step)) < tol_step or decrease <= 1e-14 * max(abs(fx), 1e-300):
            break
    return x, fx


def _pinned_mask(grid, pinned):
    if pinned is None:
        return np.zeros(grid.shape, dtype=bool)
    pinned = np.asarray(pinned, dtype=bool)
    if pinned.shape != grid.shape:
        raise DimensionError("pinned mask does not match the grid")
    return pinned


def u_step_lifting(phi, v, params, grid=None, pinned=None, max_iters=100, tol_step=1e-8):
    """Descent on the lifting ``phi`` with ``v`` frozen."""
    grid = phi.grid if grid is None else grid
    if params.eta_for(grid) <= 0:
        raise DomainError("the lifting step needs a smoothed norm (eta > 0)")
    x, _ = _descent(np.array(phi.values, dtype=float), LIFTING, v.values, params, grid,
                    _pinned_mask(grid, pinned), max_iters, tol_step, None)
    return AngleField(grid, x)


def u_step_direct(u, v, params, grid=None, pinned=None, max_iters=100, tol_step=1e-8, max_angle_step=None):
    """Descent on nodal angles of ``u``; each step moves a node by at most ``max_angle_step``
    (default ``pi * h``)."""
    grid = u.grid if grid is None else grid
    cap = np.pi * grid.h if max_angle_step is None else max_angle_step
    # keep angles continuous across the descent; wrap only the result
    x, _ = _descent(np.array(u.theta, dtype=float), DIRECT, v.values, params, grid,
                    _pinned_mask(grid, pinned), max_iters, tol_step, cap)
    return CircleField(grid, x)


# --------------------------------------------------------------------------
# alternating scheme


def alternate_minimize(init_field, mode, params, schedule=None, v0=None, pinned=None, callback=None):
    """Alternate exact v-solves and u-descent for every epsilon in the schedule."""
    schedule = Schedule() if schedule is None else schedule
    if mode == LIFTING and not isinstance(init_field, AngleField):
        raise DimensionError("lifting mode expects an AngleField")
    if mode == DIRECT and not isinstance(init_field, CircleField):
        raise DimensionError("direct mode expects a CircleField")
    if mode not in (LIFTING, DIRECT):
        raise DomainError(f"unknown mode {mode!r}")
    grid = init_field.grid
    fld = init_field
    v = ScalarField.constant(grid, 1.0) if v0 is None else v0
    trace, per_eps = [], []
    for eps in schedule.epsilon_list:
        p = params.with_epsilon(eps)
        try:
            v = v_step(fld, p, grid, v0=v)
            energy = eval_F_eps(fld, v, p, grid)
            trace.append((eps, 0, energy))
            it = 0
            for it in range(1, schedule.max_outer_iters + 1):
                prev_vals = np.array(fld.values)
                prev = energy.total
                if mode == LIFTING:
                    fld = u_step_lifting(fld, v, p, grid, pinned, schedule.max_inner_iters, schedule.tol_step)
                else:
                    fld = u_step_direct(fld, v, p, grid, pinned, schedule.max_inner_iters, schedule.tol_step)
                v = v_step(fld, p, grid, v0=v)
                energy = eval_F_eps(fld, v, p, grid)
                trace.append((eps, it, energy))
                if callback is not None:
                    callback(eps, it, fld, v, energy)
                moved = np.max(np.abs(np.asarray(fld.values) - prev_vals))
                if mode == DIRECT:
                    moved = np.max(np.abs(np.angle(np.exp(1j * (np.asarray(fld.values) - prev_vals)))))
                if prev - energy.total <= schedule.tol_energy * max(prev, 1e-300) or moved < schedule.tol_step:
                    break
        except ATCircleError as exc:
            raise type(exc)(f"{exc} [mode={mode}, epsilon={eps}, outer iteration={len(trace)}]") from exc
        log.info("mode=%s eps=%g total=%.8g after %d outer iterations", mode, eps, energy.total, it)
        per_eps.append(EpsilonResult(eps, fld, v, energy, it))
    return MinimizeResult(fld, v, energy, trace, per_eps, mode)


# --------------------------------------------------------------------------
# 1-D optimal profile


def mm_profile_1d(t_anchor, epsilon, W_spec="quadratic_well", interval=(-1.0, 1.0), n=None):
    """Minimize ``int eps v'^2 + W(v)/eps`` with ``v = 1`` at both ends and
    ``v(midpoint) = t_anchor`` by projected Newton descent.

    Returns ``(profile, cost)``.
    """
    if not 0.0 <= t_anchor <= 1.0:
        raise DomainError(f"t_anchor must lie in [0, 1], got {t_anchor}")
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    w_fn = resolve_function(W_spec, "W")
    a, b = interval
    length = b - a
    if n is None:
        n = int(np.ceil(length / (epsilon / 20.0))) + 1
    if n % 2 == 0:
        n += 1
    grid = GridSpec.interval(n, length, a)
    h = grid.h
    mid = n // 2
    v = np.ones(n)
    v[mid] = t_anchor
    fixed = np.zeros(n, dtype=bool)
    fixed[[0, mid, n - 1]] = True
    wts = grid.node_weights()

    def energy(x):
        return float(epsilon * np.sum(np.diff(x) ** 2) / h + wts @ w_fn(x) / epsilon)

    def grad(x):
        d = np.diff(x)
        gr = np.zeros(n)
        gr[:-1] -= 2.0 * epsilon * d / h
        gr[1:] += 2.0 * epsilon * d / h
        return gr + wts * w_fn.d(x) / epsilon

    def second(x):
        s = 1e-6
        return (w_fn.d(x + s) - w_fn.d(x - s)) / (2 * s)

    e = energy(v)
    for _ in range(200):
        g = grad(v)
        g[fixed] = 0.0
        diag = 2.0 * epsilon / h * np.r_[1.0, 2.0 * np.ones(n - 2), 1.0] + wts * np.maximum(second(v), 0.0) / epsilon
        off = -2.0 * epsilon / h * np.ones(n - 1)
        diag[fixed] = 1.0
        upper = off.copy()
        lower = off.copy()
        upper[fixed[:-1]] = 0.0
        lower[fixed[1:]] = 0.0
        upper[fixed[1:]] = 0.0
        lower[fixed[:-1]] = 0.0
        ab = np.zeros((3, n))
        ab[0, 1:] = upper
        ab[1] = diag
        ab[2, :-1] = lower
        step = -solve_banded((1, 1), ab, g)
        step[fixed] = 0.0
        alpha = 1.0
        while True:
            trial = np.clip(v + alpha * step, 0.0, 1.0)
            et = energy(trial)
            if et <= e or alpha < 1e-12:
                break
            alpha *= 0.5
        change = np.max(np.abs(trial - v))
        v, e_prev, e = trial, e, min(et, e)
        if change < 1e-13 or e_prev - e <= 1e-15 * max(e, 1e-300):
            break
    return ScalarField(grid, v), e


# --------------------------------------------------------------------------
# recovery sequence


class _ProfileInverse:
    """Optimal transition ``eps v' = sqrt(W(v))`` as a function of distance.

    Uses ``s = 1 - exp(-r)`` so the log divergence of the quadratic well is
    resolved uniformly.
    """

    def __init__(self, w_fn, r_max=60.0, n=60001):
        r = np.linspace(0.0, r_max, n)
        s = -np.expm1(-r)
        integrand = np.exp(-r) / np.sqrt(np.maximum(w_fn(s), 1e-300))
        F = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(r))])
        self.s = s
        self.F = F

    def __call__(self, t, dist_over_eps):
        f0 = np.interp(t, self.s, self.F)
        return np.interp(f0 + dist_over_eps, self.F, self.s, right=1.0)


def _jump_masks(phi, threshold):
    return [np.abs(d) >= threshold for d in edge_differences(phi.values)]


def recovery_sequence(phi_target, params, schedule=None, g=None, jump_edges=None, layer_constant=6.0):
    """Phase-field pairs whose energies approach the sharp lifted energy of ``phi_target``.

    Around every marked jump edge (default: lifted jumps of size >= pi) the
    phase field sits at ``t*(z)`` on the two endpoint nodes, where ``phi``
    crosses the jump, and rises along the optimal 1-D profile to 1 within
    ``layer_constant * eps * |log eps|``.
    """
    schedule = Schedule() if schedule is None else schedule
    grid = phi_target.grid
    g = JumpCost.build(params) if g is None else g
    masks = _jump_masks(phi_target, np.pi) if jump_edges is None else [np.asarray(m, bool) for m in jump_edges]
    diffs = edge_differences(phi_target.values)
    level = np.full(grid.shape, np.inf)
    for axis, (m, d) in enumerate(zip(masks, diffs)):
        if not m.any():
            continue
        tstar = np.asarray(g.argmin(np.abs(d[m])))
        idx = np.argwhere(m)
        for shift in (0, 1):
            nodes = idx.copy()
            nodes[:, axis] += shift
            np.minimum.at(level, tuple(nodes.T), tstar)
    plateau = np.isfinite(level)
    profile = _ProfileInverse(params.W)
    comps, ncomp = ndimage.label(plateau, structure=np.ones((3,) * grid.dim))
    out = []
    for eps in schedule.epsilon_list:
        if not plateau.any():
            out.append((phi_target, ScalarField.constant(grid, 1.0)))
            continue
        width = layer_constant * eps * abs(np.log(eps))
        dist, inds = ndimage.distance_transform_edt(~plateau, sampling=grid.h, return_indices=True)
        if ncomp > 1:
            inside = np.zeros(grid.shape, dtype=np.int64)
            for c in range(1, ncomp + 1):
                dc = ndimage.distance_transform_edt(comps != c, sampling=grid.h)
                inside += dc <= width
            if inside.max() > 1:
                raise LayerCollisionError(
                    f"transition layers of width {width:.4g} overlap at epsilon={eps}; "
                    "use a smaller layer_constant or a smaller epsilon"
                )
        t_near = level[tuple(inds)]
        v = profile(t_near, dist / eps)
        v = np.where(dist > width, 1.0, v)
        out.append((phi_target, ScalarField(grid, np.clip(v, 0.0, 1.0))))
    return out
