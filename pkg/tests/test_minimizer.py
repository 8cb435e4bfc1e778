import math

import numpy as np
import pytest

from atcircle import minimizer
from atcircle.energy_core import EnergyParams, JumpCost, eval_F_eps
from atcircle.errors import DomainError, LayerCollisionError, SolverError
from atcircle.fields import (
    AngleField,
    CircleField,
    GridSpec,
    ScalarField,
    VortexConfig,
    make_dipole_map,
    make_step_lifting,
    plaquette_windings,
)
from atcircle.minimizer import (
    DIRECT,
    LIFTING,
    Schedule,
    alternate_minimize,
    mm_profile_1d,
    recovery_sequence,
    u_objective_and_grad,
    u_step_direct,
    u_step_lifting,
    v_step,
)

DEFAULT = EnergyParams()


def fd4(fun, x, d, h=1e-4):
    return (8 * (fun(x + h * d) - fun(x - h * d)) - (fun(x + 2 * h * d) - fun(x - 2 * h * d))) / (12 * h)


def test_schedule_validation():
    assert Schedule((0.2, 0.1)).epsilon_list == (0.2, 0.1)
    for bad in [dict(epsilon_list=()), dict(epsilon_list=(0.1, 0.2)), dict(epsilon_list=(0.1, -0.1)),
                dict(tol_energy=0.0), dict(max_outer_iters=0)]:
        with pytest.raises(DomainError):
            Schedule(**bad)


# --- v-step -------------------------------------------------------------------------

def test_v_step_flat_field_gives_one():
    g = GridSpec.square(9)
    v = v_step(AngleField(g, np.full(g.shape, 0.7)), DEFAULT.with_epsilon(0.1))
    assert np.allclose(v.values, 1.0)


@pytest.mark.parametrize("c,eps", [(1.0, 0.1), (3.0, 0.05), (10.0, 0.2)])
def test_v_step_uniform_slope_1d(c, eps):
    g = GridSpec.interval(41)
    phi = AngleField(g, c * g.axes()[0])
    v = v_step(phi, DEFAULT.with_epsilon(eps))
    assert np.allclose(v.values, 1.0 / (1.0 + eps * c), atol=1e-10)


@pytest.mark.parametrize("pair", [("quadratic", "quadratic_well"), ("linear", "quadratic_well"),
                                  ("cubic", "quartic_well")])
def test_v_step_is_optimal_against_perturbations(pair):
    g = GridSpec.square(9)
    p = EnergyParams(psi_spec=pair[0], W_spec=pair[1], epsilon=0.1)
    u = make_dipole_map(g, VortexConfig.dipole(distance=0.5))
    v = v_step(u, p)
    assert v.values.min() >= 0.0 and v.values.max() <= 1.0
    base = eval_F_eps(u, v, p).total
    rng = np.random.default_rng(0)
    for _ in range(20):
        node = tuple(rng.integers(0, 9, 2))
        for s in (-1e-3, 1e-3):
            w = v.values.copy()
            w[node] = np.clip(w[node] + s, 0.0, 1.0)
            assert eval_F_eps(u, ScalarField(g, w), p).total >= base - 1e-8


# --- u-step -------------------------------------------------------------------------

def test_u_step_lifting_ignores_cut_out_region():
    g = GridSpec.interval(21)
    phi = AngleField(g, np.random.default_rng(1).normal(size=21))
    out = u_step_lifting(phi, ScalarField.constant(g, 0.0), DEFAULT.with_epsilon(0.1))
    assert np.array_equal(out.values, phi.values)


def test_u_step_lifting_pinned_ends_reach_linear_interpolant():
    g = GridSpec.interval(21)
    p = EnergyParams(f_spec="area_shifted", epsilon=0.1)
    init = np.random.default_rng(2).normal(size=21)
    init[0], init[-1] = 0.0, 1.0
    pinned = np.zeros(21, bool)
    pinned[[0, -1]] = True
    out = u_step_lifting(AngleField(g, init), ScalarField.constant(g, 1.0), p, pinned=pinned,
                         max_iters=2000, tol_step=1e-13)
    assert np.allclose(out.values, g.axes()[0], atol=1e-6)
    assert out.values[0] == 0.0 and out.values[-1] == 1.0


def test_u_step_direct_fixed_point_and_winding():
    g = GridSpec.square(17)
    const = CircleField(g, np.full(g.shape, 2.0))
    out = u_step_direct(const, ScalarField.constant(g, 1.0), DEFAULT.with_epsilon(0.1))
    assert np.allclose(out.theta, const.theta)
    u = make_dipole_map(g, VortexConfig.dipole(distance=0.5))
    v = v_step(u, DEFAULT.with_epsilon(0.1))
    moved = u_step_direct(u, v, DEFAULT.with_epsilon(0.1), max_iters=20)
    assert np.array_equal(plaquette_windings(moved), plaquette_windings(u))


def test_direct_and_lifting_agree_for_small_variation():
    g = GridSpec.square(9)
    theta = 0.3 * np.random.default_rng(3).uniform(size=g.shape)
    p = DEFAULT.with_epsilon(0.1)
    v = ScalarField(g, np.random.default_rng(4).uniform(0.5, 1, g.shape))
    fd, _ = u_objective_and_grad(theta, DIRECT, v.values, p, g)
    fl, _ = u_objective_and_grad(theta, LIFTING, v.values, p, g)
    # chord and arc agree to third order in the jumps
    assert fd == pytest.approx(fl, rel=5e-3)


@pytest.mark.parametrize("mode", [LIFTING, DIRECT])
@pytest.mark.parametrize("dim", [1, 2])
def test_u_gradient_matches_finite_differences(mode, dim):
    g = GridSpec.interval(15) if dim == 1 else GridSpec.square(7)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 2, g.shape)
    v = rng.uniform(0.2, 1, g.shape)
    p = DEFAULT.with_epsilon(0.1)
    _, grad = u_objective_and_grad(x, mode, v, p, g)
    for _ in range(5):
        d = rng.normal(size=g.shape)
        num = fd4(lambda y: u_objective_and_grad(y, mode, v, p, g)[0], x, d)
        assert num == pytest.approx(float(np.sum(grad * d)), rel=1e-5, abs=1e-9)


# --- alternating scheme --------------------------------------------------------------

def test_alternate_minimize_constant_has_zero_energy():
    g = GridSpec.square(9)
    res = alternate_minimize(AngleField(g, np.full(g.shape, 1.0)), LIFTING, DEFAULT,
                             Schedule((0.1, 0.05)))
    assert res.energy.total == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(res.v.values, 1.0)


@pytest.fixture(scope="module")
def step_run():
    g = GridSpec.interval(4001)
    pinned = np.zeros(g.shape, bool)
    pinned[[0, -1]] = True
    return alternate_minimize(make_step_lifting(g, math.pi / 2), LIFTING, DEFAULT,
                              Schedule((0.05, 0.025, 0.0125)), pinned=pinned)


def test_alternate_minimize_step_1d(step_run):
    target = float(JumpCost.build(DEFAULT)(math.pi / 2))
    assert step_run.energy.total == pytest.approx(target, rel=0.10)
    assert [r.epsilon for r in step_run.per_epsilon] == [0.05, 0.025, 0.0125]


def test_alternate_minimize_trace_is_monotone(step_run):
    rows = step_run.trace_rows()
    for eps in {r[0] for r in rows}:
        tot = [r[4] for r in rows if r[0] == eps]
        assert all(b <= a * (1 + 1e-6) for a, b in zip(tot, tot[1:]))


def test_alternate_minimize_annotates_errors(monkeypatch):
    def boom(*a, **k):
        raise SolverError("v-step diverged")

    monkeypatch.setattr(minimizer, "v_step", boom)
    g = GridSpec.interval(11)
    with pytest.raises(SolverError, match=r"mode=lifting, epsilon=0.1"):
        alternate_minimize(AngleField(g, np.zeros(11)), LIFTING, DEFAULT, Schedule((0.1,)))


def test_alternate_minimize_rejects_wrong_field_type():
    g = GridSpec.interval(5)
    with pytest.raises(Exception):
        alternate_minimize(CircleField(g, np.zeros(5)), LIFTING, DEFAULT)
    with pytest.raises(DomainError):
        alternate_minimize(AngleField(g, np.zeros(5)), "other", DEFAULT)


# --- 1-D profile -------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 0.9])
def test_mm_profile_cost_approaches_cw(t):
    prof, cost = mm_profile_1d(t, 0.01)
    assert cost == pytest.approx(2 * (1 - t) ** 2, abs=2e-3)
    mid = prof.values.size // 2
    assert prof.values[mid] == t and prof.values[0] == 1.0 and prof.values[-1] == 1.0
    assert prof.values.min() >= t - 1e-12


def test_mm_profile_domain():
    for bad in (-0.1, 1.5):
        with pytest.raises(DomainError):
            mm_profile_1d(bad, 0.1)
    with pytest.raises(DomainError):
        mm_profile_1d(0.5, 0.0)


# --- recovery ----------------------------------------------------------------------

def test_recovery_without_jumps_is_trivial():
    g = GridSpec.square(9)
    phi = AngleField(g, 0.1 * g.coords()[0])
    for _, v in recovery_sequence(phi, DEFAULT, Schedule((0.1, 0.05))):
        assert np.all(v.values == 1.0)


def test_recovery_single_jump_energy():
    g = GridSpec.interval(4001)
    phi = make_step_lifting(g, math.pi / 2)
    mask = [np.abs(np.diff(phi.values)) > 0]
    gfun = JumpCost.build(DEFAULT)
    target = float(gfun(math.pi / 2))
    seq = recovery_sequence(phi, DEFAULT, Schedule((0.02, 0.01)), g=gfun, jump_edges=mask)
    energies = [eval_F_eps(f, v, DEFAULT.with_epsilon(e)).total for (f, v), e in zip(seq, (0.02, 0.01))]
    assert energies[-1] == pytest.approx(target, rel=0.05)
    assert energies[-1] >= target - 1e-3


def test_recovery_layer_collision():
    g = GridSpec.interval(401)
    vals = np.zeros(401)
    vals[200:] = 1.0
    vals[210:] = 2.0
    phi = AngleField(g, vals)
    mask = [np.abs(np.diff(vals)) > 0]
    with pytest.raises(LayerCollisionError):
        recovery_sequence(phi, DEFAULT, Schedule((0.1,)), jump_edges=mask)
