import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from atcircle.errors import (
    ConfigurationError,
    DegeneratePlaquetteError,
    DimensionError,
    DomainError,
)
from atcircle.fields import (
    TWO_PI,
    AngleField,
    CircleField,
    GridSpec,
    ScalarField,
    ShiftField,
    VortexConfig,
    jump_regions,
    lift_field,
    load_field_binary,
    load_field_csv,
    loop_winding,
    make_dipole_lifting,
    make_dipole_map,
    make_step_lifting,
    make_step_map,
    make_vortex_map,
    plaquette_winding,
    plaquette_windings,
    principal_difference,
    save_field_binary,
    save_field_csv,
    shifts_of,
    sigma_jump_length,
    wrap_angle,
)

angles = st.floats(-50, 50, allow_nan=False)


@given(angles)
def test_wrap_and_principal(x):
    w = wrap_angle(x)
    assert 0.0 <= w < TWO_PI
    d = principal_difference(x)
    assert -math.pi < d <= math.pi
    assert math.isclose(math.cos(d), math.cos(x), abs_tol=1e-9)


def test_gridspec_invariants():
    g = GridSpec.square(11, 2.0)
    assert g.h == pytest.approx(0.2) and g.dim == 2 and g.cell_shape == (10, 10)
    assert g.node_weights().sum() == pytest.approx(4.0)
    assert GridSpec.interval(5).face_length == 1.0 and g.face_length == pytest.approx(0.2)
    with pytest.raises(DomainError):
        GridSpec.interval(1)
    with pytest.raises(DimensionError):
        GridSpec((1.0, 2.0), (11, 11))
    with pytest.raises(DimensionError):
        GridSpec((1.0, 1.0, 1.0), (3, 3, 3))


def test_circle_field_wraps_and_is_unit():
    g = GridSpec.interval(4)
    u = CircleField(g, [-1.0, 7.0, 0.0, 2 * math.pi])
    assert np.all((u.theta >= 0) & (u.theta < TWO_PI))
    assert np.allclose(np.hypot(u.u[..., 0], u.u[..., 1]), 1.0)
    back = CircleField.from_vectors(g, u.u)
    assert np.allclose(back.theta, u.theta)
    with pytest.raises(ValueError):
        u.theta[0] = 1.0


def test_scalar_and_shift_fields():
    g = GridSpec.interval(3)
    assert np.all(ScalarField.constant(g, 0.5).values == 0.5)
    with pytest.raises(DomainError):
        ShiftField(g, [0.5, 0, 0])


def test_step_map_examples():
    g = GridSpec.interval(11)
    u = make_step_map(g, math.pi / 2)
    assert set(np.round(u.theta, 12)) == {0.0, round(math.pi / 2, 12)}
    for delta, chord in ((math.pi, 2.0), (math.pi / 2, math.sqrt(2))):
        w = make_step_map(g, delta).u
        assert np.linalg.norm(w[-1] - w[0]) == pytest.approx(chord, abs=1e-12)
    for bad in (0.0, -1.0, 3.5):
        with pytest.raises(DomainError):
            make_step_map(g, bad)


def test_vortex_config_validation():
    with pytest.raises(ConfigurationError):
        VortexConfig([[0.1, 0.1]], [2])
    with pytest.raises(ConfigurationError):
        VortexConfig([[0.1, 0.1], [0.1, 0.1]], [1, -1])
    with pytest.raises(ConfigurationError):
        make_dipole_map(GridSpec.square(9), VortexConfig([[0.5, 0.5]], [1]))
    with pytest.raises(ConfigurationError):
        make_dipole_map(GridSpec.square(5), VortexConfig([[0.3, 0.3], [0.32, 0.32]], [1, -1]))


def test_dipole_windings():
    g = GridSpec.square(33)
    vc = VortexConfig.dipole(distance=0.5)
    w = plaquette_windings(make_dipole_map(g, vc))
    assert np.count_nonzero(w) == 2 and w.sum() == 0
    snapped = vc.snapped(g)
    for p, q in zip(snapped.positions, snapped.charges):
        assert w[g.locate_cell(p)] == q
    empty = make_dipole_map(g, VortexConfig(np.zeros((0, 2)), []))
    assert np.all(empty.theta == 0) and not plaquette_windings(empty).any()
    two = VortexConfig([[0.2, 0.3], [0.7, 0.3], [0.3, 0.8], [0.8, 0.75]], [1, -1, -1, 1])
    w2 = plaquette_windings(make_dipole_map(g, two))
    assert np.count_nonzero(w2) == 4 and w2.sum() == 0


def test_plaquette_winding_examples():
    g = GridSpec.square(2, 0.1, (-0.05, -0.05))
    vortex = make_vortex_map(g, VortexConfig([[0.0, 0.0]], [1]))
    assert plaquette_winding(vortex, (0, 0)) == 1
    assert plaquette_winding(CircleField(g, -vortex.theta), (0, 0)) == -1
    assert plaquette_winding(CircleField(g, np.zeros((2, 2))), (0, 0)) == 0
    with pytest.raises(DegeneratePlaquetteError):
        plaquette_winding(CircleField(g, [[0.0, math.pi], [0.0, 0.0]]), (0, 0))
    with pytest.raises(DomainError):
        plaquette_winding(vortex, (1, 0))


@given(hnp.arrays(np.float64, (6, 7), elements=st.floats(0, 2 * math.pi)),
       st.integers(0, 4), st.integers(0, 5))
def test_discrete_stokes(theta, i0, j0):
    u = CircleField(GridSpec((5.0, 6.0), (6, 7)), theta)
    w = plaquette_windings(u, check_degenerate=False)
    i1, j1 = 5, 6
    assert w[i0:i1, j0:j1].sum() == loop_winding(u, i0, i1, j0, j1)


@given(hnp.arrays(np.float64, (4, 4), elements=st.floats(0, 6.28)),
       hnp.arrays(np.int64, (4, 4), elements=st.integers(-3, 3)))
def test_lift_is_right_inverse(theta, k):
    g = GridSpec.square(4)
    u = CircleField(g, theta)
    phi = lift_field(u, ShiftField(g, k))
    assert np.array_equal(wrap_angle(phi.values), u.theta) or np.allclose(
        np.exp(1j * phi.values), np.exp(1j * u.theta), atol=1e-12)
    assert np.array_equal(shifts_of(u, phi).values, k)


def test_lift_examples():
    g = GridSpec.interval(10)
    u = make_step_map(g, math.pi / 2)
    assert np.array_equal(lift_field(u, ShiftField(g, np.zeros(10, int))).values, u.theta)
    phi = lift_field(u, ShiftField(g, np.full(10, 3)))
    assert np.allclose(np.exp(1j * phi.values), np.exp(1j * u.theta))
    k = np.where(g.axes()[0] < 0.5, 0, 1)
    jumps = np.diff(lift_field(u, ShiftField(g, k)).values)
    assert jumps.max() == pytest.approx(math.pi / 2 + TWO_PI)
    with pytest.raises(DimensionError):
        lift_field(u, ShiftField(GridSpec.interval(3), [0, 0, 0]))
    with pytest.raises(DomainError):
        shifts_of(u, AngleField(g, u.theta + 0.1))


def test_dipole_lifting_cuts_along_segment():
    g = GridSpec.square(41)
    vc = VortexConfig.dipole(distance=0.5)
    phi = make_dipole_lifting(g, vc)
    assert np.allclose(np.exp(1j * phi.values), np.exp(1j * make_dipole_map(g, vc).theta))
    assert sigma_jump_length(phi, math.pi) == pytest.approx(0.5, abs=2 * g.h)


def test_sigma_jump_length_examples():
    g = GridSpec.interval(11)
    assert sigma_jump_length(AngleField(g, np.full(11, 2.0)), 0.0) == 0.0
    step = make_step_lifting(g, 1.0)
    assert sigma_jump_length(step, 0.0) == pytest.approx(g.h)
    assert sigma_jump_length(step, 1.5) == 0.0
    with pytest.raises(DomainError):
        sigma_jump_length(step, -0.1)


def test_jump_regions():
    labels = np.array([[0, 0, 1], [2, 0, 1], [2, 2, 0]])
    ids, vals = jump_regions(labels)
    assert len(vals) == 4  # two separate zero regions
    assert ids[0, 0] == ids[1, 1] and ids[0, 0] != ids[2, 2]


@pytest.mark.parametrize("make", [
    lambda g: CircleField(g, np.random.default_rng(0).uniform(0, 6, g.shape)),
    lambda g: AngleField(g, np.random.default_rng(1).normal(0, 9, g.shape)),
    lambda g: ScalarField(g, np.random.default_rng(2).uniform(0, 1, g.shape)),
    lambda g: ShiftField(g, np.random.default_rng(3).integers(-2, 3, g.shape)),
])
@pytest.mark.parametrize("grid", [GridSpec.interval(7, 2.0, -1.0), GridSpec.square(5, 0.5, (0.25, 1.0))])
def test_snapshot_roundtrip(tmp_path, make, grid):
    f = make(grid)
    save_field_csv(tmp_path / "f.csv", f)
    save_field_binary(tmp_path / "f.atcf", f)
    for back in (load_field_csv(tmp_path / "f.csv"), load_field_binary(tmp_path / "f.atcf")):
        assert type(back) is type(f)
        assert back.grid == f.grid
        assert np.array_equal(back.values, f.values)
    assert (tmp_path / "f.atcf").read_bytes()[:4] == b"ATCF"


def test_binary_rejects_garbage(tmp_path):
    (tmp_path / "bad.atcf").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ConfigurationError):
        load_field_binary(tmp_path / "bad.atcf")
