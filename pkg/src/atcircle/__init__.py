"""Linear-growth Ambrosio-Tortorelli energies for circle-valued maps."""
from .energy_core import (
    EnergyBreakdown,
    EnergyParams,
    JumpCost,
    eval_cW,
    eval_F_eps_direct,
    eval_F_eps_lifting,
    eval_g,
    eval_g_many,
    eval_sharp_energy,
)
from .fields import (
    AngleField,
    CircleField,
    GridSpec,
    ScalarField,
    ShiftField,
    VortexConfig,
    lift_field,
    make_dipole_lifting,
    make_dipole_map,
    make_step_map,
    plaquette_winding,
    plaquette_windings,
    sigma_jump_length,
)

__version__ = "0.1.0"
