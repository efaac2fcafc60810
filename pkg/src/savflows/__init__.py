"""Energy-stable auxiliary-variable time integrators for dissipative systems
on periodic Fourier pseudo-spectral grids."""

from .bdf import BdfTable, History, bdf_table, combine_A, extrapolate_B
from .models import (
    ModelSpec,
    allen_cahn,
    cahn_hilliard,
    pfc,
    vesicle,
    with_manufactured_forcing,
)
from .msav import MsavStepper
from .schemes import (
    GsavStepper,
    RelaxOutcome,
    SavStepper,
    SchemeConfig,
    StepTrace,
    relax,
)
from .spectral import (
    DiagonalSymbol,
    Field,
    Grid,
    Spectrum,
    forward,
    inner,
    integrate,
    inverse,
    l2_norm,
)

__all__ = [
    "BdfTable", "History", "bdf_table", "combine_A", "extrapolate_B",
    "ModelSpec", "allen_cahn", "cahn_hilliard", "pfc", "vesicle",
    "with_manufactured_forcing", "MsavStepper", "GsavStepper", "SavStepper",
    "SchemeConfig", "StepTrace", "RelaxOutcome", "relax",
    "DiagonalSymbol", "Field", "Grid", "Spectrum", "forward", "inverse",
    "integrate", "inner", "l2_norm",
]

__version__ = "0.1.0"
