"""Gauge-radial (Schwarz-type) rearrangement on Carnot groups.

The package samples compactly supported fields on uniform grids over the real
line, the plane or the first Heisenberg group, rearranges them with respect to
a homogeneous gauge, and checks the resulting identities and Polya-Szego type
inequalities numerically.
"""
from .config import ExperimentConfig, load_config
from .errors import (
                     CarnotError,
                     InputError,
                     NumericalError,
                     StructureError,
                     TruncationError,
                     UndefinedPointError,
)
from .fields import (
                     DistributionFunction,
                     GridField,
                     build_field,
                     distribution_function,
                     integrate,
                     superlevel_measure,
)
from .gauges import Gauge, carnot_gauge, get_gauge, koranyi_gauge, validate_gauge
from .groups import GroupSpec, dilate, get_group, group_multiply, validate_group
from .horizontal import (
                     bv_norm,
                     coarea_check,
                     energy,
                     horizontal_gradient,
                     horizontal_perimeter,
                     perimeter_dual_bound,
                     perimeter_sweep,
)
from .rearrange import RearrangementProfile, rearrange_field, volume_function
from .reports import VerificationReport
from .suite import SuiteResult, run_suite
from .verify import (
                     ConstantsRecord,
                     check_equimeasurability,
                     check_perimeter_quasimonotone,
                     energy_carnot_p,
                     energy_p1,
                     energy_weighted_p,
                     estimate_constants,
)

__version__ = "0.1.0"

__all__ = [
                     "CarnotError",
                     "ConstantsRecord",
                     "DistributionFunction",
                     "ExperimentConfig",
                     "Gauge",
                     "GridField",
                     "GroupSpec",
                     "InputError",
                     "NumericalError",
                     "RearrangementProfile",
                     "StructureError",
                     "SuiteResult",
                     "TruncationError",
                     "UndefinedPointError",
                     "VerificationReport",
                     "__version__",
                     "build_field",
                     "bv_norm",
                     "carnot_gauge",
                     "check_equimeasurability",
                     "check_perimeter_quasimonotone",
                     "coarea_check",
                     "dilate",
                     "distribution_function",
                     "energy",
                     "energy_carnot_p",
                     "energy_p1",
                     "energy_weighted_p",
                     "estimate_constants",
                     "get_gauge",
                     "get_group",
                     "group_multiply",
                     "horizontal_gradient",
                     "horizontal_perimeter",
                     "integrate",
                     "koranyi_gauge",
                     "load_config",
                     "perimeter_dual_bound",
                     "perimeter_sweep",
                     "rearrange_field",
                     "run_suite",
                     "superlevel_measure",
                     "validate_gauge",
                     "validate_group",
                     "volume_function",
]
