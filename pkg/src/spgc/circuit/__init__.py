from .circuit import MISSING, Circuit, InputSelection, Unit, backward, build, evaluate, sample_topdown
from .structure import GroupSpec, RegionGraphSpec
from .validate import check_units, evaluate_units

__all__ = [
    "MISSING",
    "Circuit",
    "GroupSpec",
    "InputSelection",
    "RegionGraphSpec",
    "Unit",
    "backward",
    "build",
    "check_units",
    "evaluate",
    "evaluate_units",
    "sample_topdown",
]
