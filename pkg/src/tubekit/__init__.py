"""tubekit: executable geometry of delta-tube unions."""

from .errors import (
    EstimationError,
    InternalError,
    PreconditionError,
    RegimeError,
    SchemaError,
    TubekitError,
)
from .tubes import (
    Direction,
    Tube,
    TubeFamily,
    angle,
    is_delta_separated,
    is_essentially_distinct,
    pair_intersection_volume,
    tube_volume,
    vertical_horizontal_distance,
)

from .measure import VolumeEstimate, lower_bound, multiplicity_at, union_volume
from .constructions import RegimeWarning, slab_configuration, small_cap_configuration, standard_configuration

__version__ = "0.1.0"

__all__ = [
    "Direction",
    "RegimeWarning",
    "VolumeEstimate",
    "lower_bound",
    "multiplicity_at",
    "slab_configuration",
    "small_cap_configuration",
    "standard_configuration",
    "union_volume",
    "EstimationError",
    "InternalError",
    "PreconditionError",
    "RegimeError",
    "SchemaError",
    "Tube",
    "TubeFamily",
    "TubekitError",
    "angle",
    "is_delta_separated",
    "is_essentially_distinct",
    "pair_intersection_volume",
    "tube_volume",
    "vertical_horizontal_distance",
]
