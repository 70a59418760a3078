"""Region-based speech separation: array features, room simulation, oracle masking and metrics."""

from .geometry import DEFAULT_REGIONS, ArrayGeometry, ArrayPose, Region, compute_delays, linear_array

__all__ = ["ArrayGeometry", "ArrayPose", "DEFAULT_REGIONS", "Region", "compute_delays", "linear_array"]
__version__ = "0.1.0"
