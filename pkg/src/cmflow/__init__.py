"""Dense optical flow from event cameras by multi-reference focus maximization."""

from .estimator import ContrastMaximizationFlow
from .events import (
    Event,
    EventSlice,
    generate_linear_motion_events,
    load_events_text,
    oracle_scene,
    slice_by_count,
    write_events_text,
)
from .exceptions import (
    CMFlowError,
    DegenerateInputError,
    EmptySliceError,
    EventParseError,
    GeometryError,
    NumericalError,
    StabilityError,
    UndefinedMetricError,
)
from .flowrep import DenseFlow, TileGrid, dense_from_tiles, init_next_slice, upsample_tile_grid
from .io import read_flo, render_flow_color, write_flo, write_iwe_image
from .metrics import aee_and_outliers, eval_mask, fwl, to_displacement
from .objective import ObjectiveReport, avg_timestamp_loss, composite_cost, multi_ref_focus
from .pde import FlowVolume, build_volume, propagate_burgers, propagate_upwind
from .solver import SolveConfig, SolveResult, optimize_scale, solve_multiscale, solve_sequence
from .warp import Iwe, accumulate_iwe, warp_events, warp_events_time_aware

__version__ = "0.1.0"

__all__ = [
    "ContrastMaximizationFlow",
    "CMFlowError",
    "DegenerateInputError",
    "DenseFlow",
    "EmptySliceError",
    "Event",
    "EventParseError",
    "EventSlice",
    "FlowVolume",
    "GeometryError",
    "Iwe",
    "NumericalError",
    "ObjectiveReport",
    "SolveConfig",
    "SolveResult",
    "StabilityError",
    "TileGrid",
    "UndefinedMetricError",
    "accumulate_iwe",
    "aee_and_outliers",
    "avg_timestamp_loss",
    "build_volume",
    "composite_cost",
    "dense_from_tiles",
    "eval_mask",
    "fwl",
    "generate_linear_motion_events",
    "init_next_slice",
    "load_events_text",
    "multi_ref_focus",
    "optimize_scale",
    "oracle_scene",
    "propagate_burgers",
    "propagate_upwind",
    "read_flo",
    "render_flow_color",
    "slice_by_count",
    "solve_multiscale",
    "solve_sequence",
    "to_displacement",
    "upsample_tile_grid",
    "warp_events",
    "warp_events_time_aware",
    "write_events_text",
    "write_flo",
    "write_iwe_image",
]
