"""A-optimal block designs for comparing consecutive pairs of ordered treatments."""

__version__ = "0.1.0"

from .design import (  # noqa: E402
    Block,
    BlockCatalog,
    DesignMeasure,
    ExactDesign,
    ProblemSpec,
    build_contrasts,
    criterion,
    enumerate_blocks,
    exact_W,
    moment_matrix,
)
from .exact import efficiency, find_multiplier, nest_reduce, nested_sequence, round_measure  # noqa: E402
from .optimizer import OptimizationReport, OptimizerConfig, certificate, optimize  # noqa: E402

__all__ = [
    "Block",
    "BlockCatalog",
    "DesignMeasure",
    "ExactDesign",
    "OptimizationReport",
    "OptimizerConfig",
    "ProblemSpec",
    "build_contrasts",
    "certificate",
    "criterion",
    "efficiency",
    "enumerate_blocks",
    "exact_W",
    "find_multiplier",
    "moment_matrix",
    "nest_reduce",
    "nested_sequence",
    "optimize",
    "round_measure",
]
