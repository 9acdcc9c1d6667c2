"""Three-phase OPF with voltage-unbalance-aware nodal prices."""

from ._core import (
    DegeneratePointError,
    Network,
    ParseError,
    PowerFlowError,
    ValidationError,
    f_metric,
    grad_f,
    opf,
    power_flow,
    sensitivity,
    sweep,
    vuf,
)

__all__ = [
    "DegeneratePointError",
    "Network",
    "ParseError",
    "PowerFlowError",
    "ValidationError",
    "f_metric",
    "grad_f",
    "opf",
    "power_flow",
    "sensitivity",
    "sweep",
    "vuf",
]
