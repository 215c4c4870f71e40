"""Explicit sparse ReLU networks and the spline compiler."""

from .compiler import (
    CompileReport, build_bspline, build_indicator, build_mult, build_square, c_dm,
    compile_approx, bspline_net_budget,
)
from .network import NetworkStats, ReluNetwork, clip

__all__ = [
    "CompileReport", "NetworkStats", "ReluNetwork", "build_bspline", "build_indicator",
    "build_mult", "build_square", "c_dm", "clip", "compile_approx", "bspline_net_budget",
]
