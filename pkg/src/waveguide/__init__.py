"""Acoustic waveguide models with exact discrete energy bookkeeping.

Submodules: ``geometry`` (tube profiles), ``node`` (boundary nodes and their
energy checks), ``webster`` (horn model), ``cylinder`` (axisymmetric
reference solver, also importable as ``waveguide3d``), ``stepper``
(implicit midpoint with energy ledger), ``signals``, ``config`` and ``cli``.
"""

from .cylinder import (
    CylinderSystem,
    build_cylinder,
    cross_section_average,
    cylinder_energy,
    end_channel_power,
    run_cylinder,
    wall_power,
)
from .geometry import PhysicalConstants, TubeGeometry, build_profile, validate_geometry
from .node import (
    DiscreteNode,
    add_dissipation,
    dissipativity_on_kernel,
    gl_defect,
    passivity_check,
    solve_stationary,
    timeflow_inverse,
)
from .signals import input_signals
from .stepper import LinearSystemHandle, midpoint_step, run_simulation
from .webster import assemble_webster, poincare_ratio

__version__ = "0.1.0"

__all__ = [
    "CylinderSystem",
    "DiscreteNode",
    "LinearSystemHandle",
    "PhysicalConstants",
    "TubeGeometry",
    "add_dissipation",
    "assemble_webster",
    "build_cylinder",
    "build_profile",
    "cross_section_average",
    "cylinder_energy",
    "dissipativity_on_kernel",
    "end_channel_power",
    "gl_defect",
    "input_signals",
    "midpoint_step",
    "passivity_check",
    "poincare_ratio",
    "run_cylinder",
    "run_simulation",
    "solve_stationary",
    "timeflow_inverse",
    "validate_geometry",
    "wall_power",
]
