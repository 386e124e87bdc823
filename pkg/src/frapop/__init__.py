"""Splitting-particle solver for size-structured population models.

Measures are finite sums of weighted Dirac masses; each time step transports
particle locations along the growth field and then evolves masses through a
linear birth/death system whose newborn placements are quantized onto a fixed
grid, keeping the particle count finite and the scheme fully deterministic.
"""
from .errors import FrapopError
from .fra import PiecewiseLinearMap, QuantizedMap, build_fbar, build_quantized, value_grid
from .harness import (
    DESK_REFERENCE,
    OFFSET_REFERENCE,
    PAPER_REFERENCE,
    ConvergenceReport,
    ConvergenceRow,
    error_at,
    initial_measure,
    order_table,
    reference_solution,
    report_to_csv,
    report_to_plot_data,
    report_to_text,
    steps_for,
)
from .measures import (
    ParticleMeasure,
    canonicalize,
    discretize_density,
    read_particles,
    rho_distance,
    total_mass,
    w1_normalized,
    write_particles,
)
from .model import ModelSpec, cell_division_model, load_model_file, validate
from .solver import SimConfig, StepTrace, run, step_birth_death, step_transport, two_particle_oracle

__version__ = "1.0.0"

__all__ = [
    "FrapopError",
    "ParticleMeasure",
    "ModelSpec",
    "SimConfig",
    "StepTrace",
    "QuantizedMap",
    "PiecewiseLinearMap",
    "ConvergenceReport",
    "ConvergenceRow",
    "DESK_REFERENCE",
    "OFFSET_REFERENCE",
    "PAPER_REFERENCE",
    "build_quantized",
    "build_fbar",
    "value_grid",
    "canonicalize",
    "cell_division_model",
    "discretize_density",
    "error_at",
    "initial_measure",
    "load_model_file",
    "order_table",
    "read_particles",
    "reference_solution",
    "report_to_csv",
    "report_to_plot_data",
    "report_to_text",
    "rho_distance",
    "run",
    "step_birth_death",
    "step_transport",
    "steps_for",
    "total_mass",
    "two_particle_oracle",
    "validate",
    "w1_normalized",
    "write_particles",
]
