"""Thawed and frozen Gaussian approximations for two-level semiclassical
Schrodinger equations with a single eigenvalue crossing, including the
sqrt(eps) hopping correction, a grid reference solver and an experiment CLI."""

__version__ = "0.1.0"

from .bargmann import QuadratureGrid, bargmann_transform, frame_reconstruct
from .classical import integrate_trajectory, parallel_transport
from .errors import HkcrossError
from .hopping import CrossingEvent, crossing_params, transfer_quadrature
from .ivr import IvrConfig, IvrRun, ivr_correction, ivr_mode, propagate_initial_data
from .model import (MatrixPotentialSchrodinger, ModelSpec, ScalarHarmonic, ShiftedPhaseCrossing,
                    build_model)
from .refsolver import GridState, strang_evolve
from .singlewp import single_wp_propagate

__all__ = [
    "QuadratureGrid", "bargmann_transform", "frame_reconstruct", "integrate_trajectory",
    "parallel_transport", "HkcrossError", "CrossingEvent", "crossing_params",
    "transfer_quadrature", "IvrConfig", "IvrRun", "ivr_correction", "ivr_mode",
    "propagate_initial_data", "MatrixPotentialSchrodinger", "ModelSpec", "ScalarHarmonic",
    "ShiftedPhaseCrossing", "build_model", "GridState", "strang_evolve", "single_wp_propagate",
]
