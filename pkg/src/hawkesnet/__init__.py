"""Marked multivariate Hawkes processes: simulation, moment statistics,
neural and direct kernel estimation, and causality analytics."""

from hawkesnet.events import EventStream
from hawkesnet.kernels import (
    Exponential,
    PowerLaw,
    DelayedExponential,
    InhibitionTwoPhase,
    BimodalGaussian,
    NonMultiplicativeBimodal,
    Tabulated,
    KernelSpec,
    kernel_eval,
    kernel_l1_norm,
    aggregated_time_kernel,
    aggregated_mark_kernel,
)
from hawkesnet.algebra import NormMatrix, branching_ratio, baseline_from_rates, expected_rates
from hawkesnet.quadrature import QuadratureGrid, build_quadrature
from hawkesnet.simulate import SimConfig, simulate, intensity_at
from hawkesnet.moments import (
    StatGrid,
    SecondOrderStats,
    build_grid,
    linear_grid,
    estimate_first_order,
    estimate_second_order,
    interpolate_g,
    h_kernel,
)
from hawkesnet.dgm import DgmParams, InputScaler, glorot_init, forward, gradient
from hawkesnet.solver import TrainConfig, RowModel, train_row, fit, tabulate, goodness_of_fit
from hawkesnet.wienerhopf import WhSolution, wh_solve, wh_reconstruct
from hawkesnet.metrics import ErrorReport, CausalityReport, error_report, causality_report, convergence_study

__version__ = "0.1.0"
