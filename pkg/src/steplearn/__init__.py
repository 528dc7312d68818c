"""Learned regularizers for coefficient-domain denoising."""

from .core import GridRangeError, GridSpec, TrainingSet, bin_index, bin_interval, validate_problem
from .shrink import MultiPenalty, PenaltyTerm, denoise_diagonal, denoise_identity, shrink_multi, shrink_single
from .stepreg import StepRegularizer, argmin_penalized, denoise_with_step, is_quasiconvex, objective_I

__version__ = "0.1.0"
