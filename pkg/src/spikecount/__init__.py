"""Estimate the number of neurons contributing to a single-channel spike train."""

from .detector import DetectorConfig, detect, estimate_sigma
from .errors import SpikeCountError
from .estimator import EstimateReport, EstimatorConfig, SpikeMatrix, estimate_nu
from .hermitian import HermitianMatrix, eigenvalues_desc, trig_matrix
from .moment_model import MixtureSpec, eigen_bounds, m_p
from .simulator import SimulationSpec, default_templates, generate, oracle_extract

__version__ = "0.1.0"
