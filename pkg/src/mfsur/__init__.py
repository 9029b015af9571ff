"""Bayesian sequential design of experiments for multi-fidelity stochastic
simulators: estimate the probability that a simulator output exceeds a
critical threshold at the highest fidelity, choosing each new simulation
point and fidelity level by expected uncertainty reduction per unit cost.

Hot kernels (bivariate normal CDF, trajectory integration) run in a compiled
extension when available, with a pure-numpy fallback selected at import; see
``mfsur._backend.BACKEND_NAME``.
"""

from mfsur._backend import BACKEND_NAME, HAVE_COMPILED
from mfsur.exceedance import ExceedanceField, QuadratureMeasure, ThresholdSpec
from mfsur.gp import (KernelSpec, NoiseFunction, ObservationSet, PosteriorGP,
                      fit_posterior, posterior_cov, posterior_mean)
from mfsur.harness import ExperimentConfig, compare_strategies, run_experiment
from mfsur.normals import binorm_cdf, norm_cdf
from mfsur.oscillator import OscillatorInput, simulate
from mfsur.selection import (CandidateSet, CostModel, SelectionResult,
                             criterion_J, select_msur, select_sur)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME", "HAVE_COMPILED", "ExceedanceField", "QuadratureMeasure",
    "ThresholdSpec", "KernelSpec", "NoiseFunction", "ObservationSet",
    "PosteriorGP", "fit_posterior", "posterior_cov", "posterior_mean",
    "ExperimentConfig", "compare_strategies", "run_experiment", "binorm_cdf",
    "norm_cdf", "OscillatorInput", "simulate", "CandidateSet", "CostModel",
    "SelectionResult", "criterion_J", "select_msur", "select_sur",
    "__version__",
]
