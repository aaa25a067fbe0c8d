"""Simulation and diagnostics for (compound) Hawkes processes.

Thinning of a driving Poisson measure, the renewal function psi,
debiased distances to the Gaussian limit, and Monte Carlo checks of
the add-point structure behind the central limit theorems.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, ContractError, EnvelopeBreach, HawkesCLTError,
                     InvalidKernelError, InvalidMarksError, NumericalFailure,
                     OutOfRangeError, StabilityError, VerificationFailure)
from .kernel import (Kernel, PsiTable, StabilityReport, kernel_l1, mean_compensator,
                     mean_intensity, solve_psi, stability_check)
from .marks import MarkDistribution, check_fast_rate_hypothesis, moments, sample_marks
from .engine import (CoupledPathResult, EventLog, PathResult, simulate_batch,
                     simulate_cluster, simulate_coupled_addpoint, simulate_thinning)
from .theory import AsymptoticParams, gamma2, offspring_bound, sigma2, varpi, zeta2
from .stats import (DistanceEstimate, RateFit, Sample, SinusoidDictionary, fit_rate,
                    k_cumulants, k_statistics, normalize, smooth_distance_surrogate,
                    wasserstein1_to_normal)
from .config import ExperimentConfig, Model
from .rng import stream
