"""Preference-based Bayesian optimization for human-in-the-loop tuning.

Learns a latent utility function from pairwise comparisons with a Gaussian
process preference model, selects informative duels with an expected-best
acquisition criterion, and hosts both simulated benchmark studies and live
elicitation sessions.
"""

from .acquisition import (
    AcquisitionConfig,
    Recommendation,
    maximize_qeubo_continuous,
    maximize_qeubo_discrete,
    qeubo_value,
    recommend,
)
from .domain import (
    Configuration,
    ParameterSpace,
    ParameterSpec,
    from_native,
    load_preset,
    make_grid,
    snap_to_grid,
    sobol_points,
    to_native,
)
from .loops import (
    LoopConfig,
    LoopState,
    ModelConfig,
    Seeds,
    default_model_config,
    init_phase,
    run,
    step_bpe4prost,
    step_linecospar,
    step_random,
)
from .model import (
    ComparisonDataset,
    ComparisonRecord,
    KernelConfig,
    LaplacePosterior,
    LikelihoodConfig,
    fit_hyperparameters,
    fit_laplace,
    kernel_eval,
    logistic_likelihood,
    pref_likelihood,
    predict,
    probit_likelihood,
    sample_utility,
)

__version__ = "0.1.0"
