"""Physics-informed neural networks for ODE benchmark systems.

Self-contained: a numpy reverse-mode tape carrying second-order time
derivatives, a small MLP, Adam and L-BFGS, Runge-Kutta reference solvers,
four benchmark dynamical systems, and a CLI for running the studies.
"""

from .autodiff import Tape, Taylor2, backward, grad_check, seed_input, taylor_apply
from .engine import (
    CollocationSet,
    LossWeights,
    TrainConfig,
    TrainReport,
    l2_relative_error,
    l2_relative_error_per_component,
    make_synthetic_observations,
    total_loss,
    train,
)
from .errors import ConfigError, NumericsError
from .integrators import (
    NOISE_LEVELS,
    ObservationSet,
    Trajectory,
    adaptive_rk45_integrate,
    add_gaussian_noise,
    rk4_integrate,
)
from .network import (
    FeatureMap,
    NetworkSpec,
    OutputTransform,
    forward,
    init_params,
    predict,
)
from .optimizers import AdamState, adam_step, lbfgs_run, two_stage_train
from .problems import PROBLEMS, get_problem

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Taylor2",
    "backward",
    "grad_check",
    "seed_input",
    "taylor_apply",
    "CollocationSet",
    "LossWeights",
    "TrainConfig",
    "TrainReport",
    "l2_relative_error",
    "l2_relative_error_per_component",
    "make_synthetic_observations",
    "total_loss",
    "train",
    "ConfigError",
    "NumericsError",
    "NOISE_LEVELS",
    "ObservationSet",
    "Trajectory",
    "adaptive_rk45_integrate",
    "add_gaussian_noise",
    "rk4_integrate",
    "FeatureMap",
    "NetworkSpec",
    "OutputTransform",
    "forward",
    "init_params",
    "predict",
    "AdamState",
    "adam_step",
    "lbfgs_run",
    "two_stage_train",
    "PROBLEMS",
    "get_problem",
    "__version__",
]
