"""Exclusion process with long jumps and a slow barrier at the origin.

Simulator plus numerical verification of the fluctuation-field limits:
discrete-operator convergence, quadratic-variation limits, and stationary
Ornstein-Uhlenbeck covariances under free / Robin / Neumann heat semigroups.
"""

from .kernel import JumpKernel, BarrierParams, build_kernel, jump_prob, theta, alpha_hat
from .process import SimParams, Configuration, simulate, init_bernoulli
from .fields import (
    TestFunction,
    make_test_function,
    fluctuation_field,
    martingale_decomposition,
    norm_2bg,
)
from .semigroups import SemigroupEvaluator, apply, ou_covariance, pde_reference
from .stats import ReplicaEnsemble, moment_estimates, invariance_test

__version__ = "0.1.0"
