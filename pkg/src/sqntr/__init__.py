"""Stochastic trust-region limited-memory quasi-Newton training.

Compact L-BFGS and L-SR1 matrices, an exact trust-region subproblem solver
working in their spectral basis, half-overlapping multi-batch sampling, and
training loops for small finite-sum problems.
"""
from .compact import CompactHessian, build_bfgs, build_sr1, select_gamma_bfgs, select_gamma_sr1
from .curvature import CurvaturePairBuffer
from .objective import MlpObjective, QuadraticObjective, Rosenbrock, fd_check
from .sampling import plan_epoch
from .trainers import MetricsRecord, TrainConfig, train, train_adam, train_deterministic, train_stochastic
from .trust_region import SubproblemSolution, solve_subproblem

__version__ = "0.1.0"

__all__ = [
    "CompactHessian",
    "CurvaturePairBuffer",
    "MetricsRecord",
    "MlpObjective",
    "QuadraticObjective",
    "Rosenbrock",
    "SubproblemSolution",
    "TrainConfig",
    "build_bfgs",
    "build_sr1",
    "fd_check",
    "plan_epoch",
    "select_gamma_bfgs",
    "select_gamma_sr1",
    "solve_subproblem",
    "train",
    "train_adam",
    "train_deterministic",
    "train_stochastic",
]
