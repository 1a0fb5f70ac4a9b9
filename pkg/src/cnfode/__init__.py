"""Collocation neural forms for initial value problems, with domain fragmentation."""

__version__ = "0.1.0"

from .ffnn import ConstantInit, NetworkWeights, UniformInit, network_eval, network_gradients
from .fragmentation import (FragmentedSolution, evaluate, make_fragmentation, solve_scnf,
                            solve_scnf_system)
from .neural_form import MTSM, TSM, NeuralFormSpec, WeightMatrix, nf_eval, nf_weight_grads
from .oracle import delta_u, delta_u_fragmented, rk4_solve
from .problems import (PROBLEMS, IvpSystem, dahlquist_problem, oscillating_problem,
                       rigid_body_problem)
from .training import ConfigError, TrainingConfig, TrainingDiverged, train

__all__ = [
    "__version__",
    "ConstantInit", "UniformInit", "NetworkWeights", "network_eval", "network_gradients",
    "TSM", "MTSM", "NeuralFormSpec", "WeightMatrix", "nf_eval", "nf_weight_grads",
    "IvpSystem", "PROBLEMS", "dahlquist_problem", "oscillating_problem", "rigid_body_problem",
    "TrainingConfig", "ConfigError", "TrainingDiverged", "train",
    "FragmentedSolution", "make_fragmentation", "solve_scnf", "solve_scnf_system", "evaluate",
    "rk4_solve", "delta_u", "delta_u_fragmented",
]
