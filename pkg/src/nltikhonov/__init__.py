"""Constrained nonlinear Tikhonov regularization with parameter-choice rules and condition diagnostics."""

from .core import ConstraintSet, ForwardProblem, InnerProduct, TikhonovResult
from .harness import __version__
from .problems import Conductivity1D, Potential1D, ScalarQuadratic
from .rules import EtaGrid, RuleFailure, choose
from .solver import SolverOptions, minimize

__all__ = [
    "ConstraintSet", "ForwardProblem", "InnerProduct", "TikhonovResult", "Conductivity1D", "Potential1D",
    "ScalarQuadratic", "EtaGrid", "RuleFailure", "choose", "SolverOptions", "minimize", "__version__",
]
