"""Trust-region penalty SQP for contact-implicit trajectory optimization."""

from .nlp import NlpProblem, PenaltyVector, ProblemBuilder, VariableLayout, check_derivatives, eval_merit
from .problems import build_problem, initial_guess
from .solver import SolverConfig, SolveReport, SolveStatus, solve

__all__ = [
    "NlpProblem", "PenaltyVector", "ProblemBuilder", "VariableLayout", "check_derivatives",
    "eval_merit", "build_problem", "initial_guess", "SolverConfig", "SolveReport", "SolveStatus",
    "solve",
]
__version__ = "0.1.0"
