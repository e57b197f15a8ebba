from .dual import dual_name, dualize, mccormick_binary
from .model import INF, Constraint, LinearModel, ModelError, Variable, lin
from .solve import BACKENDS, SolveParams, SolveResult, SolverError, solve

__all__ = [
    "BACKENDS", "Constraint", "INF", "LinearModel", "ModelError", "SolveParams", "SolveResult",
    "SolverError", "Variable", "dual_name", "dualize", "lin", "mccormick_binary", "solve",
]
