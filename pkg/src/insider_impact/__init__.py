"""Price-impact and price-taking equilibria of a CARA-normal market with one insider."""

from .equilibria import Equilibrium, EquilibriumKind, solve
from .model_core import (
    BracketError,
    ConvergenceError,
    MarketParams,
    ParameterError,
    SolverError,
    derive,
    positive_root,
)
from .multiasset import AssetModel, solve_multi
from .welfare import ce_ex_ante, ce_interim

__version__ = "0.1.0"
