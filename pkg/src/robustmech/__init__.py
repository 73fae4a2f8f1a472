"""Worst-case revenue of selling mechanisms for a common-value good.

Modules: :mod:`prior` (value distributions), :mod:`mechanism` (finite
mechanisms and builders), :mod:`lp_core` (simplex solver), :mod:`bce`
(worst-case correlated equilibria and dual certificates), :mod:`guarantee`
(closed-form revenue guarantees) and :mod:`cli`.
"""
from .prior import ContinuousPrior, DiscretePrior, discretize, parse_prior_spec
from .mechanism import (FiniteMechanism, build_exponential, build_generalized_two_buyer,
                        build_posted_price)
from .lp_core import LinearProgram, solve_lp
from .bce import BandRates, max_dual_revenue, min_bce_revenue, markov_embed
from .guarantee import SearchConfig, pi_sharp_2, pi_star_I, rs_construct

__version__ = "0.1.0"

__all__ = [
    "ContinuousPrior", "DiscretePrior", "discretize", "parse_prior_spec",
    "FiniteMechanism", "build_exponential", "build_generalized_two_buyer", "build_posted_price",
    "LinearProgram", "solve_lp",
    "BandRates", "max_dual_revenue", "min_bce_revenue", "markov_embed",
    "SearchConfig", "pi_sharp_2", "pi_star_I", "rs_construct",
]
