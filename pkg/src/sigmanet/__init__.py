"""A computable sigmoidal activation and a fixed-weight two-hidden-layer network built on it."""

from .activation import Sigma, SigmaParams, sigma, sigma_local, sigma_table
from .enumeration import MonicPoly, TreeIndex, index_to_poly, poly_to_address, poly_to_index
from .kst import build_decomposition, compute_outer
from .poly_fit import SigmaTerm, fit_polynomial, represent_univariate, sigma_rep
from .tlfn import BudgetError, TlfnModel, build_network, load_model

__all__ = [
    "BudgetError", "MonicPoly", "Sigma", "SigmaParams", "SigmaTerm", "TlfnModel", "TreeIndex",
    "build_decomposition", "build_network", "compute_outer", "fit_polynomial", "index_to_poly",
    "load_model", "poly_to_address", "poly_to_index", "represent_univariate", "sigma", "sigma_local",
    "sigma_rep", "sigma_table",
]
