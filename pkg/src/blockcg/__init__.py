"""Block conditional gradient methods for ``min F(Ax) + sum_i g_i(x_i)``.

Cyclic (fixed order or random permutation), random-block and classical
conditional gradient with predefined, adaptive, backtracking and exact
line-search stepsizes, gap certificates and explicit rate constants.
"""
from .core import BlockPartition, InnerIterate, Point, gather, scatter
from .errors import (
    BlockCGError,
    ConfigurationError,
    ContractError,
    InputError,
    NumericalFailure,
    UnsupportedError,
)
from .measures import RateConstants, block_gap, check_gap_lipschitz, compute_constants, total_gap
from .oracles import Box, Simplex, brute_force_lmo, evaluate_g, lmo
from .problems import (
    ProblemInstance,
    gen_box_quadratic,
    gen_sdca_dual,
    gen_simplex_product,
    load_instance,
    save_instance,
)
from .smooth import (
    CallableOuter,
    QuadraticForm,
    ResidualState,
    ShiftedSquaredNorm,
    SmoothComposite,
    check_block_descent,
    spectral_norm,
)
from .solver import OptimumEstimate, RunTrace, SolverConfig, estimate_optimum, run, verify_rate
from .steppers import adaptive_step, backtracking_step, exact_line_search_quadratic, predefined_step

__version__ = "0.1.0"
