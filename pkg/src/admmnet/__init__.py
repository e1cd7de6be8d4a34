"""Decentralized consensus ADMM solvers (exact and inexact) with a benchmark harness."""

from . import backend
from .consensus import (
    BetaConditionWarning,
    ConsensusConfig,
    ConsensusState,
    DivergenceError,
    c_admm_round,
    ic_admm_round,
    run_consensus,
)
from .dual import (
    DualConsensusConfig,
    DualConsensusState,
    dc_admm_round,
    idc_admm_round,
    kkt_residuals,
    run_dual_consensus,
)
from .graph import Graph, GraphError, compute_spectrum, generate_connected_graph
from .harness import ExperimentSpec, SpecError, build_instance, compare, run_experiment, tune_beta
from .inner import InnerConfig, InnerSolverError, centralized_reference, centralized_reference_p2, fista_solve
from .metrics import Trace, accuracy, consensus_error, flop_estimate, linear_rate_fit

__version__ = "0.1.0"
