"""Gradient-free proximal solvers for finite-sum composite objectives.

The package minimizes F(x) = (1/n) sum_i f_i(x) + psi(x) when only noisy
point evaluations of the components f_i are available. Gradients are
replaced by two-point finite-difference estimates (coordinate-wise or
along random Gaussian directions), optionally variance-reduced with
per-epoch snapshots or a per-component gradient table, and psi is handled
through its proximal map.

Quick start::

    import numpy as np
    from zoprox import (
        Regularizer, SolverConfig, make_sigmoid_toy, sigmoid_lipschitz,
        zo_prox_svrg,
    )

    toy = make_sigmoid_toy(n=200, d=20, seed=7)
    cfg = SolverConfig(batch=35, epochs=8, inner=6, rho=0.25,
                       lipschitz=toy.lipschitz, seed=7)
    trace = zo_prox_svrg(toy.oracle, Regularizer.lasso(1e-4), cfg)
    print(trace.final_objective, trace.total_queries)
"""

from .backend import BACKEND, active_backend
from .core import (
    ComponentOracle,
    CallableOracle,
    DimensionError,
    InvalidBatch,
    InvalidStep,
    NonFiniteValue,
    QueryCounter,
    RandomSource,
    ZoproxError,
    full_function_value,
    sample_minibatch,
)
from .data import (
    Dataset,
    LabelError,
    ParseError,
    SplitError,
    load_libsvm,
    parse_libsvm,
    serialize_libsvm,
    split,
)
from .estimators import (
    MU_FLOOR,
    GradientEstimatorConfig,
    MuSchedule,
    coosge_component,
    estimate_full,
    estimate_minibatch,
    gausge_component,
    paired_minibatch,
)
from .problems import (
    AttackLossOracle,
    ClassificationProblem,
    EmptyDataset,
    LineProtocolScorer,
    LogSumExpOracle,
    OracleUnavailable,
    QuadraticOracle,
    SigmoidOracle,
    attack_objective,
    make_logsumexp,
    make_quadratic,
    make_sigmoid_toy,
    sigmoid_lipschitz,
    sigmoid_loss_oracle,
    test_loss,
)
from .prox import Regularizer, gradient_mapping, prox
from .solvers import (
    SOLVERS,
    RecipeParams,
    SolverConfig,
    Trace,
    TraceRecord,
    normalize_algorithm,
    recipe_hyperparams,
    resolve_eta,
    rspgf,
    zo_prox_gd,
    zo_prox_saga,
    zo_prox_svrg,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BACKEND",
    "active_backend",
    # errors
    "ZoproxError",
    "DimensionError",
    "NonFiniteValue",
    "InvalidBatch",
    "InvalidStep",
    "EmptyDataset",
    "OracleUnavailable",
    "ParseError",
    "LabelError",
    "SplitError",
    # oracles and counting
    "ComponentOracle",
    "CallableOracle",
    "QueryCounter",
    "RandomSource",
    "full_function_value",
    "sample_minibatch",
    # estimators
    "MU_FLOOR",
    "MuSchedule",
    "GradientEstimatorConfig",
    "coosge_component",
    "gausge_component",
    "estimate_minibatch",
    "estimate_full",
    "paired_minibatch",
    # composite term
    "Regularizer",
    "prox",
    "gradient_mapping",
    # problems
    "ClassificationProblem",
    "SigmoidOracle",
    "sigmoid_loss_oracle",
    "sigmoid_lipschitz",
    "test_loss",
    "QuadraticOracle",
    "LogSumExpOracle",
    "make_quadratic",
    "make_logsumexp",
    "make_sigmoid_toy",
    "AttackLossOracle",
    "attack_objective",
    "LineProtocolScorer",
    # data
    "Dataset",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "split",
    # solvers
    "SolverConfig",
    "Trace",
    "TraceRecord",
    "SOLVERS",
    "zo_prox_gd",
    "rspgf",
    "zo_prox_svrg",
    "zo_prox_saga",
    "RecipeParams",
    "recipe_hyperparams",
    "resolve_eta",
    "normalize_algorithm",
]
