"""The four gradient-free proximal solvers.

All of them iterate ``x <- prox(x - eta * v)`` and differ only in how the
direction ``v`` is estimated from component values:

* ``zo_prox_gd``: full-batch estimate every step (deterministic baseline);
* ``rspgf``: a fresh mini-batch estimate every step (stochastic baseline,
  no variance reduction);
* ``zo_prox_svrg``: epoch snapshots plus a coupled mini-batch correction;
* ``zo_prox_saga``: a per-component stored-estimate table plus its running
  average.

Every run produces a :class:`Trace`. Queries spent optimizing and queries
spent reporting (objective values, gradient maps) are charged to separate
counters, so the solver ledger stays exact.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    InvalidBatch,
    InvalidStep,
    QueryCounter,
    RandomSource,
    ZoproxError,
    as_vector,
    full_function_value,
    sample_minibatch,
)
from .estimators import (
    GradientEstimatorConfig,
    MuSchedule,
    component_estimates,
    estimate_full,
    estimate_minibatch,
    paired_minibatch,
)
from .prox import gradient_mapping, prox

__all__ = [
    "MU_REPORT",
    "SolverConfig",
    "SagaState",
    "TraceRecord",
    "Trace",
    "RecipeParams",
    "recipe_hyperparams",
    "resolve_eta",
    "zo_prox_gd",
    "rspgf",
    "zo_prox_svrg",
    "zo_prox_saga",
    "SOLVERS",
]

MU_REPORT = 1e-6
"""Smoothing radius of the fresh full coordinate estimate behind reported
gradient maps. Reporting queries are ledgered separately from solver
queries, so this never touches budget comparisons."""

_OUTPUT_POLICIES = ("last", "uniform_random")


@dataclass
class SolverConfig:
    """Knobs shared by all four solvers.

    Parameters
    ----------
    eta : float, optional
        Step size. Ignored when ``rho`` is set.
    batch : int
        Mini-batch size b.
    epochs, inner : int
        Epoch count S and inner length m (epoch-structured solver only).
    total_iters : int
        Iteration count T (flat-loop solvers).
    estimator : GradientEstimatorConfig
        Estimator kind and smoothing schedule; the solver advances its
        1-based step counter as it iterates.
    seed : int
        Seeds every random draw of the run: mini-batches, Gaussian
        directions, and the output-iterate selection, in documented order.
    output_policy : str
        ``"last"`` returns the final iterate (what the benchmark plots).
        ``"uniform_random"`` returns an iterate drawn uniformly from the
        points at which steps were computed, matching the algorithms'
        stated output rule; the draw is reservoir-based so truncated runs
        stay uniform over what they actually visited.
    rho : float, optional
        When set (0 < rho < 1/2), the step size is derived from the
        analysis recipes: eta = rho / (d L) for coosge, rho / L for gausge,
        with L taken from ``lipschitz``. Overrides ``eta``.
    lipschitz : float, optional
        Smoothness estimate L used by the recipe derivation.
    budget : int, optional
        Ceiling on solver queries. A work unit that starts is finished, so
        a run can overshoot by at most one unit (inner step, or one full
        snapshot/table build); it is then marked truncated, never an error.
    record_every : int
        Append a trace record every this many iterations (the last
        completed iteration is always recorded). Records cost reporting
        queries, so sparse recording keeps long runs cheap.
    grad_map_every : int
        Compute the squared gradient-map norm on every k-th record
        (0 disables). Baseline record counts as the 0th.
    """

    eta: Optional[float] = None
    batch: int = 1
    epochs: int = 1
    inner: int = 1
    total_iters: int = 1
    estimator: GradientEstimatorConfig = field(
        default_factory=lambda: GradientEstimatorConfig(
            "coosge", MuSchedule.coo_decay()
        )
    )
    seed: int = 0
    output_policy: str = "last"
    rho: Optional[float] = None
    lipschitz: Optional[float] = None
    budget: Optional[int] = None
    record_every: int = 1
    grad_map_every: int = 10

    def validate(self):
        if self.output_policy not in _OUTPUT_POLICIES:
            raise InvalidStep(
                f"output_policy must be one of {_OUTPUT_POLICIES}, "
                f"got {self.output_policy!r}"
            )
        for name in ("batch", "epochs", "inner", "total_iters", "record_every"):
            if int(getattr(self, name)) < 1:
                raise InvalidStep(f"{name} must be a positive integer")
        if self.grad_map_every < 0:
            raise InvalidStep("grad_map_every must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise InvalidStep("budget must be nonnegative")


@dataclass
class SagaState:
    """Internal state of the table solver, exposed for inspection.

    ``phi_hat`` tracks the row mean of ``grad_table`` up to accumulated
    rounding (checked by tests to 1e-10 * (1 + max |table|)).
    """

    grad_table: np.ndarray
    phi_hat: np.ndarray
    x: np.ndarray


@dataclass
class TraceRecord:
    iter: int
    epoch: Optional[int]
    objective: float
    queries: int
    grad_map_sq: Optional[float] = None
    elapsed_ns: int = 0
    test_loss: Optional[float] = None


@dataclass
class Trace:
    """Everything a solver run leaves behind.

    ``total_queries`` counts solver-side work only; ``report_queries``
    counts the objective and gradient-map evaluations made for the
    records. ``final_x`` honors the configured output policy.
    """

    records: list
    final_x: np.ndarray
    total_queries: int
    report_queries: int
    truncated: bool
    algorithm: str
    estimator: str
    eta: float
    batch: int
    mu_schedule: str
    saga_state: Optional[SagaState] = None

    @property
    def final_objective(self):
        return self.records[-1].objective if self.records else float("nan")


def resolve_eta(cfg, d):
    """Step size after applying the recipe rule (rho wins over eta)."""
    if cfg.rho is not None:
        if not 0.0 < cfg.rho < 0.5:
            raise InvalidStep(f"rho must lie in (0, 1/2), got {cfg.rho}")
        if cfg.lipschitz is None or cfg.lipschitz <= 0:
            raise InvalidStep("recipe step size needs a positive lipschitz value")
        if cfg.estimator.kind == "coosge":
            return cfg.rho / (d * cfg.lipschitz)
        return cfg.rho / cfg.lipschitz
    if cfg.eta is None or not cfg.eta > 0:
        raise InvalidStep(f"step size must be positive, got {cfg.eta}")
    return float(cfg.eta)


@dataclass(frozen=True)
class RecipeParams:
    b: int
    m: int
    rho: float
    eta: float


def _ceil_root(value, p):
    """Smallest integer k >= 1 with k**p >= value. Exact, no float edges."""
    if value <= 1:
        return 1
    k = max(1, int(round(value ** (1.0 / p))))
    while k ** p < value:
        k += 1
    while k > 1 and (k - 1) ** p >= value:
        k -= 1
    return k


# rho by (algorithm, estimator kind); the flat baselines borrow the
# epoch solver's constants, which is what their analyses suggest
_RHO_TABLE = {
    ("svrg", "coosge"): 1.0 / 4.0,
    ("svrg", "gausge"): 1.0 / 6.0,
    ("saga", "coosge"): 1.0 / 8.0,
    ("saga", "gausge"): 1.0 / 12.0,
    ("gd", "coosge"): 1.0 / 4.0,
    ("gd", "gausge"): 1.0 / 6.0,
    ("rspgf", "coosge"): 1.0 / 4.0,
    ("rspgf", "gausge"): 1.0 / 6.0,
}

_ALGO_ALIASES = {
    "gd": "gd",
    "zo_prox_gd": "gd",
    "rspgf": "rspgf",
    "sgd": "rspgf",
    "svrg": "svrg",
    "zo_prox_svrg": "svrg",
    "saga": "saga",
    "zo_prox_saga": "saga",
}


def normalize_algorithm(name):
    key = str(name).strip().lower()
    if key not in _ALGO_ALIASES:
        raise ValueError(f"unknown algorithm {name!r}")
    return _ALGO_ALIASES[key]


def recipe_hyperparams(n, d, L, estimator_kind, algorithm):
    """Hyperparameters the convergence analyses prescribe.

    b = ceil(n^(2/3)); m = ceil(n^(1/3)) (meaningful for the epoch solver,
    reported for all); rho from the per-(algorithm, estimator) table;
    eta = rho/(dL) for coosge, rho/L for gausge.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not L > 0:
        raise ValueError("L must be positive")
    algo = normalize_algorithm(algorithm)
    if estimator_kind not in ("coosge", "gausge"):
        raise ValueError(f"unknown estimator kind {estimator_kind!r}")
    b = _ceil_root(n * n, 3)
    m = _ceil_root(n, 3)
    rho = _RHO_TABLE[(algo, estimator_kind)]
    eta = rho / (d * L) if estimator_kind == "coosge" else rho / L
    return RecipeParams(b=b, m=m, rho=rho, eta=eta)


@contextmanager
def _iteration_context(k):
    """Tack the iteration number onto any solver error passing through."""
    try:
        yield
    except ZoproxError as exc:
        if exc.args:
            exc.args = (f"iteration {k}: {exc.args[0]}",) + exc.args[1:]
        else:
            exc.args = (f"iteration {k}",)
        raise


class _Run:
    """Shared bookkeeping for one solver run: counters, streams, records."""

    def __init__(self, algorithm, oracle, reg, cfg, x0, test_metric, step_hook):
        cfg.validate()
        self.algorithm = algorithm
        self.oracle = oracle
        self.reg = reg
        self.cfg = cfg
        if x0 is None:
            if oracle.dim is None:
                raise InvalidStep(
                    "oracle does not know its dimension; pass x0 explicitly"
                )
            x0 = np.zeros(oracle.dim, dtype=np.float64)
        self.x0 = as_vector(x0, d=oracle.dim).copy()
        self.d = self.x0.shape[0]
        self.eta = resolve_eta(cfg, self.d)
        self.test_metric = test_metric
        self.step_hook = step_hook

        root = RandomSource(cfg.seed)
        self.rng = root.substream(0)      # batches and directions, event order
        self.out_rng = root.substream(1)  # output-iterate reservoir

        self.solver_counter = QueryCounter()
        self.report_counter = QueryCounter()
        self.records = []
        self.truncated = False
        self.last_recorded_iter = None
        self.candidates_seen = 0
        self.reservoir = self.x0.copy()
        self.start_ns = time.perf_counter_ns()

    def estimator_at(self, t):
        return self.cfg.estimator.at_step(t)

    def budget_exhausted(self):
        """True once the next work unit may not start."""
        b = self.cfg.budget
        if b is not None and self.solver_counter.total >= b:
            self.truncated = True
            return True
        return False

    def charged(self):
        return self.oracle.charged_to(self.solver_counter)

    def candidate(self, x):
        """Offer a pre-update iterate to the uniform-output reservoir."""
        self.candidates_seen += 1
        u = self.out_rng.random()
        if u * self.candidates_seen < 1.0:
            self.reservoir = x.copy()

    def _grad_map_sq(self, x):
        report_cfg = GradientEstimatorConfig(
            "coosge", MuSchedule.constant(MU_REPORT)
        )
        with self.oracle.charged_to(self.report_counter):
            g_est = estimate_full(self.oracle, x, report_cfg)
        g = gradient_mapping(self.reg, self.eta, x, g_est)
        return float(g @ g)

    def record(self, k, epoch, x):
        with self.oracle.charged_to(self.report_counter):
            objective = full_function_value(self.oracle, self.reg, x)
        gms = None
        gme = self.cfg.grad_map_every
        if gme > 0 and len(self.records) % gme == 0:
            gms = self._grad_map_sq(x)
        tl = None if self.test_metric is None else float(self.test_metric(x))
        self.records.append(
            TraceRecord(
                iter=k,
                epoch=epoch,
                objective=objective,
                queries=self.solver_counter.total,
                grad_map_sq=gms,
                elapsed_ns=time.perf_counter_ns() - self.start_ns,
                test_loss=tl,
            )
        )
        self.last_recorded_iter = k

    def after_step(self, k, epoch, x, v):
        if self.step_hook is not None:
            self.step_hook(k, epoch, x, v)
        if k % self.cfg.record_every == 0:
            self.record(k, epoch, x)

    def finish(self, x_last, k_done, epoch=None, saga_state=None):
        if self.last_recorded_iter != k_done:
            self.record(k_done, epoch, x_last)
        if self.cfg.output_policy == "uniform_random":
            final_x = self.reservoir
        else:
            final_x = x_last
        return Trace(
            records=self.records,
            final_x=np.array(final_x, dtype=np.float64, copy=True),
            total_queries=self.solver_counter.total,
            report_queries=self.report_counter.total,
            truncated=self.truncated,
            algorithm=self.algorithm,
            estimator=self.cfg.estimator.kind,
            eta=self.eta,
            batch=int(self.cfg.batch),
            mu_schedule=self.cfg.estimator.mu_schedule.describe(),
            saga_state=saga_state,
        )


def zo_prox_gd(oracle, reg, cfg, x0=None, *, test_metric=None, step_hook=None):
    """Full-estimate proximal descent, the deterministic baseline.

    Every iteration estimates the gradient with all n components and takes
    one prox step. Per-iteration cost: 2dn queries (coosge) or 2n (gausge).
    """
    run = _Run("zo_prox_gd", oracle, reg, cfg, x0, test_metric, step_hook)
    x = run.x0.copy()
    run.record(0, None, x)
    k_done = 0
    for k in range(1, cfg.total_iters + 1):
        if run.budget_exhausted():
            break
        with _iteration_context(k):
            est = run.estimator_at(k)
            with run.charged():
                v = estimate_full(oracle, x, est, run.rng)
            run.candidate(x)
            x = prox(reg, run.eta, x - run.eta * v)
        k_done = k
        run.after_step(k, None, x, v)
    return run.finish(x, k_done)


def rspgf(oracle, reg, cfg, x0=None, *, test_metric=None, step_hook=None):
    """Mini-batch proximal descent without variance reduction.

    A fresh without-replacement batch per step; 2db (coosge) or 2b
    (gausge) queries per iteration. With ``batch == n`` the sampler
    degenerates to all components and the trajectory matches
    ``zo_prox_gd`` draw for draw.
    """
    run = _Run("rspgf", oracle, reg, cfg, x0, test_metric, step_hook)
    n = oracle.n
    if cfg.batch > n:
        raise InvalidBatch(
            f"batch {cfg.batch} exceeds n={n} for without-replacement sampling"
        )
    full_batch = np.arange(n, dtype=np.int64)
    x = run.x0.copy()
    run.record(0, None, x)
    k_done = 0
    for k in range(1, cfg.total_iters + 1):
        if run.budget_exhausted():
            break
        with _iteration_context(k):
            if cfg.batch == n:
                idx = full_batch
            else:
                idx = sample_minibatch(run.rng, n, cfg.batch, with_replacement=False)
            est = run.estimator_at(k)
            with run.charged():
                v = estimate_minibatch(oracle, idx, x, est, run.rng)
            run.candidate(x)
            x = prox(reg, run.eta, x - run.eta * v)
        k_done = k
        run.after_step(k, None, x, v)
    return run.finish(x, k_done)


def zo_prox_svrg(oracle, reg, cfg, x0=None, *, test_metric=None, step_hook=None):
    """Epoch-structured variance reduction via snapshots.

    Per epoch: one full estimate at the anchor point, then ``inner``
    mini-batch steps using

        v = g_I(x_t) - g_I(anchor) + g_full(anchor)

    where the two mini-batch estimates share components and (for gausge)
    direction draws, so the correction cancels exactly at the anchor. Both
    the anchor and the next epoch's start are the last inner iterate.
    Mini-batches are drawn without replacement. Epoch cost:
    2dn + inner * 4db queries (coosge), 2n + inner * 4b (gausge).
    """
    run = _Run("zo_prox_svrg", oracle, reg, cfg, x0, test_metric, step_hook)
    n = oracle.n
    if cfg.batch > n:
        raise InvalidBatch(
            f"batch {cfg.batch} exceeds n={n} for without-replacement sampling"
        )
    anchor = run.x0.copy()
    x = run.x0.copy()
    run.record(0, None, x)
    k = 0
    epoch_done = None
    for s in range(1, cfg.epochs + 1):
        if run.budget_exhausted():
            break
        # the snapshot shares the smoothing radius of the epoch's first step
        with _iteration_context(k + 1):
            snap_est = run.estimator_at(k + 1)
            with run.charged():
                g_anchor = estimate_full(oracle, anchor, snap_est, run.rng)
        stop = False
        for _ in range(cfg.inner):
            if run.budget_exhausted():
                stop = True
                break
            k += 1
            with _iteration_context(k):
                idx = sample_minibatch(run.rng, n, cfg.batch, with_replacement=False)
                est = run.estimator_at(k)
                with run.charged():
                    g_x, g_a = paired_minibatch(oracle, idx, x, anchor, est, run.rng)
                v = g_x - g_a + g_anchor
                run.candidate(x)
                x = prox(reg, run.eta, x - run.eta * v)
            run.after_step(k, s, x, v)
        epoch_done = s
        anchor = x.copy()
        if stop:
            break
    return run.finish(x, k, epoch=epoch_done)


def zo_prox_saga(oracle, reg, cfg, x0=None, *, test_metric=None, step_hook=None):
    """Table-based variance reduction.

    Startup estimates every component at x0 into an n x d table (2dn or 2n
    queries) with its running mean phi. Each iteration draws a mini-batch
    WITH replacement, estimates fresh per-component gradients at the
    current point (2db or 2b queries), forms

        v = mean_k(fresh_k - table[i_k]) + phi,

    steps, then writes the fresh rows and updates phi incrementally,
    occurrence by occurrence in draw order; for a duplicated index the
    last occurrence is what stays in the table. Table reads never cost
    queries.
    """
    run = _Run("zo_prox_saga", oracle, reg, cfg, x0, test_metric, step_hook)
    n = oracle.n
    x = run.x0.copy()
    run.record(0, None, x)

    init_est = run.estimator_at(1)
    with _iteration_context(0):
        with run.charged():
            table = component_estimates(
                oracle, np.arange(n, dtype=np.int64), x, init_est, run.rng
            )
    phi = table.mean(axis=0)

    k_done = 0
    for k in range(1, cfg.total_iters + 1):
        if run.budget_exhausted():
            break
        with _iteration_context(k):
            idx = sample_minibatch(run.rng, n, cfg.batch, with_replacement=True)
            est = run.estimator_at(k)
            with run.charged():
                fresh = component_estimates(oracle, idx, x, est, run.rng)
            v = (fresh - table[idx]).mean(axis=0) + phi
            run.candidate(x)
            x = prox(reg, run.eta, x - run.eta * v)
            # sequential per-occurrence updates keep phi equal to the row
            # mean even when a batch repeats an index
            for j, i in enumerate(idx):
                delta = fresh[j] - table[i]
                phi = phi + delta / n
                table[i] = fresh[j]
        k_done = k
        run.after_step(k, None, x, v)
    state = SagaState(grad_table=table, phi_hat=phi, x=x.copy())
    return run.finish(x, k_done, saga_state=state)


SOLVERS = {
    "gd": zo_prox_gd,
    "rspgf": rspgf,
    "svrg": zo_prox_svrg,
    "saga": zo_prox_saga,
}
