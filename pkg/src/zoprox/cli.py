"""Benchmark harness: configure a problem, sweep solvers, emit traces.

``zoprox run`` builds one problem (a dataset file or a synthetic
instance), draws a single shared starting point, runs every requested
(algorithm, estimator) pair against the same query budget, and writes one
CSV trace per run plus a JSON summary. ``zoprox recipe`` prints the
analysis-prescribed hyperparameters without running anything.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import RandomSource, ZoproxError
from .data import load_libsvm, split
from .estimators import GradientEstimatorConfig, MuSchedule
from .problems import (
    ClassificationProblem,
    SigmoidOracle,
    make_sigmoid_toy,
    sigmoid_lipschitz,
    test_loss,
)
from .prox import Regularizer
from .solvers import (
    SOLVERS,
    SolverConfig,
    normalize_algorithm,
    recipe_hyperparams,
)

__all__ = ["ConfigError", "RunSpec", "SolverEntry", "run_benchmark",
           "print_recipe", "main"]

CSV_HEADER = ["iter", "epoch", "objective", "test_loss", "queries",
              "grad_map_sq", "elapsed_ns"]

_ESTIMATORS = ("coosge", "gausge")

# keys a config file may set; identical to the long flag names
_CONFIG_KEYS = {
    "dataset", "synthetic", "algo", "estimator", "eta", "batch", "epochs",
    "inner", "iters", "budget", "seed", "out", "lambda1", "lambda2",
    "recipe", "split", "record_every", "grad_map_every", "timing",
}


class ConfigError(ZoproxError):
    """Bad flags, bad config file, or an inconsistent run specification."""


@dataclass
class SolverEntry:
    """One run: an algorithm crossed with an estimator kind."""

    algo: str
    estimator: str


@dataclass
class RunSpec:
    """Everything one benchmark invocation needs.

    Either ``dataset`` (a LIBSVM-format path, split into train/test) or
    ``synthetic`` (sizes for a generated classification task) must be set.
    Solver entries share the problem, the regularizer, the starting point,
    and the budget.
    """

    solvers: list = field(default_factory=list)
    dataset: Optional[str] = None
    synthetic: Optional[dict] = None
    split_fraction: float = 0.5
    lambda1: float = 0.0
    lambda2: float = 0.0
    budget: Optional[int] = None
    iters: Optional[int] = None
    epochs: Optional[int] = None
    batch: Optional[int] = None
    inner: Optional[int] = None
    eta: Optional[float] = None
    use_recipe: bool = False
    seed: int = 0
    output_dir: str = "zoprox-out"
    record_every: Optional[int] = None
    grad_map_every: int = 10
    timing: bool = False


def _parse_synthetic(text):
    """Parse 'n=500,d=50' (a generated sigmoid classification task)."""
    out = {"n": None, "d": None}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in ("n", "d", "kind"):
            raise ConfigError(f"bad synthetic spec element {part!r}")
        if key == "kind":
            if value.strip() != "sigmoid":
                raise ConfigError(f"unknown synthetic kind {value.strip()!r}")
            continue
        try:
            out[key] = int(value)
        except ValueError:
            raise ConfigError(f"bad synthetic size {part!r}") from None
    if not out["n"] or not out["d"] or out["n"] < 2 or out["d"] < 1:
        raise ConfigError("synthetic spec needs n>=2 and d>=1, e.g. n=500,d=50")
    return out


def _parse_entries(algo_text, estimator_text):
    algos = [a for a in (s.strip() for s in algo_text.split(",")) if a]
    ests = [e for e in (s.strip() for s in estimator_text.split(",")) if e]
    entries = []
    for a in algos:
        try:
            algo = normalize_algorithm(a)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for e in ests:
            if e not in _ESTIMATORS:
                raise ConfigError(
                    f"unknown estimator {e!r}, expected one of {_ESTIMATORS}"
                )
            entries.append(SolverEntry(algo=algo, estimator=e))
    return entries


def parse_config_file(path):
    """Flat key=value lines; '#' comments; keys match the long flag names."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        hash_pos = line.find("#")
        if hash_pos >= 0:
            line = line[:hash_pos]
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _to_int(value, name):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None


def _to_float(value, name):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None


def _to_bool(value, name):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name} must be a boolean, got {value!r}")


def build_runspec(values):
    """Assemble and validate a RunSpec from merged config values."""
    dataset = values.get("dataset")
    synthetic = values.get("synthetic")
    if dataset and synthetic:
        raise ConfigError("choose either a dataset or a synthetic problem, not both")
    if not dataset and not synthetic:
        raise ConfigError("a problem is required: pass --dataset or --synthetic")

    algo_text = values.get("algo", "")
    est_text = values.get("estimator", "coosge,gausge")
    entries = _parse_entries(algo_text, est_text) if algo_text else []

    spec = RunSpec(
        solvers=entries,
        dataset=dataset,
        synthetic=_parse_synthetic(synthetic) if synthetic else None,
        split_fraction=_to_float(values.get("split", 0.5), "split"),
        lambda1=_to_float(values.get("lambda1", 0.0), "lambda1"),
        lambda2=_to_float(values.get("lambda2", 0.0), "lambda2"),
        budget=None if values.get("budget") is None
        else _to_int(values["budget"], "budget"),
        iters=None if values.get("iters") is None
        else _to_int(values["iters"], "iters"),
        epochs=None if values.get("epochs") is None
        else _to_int(values["epochs"], "epochs"),
        batch=None if values.get("batch") is None
        else _to_int(values["batch"], "batch"),
        inner=None if values.get("inner") is None
        else _to_int(values["inner"], "inner"),
        eta=None if values.get("eta") is None
        else _to_float(values["eta"], "eta"),
        use_recipe=_to_bool(values.get("recipe", False), "recipe"),
        seed=_to_int(values.get("seed", 0), "seed"),
        output_dir=values.get("out", "zoprox-out"),
        record_every=None if values.get("record_every") is None
        else _to_int(values["record_every"], "record_every"),
        grad_map_every=_to_int(values.get("grad_map_every", 10), "grad_map_every"),
        timing=_to_bool(values.get("timing", False), "timing"),
    )
    if not 0.0 < spec.split_fraction < 1.0:
        raise ConfigError("split fraction must lie in (0, 1)")
    if spec.lambda1 < 0 or spec.lambda2 < 0:
        raise ConfigError("penalty weights must be nonnegative")
    if spec.budget is not None and spec.budget < 1:
        raise ConfigError("budget must be positive")
    if spec.eta is not None and spec.eta <= 0:
        raise ConfigError("eta must be positive")
    for name in ("iters", "epochs", "batch", "inner"):
        v = getattr(spec, name)
        if v is not None and v < 1:
            raise ConfigError(f"{name} must be positive")
    if spec.record_every is not None and spec.record_every < 1:
        raise ConfigError("record_every must be positive")
    if spec.grad_map_every < 0:
        raise ConfigError("grad_map_every must be >= 0")
    return spec


def _build_problem(spec):
    """Returns (train, test, reg, L). Both sides share the dimension."""
    reg = Regularizer(l1=spec.lambda1, l2=spec.lambda2)
    if spec.dataset is not None:
        ds = load_libsvm(spec.dataset)
        if ds.n < 2:
            raise ConfigError(f"dataset {spec.dataset} has {ds.n} samples")
        train_ds, test_ds = split(ds, spec.split_fraction, spec.seed)
        train = ClassificationProblem.from_dataset(train_ds)
        test = ClassificationProblem.from_dataset(test_ds)
    else:
        n, d = spec.synthetic["n"], spec.synthetic["d"]
        # one draw of 2n rows from a single hyperplane; first n train
        toy = make_sigmoid_toy(2 * n, d, spec.seed)
        full = toy.problem
        train = full.subset(np.arange(n))
        test = full.subset(np.arange(n, 2 * n))
    return train, test, reg, sigmoid_lipschitz(train)


_PER_ESTIMATE = {"coosge": lambda d: 2 * d, "gausge": lambda d: 2}


def _plan_iterations(algo, est_kind, n, d, b, m, spec):
    """Loop counts that exhaust the budget without overshooting it."""
    c = _PER_ESTIMATE[est_kind](d)
    if algo == "svrg":
        if spec.epochs is not None:
            return {"epochs": spec.epochs, "inner": m}
        if spec.budget is None:
            raise ConfigError("svrg needs --epochs or --budget")
        per_epoch = n * c + 2 * m * b * c
        return {"epochs": max(1, spec.budget // per_epoch), "inner": m}
    if spec.iters is not None:
        return {"total_iters": spec.iters}
    if spec.budget is None:
        raise ConfigError(f"{algo} needs --iters or --budget")
    if algo == "gd":
        per_iter = n * c
        return {"total_iters": max(1, spec.budget // per_iter)}
    if algo == "rspgf":
        return {"total_iters": max(1, spec.budget // (b * c))}
    # saga pays the table build up front
    return {"total_iters": max(1, (spec.budget - n * c) // (b * c))}


def _entry_config(entry, spec, n, d, L):
    rec = recipe_hyperparams(n, d, L, entry.estimator, entry.algo)
    b = rec.b if (spec.use_recipe or spec.batch is None) else spec.batch
    m = rec.m if (spec.use_recipe or spec.inner is None) else spec.inner
    if entry.algo in ("rspgf", "svrg") and b > n:
        raise ConfigError(f"batch {b} exceeds the {n} training samples")
    schedule = (
        MuSchedule.coo_decay() if entry.estimator == "coosge"
        else MuSchedule.gau_decay()
    )
    plan = _plan_iterations(entry.algo, entry.estimator, n, d, b, m, spec)

    kwargs = dict(
        batch=b,
        estimator=GradientEstimatorConfig(entry.estimator, schedule),
        seed=spec.seed,
        budget=spec.budget,
        grad_map_every=spec.grad_map_every,
    )
    kwargs.update(plan)
    if spec.use_recipe or spec.eta is None:
        kwargs["rho"] = rec.rho
        kwargs["lipschitz"] = L
    else:
        kwargs["eta"] = spec.eta

    total_planned = plan.get("total_iters") or (
        plan["epochs"] * plan["inner"]
    )
    if spec.record_every is not None:
        kwargs["record_every"] = spec.record_every
    else:
        kwargs["record_every"] = max(1, total_planned // 200)
    return SolverConfig(**kwargs)


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace_csv(path, trace, timing=False):
    """One row per trace record, fixed column order.

    Without ``timing`` the elapsed column is written as 0 so that repeated
    runs of the same spec produce byte-identical files.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in trace.records:
            w.writerow([
                r.iter,
                _format_cell(r.epoch),
                _format_cell(r.objective),
                _format_cell(r.test_loss),
                r.queries,
                _format_cell(r.grad_map_sq),
                r.elapsed_ns if timing else 0,
            ])


def run_benchmark(spec):
    """Run every solver entry of ``spec`` and write traces plus a summary.

    All runs share the problem, the regularizer, and one starting point
    drawn from the standard normal with the spec seed, so their iteration-0
    objectives coincide. Returns the summary dict (also written to
    ``summary.json`` in the output directory).
    """
    os.makedirs(spec.output_dir, exist_ok=True)
    summary = {"runs": []}
    if spec.solvers:
        train, test, reg, L = _build_problem(spec)
        n, d = train.n, train.d
        x0 = RandomSource(spec.seed, key=(2,)).normal(d)
        metric = (lambda x: test_loss(test, x)) if test.n else None
        used_names = set()
        for entry in spec.solvers:
            cfg = _entry_config(entry, spec, n, d, L)
            oracle = SigmoidOracle(train)
            started = time.perf_counter_ns()
            trace = SOLVERS[entry.algo](oracle, reg, cfg, x0, test_metric=metric)
            wall_ns = time.perf_counter_ns() - started

            name = f"{entry.algo}_{entry.estimator}"
            if name in used_names:
                k = 2
                while f"{name}_{k}" in used_names:
                    k += 1
                name = f"{name}_{k}"
            used_names.add(name)
            write_trace_csv(
                os.path.join(spec.output_dir, name + ".csv"), trace,
                timing=spec.timing,
            )
            last = trace.records[-1]
            summary["runs"].append({
                "algo": entry.algo,
                "estimator": entry.estimator,
                "b": trace.batch,
                "eta": trace.eta,
                "mu_schedule": trace.mu_schedule,
                "final_objective": last.objective,
                "final_test_loss": last.test_loss,
                "total_queries": trace.total_queries,
                "wall_ns": wall_ns,
            })
    with open(os.path.join(spec.output_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


def print_recipe(n, d, L, algorithm, estimator, stream=None):
    """Print the resolved analysis hyperparameters, one row per pair."""
    stream = stream if stream is not None else sys.stdout
    algos = [normalize_algorithm(a) for a in str(algorithm).split(",") if a]
    ests = [e.strip() for e in str(estimator).split(",") if e.strip()]
    rows = []
    for a in algos:
        for e in ests:
            if e not in _ESTIMATORS:
                raise ConfigError(f"unknown estimator {e!r}")
            rec = recipe_hyperparams(n, d, L, e, a)
            schedule = ("coo_decay(1)" if e == "coosge" else "gau_decay(1)")
            rows.append((a, e, rec.b, rec.m, rec.rho, rec.eta, schedule))
    header = ("algorithm", "estimator", "b", "m", "rho", "eta", "mu_schedule")
    widths = [
        max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))
    ]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    print(fmt.format(*header), file=stream)
    for r in rows:
        print(fmt.format(*(str(v) for v in r)), file=stream)
    return rows


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so bad flags map to exit code 1."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    parser = _Parser(prog="zoprox", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a benchmark sweep")
    run_p.add_argument("--config", help="flat key=value config file")
    run_p.add_argument("--dataset", help="LIBSVM-format file (optionally gzip)")
    run_p.add_argument("--synthetic", help="generated task, e.g. n=500,d=50")
    run_p.add_argument("--algo", help="comma list: gd, rspgf, svrg, saga")
    run_p.add_argument("--estimator", help="comma list: coosge, gausge")
    run_p.add_argument("--eta", help="step size override")
    run_p.add_argument("--batch", help="mini-batch size b")
    run_p.add_argument("--epochs", help="epoch count S (svrg)")
    run_p.add_argument("--inner", help="inner loop length m (svrg)")
    run_p.add_argument("--iters", help="iteration count T (gd, rspgf, saga)")
    run_p.add_argument("--budget", help="max solver queries per run")
    run_p.add_argument("--seed", help="seed for x0, batches, directions")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--lambda1", help="l1 penalty weight")
    run_p.add_argument("--lambda2", help="squared-l2 penalty weight")
    run_p.add_argument("--recipe", action="store_true", default=None,
                       help="force analysis defaults for eta, b, m")
    run_p.add_argument("--split", help="train fraction of the dataset")
    run_p.add_argument("--record-every", dest="record_every",
                       help="trace record stride (default: about 200 rows)")
    run_p.add_argument("--grad-map-every", dest="grad_map_every",
                       help="gradient-map stride in records; 0 disables")
    run_p.add_argument("--timing", action="store_true", default=None,
                       help="write real elapsed_ns (breaks byte determinism)")

    rec_p = sub.add_parser("recipe", help="print analysis hyperparameters")
    rec_p.add_argument("--n", required=True, help="component count")
    rec_p.add_argument("--d", required=True, help="dimension")
    rec_p.add_argument("--L", required=True, help="smoothness constant")
    rec_p.add_argument("--algo", default="svrg,saga")
    rec_p.add_argument("--estimator", default="coosge,gausge")
    return parser


def _merged_values(args):
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for key in ("dataset", "synthetic", "algo", "estimator", "eta", "batch",
                "epochs", "inner", "iters", "budget", "seed", "out",
                "lambda1", "lambda2", "recipe", "split", "record_every",
                "grad_map_every", "timing"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "recipe":
            print_recipe(
                _to_int(args.n, "n"),
                _to_int(args.d, "d"),
                _to_float(args.L, "L"),
                args.algo,
                args.estimator,
            )
            return 0
        spec = build_runspec(_merged_values(args))
        run_benchmark(spec)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (ZoproxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
