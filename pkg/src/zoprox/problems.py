"""Problem instances and their oracles.

Three groups:

* sparse binary classification under the sigmoid loss (the main benchmark
  objective), served by compiled kernels when available;
* synthetic instances with known analytic gradients, used to calibrate
  estimators and check variance bounds while the oracle plays black box;
* the per-example attack objective for probing an external classifier that
  is reachable only through a line-oriented query protocol.
"""

from __future__ import annotations

import os
import select
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backend import kernels
from .core import (
    ComponentOracle,
    QueryCounter,
    RandomSource,
    ZoproxError,
    as_vector,
)
from .estimators import GradientEstimatorConfig, MuSchedule, estimate_full
from .prox import Regularizer

__all__ = [
    "EmptyDataset",
    "OracleUnavailable",
    "ClassificationProblem",
    "SigmoidOracle",
    "sigmoid_loss_oracle",
    "sigmoid_lipschitz",
    "test_loss",
    "SyntheticProblem",
    "make_quadratic",
    "make_logsumexp",
    "make_sigmoid_toy",
    "AttackLossOracle",
    "attack_objective",
    "LineProtocolScorer",
]


class EmptyDataset(ZoproxError):
    """An operation needed at least one sample."""


class OracleUnavailable(ZoproxError):
    """The external scorer failed, timed out, or replied garbage."""


class ClassificationProblem:
    """Binary classification samples with sparse features and labels in {-1, +1}.

    Features are stored in compressed sparse row form (``indptr``,
    ``indices``, ``data``); column indices are 0-based and strictly
    increasing within each row. Instances are immutable in spirit: nothing
    in this package writes to the arrays after construction.
    """

    __slots__ = ("labels", "indptr", "indices", "data", "d")

    def __init__(self, labels, indptr, indices, data, d):
        self.labels = np.ascontiguousarray(labels, dtype=np.float64)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.d = int(d)
        n = self.labels.shape[0]
        if self.indptr.shape[0] != n + 1:
            raise ValueError(
                f"indptr has length {self.indptr.shape[0]}, expected {n + 1}"
            )
        if self.indptr[0] != 0 or self.indptr[-1] != self.indices.shape[0]:
            raise ValueError("indptr does not span the index array")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be nondecreasing")
        if self.indices.size and (
            self.indices.min() < 0 or self.indices.max() >= self.d
        ):
            raise ValueError("feature index out of range")
        if n and not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def n(self):
        return self.labels.shape[0]

    @classmethod
    def from_dense(cls, features, labels):
        """Build from a dense (n, d) feature matrix; zeros are kept."""
        features = np.asarray(features, dtype=np.float64)
        n, d = features.shape
        indptr = np.arange(0, (n + 1) * d, d, dtype=np.int64)
        indices = np.tile(np.arange(d, dtype=np.int64), n)
        return cls(labels, indptr, indices, features.ravel().copy(), d)

    @classmethod
    def from_dataset(cls, dataset):
        """Adopt any object carrying labels/indptr/indices/data/d arrays."""
        return cls(
            dataset.labels, dataset.indptr, dataset.indices, dataset.data, dataset.d
        )

    def row(self, i):
        """(label, column indices, values) of sample ``i``."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return float(self.labels[i]), self.indices[lo:hi], self.data[lo:hi]

    def subset(self, rows):
        """New problem holding the given sample rows, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        counts = self.indptr[rows + 1] - self.indptr[rows]
        indptr = np.zeros(rows.size + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        data = np.empty(indptr[-1], dtype=np.float64)
        for k, i in enumerate(rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            indices[indptr[k]:indptr[k + 1]] = self.indices[lo:hi]
            data[indptr[k]:indptr[k + 1]] = self.data[lo:hi]
        return ClassificationProblem(
            self.labels[rows], indptr, indices, data, self.d
        )


class SigmoidOracle(ComponentOracle):
    """Component values of the mean sigmoid loss.

    f_i(x) = 1 / (1 + exp(l_i * a_i^T x)); the exponent is clamped at
    +-500 before exponentiation, far past where the loss saturates.
    Smooth and bounded in (0, 1), nonconvex in x.

    All evaluation surfaces dispatch to the active kernel backend and
    agree bit for bit with a sequence of scalar ``eval`` calls.
    """

    def __init__(self, problem, counter=None):
        super().__init__(problem.n, dim=problem.d, counter=counter)
        self.problem = problem

    def _row_args(self):
        p = self.problem
        return p.indptr, p.indices, p.data, p.labels

    def _value(self, i, x):
        rows = np.array([i], dtype=np.int64)
        return float(kernels.sigmoid_loss_rows(*self._row_args(), rows, x)[0])

    def eval_rows(self, rows, x):
        x = self._check_point(x)
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        self._counter.charge(rows.size)
        return kernels.sigmoid_loss_rows(*self._row_args(), rows, x)

    def eval_shifted_rows(self, rows, x, U, mu):
        x = self._check_point(x)
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        U = np.ascontiguousarray(U, dtype=np.float64)
        self._counter.charge(rows.size)
        return kernels.sigmoid_loss_rows_shifted(
            *self._row_args(), rows, x, U, float(mu)
        )

    def eval_coord_stencil(self, i, x, mu):
        i = self._check_index(i)
        x = self._check_point(x)
        self._counter.charge(2 * x.shape[0])
        return kernels.sigmoid_loss_coord_stencil(
            *self._row_args(), i, x, float(mu)
        )


def sigmoid_loss_oracle(problem, counter=None):
    """Oracle over the sigmoid loss components of ``problem``."""
    return SigmoidOracle(problem, counter=counter)


def sigmoid_lipschitz(problem):
    """Smoothness bound for the sigmoid loss: max_i ||a_i||^2 / 4.

    The scalar sigmoid has second derivative bounded by 1/4 in magnitude
    (the true maximum is smaller), so each component is (||a_i||^2/4)-smooth.
    """
    if problem.n == 0:
        raise EmptyDataset("no samples to bound")
    norms = np.zeros(problem.n, dtype=np.float64)
    sq = problem.data * problem.data
    for i in range(problem.n):
        lo, hi = problem.indptr[i], problem.indptr[i + 1]
        norms[i] = sq[lo:hi].sum()
    return float(norms.max()) / 4.0


def test_loss(problem, x):
    """Mean sigmoid loss of ``problem`` at ``x``, no regularizer.

    A plain metric, not an oracle call: nothing is charged. Raises
    EmptyDataset when the problem has no samples.
    """
    if problem.n == 0:
        raise EmptyDataset("test loss of an empty sample set is undefined")
    x = as_vector(x, d=problem.d)
    rows = np.arange(problem.n, dtype=np.int64)
    vals = kernels.sigmoid_loss_rows(
        problem.indptr, problem.indices, problem.data, problem.labels, rows, x
    )
    return float(vals.mean())


class QuadraticOracle(ComponentOracle):
    """f_i(x) = 0.5 x^T A_i x + c_i^T x with symmetric A_i.

    The coordinate stencil is produced from the exact quadratic expansion
    f_i(x + mu e_j) = f_i(x) + mu (A_i x + c_i)_j + mu^2 A_i[j,j] / 2,
    which for a quadratic *is* the function, evaluated with less rounding:
    the symmetric difference then recovers (A_i x + c_i)_j to machine
    precision for any mu.
    """

    def __init__(self, mats, vecs, counter=None):
        self.mats = np.ascontiguousarray(mats, dtype=np.float64)
        self.vecs = np.ascontiguousarray(vecs, dtype=np.float64)
        n, d, d2 = self.mats.shape
        if d != d2 or self.vecs.shape != (n, d):
            raise ValueError("need n symmetric (d, d) matrices and n d-vectors")
        super().__init__(n, dim=d, counter=counter)

    def _value(self, i, x):
        ax = self.mats[i] @ x
        return 0.5 * float(x @ ax) + float(self.vecs[i] @ x)

    def eval_coord_stencil(self, i, x, mu):
        i = self._check_index(i)
        x = self._check_point(x)
        self._counter.charge(2 * x.shape[0])
        base = self._value(i, x)
        g = self.mats[i] @ x + self.vecs[i]
        curv = 0.5 * mu * mu * np.diag(self.mats[i])
        plus = base + mu * g + curv
        minus = base - mu * g + curv
        return plus, minus


class LogSumExpOracle(ComponentOracle):
    """Single-component f(x) = tau * log sum_k exp(r_k^T x / tau).

    Smooth and convex with Lipschitz constant sigma_max(R)^2 / tau.
    Evaluations are shift-stabilized.
    """

    def __init__(self, rows, temperature=1.0, counter=None):
        self.rows = np.ascontiguousarray(rows, dtype=np.float64)
        self.tau = float(temperature)
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        super().__init__(1, dim=self.rows.shape[1], counter=counter)

    def _lse(self, z):
        m = z.max(axis=0)
        return self.tau * (m + np.log(np.exp(z - m).sum(axis=0)))

    def _value(self, i, x):
        return float(self._lse(self.rows @ x / self.tau))

    def eval_coord_stencil(self, i, x, mu):
        i = self._check_index(i)
        x = self._check_point(x)
        self._counter.charge(2 * x.shape[0])
        z = (self.rows @ x / self.tau)[:, None]
        shift = (mu / self.tau) * self.rows
        return self._lse(z + shift), self._lse(z - shift)


@dataclass
class SyntheticProblem:
    """A finite-sum instance that knows its own gradient.

    The oracle plays black box for the solvers while ``gradient`` (full) and
    ``component_gradient`` (per component, when available) hold the analytic
    truth for calibration tests. Construction cross-checks the analytic
    gradient against central differences of the oracle at 10 random points
    and raises if they disagree beyond 1e-6 relative error.
    """

    kind: str
    oracle: ComponentOracle
    gradient: Callable
    lipschitz: float
    component_gradient: Callable | None = None
    problem: object = None
    check_seed: int = 0

    def __post_init__(self):
        self._self_check()

    @property
    def n(self):
        return self.oracle.n

    @property
    def d(self):
        return self.oracle.dim

    def _self_check(self):
        rng = RandomSource(self.check_seed, key=(101,))
        cfg = GradientEstimatorConfig("coosge", MuSchedule.constant(1e-4))
        scratch = QueryCounter()
        with self.oracle.charged_to(scratch):
            for _ in range(10):
                x = rng.normal(self.d)
                g = np.asarray(self.gradient(x), dtype=np.float64)
                fd = estimate_full(self.oracle, x, cfg)
                err = float(np.linalg.norm(fd - g))
                if not err <= 1e-6 * (1.0 + float(np.linalg.norm(g))):
                    raise ZoproxError(
                        f"analytic gradient of {self.kind!r} disagrees with "
                        f"finite differences (error {err:.3e})"
                    )


def make_quadratic(n, d, seed, ridge=0.1, counter=None):
    """Random smooth quadratic finite sum.

    Each component is 0.5 x^T A_i x + c_i^T x with A_i = B_i B_i^T / d +
    ridge*I for a standard normal B_i, so the components are convex and
    their curvature is comparable across i.
    """
    rng = RandomSource(seed, key=(11,))
    mats = np.empty((n, d, d))
    for i in range(n):
        b = rng.normal_matrix(d, d)
        mats[i] = b @ b.T / d + ridge * np.eye(d)
    vecs = rng.normal_matrix(n, d) / np.sqrt(d)
    oracle = QuadraticOracle(mats, vecs, counter=counter)
    mean_mat = mats.mean(axis=0)
    mean_vec = vecs.mean(axis=0)
    lip = max(float(np.linalg.eigvalsh(mats[i]).max()) for i in range(n))
    return SyntheticProblem(
        kind="quadratic",
        oracle=oracle,
        gradient=lambda x: mean_mat @ x + mean_vec,
        lipschitz=lip,
        component_gradient=lambda i, x: mats[i] @ x + vecs[i],
        check_seed=seed,
    )


def make_logsumexp(d, terms, seed, temperature=1.0, counter=None):
    """Random smooth convex log-sum-exp instance with a single component."""
    rng = RandomSource(seed, key=(12,))
    rows = rng.normal_matrix(terms, d) / np.sqrt(d)
    oracle = LogSumExpOracle(rows, temperature=temperature, counter=counter)
    tau = float(temperature)

    def gradient(x):
        z = rows @ x / tau
        z = z - z.max()
        p = np.exp(z)
        p /= p.sum()
        return rows.T @ p

    smax = float(np.linalg.svd(rows, compute_uv=False)[0])
    return SyntheticProblem(
        kind="logsumexp",
        oracle=oracle,
        gradient=gradient,
        lipschitz=smax * smax / tau,
        check_seed=seed,
    )


_SIGMOID_CLAMP = 500.0


def _sigmoid_vals(margins):
    return 1.0 / (1.0 + np.exp(np.clip(margins, -_SIGMOID_CLAMP, _SIGMOID_CLAMP)))


def make_sigmoid_toy(n, d, seed, noise=0.3, counter=None):
    """Random dense binary classification task under the sigmoid loss.

    Rows are standard normal scaled by 1/sqrt(d); labels follow a random
    hyperplane with additive label noise, so the task is learnable but not
    separable. The oracle is the regular sigmoid-loss oracle; the analytic
    gradient is kept on the side for calibration.
    """
    rng = RandomSource(seed, key=(13,))
    feats = rng.normal_matrix(n, d) / np.sqrt(d)
    w_true = rng.normal(d)
    raw = feats @ w_true + noise * rng.normal(n)
    labels = np.where(raw >= 0.0, 1.0, -1.0)
    problem = ClassificationProblem.from_dense(feats, labels)
    oracle = SigmoidOracle(problem, counter=counter)

    def gradient(x):
        margins = labels * (feats @ x)
        s = _sigmoid_vals(margins)
        w = -s * (1.0 - s) * labels
        return feats.T @ w / n

    def component_gradient(i, x):
        m = labels[i] * float(feats[i] @ x)
        s = float(_sigmoid_vals(m))
        return (-s * (1.0 - s) * labels[i]) * feats[i]

    return SyntheticProblem(
        kind="sigmoid_toy",
        oracle=oracle,
        gradient=gradient,
        lipschitz=sigmoid_lipschitz(problem),
        component_gradient=component_gradient,
        problem=problem,
        check_seed=seed,
    )


class AttackLossOracle(ComponentOracle):
    """Per-example hinge loss for perturbing a black-box classifier.

    f_i(x) = max(F_{l_i}(a_i + x) - max_{j != l_i} F_j(a_i + x), 0), which
    is zero exactly when the classifier already misclassifies the perturbed
    example. One oracle query = one scorer call; the scorer is the entire
    cost model here, so there are no batched shortcuts.
    """

    def __init__(self, examples, labels, scorer, k_classes, counter=None):
        examples = np.asarray(examples, dtype=np.float64)
        if examples.ndim != 2:
            raise ValueError("examples must be an (n, d) array")
        n, d = examples.shape
        if n == 0:
            raise EmptyDataset("no examples to attack")
        labels = np.asarray(labels, dtype=np.int64)
        k = int(k_classes)
        if k < 2:
            raise ValueError("need at least two classes")
        if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
            raise ValueError("labels must be class indices in range")
        super().__init__(n, dim=d, counter=counter)
        self.examples = examples
        self.labels = labels
        self.k_classes = k
        self._scorer = scorer

    def _scores(self, point):
        try:
            out = self._scorer(point)
        except OracleUnavailable:
            raise
        except Exception as exc:
            raise OracleUnavailable(f"scorer raised: {exc}") from exc
        scores = np.asarray(out, dtype=np.float64).ravel()
        if scores.shape != (self.k_classes,) or not np.all(np.isfinite(scores)):
            raise OracleUnavailable(
                f"scorer returned {scores.shape} values, expected {self.k_classes} finite floats"
            )
        return scores

    def _value(self, i, x):
        try:
            scores = self._scores(self.examples[i] + x)
        except OracleUnavailable as exc:
            raise OracleUnavailable(f"example {i}: {exc}") from exc
        label = self.labels[i]
        rest = np.delete(scores, label)
        return max(float(scores[label] - rest.max()), 0.0)


def attack_objective(examples, labels, scorer, k_classes, l1=1e-3, l2=1.0,
                     counter=None):
    """Oracle plus elastic-net regularizer for the perturbation search.

    Minimizing the returned composite drives every example toward
    misclassification while keeping the shared perturbation small and
    sparse.
    """
    oracle = AttackLossOracle(examples, labels, scorer, k_classes, counter=counter)
    return oracle, Regularizer.elastic_net(l1, l2)


class LineProtocolScorer:
    """Talks to an external classifier process over stdin/stdout.

    Protocol, one call per line: write the d coordinates of a point as
    decimal floats separated by single spaces, newline-terminated; read
    back one line of K class probabilities (floats, summing to about 1).
    The process is spawned once and reused across calls.

    Failures (dead process, timeout, malformed or non-normalized reply)
    raise OracleUnavailable. Calls are serialized with a lock, so a shared
    instance is safe to use from several threads.
    """

    def __init__(self, cmd, k_classes, timeout=10.0):
        self.cmd = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.k_classes = int(k_classes)
        self.timeout = float(timeout)
        self._lock = threading.Lock()
        self._buf = b""
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            bufsize=0,
        )

    def _read_line(self):
        fd = self._proc.stdout.fileno()
        deadline = self.timeout
        while b"\n" not in self._buf:
            ready, _, _ = select.select([fd], [], [], deadline)
            if not ready:
                raise OracleUnavailable(
                    f"scorer gave no reply within {self.timeout}s"
                )
            chunk = os.read(fd, 65536)
            if not chunk:
                raise OracleUnavailable("scorer closed its output")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def __call__(self, point):
        point = np.asarray(point, dtype=np.float64)
        payload = (" ".join(repr(float(v)) for v in point) + "\n").encode()
        with self._lock:
            if self._proc.poll() is not None:
                raise OracleUnavailable("scorer process has exited")
            try:
                self._proc.stdin.write(payload)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise OracleUnavailable("scorer pipe is broken") from exc
            line = self._read_line()
        try:
            scores = np.array([float(tok) for tok in line.split()], dtype=np.float64)
        except ValueError as exc:
            raise OracleUnavailable(f"unparseable scorer reply: {line!r}") from exc
        if scores.shape != (self.k_classes,):
            raise OracleUnavailable(
                f"scorer replied {scores.size} values, expected {self.k_classes}"
            )
        if not np.all(np.isfinite(scores)) or abs(scores.sum() - 1.0) > 1e-3:
            raise OracleUnavailable("scorer reply is not a probability vector")
        return scores

    def close(self):
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
