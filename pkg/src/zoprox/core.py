"""Oracle abstractions, query accounting, and deterministic randomness.

Solvers in this package never see gradients. All access to the objective
goes through :class:`ComponentOracle`, which hands out component *values*
and charges every one of them to a :class:`QueryCounter`. Reported query
counts are exact, not estimates, so complexity claims can be checked
against closed-form ledgers.

Indices are 0-based everywhere in code; the 1-based convention of the data
format is converted at the parsing boundary.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "ZoproxError",
    "DimensionError",
    "NonFiniteValue",
    "InvalidBatch",
    "InvalidStep",
    "dense_vector",
    "QueryCounter",
    "RandomSource",
    "ComponentOracle",
    "CallableOracle",
    "full_function_value",
    "sample_minibatch",
]


class ZoproxError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(ZoproxError):
    """A vector has the wrong shape or length."""


class NonFiniteValue(ZoproxError):
    """An oracle evaluation produced NaN or infinity.

    Attributes
    ----------
    component : int or None
        Index of the offending component, when known.
    coordinate : int or None
        Coordinate of the offending perturbation, for stencil evaluations.
    """

    def __init__(self, message, component=None, coordinate=None):
        super().__init__(message)
        self.component = component
        self.coordinate = coordinate


class InvalidBatch(ZoproxError):
    """Mini-batch size incompatible with the sampling mode."""


class InvalidStep(ZoproxError):
    """Step size or other solver parameter out of range."""


def as_vector(x, d=None, name="x"):
    """Contiguous float64 1-D view of ``x`` (copying only if needed)."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {d}")
    return arr


def dense_vector(values, d=None):
    """Validated dense float64 vector.

    Rejects NaN and infinities at construction so that downstream code can
    assume finite iterates.
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise DimensionError(f"vector has length {arr.shape[0]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"non-finite entry at coordinate {bad}")
    return arr


class QueryCounter:
    """Exact count of charged oracle evaluations.

    ``charge`` is atomic, so oracles shared between threads cannot lose
    counts. Python integers do not overflow.
    """

    __slots__ = ("_lock", "_total")

    def __init__(self):
        self._lock = threading.Lock()
        self._total = 0

    def charge(self, k=1):
        if k < 0:
            raise ValueError("cannot charge a negative number of queries")
        with self._lock:
            self._total += int(k)

    @property
    def total(self):
        return self._total

    def __repr__(self):
        return f"QueryCounter(total={self._total})"


class RandomSource:
    """Deterministic, splittable random stream.

    Built on a counter-based bit generator, so the same ``(seed, key)``
    yields the same draws bit for bit on any platform, and distinct keys
    give statistically independent streams. Solvers split substreams for
    jobs that must not perturb each other's draws (mini-batch sampling,
    output-iterate selection, initial points).

    Draw-order contract for Gaussian directions: ``normal_matrix(k, d)``
    fills d entries per direction vector, direction rows in component
    order, and equals ``k`` successive ``normal(d)`` calls stacked.
    """

    __slots__ = ("seed", "key", "_gen")

    def __init__(self, seed, key=()):
        self.seed = int(seed)
        self.key = (int(key),) if isinstance(key, (int, np.integer)) else tuple(key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, key):
        """Independent stream addressed by appending ``key`` to this one."""
        return RandomSource(self.seed, self.key + (int(key),))

    def normal(self, d):
        """d independent standard normal draws."""
        return self._gen.standard_normal(d)

    def normal_matrix(self, k, d):
        """k direction vectors of dimension d, row-major draw order."""
        return self._gen.standard_normal((k, d))

    def integers(self, n, size=None):
        """Uniform draws from ``range(n)``, in draw order."""
        return self._gen.integers(0, n, size=size, dtype=np.int64)

    def permutation(self, n):
        return self._gen.permutation(n)

    def random(self):
        """One uniform draw from [0, 1)."""
        return float(self._gen.random())

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, key={self.key})"


class ComponentOracle:
    """Black-box access to the components f_1, ..., f_n of a finite sum.

    Subclasses implement ``_value(i, x)``. Consumers use ``eval`` or one of
    the batched surfaces below; every component value is charged to the
    active counter, one unit per value, regardless of which surface
    produced it. Structured oracles may shortcut the arithmetic of a batch,
    never its price.

    Oracles are read-only after construction and ``eval`` is deterministic
    in ``(i, x)``: calling it twice with the same arguments returns the
    same float.
    """

    def __init__(self, n, dim=None, counter=None):
        n = int(n)
        if n < 1:
            raise ValueError("an oracle needs at least one component")
        self.n = n
        self.dim = None if dim is None else int(dim)
        self._counter = counter if counter is not None else QueryCounter()

    @property
    def counter(self):
        return self._counter

    @contextmanager
    def charged_to(self, counter):
        """Route charges to ``counter`` inside the block.

        Not safe under concurrent evaluation; callers that share an oracle
        across threads must pin one counter up front instead.
        """
        previous = self._counter
        self._counter = counter
        try:
            yield self
        finally:
            self._counter = previous

    def _check_index(self, i):
        i = int(i)
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range for n={self.n}")
        return i

    def _check_point(self, x):
        return as_vector(x, d=self.dim)

    def _value(self, i, x):
        raise NotImplementedError

    def eval(self, i, x):
        """Value of component ``i`` at ``x``. Charges one query."""
        i = self._check_index(i)
        x = self._check_point(x)
        self._counter.charge(1)
        return float(self._value(i, x))

    def eval_rows(self, rows, x):
        """Values of several components at one point. Charges ``len(rows)``."""
        x = self._check_point(x)
        out = np.empty(len(rows), dtype=np.float64)
        for k, i in enumerate(rows):
            out[k] = self.eval(i, x)
        return out

    def eval_shifted_rows(self, rows, x, U, mu):
        """Value of component ``rows[k]`` at ``x + mu * U[k]``.

        Charges ``len(rows)``. ``U`` must have one direction row per entry
        of ``rows``.
        """
        x = self._check_point(x)
        U = np.asarray(U, dtype=np.float64)
        if U.shape != (len(rows), x.shape[0]):
            raise DimensionError(
                f"direction matrix has shape {U.shape}, "
                f"expected {(len(rows), x.shape[0])}"
            )
        out = np.empty(len(rows), dtype=np.float64)
        for k, i in enumerate(rows):
            out[k] = self.eval(i, x + mu * U[k])
        return out

    def eval_coord_stencil(self, i, x, mu):
        """Values of component ``i`` at ``x + mu e_j`` and ``x - mu e_j``.

        Returns the pair of length-d arrays ``(plus, minus)`` and charges
        ``2 d`` queries.
        """
        x = self._check_point(x)
        d = x.shape[0]
        plus = np.empty(d, dtype=np.float64)
        minus = np.empty(d, dtype=np.float64)
        work = x.copy()
        for j in range(d):
            xj = work[j]
            work[j] = xj + mu
            plus[j] = self.eval(i, work)
            work[j] = xj - mu
            minus[j] = self.eval(i, work)
            work[j] = xj
        return plus, minus


class CallableOracle(ComponentOracle):
    """Oracle view of a plain function ``fn(i, x) -> float``."""

    def __init__(self, n, fn, dim=None, counter=None):
        super().__init__(n, dim=dim, counter=counter)
        self._fn = fn

    def _value(self, i, x):
        return self._fn(i, x)


def full_function_value(oracle, reg, x):
    """Full objective ``(1/n) sum_i f_i(x) + psi(x)``. Charges n queries.

    Parameters
    ----------
    oracle : ComponentOracle
        Component value source; all n components are evaluated.
    reg : object or None
        Regularizer with a ``value(x)`` method, or None for psi = 0.
    x : array_like
        Point of evaluation.

    Raises
    ------
    NonFiniteValue
        Naming the first component whose value is NaN or infinite.
    """
    x = as_vector(x, d=oracle.dim)
    rows = np.arange(oracle.n, dtype=np.int64)
    vals = oracle.eval_rows(rows, x)
    finite = np.isfinite(vals)
    if not finite.all():
        i = int(np.flatnonzero(~finite)[0])
        raise NonFiniteValue(
            f"component {i} evaluated to {vals[i]!r}", component=i
        )
    mean = float(vals.mean())
    return mean + (0.0 if reg is None else float(reg.value(x)))


def sample_minibatch(rng, n, b, with_replacement):
    """Mini-batch of ``b`` component indices from ``range(n)``.

    Without replacement the result is duplicate-free and sorted ascending
    (a set of components; in particular ``b = n`` yields ``0..n-1``). With
    replacement the indices appear in draw order and duplicates are kept.

    Raises
    ------
    InvalidBatch
        If ``b < 1``, or ``b > n`` when sampling without replacement.
    """
    b = int(b)
    if b < 1:
        raise InvalidBatch(f"batch size must be positive, got {b}")
    if with_replacement:
        return rng.integers(n, size=b)
    if b > n:
        raise InvalidBatch(
            f"cannot draw {b} distinct indices from {n} components"
        )
    idx = rng.permutation(n)[:b].astype(np.int64, copy=False)
    idx.sort()
    return idx
