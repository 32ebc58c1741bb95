"""Gradient estimators built from component value queries only.

Two families:

* ``coosge``: coordinate-wise symmetric differences, one pair of values per
  coordinate, 2d queries per component. Deterministic.
* ``gausge``: a forward difference along one Gaussian direction, 2 queries
  per component. Randomized; the direction comes from the caller's stream.

Estimates are averaged over mini-batches; difference steps (as used by the
variance-reduced solvers) couple their two estimates through shared
directions so the noise cancels where the iterates agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import NonFiniteValue, as_vector

__all__ = [
    "MU_FLOOR",
    "MuSchedule",
    "GradientEstimatorConfig",
    "coosge_component",
    "gausge_component",
    "component_estimates",
    "estimate_minibatch",
    "estimate_full",
    "paired_minibatch",
]

MU_FLOOR = 2.0 ** -26
"""Lower clamp on smoothing radii; below this the differences drown in
float64 cancellation noise."""

_KINDS = ("coosge", "gausge")
_SCHEDULES = ("constant", "coo_decay", "gau_decay")


@dataclass(frozen=True)
class MuSchedule:
    """Smoothing radius as a function of the 1-based step index t.

    ``constant``: mu = c. ``coo_decay``: mu = c / sqrt(d*t), the usual
    choice for coordinate-wise estimates. ``gau_decay``: mu = c / (d*sqrt(t)),
    the usual choice for Gaussian directions. All values are clamped below
    at MU_FLOOR.
    """

    kind: str
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in _SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}, expected one of {_SCHEDULES}")
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ValueError(f"schedule constant must be positive and finite, got {self.c}")

    @classmethod
    def constant(cls, mu):
        return cls("constant", mu)

    @classmethod
    def coo_decay(cls, c=1.0):
        return cls("coo_decay", c)

    @classmethod
    def gau_decay(cls, c=1.0):
        return cls("gau_decay", c)

    def at(self, t, d):
        """Radius at step t for dimension d."""
        if t < 1:
            raise ValueError(f"step index is 1-based, got {t}")
        if self.kind == "constant":
            mu = self.c
        elif self.kind == "coo_decay":
            mu = self.c / math.sqrt(d * t)
        else:
            mu = self.c / (d * math.sqrt(t))
        return max(mu, MU_FLOOR)

    def describe(self):
        if self.kind == "constant":
            return f"constant({self.c:g})"
        return f"{self.kind}({self.c:g})"


@dataclass
class GradientEstimatorConfig:
    """Which estimator to run and with what smoothing radius.

    Parameters
    ----------
    kind : str
        ``"coosge"`` or ``"gausge"``.
    mu_schedule : MuSchedule
        Smoothing radius schedule; evaluated at the config's own step
        counter ``t``, which solvers advance as they iterate.
    t : int
        Current 1-based step index.
    paired_directions : bool
        When True (default), the two halves of a difference estimate reuse
        one direction draw per component, which is what makes the variance
        cancel. False draws independently; only useful for ablations.
    """

    kind: str
    mu_schedule: MuSchedule
    t: int = 1
    paired_directions: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}, expected one of {_KINDS}")
        if self.t < 1:
            raise ValueError("step index is 1-based")

    def mu(self, d):
        return self.mu_schedule.at(self.t, d)

    def at_step(self, t):
        """Copy of this config with the step counter set to ``t``."""
        return replace(self, t=t)


def _finite_or_raise(vals, components, what):
    bad = np.flatnonzero(~np.isfinite(np.atleast_1d(vals)))
    if bad.size:
        k = int(bad[0])
        i = int(components[k]) if np.ndim(components) else int(components)
        raise NonFiniteValue(f"{what} of component {i} is not finite", component=i)


def coosge_component(oracle, i, x, mu):
    """Coordinate-wise estimate of grad f_i at x.

    Entry j is ``(f_i(x + mu e_j) - f_i(x - mu e_j)) / (2 mu)``. Charges 2d
    queries. Exact for quadratics up to rounding, for any mu.
    """
    x = as_vector(x, d=oracle.dim)
    plus, minus = oracle.eval_coord_stencil(i, x, mu)
    _require_finite_stencil(plus, minus, i)
    return (plus - minus) / (2.0 * mu)


def _require_finite_stencil(plus, minus, i):
    for arr in (plus, minus):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            j = int(bad[0])
            raise NonFiniteValue(
                f"stencil value of component {i} at coordinate {j} is not finite",
                component=int(i),
                coordinate=j,
            )


def gausge_component(oracle, i, x, mu, u):
    """Forward-difference estimate of grad f_i along the direction u.

    Returns ``((f_i(x + mu u) - f_i(x)) / mu) * u``. Charges 2 queries.
    """
    x = as_vector(x, d=oracle.dim)
    u = as_vector(u, d=x.shape[0], name="u")
    base = oracle.eval(i, x)
    shifted = oracle.eval(i, x + mu * u)
    _finite_or_raise(np.array([base, shifted]), i, "value")
    return ((shifted - base) / mu) * u


def _gausge_rows(oracle, indices, x, U, mu):
    base = oracle.eval_rows(indices, x)
    _finite_or_raise(base, indices, "value")
    shifted = oracle.eval_shifted_rows(indices, x, U, mu)
    _finite_or_raise(shifted, indices, "shifted value")
    coef = (shifted - base) / mu
    return coef[:, None] * U


def _coosge_rows(oracle, indices, x, mu):
    d = x.shape[0]
    rows = np.empty((len(indices), d), dtype=np.float64)
    for k, i in enumerate(indices):
        plus, minus = oracle.eval_coord_stencil(int(i), x, mu)
        _require_finite_stencil(plus, minus, i)
        rows[k] = (plus - minus) / (2.0 * mu)
    return rows


def component_estimates(oracle, indices, x, cfg, rng=None):
    """One gradient estimate per requested component: a (b, d) array.

    Row k estimates grad f at ``indices[k]``; repeated indices get
    independent rows. CooSGE rows are deterministic; GauSGE rows each use
    their own direction, drawn from ``rng`` in index order (d entries per
    direction). Charges ``2*d*b`` (coosge) or ``2*b`` (gausge) queries.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValueError("empty mini-batch")
    x = as_vector(x, d=oracle.dim)
    mu = cfg.mu(x.shape[0])
    if cfg.kind == "coosge":
        return _coosge_rows(oracle, indices, x, mu)
    if rng is None:
        raise ValueError("gausge estimates need a random source")
    U = rng.normal_matrix(indices.size, x.shape[0])
    return _gausge_rows(oracle, indices, x, U, mu)


def estimate_minibatch(oracle, indices, x, cfg, rng=None):
    """Mini-batch averaged gradient estimate ``(1/b) sum_{i in batch} hat g_i``.

    Consumes randomness exactly like :func:`component_estimates` and
    charges the same.
    """
    return component_estimates(oracle, indices, x, cfg, rng).mean(axis=0)


def estimate_full(oracle, x, cfg, rng=None):
    """Gradient estimate averaged over all n components."""
    return estimate_minibatch(oracle, np.arange(oracle.n, dtype=np.int64), x, cfg, rng)


def paired_minibatch(oracle, indices, x_a, x_b, cfg, rng=None):
    """The coupled pair of mini-batch estimates a difference step needs.

    Returns ``(g_a, g_b)``, both averaged over the same components. Under
    GauSGE with ``paired_directions`` the two estimates reuse one direction
    draw per component, so they agree bit for bit wherever ``x_a == x_b``.
    Charges twice what one ``estimate_minibatch`` costs.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if cfg.kind == "coosge":
        return (
            estimate_minibatch(oracle, indices, x_a, cfg),
            estimate_minibatch(oracle, indices, x_b, cfg),
        )
    if not cfg.paired_directions:
        return (
            estimate_minibatch(oracle, indices, x_a, cfg, rng),
            estimate_minibatch(oracle, indices, x_b, cfg, rng),
        )
    if rng is None:
        raise ValueError("gausge estimates need a random source")
    x_a = as_vector(x_a, d=oracle.dim)
    x_b = as_vector(x_b, d=oracle.dim)
    mu = cfg.mu(x_a.shape[0])
    U = rng.normal_matrix(indices.size, x_a.shape[0])
    g_a = _gausge_rows(oracle, indices, x_a, U, mu).mean(axis=0)
    g_b = _gausge_rows(oracle, indices, x_b, U, mu).mean(axis=0)
    return g_a, g_b
