"""Separable regularizers and their proximal operators.

The regularizer family is psi(x) = l1 * ||x||_1 + l2 * sum_j x_j^2 (note
the squared two-norm, not the norm itself), which covers none, lasso,
ridge, and elastic net in one closed form:

    prox_{eta psi}(x) = soft(x, eta*l1) / (1 + 2*eta*l2)

applied elementwise, where soft is the soft-threshold map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidStep

__all__ = ["Regularizer", "prox", "gradient_mapping"]


@dataclass(frozen=True)
class Regularizer:
    """Weights of the two penalty terms. Immutable."""

    l1: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "l1", float(self.l1))
        object.__setattr__(self, "l2", float(self.l2))
        if self.l1 < 0.0 or self.l2 < 0.0:
            raise ValueError("penalty weights must be nonnegative")

    @classmethod
    def none(cls):
        return cls(0.0, 0.0)

    @classmethod
    def lasso(cls, lam):
        return cls(l1=lam)

    @classmethod
    def squared_l2(cls, lam):
        return cls(l2=lam)

    @classmethod
    def elastic_net(cls, l1, l2):
        return cls(l1=l1, l2=l2)

    @property
    def kind(self):
        if self.l1 == 0.0 and self.l2 == 0.0:
            return "none"
        if self.l2 == 0.0:
            return "l1"
        if self.l1 == 0.0:
            return "squared_l2"
        return "elastic_net"

    @property
    def is_zero(self):
        return self.l1 == 0.0 and self.l2 == 0.0

    def value(self, x):
        """psi(x)."""
        x = np.asarray(x, dtype=np.float64)
        out = 0.0
        if self.l1:
            out += self.l1 * float(np.abs(x).sum())
        if self.l2:
            out += self.l2 * float(np.dot(x, x))
        return out


def prox(reg, eta, x):
    """Proximal step: argmin_z psi(z) + ||z - x||^2 / (2 eta).

    Parameters
    ----------
    reg : Regularizer or None
        None behaves like the zero regularizer.
    eta : float
        Step size, strictly positive.
    x : array_like
        Input point.

    Returns
    -------
    ndarray
        A new array; ``x`` is never modified.
    """
    if eta <= 0.0 or not np.isfinite(eta):
        raise InvalidStep(f"prox step size must be positive and finite, got {eta}")
    x = np.asarray(x, dtype=np.float64)
    if reg is None or reg.is_zero:
        return x.copy()
    z = x
    if reg.l1:
        thr = eta * reg.l1
        z = np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)
    if reg.l2:
        z = z / (1.0 + 2.0 * eta * reg.l2)
    if z is x:
        z = x.copy()
    return z


def gradient_mapping(reg, eta, x, grad):
    """Composite stationarity residual g = (x - prox_{eta psi}(x - eta*grad)) / eta.

    Vanishes exactly at points satisfying the first-order condition of the
    composite problem; with no regularizer it is ``grad`` itself.
    """
    if reg is None or reg.is_zero:
        return np.array(grad, dtype=np.float64, copy=True)
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    return (x - prox(reg, eta, x - eta * grad)) / eta
