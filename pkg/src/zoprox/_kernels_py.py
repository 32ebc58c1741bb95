"""NumPy fallback for the compiled sigmoid-loss kernels.

Every entry point builds the perturbed coordinate values elementwise on the
row support and then takes one dot product, exactly like the scalar
evaluation path does after gathering. A component value is therefore
bit-identical no matter which entry point produced it.
"""

import numpy as np

# exp overflows past ~709; the loss saturates long before that
MARGIN_CLAMP = 500.0


def _sigmoid(m):
    if m > MARGIN_CLAMP:
        m = MARGIN_CLAMP
    elif m < -MARGIN_CLAMP:
        m = -MARGIN_CLAMP
    return 1.0 / (1.0 + np.exp(m))


def sigmoid_loss_rows(indptr, indices, data, labels, rows, x):
    """Loss of each requested row at the point ``x``."""
    out = np.empty(len(rows), dtype=np.float64)
    for k, i in enumerate(rows):
        lo, hi = indptr[i], indptr[i + 1]
        margin = float(np.dot(data[lo:hi], x[indices[lo:hi]]))
        out[k] = _sigmoid(labels[i] * margin)
    return out


def sigmoid_loss_rows_shifted(indptr, indices, data, labels, rows, x, U, mu):
    """Loss of row ``rows[k]`` at the point ``x + mu * U[k]``."""
    out = np.empty(len(rows), dtype=np.float64)
    for k, i in enumerate(rows):
        lo, hi = indptr[i], indptr[i + 1]
        idx = indices[lo:hi]
        y = x[idx] + mu * U[k, idx]
        margin = float(np.dot(data[lo:hi], y))
        out[k] = _sigmoid(labels[i] * margin)
    return out


def sigmoid_loss_coord_stencil(indptr, indices, data, labels, i, x, mu):
    """Losses of row ``i`` at ``x + mu*e_j`` and ``x - mu*e_j`` for every j.

    Off-support coordinates cannot change the margin, so those entries
    equal the unperturbed value exactly.
    """
    d = len(x)
    lo, hi = indptr[i], indptr[i + 1]
    idx = indices[lo:hi]
    vals = data[lo:hi]
    label = labels[i]
    xg = x[idx]

    base = _sigmoid(label * float(np.dot(vals, xg)))
    plus = np.full(d, base, dtype=np.float64)
    minus = np.full(d, base, dtype=np.float64)

    y = xg.copy()
    for p in range(len(idx)):
        y[p] = xg[p] + mu
        plus[idx[p]] = _sigmoid(label * float(np.dot(vals, y)))
        y[p] = xg[p] - mu
        minus[idx[p]] = _sigmoid(label * float(np.dot(vals, y)))
        y[p] = xg[p]
    return plus, minus
