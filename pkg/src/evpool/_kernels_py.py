"""Pure-numpy implementations of the hot kernels.

Signature-compatible with the compiled module evpool._kernels; the
backend module picks one of the two at import time. All inputs are
expected as C-contiguous float64 (int64 for orders).
"""

from __future__ import annotations

import numpy as np


def aggregate_shortfall(demands: np.ndarray, personal: np.ndarray) -> np.ndarray:
    """Column sums of (demands[i, j] - personal[i])_+ .

    demands: (N, M); personal: (N,). Returns (M,).
    """
    tmp = demands - personal[:, None]
    np.maximum(tmp, 0.0, out=tmp)
    return tmp.sum(axis=0)


def eta_update(binv: np.ndarray, w: np.ndarray, r: int) -> None:
    """Product-form basis-inverse update after a simplex pivot, in place.

    binv: (m, m) current basis inverse; w = binv @ (entering column);
    r: leaving row. Rank-one elimination so that row r becomes the
    entering column's unit row.
    """
    piv = w[r]
    row = binv[r] / piv
    scale = w.copy()
    scale[r] = 0.0
    binv -= np.outer(scale, row)
    binv[r, :] = row


def prefix_satisfied(
    shortfalls: np.ndarray, orders: np.ndarray, pool: float, tol: float
) -> np.ndarray:
    """Satisfaction indicators for the prefix allocation rules (FCFS-style).

    shortfalls: (N, M) non-negative; orders: (M, N) one permutation of the
    drivers per column; pool: shared capacity; tol: boundary slack.

    Per column, drivers are served in the given order; a driver receives
    its full shortfall iff the running shortfall total up to and including
    it stays <= pool + tol, and nothing otherwise. A driver is satisfied
    iff it received its shortfall or had none (<= tol) to begin with.
    Returns (N, M) bool.
    """
    sf_t = shortfalls.T  # (M, N)
    sf_perm = np.take_along_axis(sf_t, orders, axis=1)
    csum = np.cumsum(sf_perm, axis=1)
    # 1e-12-relative slack: tolerate summation-order round-off when the
    # pool was sized from these same shortfalls
    covered = csum <= pool + tol + 1e-12 * csum
    sat_perm = covered | (sf_perm <= tol)
    out_t = np.empty_like(sat_perm)
    np.put_along_axis(out_t, orders, sat_perm, axis=1)
    return np.ascontiguousarray(out_t.T)
