"""Small dense quadratic-programming kernels.

Everything in this module solves instances of

    min_x  1/2 (x - y)^T W (x - y)    s.t.   1^T x = s,   G x <= h,

with W a positive diagonal weight matrix. Euclidean projection onto an
allocation polytope is the W = I special case; per-company best responses
of the pricing game reduce to the weighted case because their Hessians are
diagonal.

The method is a textbook primal active-set loop. Problem sizes are tiny
(a handful of variables, a few dozen constraints), so every working-set
change costs one small dense solve of the normal equations

    B W^-1 B^T nu = B y - [s; h_W],      x = y - W^-1 B^T nu,

where B stacks the equality row on top of the active inequality rows.

`project_batch` runs many projections at once by grouping rows that share
the same working set, so thousands of rows (grid searches, robustness
sweeps) amortize each factorization. The batched path and the single-row
path follow the identical update rule and produce identical results.
"""

from __future__ import annotations

import numpy as np

_CONV_TOL = 1e-11      # step considered zero below this
_MULT_TOL = 1e-10      # multiplier considered nonnegative above -this
_BLOCK_TOL = 1e-13     # direction considered to approach a constraint


def _solve_kkt(b_mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (B B^T) nu = rhs for one or many right-hand sides.

    Falls back to least squares when the active rows are linearly
    dependent (e.g. a subset constraint together with its complement and
    the simplex equality).
    """
    k_mat = b_mat @ b_mat.T
    try:
        return np.linalg.solve(k_mat, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(k_mat, rhs, rcond=None)[0]


def project_polytope(
    y: np.ndarray,
    g_mat: np.ndarray,
    h: np.ndarray,
    start: np.ndarray,
    total: float = 1.0,
    weights: np.ndarray | None = None,
    max_iter: int | None = None,
) -> np.ndarray:
    """Project ``y`` onto ``{x : sum(x) = total, g_mat @ x <= h}``.

    ``start`` must be a feasible point. With ``weights`` w (positive,
    diagonal), minimizes ``1/2 sum(w * (x - y)**2)`` instead of the plain
    Euclidean distance, which is what a quadratic best response with a
    diagonal Hessian needs.
    """
    n = y.shape[0]
    n_ineq = g_mat.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    w_inv = 1.0 / w
    if max_iter is None:
        max_iter = 50 * (n + n_ineq + 1)

    ones = np.ones(n)
    x = start.astype(float).copy()
    active = np.abs(g_mat @ x - h) <= 1e-10

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        b_mat = np.vstack([ones[None, :], g_mat[idx]])
        rhs = b_mat @ y - np.concatenate(([total], h[idx]))
        k_mat = (b_mat * w_inv[None, :]) @ b_mat.T
        try:
            nu = np.linalg.solve(k_mat, rhs)
        except np.linalg.LinAlgError:
            nu = np.linalg.lstsq(k_mat, rhs, rcond=None)[0]
        x_hat = y - w_inv * (b_mat.T @ nu)
        p = x_hat - x

        if np.linalg.norm(p, np.inf) <= _CONV_TOL:
            mu = nu[1:]
            if mu.size == 0 or mu.min() >= -_MULT_TOL:
                return x_hat
            active[idx[int(np.argmin(mu))]] = False
            continue

        inactive = np.flatnonzero(~active)
        alpha = 1.0
        block = -1
        if inactive.size:
            g_p = g_mat[inactive] @ p
            moving = g_p > _BLOCK_TOL
            if np.any(moving):
                slack = np.maximum(h[inactive] - g_mat[inactive] @ x, 0.0)
                ratios = slack[moving] / g_p[moving]
                j = int(np.argmin(ratios))
                if ratios[j] < alpha:
                    alpha = ratios[j]
                    block = inactive[np.flatnonzero(moving)[j]]
        x = x + alpha * p
        if block >= 0:
            active[block] = True

    raise RuntimeError("active-set projection did not converge")


class PolytopeProjector:
    """Projector onto ``{x : sum(x) = total, G x <= h}`` with batch support."""

    def __init__(self, g_mat: np.ndarray, h: np.ndarray, feasible_point: np.ndarray,
                 total: float = 1.0):
        self.g_mat = np.asarray(g_mat, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.feasible_point = np.asarray(feasible_point, dtype=float)
        self.total = float(total)
        self.n = self.g_mat.shape[1]
        self._ones = np.ones(self.n)

    def project(self, y: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if weights is not None:
            return project_polytope(y, self.g_mat, self.h, self.feasible_point,
                                    self.total, weights=weights)
        return self.project_batch(y[None, :])[0]

    def project_batch(self, y_rows: np.ndarray) -> np.ndarray:
        """Project every row of ``y_rows``; rows sharing a working set share solves."""
        y_rows = np.asarray(y_rows, dtype=float)
        n_rows, n = y_rows.shape
        g_mat, h = self.g_mat, self.h
        n_ineq = g_mat.shape[0]

        x = np.broadcast_to(self.feasible_point, (n_rows, n)).copy()
        active = np.abs(x @ g_mat.T - h[None, :]) <= 1e-10
        done = np.zeros(n_rows, dtype=bool)
        out = np.empty_like(y_rows)

        max_sweeps = 50 * (n + n_ineq + 1)
        for _ in range(max_sweeps):
            todo = np.flatnonzero(~done)
            if todo.size == 0:
                return out
            # group rows by identical working sets
            keys = np.packbits(active[todo], axis=1)
            order = np.lexsort(keys.T[::-1])
            todo = todo[order]
            keys = keys[order]
            boundaries = np.flatnonzero(np.any(np.diff(keys, axis=0) != 0, axis=1)) + 1
            groups = np.split(todo, boundaries)

            for rows in groups:
                idx = np.flatnonzero(active[rows[0]])
                b_mat = np.vstack([self._ones[None, :], g_mat[idx]])
                rhs = y_rows[rows] @ b_mat.T - np.concatenate(([self.total], h[idx]))[None, :]
                nu = _solve_kkt(b_mat, rhs.T).T
                x_hat = y_rows[rows] - nu @ b_mat
                p = x_hat - x[rows]
                small = np.abs(p).max(axis=1) <= _CONV_TOL

                # converged candidates: accept or drop the worst multiplier
                conv_rows = rows[small]
                if conv_rows.size:
                    mu = nu[small][:, 1:]
                    if mu.shape[1] == 0:
                        out[conv_rows] = x_hat[small]
                        done[conv_rows] = True
                    else:
                        worst = np.argmin(mu, axis=1)
                        ok = mu[np.arange(mu.shape[0]), worst] >= -_MULT_TOL
                        acc = conv_rows[ok]
                        out[acc] = x_hat[small][ok]
                        done[acc] = True
                        rej = conv_rows[~ok]
                        active[rej, idx[worst[~ok]]] = False

                # stepping rows: move until a blocking constraint activates
                step_rows = rows[~small]
                if step_rows.size:
                    p_s = p[~small]
                    inact = ~active[step_rows[0]]
                    cols = np.flatnonzero(inact)
                    alpha = np.ones(step_rows.size)
                    block = np.full(step_rows.size, -1, dtype=int)
                    if cols.size:
                        g_p = p_s @ g_mat[cols].T
                        slack = np.maximum(h[cols][None, :] - x[step_rows] @ g_mat[cols].T, 0.0)
                        with np.errstate(divide="ignore", invalid="ignore"):
                            ratios = np.where(g_p > _BLOCK_TOL, slack / g_p, np.inf)
                        j = np.argmin(ratios, axis=1)
                        best = ratios[np.arange(step_rows.size), j]
                        hit = best < alpha
                        alpha[hit] = best[hit]
                        block[hit] = cols[j[hit]]
                    x[step_rows] = x[step_rows] + alpha[:, None] * p_s
                    add = block >= 0
                    active[step_rows[add], block[add]] = True

        raise RuntimeError("batched active-set projection did not converge")
