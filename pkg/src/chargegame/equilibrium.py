"""Nash equilibrium computation for the pricing game.

The game map (stacked per-company gradients of own costs) is affine,
F(x) = F1 x + F2. Under the aligned feedback prices F1 is the Kronecker
product of the fleet-size outer product with the authority weight
diagonal, which is symmetric positive semidefinite but not definite, so a
plain fixed-point (Picard) iteration on the projected step need not
converge. The averaged variant

    x^i  <-  1/2 ( x^i + project_i( x^i - gamma * grad_i ) )

is guaranteed to converge for any step below 2 / lambda_max(F1). Each
company only ever reads the shared aggregate sigma(x) plus its own block,
so the iteration runs with the information pattern of a decentralized
scheme; updates within a round are synchronous, making the result
independent of company evaluation order.

A batched front end iterates many game variants at once (price grids,
perturbation sweeps); it is the exact same update applied row-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameInstance


@dataclass
class SolveReport:
    """Trace and outcome of one equilibrium computation."""

    x: np.ndarray                    # final stacked allocation
    gamma: float
    iterations: int
    converged: bool
    residuals: np.ndarray            # fixed-point residual per iteration
    j_g_trace: np.ndarray            # authority loss per iterate (incl. start)
    sigma_trace: np.ndarray          # aggregate per iterate (incl. start)
    iterates: np.ndarray | None = None   # optional (iterations+1, n) trace

    @property
    def blocks(self) -> np.ndarray:
        m = self.sigma_trace.shape[1]
        return self.x.reshape(-1, m)

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_trace[-1]

    @property
    def j_g(self) -> float:
        return float(self.j_g_trace[-1])


def game_map(instance: GameInstance, perturbation=None, prices: np.ndarray | None = None):
    """Dense (F1, F2) of the affine game map.

    * default: the game under the aligned feedback prices,
      F1 = (N N') kron diag(weight), F2 = stack_i(N_i * linear);
    * ``prices`` given: the fixed-price game, whose gradient uses the raw
      queuing coefficients plus the constant charging/revenue term;
    * ``perturbation`` given: feedback prices built from a perturbed
      demand inverse; adds blockdiag(shift_i) @ (L1 x + L2) where L1/L2
      carry the demand-weighted policy coefficients.
    """
    if perturbation is not None and prices is not None:
        raise ValueError("perturbation applies to feedback prices only")
    n_vec = instance.fleet_sizes

    if prices is not None:
        prices = np.asarray(prices, dtype=float)
        f1 = np.kron(np.outer(n_vec, n_vec) + np.diag(n_vec**2),
                     np.diag(instance.stations.queue_weight))
        f2 = np.concatenate([
            c.lin + c.demand * prices + c.revenue for c in instance.companies
        ])
        return f1, f2

    w = instance.government.weight
    f1 = np.kron(np.outer(n_vec, n_vec), np.diag(w))
    f2 = np.concatenate([n_i * instance.government.linear for n_i in n_vec])

    if perturbation is not None:
        phi_l1, phi_l2 = perturbation_map(instance, perturbation)
        f1 = f1 + phi_l1
        f2 = f2 + phi_l2
    return f1, f2


def perturbation_map(instance: GameInstance, perturbation):
    """Additive game-map change caused by a perturbed demand inverse.

    Block row i of the result is shift_i * demand_i * (the policy
    coefficients), matching the gradient of the perturbed company cost.
    """
    from .model import _policy_terms  # local import to keep module surfaces small

    m = instance.n_stations
    mc = instance.n_companies
    n_vec = instance.fleet_sizes
    phi_l1 = np.zeros((mc * m, mc * m))
    phi_l2 = np.zeros(mc * m)
    for i, comp in enumerate(instance.companies):
        a_bar, b_bar, delta = _policy_terms(instance, i)
        shift = np.asarray(perturbation.demand_shift[i], dtype=float)
        d_shift = shift * comp.demand
        rows = slice(i * m, (i + 1) * m)
        for j in range(mc):
            cols = slice(j * m, (j + 1) * m)
            if i == j:
                phi_l1[rows, cols] = np.diag(d_shift * a_bar)
            else:
                phi_l1[rows, cols] = np.diag(d_shift * b_bar * n_vec[j])
        phi_l2[rows] = d_shift * delta
    return phi_l1, phi_l2


def pseudo_gradient(instance: GameInstance, x: np.ndarray, perturbation=None,
                    prices: np.ndarray | None = None) -> np.ndarray:
    """Stacked per-company gradients of own cost at the stacked point x."""
    x = np.asarray(x, dtype=float)
    n = instance.n_companies * instance.n_stations
    if x.shape != (n,):
        raise ValueError(f"expected stacked vector of length {n}")
    f1, f2 = game_map(instance, perturbation, prices)
    return f1 @ x + f2


def lambda_max_closed_form(instance: GameInstance) -> float:
    """Largest eigenvalue of F1 via its Kronecker structure: ||N||^2 max weight."""
    n_vec = instance.fleet_sizes
    return float(n_vec @ n_vec) * float(instance.government.weight.max())


def step_size_bound(instance: GameInstance, perturbation=None,
                    prices: np.ndarray | None = None) -> float:
    """Supremum of admissible step sizes, 2 / lambda_max.

    Unperturbed feedback-price case: closed form from the Kronecker
    structure. Fixed-price case: symmetric eigensolver. Perturbed case:
    the map may lose symmetry, so the conservative spectral norm is used.
    """
    if perturbation is None and prices is None:
        return 2.0 / lambda_max_closed_form(instance)
    f1, _ = game_map(instance, perturbation, prices)
    if np.allclose(f1, f1.T, rtol=0.0, atol=1e-12):
        lam = float(np.linalg.eigvalsh(f1)[-1])
    else:
        lam = float(np.linalg.norm(f1, 2))
    if lam <= 0:
        raise ValueError("game map has nonpositive curvature bound")
    return 2.0 / lam


def default_start(instance: GameInstance) -> np.ndarray:
    """Uniform over each company's usable stations, projected to admissibility."""
    blocks = []
    for poly in instance.polytopes:
        usable = ~poly.forced_zero
        if not usable.any():
            usable = np.ones(instance.n_stations, dtype=bool)
        x0 = usable.astype(float) / usable.sum()
        blocks.append(poly.project(x0))
    return np.concatenate(blocks)


def solve_nash(instance: GameInstance, x0: np.ndarray | None = None,
               gamma: float | None = None, max_iter: int = 1000,
               tol: float = 1e-8, perturbation=None,
               prices: np.ndarray | None = None,
               record_iterates: bool = False) -> SolveReport:
    """Averaged projected-gradient iteration to the Nash equilibrium.

    Stops when the fixed-point residual ||x - project(x - gamma F(x))||
    drops below ``tol`` or after ``max_iter`` rounds. ``gamma`` defaults
    to 0.9 times the admissible supremum.
    """
    gamma_max = step_size_bound(instance, perturbation, prices)
    if gamma is None:
        gamma = 0.9 * gamma_max
    if not 0.0 < gamma < gamma_max:
        raise ValueError(f"step size must lie in (0, {gamma_max:.3e})")

    if x0 is None:
        x0 = default_start(instance)
    x0 = np.asarray(x0, dtype=float)

    f1, f2 = game_map(instance, perturbation, prices)
    out = _iterate_batch(
        instance, f1, x0[None, :], f2[None, :], np.array([gamma]),
        max_iter=max_iter, tol=tol, record_iterates=True,
    )
    iterates = out["iterates"][:, 0, :]
    report = SolveReport(
        x=out["x"][0],
        gamma=float(gamma),
        iterations=int(out["iterations"][0]),
        converged=bool(out["converged"][0]),
        residuals=out["residuals"][:, 0],
        j_g_trace=out["j_g"][:, 0],
        sigma_trace=out["sigma"][:, 0, :],
        iterates=iterates if record_iterates else None,
    )
    return report


def nash_residual(instance: GameInstance, x: np.ndarray, gamma: float | None = None,
                  perturbation=None, prices: np.ndarray | None = None) -> float:
    """Fixed-point residual; zero exactly at a Nash equilibrium."""
    if gamma is None:
        gamma = 0.9 * step_size_bound(instance, perturbation, prices)
    x = np.asarray(x, dtype=float)
    g = pseudo_gradient(instance, x, perturbation, prices)
    m = instance.n_stations
    proj = np.concatenate([
        poly.project(x[i * m:(i + 1) * m] - gamma * g[i * m:(i + 1) * m])
        for i, poly in enumerate(instance.polytopes)
    ])
    return float(np.linalg.norm(proj - x))


def solve_nash_batch(instance: GameInstance, f2_rows: np.ndarray,
                     f1: np.ndarray | None = None,
                     f1_rows: np.ndarray | None = None,
                     gammas: np.ndarray | None = None,
                     x0: np.ndarray | None = None, max_iter: int = 1000,
                     tol: float = 1e-8, record_iterates: bool = False,
                     record_trace: bool = False) -> dict:
    """Solve many variants of the game that share polytopes and fleet sizes.

    Either a shared ``f1`` or per-row ``f1_rows`` must be given; ``f2_rows``
    is (rows, n). Used by the price grid search (shared F1, per-price F2)
    and the perturbation sweep (per-sample F1).
    """
    if (f1 is None) == (f1_rows is None):
        raise ValueError("pass exactly one of f1 or f1_rows")
    if gammas is None:
        raise ValueError("gammas required")
    if x0 is None:
        x0 = np.broadcast_to(default_start(instance), f2_rows.shape).copy()
    return _iterate_batch(instance, f1 if f1 is not None else f1_rows,
                          x0, f2_rows, np.asarray(gammas, dtype=float),
                          max_iter=max_iter, tol=tol,
                          record_iterates=record_iterates,
                          record_trace=record_trace,
                          per_row_f1=f1 is None)


def _iterate_batch(instance: GameInstance, f1, x0: np.ndarray, f2: np.ndarray,
                   gammas: np.ndarray, max_iter: int, tol: float,
                   record_iterates: bool, record_trace: bool = True,
                   per_row_f1: bool = False) -> dict:
    """Shared engine: averaged projected-gradient rounds over row batches."""
    rows = x0.shape[0]
    m = instance.n_stations
    mc = instance.n_companies
    fleet = instance.fleet_sizes
    gov = instance.government

    x = x0.astype(float).copy()
    live = np.ones(rows, dtype=bool)
    iterations = np.zeros(rows, dtype=int)
    residual_hist: list[np.ndarray] = []
    j_hist: list[np.ndarray] = []
    sigma_hist: list[np.ndarray] = []
    iter_hist: list[np.ndarray] | None = [] if record_iterates else None

    def sigma_of(xr):
        return xr.reshape(rows, mc, m).transpose(0, 2, 1) @ fleet

    def jg_of(sig):
        if gov.set_point is not None:
            d = sig - gov.set_point[None, :]
            return 0.5 * (d * d) @ gov.weight
        return 0.5 * (sig * sig) @ gov.weight + sig @ gov.linear

    sig = sigma_of(x)
    j_best = jg_of(sig)
    if record_trace:
        sigma_hist.append(sig.copy())
        j_hist.append(j_best.copy())
    if record_iterates:
        iter_hist.append(x.copy())

    last_residual = np.full(rows, np.inf)
    for k in range(max_iter):
        if per_row_f1:
            grad = np.einsum("rij,rj->ri", f1, x) + f2
        else:
            grad = x @ f1.T + f2
        proj = np.empty_like(x)
        for i, poly in enumerate(instance.polytopes):
            sl = slice(i * m, (i + 1) * m)
            proj[:, sl] = poly.project_batch(x[:, sl] - gammas[:, None] * grad[:, sl])
        res = np.linalg.norm(proj - x, axis=1)
        x = np.where(live[:, None], 0.5 * (x + proj), x)
        iterations[live] = k + 1
        last_residual = np.where(live, res, last_residual)
        sig = sigma_of(x)
        j_now = jg_of(sig)
        j_best = np.minimum(j_best, j_now)
        if record_trace:
            sigma_hist.append(sig.copy())
            j_hist.append(j_now.copy())
            residual_hist.append(res)
        if record_iterates:
            iter_hist.append(x.copy())
        live = live & (res > tol)
        if not live.any():
            break

    return {
        "x": x,
        "iterations": iterations,
        "converged": last_residual <= tol,
        "residuals": np.array(residual_hist) if residual_hist else np.zeros((0, rows)),
        "j_g": np.array(j_hist) if j_hist else None,
        "sigma": np.array(sigma_hist) if sigma_hist else None,
        "j_g_final": jg_of(sigma_of(x)),
        "j_g_best": j_best,
        "sigma_final": sigma_of(x),
        "iterates": np.array(iter_hist) if record_iterates else None,
        "last_residual": last_residual,
    }
