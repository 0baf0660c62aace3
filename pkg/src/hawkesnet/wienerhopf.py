"""Direct solve of the second-order characterization equation.

The time domain is discretized on Q uniform nodes with rectangle weights
delta = T/(Q-1); for each row i the resulting dense linear system in the
nodal kernel values (unknowns ordered lexicographically by (k, mark, node))
is solved by a pivoted LU factorization.  This is the reference method the
neural solver is compared against: no regularization is applied, so its
well-known sensitivity to statistics noise is preserved, not patched.

The two-sided kernel K uses the estimated statistics curves with the
positive-lag branch at lag exactly 0 (a measure-zero convention).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hawkesnet.errors import ArgumentError, NumericalError
from hawkesnet.moments import SecondOrderStats, g_table
from hawkesnet.quadrature import QuadratureGrid

_COND_LIMIT = 1e13


@dataclass(frozen=True)
class WhSolution:
    """Nodal kernel values phi[i, k, q, m] on the uniform quadrature, plus
    the statistics they were solved from."""

    nodes: np.ndarray
    phi: np.ndarray
    stats: SecondOrderStats

    @property
    def delta(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def dimension(self) -> int:
        return self.phi.shape[0]


def _k_two_sided(stats: SecondOrderStats, k: int, j: int, lags: np.ndarray, x: int, z: int) -> np.ndarray:
    """K^{kj}(lag, x, z) with the positive branch closed at lag 0.  Unlike
    the interior interpolation contract, lag 0 takes the short-lag limit of
    the positive-lag curve."""
    centers_pos, values_pos = g_table(stats, k, j, x)
    centers_neg, values_neg = g_table(stats, j, k, z)
    T = stats.grid.T
    pos = np.interp(lags, centers_pos, values_pos)
    pos = np.where((lags >= 0) & (lags <= T), pos, 0.0)
    neg = np.interp(-lags, centers_neg, values_neg)
    neg = np.where((lags < 0) & (-lags <= T), neg, 0.0)
    return pos + (stats.rates[k - 1] / stats.rates[j - 1]) * neg


def wh_solve(
    stats: SecondOrderStats,
    Q: int,
    mark_cardinality: int | None = None,
    g_nodal: np.ndarray | None = None,
) -> WhSolution:
    """Solve the discretized system for every row.

    Unknowns per row: phi^{ik}(t_q, m) for all k, m, q (size D*M*Q),
    lexicographic (k, m, q).  Equations: the characterization equation at
    every (j, x, t_q').  `g_nodal` (D, D, Q, M) overrides the right-hand
    side with externally supplied nodal statistics (round-trip tests and
    solving over smoothed statistics).
    """
    if Q < 2:
        raise ArgumentError("need at least 2 quadrature nodes")
    D = stats.dimension
    M = mark_cardinality if mark_cardinality is not None else stats.mark_cardinality
    if M > stats.mark_cardinality:
        raise ArgumentError("mark_cardinality exceeds the statistics' mark range")
    T = stats.grid.T
    nodes = np.linspace(0.0, T, Q)
    delta = T / (Q - 1)
    n_unknown = D * M * Q

    # A = I + delta * p^k(z) K^{kj}(t_q' - t_q, x, z), blocks indexed (j,x) x (k,z)
    lag_matrix = nodes[:, None] - nodes[None, :]  # (q', q)
    A = np.zeros((n_unknown, n_unknown))
    for j in range(1, D + 1):
        for x in range(1, M + 1):
            row_block = ((j - 1) * M + (x - 1)) * Q
            for k in range(1, D + 1):
                for z in range(1, M + 1):
                    col_block = ((k - 1) * M + (z - 1)) * Q
                    kern = _k_two_sided(stats, k, j, lag_matrix, x, z)
                    A[row_block : row_block + Q, col_block : col_block + Q] = (
                        delta * stats.pmfs[k - 1, z - 1] * kern
                    )
    A += np.eye(n_unknown)
    if n_unknown <= 1200:
        cond = np.linalg.cond(A)
        if cond > _COND_LIMIT:
            raise NumericalError(f"discretized system numerically singular (cond {cond:.3e})")

    b = np.empty((n_unknown, D))
    for i in range(1, D + 1):
        for j in range(1, D + 1):
            for x in range(1, M + 1):
                blk = ((j - 1) * M + (x - 1)) * Q
                if g_nodal is not None:
                    b[blk : blk + Q, i - 1] = g_nodal[i - 1, j - 1, :, x - 1]
                else:
                    centers, values = g_table(stats, i, j, x)
                    b[blk : blk + Q, i - 1] = np.interp(nodes, centers, values)
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular discretized system (cond ~ {np.linalg.cond(A):.3e})") from exc

    phi = np.empty((D, D, Q, M))
    for i in range(1, D + 1):
        for k in range(1, D + 1):
            for z in range(1, M + 1):
                blk = ((k - 1) * M + (z - 1)) * Q
                phi[i - 1, k - 1, :, z - 1] = sol[blk : blk + Q, i - 1]
    return WhSolution(nodes=nodes, phi=phi, stats=stats)


def wh_reconstruct(solution: WhSolution, i: int, j: int, t, m: int = 1) -> np.ndarray:
    """Kernel value anywhere in [0, T] from the solved nodal values:
    phi^{ij}(t, x) = Ghat^{ij}(t, x)
                     - delta sum_k sum_z p^k(z) sum_q phi^{ik}(t_q, z) K^{kj}(t - t_q, x, z).
    """
    stats = solution.stats
    D, M = solution.phi.shape[0], solution.phi.shape[3]
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any((t_arr < 0) | (t_arr > stats.grid.T)):
        raise ArgumentError("reconstruction time must lie in [0, T]")
    centers, values = g_table(stats, i, j, m)
    out = np.interp(t_arr, centers, values)
    lags = t_arr[:, None] - solution.nodes[None, :]
    for k in range(1, D + 1):
        for z in range(1, M + 1):
            kern = _k_two_sided(stats, k, j, lags, m, z)
            out = out - solution.delta * stats.pmfs[k - 1, z - 1] * (kern @ solution.phi[i - 1, k - 1, :, z - 1])
    return out if np.asarray(t).shape else float(out[0])


def wh_apply_forward(stats: SecondOrderStats, phi_eval, Q: int, mark_cardinality: int | None = None):
    """Forward-apply the discretized equation to a known kernel: returns
    synthetic G values at the nodes such that wh_solve recovers phi exactly
    (up to solver tolerance).  phi_eval(i, k, t_array, z) -> array."""
    D = stats.dimension
    M = mark_cardinality if mark_cardinality is not None else stats.mark_cardinality
    T = stats.grid.T
    nodes = np.linspace(0.0, T, Q)
    delta = T / (Q - 1)
    lag_matrix = nodes[:, None] - nodes[None, :]
    g_syn = np.empty((D, D, Q, M))
    for i in range(1, D + 1):
        for j in range(1, D + 1):
            for x in range(1, M + 1):
                acc = phi_eval(i, j, nodes, x).astype(np.float64).copy()
                for k in range(1, D + 1):
                    for z in range(1, M + 1):
                        kern = _k_two_sided(stats, k, j, lag_matrix, x, z)
                        acc += delta * stats.pmfs[k - 1, z - 1] * (kern @ phi_eval(i, k, nodes, z))
                g_syn[i - 1, j - 1, :, x - 1] = acc
    return nodes, g_syn
