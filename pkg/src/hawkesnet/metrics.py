"""Estimation-error metrics against a known ground truth, the sample-size
convergence study, and the event-flow causality ratios."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from hawkesnet.algebra import NormMatrix, baseline_from_rates
from hawkesnet.errors import ArgumentError
from hawkesnet.kernels import KernelSpec, kernel_eval


@dataclass(frozen=True)
class ErrorReport:
    """Root-mean-square and sup error of a fitted kernel matrix on a uniform
    probe grid, raw (1/s) and normalized by the true kernel's sup norm."""

    delta_2: float
    delta_inf: float
    delta_2_norm: float
    delta_inf_norm: float
    grid_size: int
    sup_true: float
    per_entry: np.ndarray  # (D, D, M) rms per entry/mark, raw units

    def masked(self, entries) -> tuple[float, float]:
        """(delta_2, normalized) restricted to a list of (i, j) entries."""
        sel = np.array([self.per_entry[i - 1, j - 1] for i, j in entries])
        d2 = float(np.sqrt(np.mean(sel**2)))
        return d2, d2 / self.sup_true


def true_sup_norm(spec: KernelSpec, T: float, n_probe: int = 4001) -> float:
    """sup over entries, marks and a dense [~0, T] grid of |phi|."""
    ts = np.concatenate([[0.0], np.geomspace(max(T * 1e-7, 1e-12), T, n_probe - 1)])
    sup = 0.0
    for i in range(1, spec.dimension + 1):
        for j in range(1, spec.dimension + 1):
            if spec.kernels[i - 1][j - 1] is None:
                continue
            for m in range(1, spec.mark_cardinality + 1):
                sup = max(sup, float(np.max(np.abs(kernel_eval(spec, i, j, ts, m)))))
    return sup


def error_report(fitted_eval, true_spec: KernelSpec, K: int, T: float, M: int, t_floor: float | None = None) -> ErrorReport:
    """Errors of a fitted kernel on the uniform grid {kT/K, k=0..K}.

    fitted_eval(i, j, t_array, m) returns fitted values.  The k = 0 node is
    evaluated at t_floor (default T/K * 1e-3) since log-scaled fits
    extrapolate flat rather than reach t = 0 exactly.
    """
    if K < 1:
        raise ArgumentError("need K >= 1")
    D = true_spec.dimension
    ts = np.arange(K + 1) * (T / K)
    ts[0] = t_floor if t_floor is not None else (T / K) * 1e-3
    per_entry = np.zeros((D, D, M))
    worst = 0.0
    for i in range(1, D + 1):
        for j in range(1, D + 1):
            for m in range(1, M + 1):
                diff = np.asarray(fitted_eval(i, j, ts, m), dtype=np.float64) - kernel_eval(true_spec, i, j, ts, m)
                per_entry[i - 1, j - 1, m - 1] = np.sqrt(np.mean(diff**2))
                worst = max(worst, float(np.max(np.abs(diff))))
    d2 = float(np.sqrt(np.mean(per_entry**2)))
    sup = true_sup_norm(true_spec, T)
    if sup == 0.0:
        raise ArgumentError("true kernel is identically zero; normalized errors undefined")
    return ErrorReport(
        delta_2=d2,
        delta_inf=worst,
        delta_2_norm=d2 / sup,
        delta_inf_norm=worst / sup,
        grid_size=K,
        sup_true=sup,
        per_entry=per_entry,
    )


def model_evaluator(models: list):
    """Adapter: row models -> fitted_eval(i, j, t, m)."""
    by_row = {m.row: m for m in models}

    def ev(i, j, t, m):
        out = by_row[i].kernel_values(np.asarray(t, dtype=np.float64), m)
        return out[:, j - 1]

    return ev


def wh_evaluator(solution):
    """Adapter: a direct-solve solution -> fitted_eval via nodal interpolation."""

    def ev(i, j, t, m):
        t = np.asarray(t, dtype=np.float64)
        return np.interp(t, solution.nodes, solution.phi[i - 1, j - 1, :, m - 1])

    return ev


# --------------------------------------------------------------------------
# convergence study


@dataclass(frozen=True)
class ConvergencePoint:
    n_events: int
    seed: int
    delta_2_norm: float
    delta_inf_norm: float


@dataclass(frozen=True)
class ConvergenceStudy:
    points: list
    slope_2: float
    slope_inf: float

    def mean_errors(self) -> dict:
        byn = {}
        for p in self.points:
            byn.setdefault(p.n_events, []).append(p.delta_2_norm)
        return {n: float(np.mean(v)) for n, v in sorted(byn.items())}


def convergence_study(
    spec: KernelSpec,
    n_events_list,
    grid,
    config,
    seeds,
    K: int = 200,
    n_jobs: int = 1,
) -> ConvergenceStudy:
    """Simulate / estimate / fit at each sample size and regress log error on
    log N.  Failures at any stage re-raise annotated with the offending N."""
    from hawkesnet.algebra import expected_rates
    from hawkesnet.kernels import kernel_l1_norm
    from hawkesnet.moments import estimate_second_order
    from hawkesnet.quadrature import build_quadrature
    from hawkesnet.simulate import SimConfig, simulate
    from hawkesnet.solver import fit as fit_rows

    ns = list(n_events_list)
    if len(ns) < 1 or any(b < a for a, b in zip(ns, ns[1:])):
        raise ArgumentError("n_events_list must be increasing")
    quad = build_quadrature(4000, grid.t_min * 1e-4, grid.T * 10)
    rates = expected_rates(kernel_l1_norm(spec, grid.T * 10, quad), spec.baseline)
    points = []
    for n in ns:
        for seed in seeds:
            try:
                horizon = n / float(np.sum(rates))
                stream = simulate(SimConfig(spec=spec, horizon=horizon, seed=seed, max_events=2 * n + 10_000))
                stats = estimate_second_order(stream, grid, spec.mark_cardinality)
                models = fit_rows(stats, replace(config, seed=seed), n_jobs=n_jobs)
                rep = error_report(model_evaluator(models), spec, K, grid.T, spec.mark_cardinality)
            except Exception as exc:
                raise type(exc)(f"convergence stage failed at N={n}, seed={seed}: {exc}") from exc
            points.append(
                ConvergencePoint(n_events=n, seed=seed, delta_2_norm=rep.delta_2_norm, delta_inf_norm=rep.delta_inf_norm)
            )
    logn = np.log([p.n_events for p in points])
    s2 = np.polyfit(logn, np.log([p.delta_2_norm for p in points]), 1)[0]
    si = np.polyfit(logn, np.log([p.delta_inf_norm for p in points]), 1)[0]
    return ConvergenceStudy(points=points, slope_2=float(s2), slope_inf=float(si))


# --------------------------------------------------------------------------
# causality ratios


@dataclass(frozen=True)
class CausalityReport:
    """Expected-ancestry causality measures derived from rates and norms.

    spillover[i, j]: share of type-i arrivals directly caused by type-j
    (zero diagonal); leader[j]: share of non-j arrivals directly caused by
    j; receiver[i]: share of type-i arrivals caused by other types;
    participation[j]: volume share.  baseline is the recovered exogenous
    rate vector.
    """

    norms: np.ndarray
    branching_ratio: float
    spillover: np.ndarray
    leader: np.ndarray
    receiver: np.ndarray
    participation: np.ndarray
    baseline: np.ndarray

    def to_dict(self) -> dict:
        return {
            "norms": self.norms.tolist(),
            "branching_ratio": self.branching_ratio,
            "spillover": self.spillover.tolist(),
            "leader": self.leader.tolist(),
            "receiver": self.receiver.tolist(),
            "participation": self.participation.tolist(),
            "baseline": self.baseline.tolist(),
        }


def causality_report(norms, rates, volumes=None) -> CausalityReport:
    """Spillover/leader/receiver ratios from the norm matrix and rates, the
    participation shares from traded volumes, and the recovered baseline."""
    from hawkesnet.algebra import branching_ratio as _ratio

    a = norms.values if isinstance(norms, NormMatrix) else np.asarray(norms, dtype=np.float64)
    lam = np.asarray(rates, dtype=np.float64)
    D = a.shape[0]
    if lam.shape != (D,):
        raise ArgumentError("rates length must match the norm matrix")
    if np.any(lam <= 0):
        raise ArgumentError("rates must be positive componentwise")
    if volumes is None:
        vol = np.ones(D)
    else:
        vol = np.asarray(volumes, dtype=np.float64)
        if vol.shape != (D,) or np.any(vol < 0):
            raise ArgumentError("volumes must be a length-D non-negative vector")

    spill = (lam[None, :] / lam[:, None]) * a
    np.fill_diagonal(spill, 0.0)
    off = ~np.eye(D, dtype=bool)
    leader = np.empty(D)
    receiver = np.empty(D)
    for d in range(D):
        others = np.arange(D) != d
        leader[d] = lam[d] / lam[others].sum() * a[others, d].sum() if D > 1 else 0.0
        receiver[d] = (lam[others] @ a[d, others]) / lam[d] if D > 1 else 0.0
    participation = vol / vol.sum()
    return CausalityReport(
        norms=a,
        branching_ratio=_ratio(np.abs(a)),
        spillover=spill,
        leader=leader,
        receiver=receiver,
        participation=participation,
        baseline=baseline_from_rates(NormMatrix(a), lam),
    )
