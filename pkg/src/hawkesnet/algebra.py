"""First-order algebra on the matrix of kernel norms: branching ratio,
stationary rates and baseline recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hawkesnet.errors import ArgumentError, NumericalError, StationarityError

_MAX_POWER_ITERS = 100_000
_POWER_TOL = 1e-10


@dataclass(frozen=True)
class NormMatrix:
    """D x D matrix of mark-weighted kernel time-integrals (dimensionless)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ArgumentError("norm matrix must be square")
        if not np.all(np.isfinite(v)):
            raise ArgumentError("norm matrix entries must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def abs(self) -> "NormMatrix":
        return NormMatrix(np.abs(self.values))


def _as_matrix(norms) -> np.ndarray:
    return norms.values if isinstance(norms, NormMatrix) else NormMatrix(np.asarray(norms)).values


def _power_iteration(a: np.ndarray) -> float:
    """Spectral radius by power iteration, all-ones start, tolerance 1e-10."""
    n = a.shape[0]
    if n == 1:
        return abs(float(a[0, 0]))
    v = np.ones(n)
    lam = 0.0
    for _ in range(_MAX_POWER_ITERS):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v_new = w / nw
        lam_new = float(np.linalg.norm(a @ v_new))
        # compare directions up to sign so a negative dominant eigenvalue
        # (direction alternates) still registers as converged
        aligned = min(np.linalg.norm(v_new - v), np.linalg.norm(v_new + v))
        if abs(lam_new - lam) <= _POWER_TOL * max(1.0, lam_new) and aligned <= 1e-8:
            return lam_new
        v, lam = v_new, lam_new
    raise NumericalError(f"power iteration did not converge in {_MAX_POWER_ITERS} iterations")


def branching_ratio(norms) -> float:
    """Largest eigenvalue modulus of the norm matrix.  Power iteration first;
    on non-convergence (tied or complex dominant pairs) fall back to the
    dense QR eigensolver, which deflates converged eigenvalues internally."""
    a = _as_matrix(norms)
    try:
        return _power_iteration(a)
    except NumericalError:
        eig = np.linalg.eigvals(a)
        if not np.all(np.isfinite(eig)):
            raise
        return float(np.max(np.abs(eig)))


def expected_rates(norms, baseline) -> np.ndarray:
    """Stationary rate vector (I - norms)^{-1} mu."""
    a = _as_matrix(norms)
    mu = np.asarray(baseline, dtype=np.float64)
    if mu.shape != (a.shape[0],):
        raise ArgumentError("baseline length must match the norm matrix dimension")
    if branching_ratio(np.abs(a)) >= 1.0:
        raise StationarityError("branching ratio >= 1: no stationary rates")
    return np.linalg.solve(np.eye(a.shape[0]) - a, mu)


def baseline_from_rates(norms, rates) -> np.ndarray:
    """Baseline mu = (I - norms) Lambda, the rearranged first-order identity."""
    a = _as_matrix(norms)
    lam = np.asarray(rates, dtype=np.float64)
    if lam.shape != (a.shape[0],):
        raise ArgumentError("rate vector length must match the norm matrix dimension")
    ratio = branching_ratio(np.abs(a))
    if ratio >= 1.0:
        raise StationarityError(f"branching ratio {ratio:.4f} >= 1: baseline recovery invalid")
    return (np.eye(a.shape[0]) - a) @ lam
