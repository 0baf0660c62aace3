"""Kernel family library for marked Hawkes processes.

A kernel matrix entry phi^{ij}(t, x) gives the intensity impact on component
i of a type-j event with mark x, after a delay t >= 0.  The first six
families are analytic; `Tabulated` holds a fitted kernel on a time grid.
Multiplicative families combine a time profile with one of the discrete mark
factors f0 (constant), f1 (linear) or f2 (quadratic), each normalized so its
mean under the uniform mark law is exactly 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from hawkesnet.errors import ArgumentError, DegenerateKernelError

_SQRT_2PI = np.sqrt(2.0 * np.pi)

MARK_FACTORS = ("f0", "f1", "f2")


def mark_factor_value(name: Optional[str], m, M: int):
    """f0 = 1, f1(m) = 2m/(M+1), f2(m) = 6m^2/((M+1)(2M+1)); None acts as f0."""
    m = np.asarray(m, dtype=np.float64)
    if name is None or name == "f0":
        return np.ones_like(m)
    if name == "f1":
        return 2.0 * m / (M + 1)
    if name == "f2":
        return 6.0 * m * m / ((M + 1) * (2 * M + 1))
    raise ArgumentError(f"unknown mark factor {name!r}")


# --------------------------------------------------------------------------
# time-profile families


@dataclass(frozen=True)
class Exponential:
    alpha: float
    beta: float

    def profile(self, t):
        return self.alpha * np.exp(-self.beta * np.asarray(t, dtype=np.float64))

    def profile_sup(self, age: float) -> float:
        """sup over delays >= age, used for thinning envelopes."""
        v = self.alpha * np.exp(-self.beta * age)
        return max(v, 0.0)

    def prune_horizon(self, tol: float) -> float:
        """Delay beyond which the remaining |mass| is < tol of the total."""
        return -np.log(tol) / self.beta


@dataclass(frozen=True)
class PowerLaw:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if self.beta <= 1:
            raise ArgumentError("power-law exponent must exceed 1 for a finite norm")
        if self.gamma <= 0:
            raise ArgumentError("power-law offset must be positive")

    def profile(self, t):
        return self.alpha * (self.gamma + np.asarray(t, dtype=np.float64)) ** (-self.beta)

    def profile_sup(self, age: float) -> float:
        return max(self.alpha * (self.gamma + age) ** (-self.beta), 0.0)

    def prune_horizon(self, tol: float) -> float:
        # tail mass ratio ((gamma+W)/gamma)^(1-beta) = tol
        return self.gamma * (tol ** (1.0 / (1.0 - self.beta)) - 1.0)


@dataclass(frozen=True)
class DelayedExponential:
    alpha: float
    beta: float
    lag: float

    def profile(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where(t >= self.lag, self.alpha * np.exp(-self.beta * (t - self.lag)), 0.0)

    def profile_sup(self, age: float) -> float:
        if self.alpha <= 0:
            return 0.0
        if age <= self.lag:
            return self.alpha
        return self.alpha * np.exp(-self.beta * (age - self.lag))

    def prune_horizon(self, tol: float) -> float:
        return self.lag - np.log(tol) / self.beta


@dataclass(frozen=True)
class InhibitionTwoPhase:
    """Exponential phase on [0, lag) switching sign and rate at the lag."""

    alpha_lo: float
    beta_lo: float
    alpha_hi: float
    beta_hi: float
    lag: float

    def profile(self, t):
        t = np.asarray(t, dtype=np.float64)
        lo = self.alpha_lo * np.exp(-self.beta_lo * t)
        hi = self.alpha_hi * np.exp(-self.beta_hi * (t - self.lag))
        return np.where(t < self.lag, lo, hi)

    def profile_sup(self, age: float) -> float:
        best = 0.0
        if age < self.lag:  # first phase still reachable
            v = self.alpha_lo * np.exp(-self.beta_lo * max(age, 0.0))
            best = max(best, v)
        start = max(age, self.lag)
        best = max(best, self.alpha_hi * np.exp(-self.beta_hi * (start - self.lag)))
        return best

    def prune_horizon(self, tol: float) -> float:
        return self.lag - np.log(tol) / self.beta_hi


@dataclass(frozen=True)
class BimodalGaussian:
    alpha: float
    mu_lo: float
    sigma_lo: float
    mu_hi: float
    sigma_hi: float

    def profile(self, t):
        t = np.asarray(t, dtype=np.float64)
        lo = np.exp(-0.5 * ((t - self.mu_lo) / self.sigma_lo) ** 2) / self.sigma_lo
        hi = np.exp(-0.5 * ((t - self.mu_hi) / self.sigma_hi) ** 2) / self.sigma_hi
        return self.alpha / (2.0 * _SQRT_2PI) * (lo + hi)

    def profile_sup(self, age: float) -> float:
        if self.alpha <= 0:
            return 0.0
        s = 0.0
        for mu, sig in ((self.mu_lo, self.sigma_lo), (self.mu_hi, self.sigma_hi)):
            s += (1.0 if age <= mu else np.exp(-0.5 * ((age - mu) / sig) ** 2)) / sig
        return self.alpha / (2.0 * _SQRT_2PI) * s

    def prune_horizon(self, tol: float) -> float:
        # 6 sigma covers far less than any practical tolerance
        reach = max(self.mu_lo + 6 * self.sigma_lo, self.mu_hi + 6 * self.sigma_hi)
        return reach


@dataclass(frozen=True)
class NonMultiplicativeBimodal:
    """Bimodal Gaussian whose second mode center moves with the mark:
    center(x) = ((x-1)/M) mu_lo + ((M-x+1)/M) mu_hi.  Not decomposable as a
    time profile times a mark factor; requires mark_factor None."""

    alpha: float
    mu_lo: float
    sigma_lo: float
    mu_hi: float
    sigma_hi: float

    def second_center(self, m, M: int):
        m = np.asarray(m, dtype=np.float64)
        return (m - 1.0) / M * self.mu_lo + (M - m + 1.0) / M * self.mu_hi

    def evaluate(self, t, m, M: int):
        t = np.asarray(t, dtype=np.float64)
        lo = np.exp(-0.5 * ((t - self.mu_lo) / self.sigma_lo) ** 2) / self.sigma_lo
        hi = np.exp(-0.5 * ((t - self.second_center(m, M)) / self.sigma_hi) ** 2) / self.sigma_hi
        return self.alpha / (2.0 * _SQRT_2PI) * (lo + hi)

    def profile_sup_for_mark(self, age: float, m: int, M: int) -> float:
        if self.alpha <= 0:
            return 0.0
        c2 = float(self.second_center(m, M))
        s = 0.0
        for mu, sig in ((self.mu_lo, self.sigma_lo), (c2, self.sigma_hi)):
            s += (1.0 if age <= mu else np.exp(-0.5 * ((age - mu) / sig) ** 2)) / sig
        return self.alpha / (2.0 * _SQRT_2PI) * s

    def prune_horizon(self, tol: float) -> float:
        reach = max(self.mu_lo + 6 * self.sigma_lo, max(self.mu_lo, self.mu_hi) + 6 * self.sigma_hi)
        return reach


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear kernel on a strictly increasing time grid, zero
    beyond the grid.  `values` has shape (M, len(grid)) — one row per mark."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(self.grid, dtype=np.float64)
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ArgumentError("tabulated grid must be strictly increasing with >= 2 nodes")
        if v.shape[1] != g.size:
            raise ArgumentError("tabulated values must have one column per grid node")
        if not np.all(np.isfinite(v)):
            raise ArgumentError("tabulated values must be finite (thinning bound undefined otherwise)")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        # suffix max per mark: sup of the piecewise-linear curve beyond each node
        object.__setattr__(self, "_sufmax", np.maximum.accumulate(v[:, ::-1], axis=1)[:, ::-1])

    def evaluate(self, t, m, M: int):
        t = np.asarray(t, dtype=np.float64)
        m_arr = np.atleast_1d(np.asarray(m, dtype=np.int64))
        if m_arr.size == 1:
            row = self.values[self._mark_row(int(m_arr[0]))]
            out = np.interp(t, self.grid, row)
            return np.where((t < self.grid[0]) | (t > self.grid[-1]), 0.0, out)
        tb, mb = np.broadcast_arrays(t, m_arr)
        flat = np.empty(tb.size)
        for k, (tv, mv) in enumerate(zip(tb.ravel(), mb.ravel())):
            row = self.values[self._mark_row(int(mv))]
            flat[k] = 0.0 if (tv < self.grid[0] or tv > self.grid[-1]) else np.interp(tv, self.grid, row)
        return flat.reshape(tb.shape)

    def _mark_row(self, m: int) -> int:
        if self.values.shape[0] == 1:
            return 0
        if not 1 <= m <= self.values.shape[0]:
            raise ArgumentError(f"mark {m} outside tabulation with {self.values.shape[0]} marks")
        return m - 1

    def profile_sup_for_mark(self, age: float, m: int, M: int) -> float:
        if age > self.grid[-1]:
            return 0.0
        row = self._sufmax[self._mark_row(m)]
        k = int(np.searchsorted(self.grid, age, side="right")) - 1
        return max(float(row[max(k, 0)]), 0.0)

    def prune_horizon(self, tol: float) -> float:
        return float(self.grid[-1])


MULTIPLICATIVE = (Exponential, PowerLaw, DelayedExponential, InhibitionTwoPhase, BimodalGaussian)
MARK_COUPLED = (NonMultiplicativeBimodal, Tabulated)
FAMILIES = MULTIPLICATIVE + MARK_COUPLED

_FAMILY_TAGS = {
    Exponential: "exponential",
    PowerLaw: "powerlaw",
    DelayedExponential: "delayed_exponential",
    InhibitionTwoPhase: "inhibition_two_phase",
    BimodalGaussian: "bimodal_gaussian",
    NonMultiplicativeBimodal: "non_multiplicative_bimodal",
    Tabulated: "tabulated",
}
_TAG_FAMILIES = {v: k for k, v in _FAMILY_TAGS.items()}


# --------------------------------------------------------------------------
# spec


@dataclass(frozen=True)
class KernelSpec:
    """Kernel matrix, baseline and mark law of a D-variate marked Hawkes
    process.  `kernels[i][j]` is a family instance or None (no influence);
    `mark_factors[i][j]` names the multiplicative mark component and must be
    None for mark-coupled families.  `mark_pmfs[j]` is the mark law of
    component j (uniform when omitted)."""

    dimension: int
    mark_cardinality: int
    baseline: np.ndarray
    kernels: tuple
    mark_factors: tuple
    mark_pmfs: np.ndarray = None

    def __post_init__(self):
        D, M = self.dimension, self.mark_cardinality
        if D < 1 or M < 1:
            raise ArgumentError("dimension and mark_cardinality must be >= 1")
        mu = np.ascontiguousarray(self.baseline, dtype=np.float64)
        if mu.shape != (D,) or np.any(mu < 0):
            raise ArgumentError("baseline must be a length-D vector of non-negative rates")
        object.__setattr__(self, "baseline", mu)
        ker = tuple(tuple(row) for row in self.kernels)
        mf = tuple(tuple(row) for row in self.mark_factors)
        if len(ker) != D or any(len(r) != D for r in ker):
            raise ArgumentError("kernels must be a DxD matrix")
        if len(mf) != D or any(len(r) != D for r in mf):
            raise ArgumentError("mark_factors must be a DxD matrix")
        for i in range(D):
            for j in range(D):
                k, f = ker[i][j], mf[i][j]
                if k is None:
                    continue
                if isinstance(k, MARK_COUPLED):
                    if f is not None:
                        raise ArgumentError(f"entry ({i+1},{j+1}): mark-coupled family takes no mark factor")
                elif isinstance(k, MULTIPLICATIVE):
                    if f is not None and f not in MARK_FACTORS:
                        raise ArgumentError(f"unknown mark factor {f!r}")
                else:
                    raise ArgumentError(f"entry ({i+1},{j+1}): unknown kernel family {type(k).__name__}")
        object.__setattr__(self, "kernels", ker)
        object.__setattr__(self, "mark_factors", mf)
        if self.mark_pmfs is None:
            pmf = np.full((D, M), 1.0 / M)
        else:
            pmf = np.ascontiguousarray(self.mark_pmfs, dtype=np.float64)
            if pmf.shape != (D, M):
                raise ArgumentError("mark_pmfs must have shape (D, M)")
        if np.any(pmf < 0) or np.any(np.abs(pmf.sum(axis=1) - 1.0) > 1e-12):
            raise ArgumentError("each mark pmf must be non-negative and sum to 1 within 1e-12")
        object.__setattr__(self, "mark_pmfs", pmf)
        # the mark factors are normalized for the uniform law; verify the
        # closed forms to guard against regressions in their constants
        marks = np.arange(1, M + 1)
        for name in ("f1", "f2"):
            mean = mark_factor_value(name, marks, M).mean()
            if abs(mean - 1.0) > 1e-12:
                raise ArgumentError(f"mark factor {name} not normalized for M={M}")

    def _check_entry(self, i: int, j: int):
        if not (1 <= i <= self.dimension and 1 <= j <= self.dimension):
            raise ArgumentError(f"kernel index ({i},{j}) out of range 1..{self.dimension}")

    def has_negative_part(self) -> bool:
        for row in self.kernels:
            for k in row:
                if k is None:
                    continue
                for name in ("alpha", "alpha_lo", "alpha_hi"):
                    if getattr(k, name, 0.0) < 0:
                        return True
                if isinstance(k, Tabulated) and np.any(k.values < 0):
                    return True
        return False

    # ---------------------------------------------------------------- JSON

    def to_json(self) -> str:
        def encode(k, f):
            if k is None:
                return None
            d = {"family": _FAMILY_TAGS[type(k)]}
            if isinstance(k, Tabulated):
                d["grid"] = k.grid.tolist()
                d["values"] = k.values.tolist()
            else:
                d.update({fld: float(getattr(k, fld)) for fld in k.__dataclass_fields__})
            if f is not None:
                d["mark_factor"] = f
            return d

        payload = {
            "dimension": self.dimension,
            "mark_cardinality": self.mark_cardinality,
            "baseline": self.baseline.tolist(),
            "mark_pmfs": self.mark_pmfs.tolist(),
            "kernels": [
                [encode(self.kernels[i][j], self.mark_factors[i][j]) for j in range(self.dimension)]
                for i in range(self.dimension)
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        payload = json.loads(text)
        D = payload["dimension"]
        kernels, factors = [], []
        for row in payload["kernels"]:
            krow, frow = [], []
            for cell in row:
                if cell is None:
                    krow.append(None)
                    frow.append(None)
                    continue
                cell = dict(cell)
                tag = cell.pop("family")
                factor = cell.pop("mark_factor", None)
                fam = _TAG_FAMILIES.get(tag)
                if fam is None:
                    raise ArgumentError(f"unknown kernel family tag {tag!r}")
                if fam is Tabulated:
                    krow.append(Tabulated(np.asarray(cell["grid"]), np.asarray(cell["values"])))
                else:
                    krow.append(fam(**cell))
                frow.append(factor)
            kernels.append(krow)
            factors.append(frow)
        return cls(
            dimension=D,
            mark_cardinality=payload["mark_cardinality"],
            baseline=np.asarray(payload["baseline"]),
            kernels=tuple(tuple(r) for r in kernels),
            mark_factors=tuple(tuple(r) for r in factors),
            mark_pmfs=np.asarray(payload["mark_pmfs"]) if payload.get("mark_pmfs") is not None else None,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "KernelSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# --------------------------------------------------------------------------
# evaluation and first-order integrals


def kernel_eval(spec: KernelSpec, i: int, j: int, t, m):
    """phi^{ij}(t, m) in 1/s.  t may be an array; m a scalar or matching array."""
    spec._check_entry(i, j)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ArgumentError("kernel delay t must be >= 0")
    m_arr = np.asarray(m)
    if np.any(m_arr < 1) or np.any(m_arr > spec.mark_cardinality):
        raise ArgumentError(f"mark index out of range 1..{spec.mark_cardinality}")
    k = spec.kernels[i - 1][j - 1]
    if k is None:
        return np.zeros_like(t_arr) if t_arr.shape else 0.0
    if isinstance(k, MARK_COUPLED):
        out = k.evaluate(t_arr, m_arr, spec.mark_cardinality)
    else:
        out = k.profile(t_arr) * mark_factor_value(spec.mark_factors[i - 1][j - 1], m_arr, spec.mark_cardinality)
    return out if (t_arr.shape or np.asarray(out).shape != ()) else float(out)


def kernel_l1_norm(spec: KernelSpec, T: float, quad, absolute: bool = False) -> "NormMatrix":
    """Matrix of mark-weighted time integrals on [0, T] via the supplied
    quadrature: entry (i,j) = sum_m p^j(m) * integral of phi^{ij}(., m).
    With absolute=True the integrand is |phi| (conservative norm used by the
    stationarity diagnostic for kernels with negative parts)."""
    from hawkesnet.algebra import NormMatrix

    if T <= 0:
        raise ArgumentError("truncation horizon T must be positive")
    D, M = spec.dimension, spec.mark_cardinality
    nodes, weights = quad.nodes, quad.weights
    if nodes[-1] > T + 1e-12:
        raise ArgumentError("quadrature extends beyond the requested horizon")
    vals = np.zeros((D, D))
    marks = np.arange(1, M + 1)
    for i in range(1, D + 1):
        for j in range(1, D + 1):
            if spec.kernels[i - 1][j - 1] is None:
                continue
            acc = 0.0
            for m in marks:
                fm = kernel_eval(spec, i, j, nodes, m)
                if absolute:
                    fm = np.abs(fm)
                acc += spec.mark_pmfs[j - 1][m - 1] * float(weights @ fm)
            vals[i - 1, j - 1] = acc
    return NormMatrix(vals)


def aggregated_time_kernel(spec: KernelSpec, i: int, j: int, t):
    """Mark-expectation of the kernel: sum_m p^j(m) phi^{ij}(t, m)."""
    spec._check_entry(i, j)
    t_arr = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t_arr, dtype=np.float64)
    for m in range(1, spec.mark_cardinality + 1):
        p = spec.mark_pmfs[j - 1][m - 1]
        if p > 0:
            out = out + p * kernel_eval(spec, i, j, t_arr, m)
    return out if t_arr.shape else float(out)


def aggregated_mark_kernel(spec: KernelSpec, i: int, j: int, m: int, quad) -> float:
    """Time-integral profile over marks, normalized by the entry's norm so
    that its mark-expectation is 1."""
    spec._check_entry(i, j)
    nodes, weights = quad.nodes, quad.weights
    norm = 0.0
    for z in range(1, spec.mark_cardinality + 1):
        p = spec.mark_pmfs[j - 1][z - 1]
        if p > 0:
            norm += p * float(weights @ kernel_eval(spec, i, j, nodes, z))
    if norm == 0.0:
        raise DegenerateKernelError(f"entry ({i},{j}) has zero norm; mark profile undefined")
    return float(weights @ kernel_eval(spec, i, j, nodes, m)) / norm


def truncated_mass_fraction(spec: KernelSpec, i: int, j: int, T: float, quad_factory) -> float:
    """Diagnostic: fraction of the entry's |mass| lying beyond T, estimated by
    extending the quadrature horizon 100-fold."""
    spec._check_entry(i, j)
    near = kernel_l1_norm(spec, T, quad_factory(T), absolute=True).values[i - 1, j - 1]
    far = kernel_l1_norm(spec, 100 * T, quad_factory(100 * T), absolute=True).values[i - 1, j - 1]
    if far == 0.0:
        return 0.0
    return max(0.0, 1.0 - near / far)
