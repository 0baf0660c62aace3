"""Moment-based neural kernel estimation.

One gated network per kernel row is trained to zero the residual of the
second-order characterization equation: for row i and every column j,

    eps^{ij}(t, x) = Ghat^{ij}(t, x) - u^{ij}(t, x)
                     - sum_k sum_z p^k(z) sum_q w_q u^{ik}(s_q, z) H^{kj}(t - s_q, x, z)

with H built from the estimated statistics.  The integral term touches the
network only through its values at the fixed quadrature points, so those
Q*M forwards are shared by every data point, and the whole loss gradient is
a vector-Jacobian product with coefficients accumulated per evaluation
point — exact, not an approximation.

Training follows the reference procedure: per epoch, fresh training and
validation sets are sampled and scaled; residuals and temporal weights are
computed once at the epoch's starting parameters and the weights frozen;
then plain mini-batch gradient descent runs over the weighted squared
residuals, recomputing residuals per batch at current parameters; the
unweighted validation loss is recorded per epoch.  The learning rate decays
as gamma_0 * 100^(-e/E).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from hawkesnet import dgm
from hawkesnet.algebra import NormMatrix, baseline_from_rates, branching_ratio, expected_rates
from hawkesnet.errors import ArgumentError, DegenerateKernelError, DivergenceError, EstimationError, StationarityError
from hawkesnet.events import EventStream
from hawkesnet.kernels import KernelSpec, Tabulated
from hawkesnet.moments import SecondOrderStats, estimate_first_order, estimate_second_order, interpolate_g
from hawkesnet.quadrature import QuadratureGrid, build_quadrature

_COEFF_CACHE_LIMIT = 20_000_000  # entries; above this the tensor is built per batch


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one row training.

    train_size must be a multiple of batch_size.  short_time_threshold
    defaults to the statistics grid's linear/log switch point (a tenth of
    the horizon for grids without one).  magnitude_weights toggles the
    per-(i,j,mark) loss balancing; adaptive_moments switches the optimizer
    from the plain mini-batch descent of the reference procedure to Adam
    and is off everywhere results are compared against it.
    """

    neurons: int = 64
    dgm_cells: int = 1
    learning_rate: float = 1e-3
    quadratures: int = 250
    batch_size: int = 8
    train_size: int = 1024
    validation_size: int = 128
    epochs: int = 1000
    short_time_fraction: float = 0.3
    short_time_threshold: float | None = None
    causality_strength: float = 5.0
    continuity_weight: float = 0.0
    magnitude_weights: bool = True
    adaptive_moments: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.train_size % self.batch_size != 0:
            raise ArgumentError("train_size must be divisible by batch_size")
        if not 0.0 <= self.short_time_fraction < 1.0:
            raise ArgumentError("short_time_fraction must lie in [0, 1)")
        if self.causality_strength < 0:
            raise ArgumentError("causality_strength must be >= 0")
        if self.epochs < 0 or self.neurons < 1 or self.dgm_cells < 0:
            raise ArgumentError("invalid architecture sizes")
        if self.quadratures < 2:
            raise ArgumentError("need at least 2 quadrature nodes")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class RowModel:
    """Trained network for one kernel row plus everything needed to use it."""

    row: int
    params: dgm.DgmParams
    scaler: dgm.InputScaler
    config: TrainConfig
    loss_history: np.ndarray
    t_min: float
    T: float

    def kernel_values(self, t, m):
        """Fitted phi^{row,j}(t, m) for all j; lags below t_min extend flat."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = dgm.forward_scaled(self.params, self.scaler.scale(np.maximum(t_arr, self.scaler.t_floor), m))
        return out if np.asarray(t).shape else out[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "row": self.row,
                "t_min": self.t_min,
                "T": self.T,
                "scaler": self.scaler.to_dict(),
                "config": self.config.to_dict(),
                "loss_history": self.loss_history.tolist(),
                "params": json.loads(self.params.to_json()),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RowModel":
        d = json.loads(text)
        return cls(
            row=d["row"],
            params=dgm.DgmParams.from_json(json.dumps(d["params"])),
            scaler=dgm.InputScaler.from_dict(d["scaler"]),
            config=TrainConfig.from_dict(d["config"]),
            loss_history=np.asarray(d["loss_history"]),
            t_min=d["t_min"],
            T=d["T"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "RowModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# --------------------------------------------------------------------------
# sampling


def sample_training_set(n: int, short_fraction: float, tau: float, T: float, M: int, seed_or_rng):
    """(times, marks) with floor(S*n) times uniform on (0, tau), the rest on
    (tau, T), marks uniform on 1..M, sorted ascending in time (the temporal
    weights need the cumulative order)."""
    if not 0 < tau < T:
        raise ArgumentError("need 0 < tau < T")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    n_short = int(np.floor(short_fraction * n))
    t = np.empty(n)
    t[:n_short] = rng.uniform(0.0, tau, n_short)
    t[n_short:] = rng.uniform(tau, T, n - n_short)
    t = np.maximum(t, 1e-300)  # log scaling needs t > 0
    m = rng.integers(1, M + 1, n)
    order = np.argsort(t, kind="stable")
    return t[order], m[order]


# --------------------------------------------------------------------------
# residual machinery


def _refuse_flagged(stats: SecondOrderStats):
    bad = stats.flagged & (stats.pmfs > 0.01)
    if np.any(bad):
        j, m = np.argwhere(bad)[0]
        raise EstimationError(
            f"conditioning cell (component {j+1}, mark {m+1}) has no events but "
            f"carries mark mass {stats.pmfs[j, m]:.3f}; statistics are unusable"
        )


def _u_evaluator(model, scaler: dgm.InputScaler | None):
    """Uniform evaluation interface: DgmParams (with scaler), a KernelSpec
    row callable, or any f(t_array, m_array) -> (P, D)."""
    if isinstance(model, dgm.DgmParams):
        if scaler is None:
            raise ArgumentError("a scaler is required to evaluate network parameters")
        return lambda t, m: dgm.forward_scaled(model, scaler.scale(t, m))
    if callable(model):
        return model
    raise ArgumentError(f"cannot evaluate {type(model).__name__} as a kernel row")


def spec_row_evaluator(spec: KernelSpec, i: int):
    """phi^{i.}(t, m) of an analytic spec as a row evaluator."""
    from hawkesnet.kernels import kernel_eval

    def ev(t, m):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        m = np.broadcast_to(np.asarray(m), t.shape)
        out = np.empty((t.size, spec.dimension))
        for j in range(1, spec.dimension + 1):
            out[:, j - 1] = kernel_eval(spec, i, j, t, m)
        return out

    return ev


def _g_hat(stats: SecondOrderStats, i: int, t_pts: np.ndarray, x_pts: np.ndarray) -> np.ndarray:
    """Ghat[n, j] = interpolated statistics for row i at the sample points."""
    D = stats.dimension
    out = np.empty((t_pts.size, D))
    for j in range(1, D + 1):
        for m in np.unique(x_pts):
            sel = x_pts == m
            out[sel, j - 1] = interpolate_g(stats, i, j, t_pts[sel], int(m))
    return out


def _h_coefficients(stats: SecondOrderStats, quad: QuadratureGrid, t_pts: np.ndarray, x_pts: np.ndarray) -> np.ndarray:
    """C[n, j, k, q, z] = w_q p^k(z) H^{kj}(t_n - s_q, x_n, z); contracting C
    with the network's quadrature values gives the integral term for every
    (point, column) pair."""
    D, M = stats.dimension, stats.mark_cardinality
    N, Q = t_pts.size, quad.nodes.size
    lags = t_pts[:, None] - quad.nodes[None, :]
    pos_lags = np.maximum(lags, 0.0)
    neg_lags = np.maximum(-lags, 0.0)
    C = np.zeros((N, D, D, Q, M))
    for k in range(1, D + 1):
        for j in range(1, D + 1):
            pos = np.zeros((N, Q))
            for m in np.unique(x_pts):
                sel = x_pts == m
                pos[sel] = interpolate_g(stats, k, j, pos_lags[sel], int(m))
            pos[lags <= 0] = 0.0
            ratio = stats.rates[k - 1] / stats.rates[j - 1]
            for z in range(1, M + 1):
                neg = interpolate_g(stats, j, k, neg_lags, z)
                neg[lags >= 0] = 0.0
                C[:, j - 1, k - 1, :, z - 1] = quad.weights[None, :] * stats.pmfs[k - 1, z - 1] * (pos + ratio * neg)
    return C


def _quad_inputs(quad: QuadratureGrid, M: int):
    """(t, m) arrays of the Q*M quadrature evaluation points, q-major."""
    t = np.repeat(quad.nodes, M)
    m = np.tile(np.arange(1, M + 1), quad.nodes.size)
    return t, m


def residuals(row: int, model, stats: SecondOrderStats, quad: QuadratureGrid, points, scaler: dgm.InputScaler | None = None) -> np.ndarray:
    """Characterization-equation residuals for row `row` at the given
    (t, mark) points; `model` is a DgmParams (then `scaler` applies), a row
    evaluator callable, or a KernelSpec row via `spec_row_evaluator`."""
    _refuse_flagged(stats)
    t_pts = np.asarray([p[0] for p in points], dtype=np.float64)
    x_pts = np.asarray([p[1] for p in points], dtype=np.int64)
    ev = _u_evaluator(model, scaler)
    M = stats.mark_cardinality
    qt, qm = _quad_inputs(quad, M)
    u_quad = ev(qt, qm).reshape(quad.nodes.size, M, stats.dimension)
    u_row = ev(t_pts, x_pts)
    C = _h_coefficients(stats, quad, t_pts, x_pts)
    integral = np.einsum("njkqz,qzk->nj", C, u_quad)
    return _g_hat(stats, row, t_pts, x_pts) - u_row - integral


def temporal_weights(residual_matrix: np.ndarray, strength: float) -> np.ndarray:
    """Per-column causal weights on time-sorted residuals: weight 1 at the
    first point, then exp(-strength * cumulative/total) so a point only
    counts once everything before it fits.  All-zero columns weight 1."""
    sq = np.asarray(residual_matrix, dtype=np.float64) ** 2
    if sq.ndim == 1:
        sq = sq[:, None]
    cum = np.cumsum(sq, axis=0)
    total = cum[-1].copy()
    w = np.ones_like(sq)
    ok = total > 0
    if np.any(ok):
        w[1:, ok] = np.exp(-strength * cum[:-1, ok] / total[ok])
    return w if residual_matrix.ndim > 1 else w[:, 0]


def magnitude_weights(stats: SecondOrderStats, quad: QuadratureGrid) -> np.ndarray:
    """zeta[i, j, m]: inverse |G|-mass of the (i,j) statistics at mark m,
    normalized per mark over all (i,j) so small-magnitude kernels are not
    drowned by large ones.  Sum over (i,j) is 1 for every mark."""
    D, M = stats.dimension, stats.mark_cardinality
    mass = np.empty((D, D, M))
    for i in range(1, D + 1):
        for j in range(1, D + 1):
            for m in range(1, M + 1):
                mass[i - 1, j - 1, m - 1] = quad.weights @ np.abs(interpolate_g(stats, i, j, quad.nodes, m))
    if np.any(mass == 0.0):
        raise DegenerateKernelError("a statistics entry has zero |G| mass; magnitude weights undefined")
    inv = 1.0 / mass
    return inv / inv.sum(axis=(0, 1), keepdims=True)


# --------------------------------------------------------------------------
# training


class _Adam:
    def __init__(self, params: dgm.DgmParams):
        self.m = dgm.zeros_like(params)
        self.v = dgm.zeros_like(params)
        self.t = 0

    def step(self, params: dgm.DgmParams, grad: dgm.DgmParams, lr: float):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for (_, p), (_, g), (_, m), (_, v) in zip(params.arrays(), grad.arrays(), self.m.arrays(), self.v.arrays()):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _resolve_tau(config: TrainConfig, stats: SecondOrderStats) -> float:
    if config.short_time_threshold is not None:
        return config.short_time_threshold
    if stats.grid.h is not None:
        return stats.grid.h
    return stats.grid.T / 10.0


def train_row(row: int, stats: SecondOrderStats, config: TrainConfig) -> RowModel:
    """Train the network for kernel row `row` (1-based) against the estimated
    statistics.  Deterministic given config.seed."""
    _refuse_flagged(stats)
    D, M = stats.dimension, stats.mark_cardinality
    if not 1 <= row <= D:
        raise ArgumentError(f"row index {row} out of range 1..{D}")
    grid = stats.grid
    T, t_min = grid.T, grid.t_min
    tau = _resolve_tau(config, stats)
    # the integral operator loses the (0, t_min) strip if the quadrature
    # starts at t_min; the statistics extend flat there, so reaching a
    # decade below t_min removes a measurable short-lag residual bias
    quad = build_quadrature(config.quadratures, t_min / 10.0, T)
    scaler = dgm.InputScaler.for_training(t_min, config.short_time_fraction, tau, T, M)
    params = dgm.glorot_init(config.neurons, config.dgm_cells, D, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    # with the flag off the per-entry weight is 1 (the plain quadratic loss)
    zeta_row = magnitude_weights(stats, quad)[row - 1] if config.magnitude_weights else np.ones((D, M))

    qt, qm = _quad_inputs(quad, M)
    X_quad = scaler.scale(qt, qm)
    Q = quad.nodes.size
    n_quad = Q * M
    if config.continuity_weight > 0:
        X_cont = scaler.scale(np.full(M, T), np.arange(1, M + 1))
    else:
        X_cont = None

    adam = _Adam(params) if config.adaptive_moments else None
    history = np.empty(config.epochs)
    B = config.batch_size
    n_batches = config.train_size // B
    cache_coeffs = config.train_size * D * D * Q * M <= _COEFF_CACHE_LIMIT

    def epoch_residuals(theta, X_pts, Ghat, C):
        u_quad = dgm.forward_scaled(theta, X_quad).reshape(Q, M, D)
        u_row = dgm.forward_scaled(theta, X_pts)
        return Ghat - u_row - np.einsum("njkqz,qzk->nj", C, u_quad)

    for e in range(1, config.epochs + 1):
        lr = config.learning_rate * 100.0 ** (-e / config.epochs)
        t_tr, m_tr = sample_training_set(config.train_size, config.short_time_fraction, tau, T, M, rng)
        t_va, m_va = sample_training_set(config.validation_size, config.short_time_fraction, tau, T, M, rng)
        X_tr = scaler.scale(t_tr, m_tr)
        Ghat_tr = _g_hat(stats, row, t_tr, m_tr)
        zw = zeta_row[:, m_tr - 1].T  # (N, D): zeta_{row,j}(x_n)

        if cache_coeffs:
            C_tr = _h_coefficients(stats, quad, t_tr, m_tr)
            eps0 = epoch_residuals(params, X_tr, Ghat_tr, C_tr)
        else:
            C_tr = None
            eps0 = np.empty((config.train_size, D))
            for s in range(n_batches):
                sl = slice(s * B, (s + 1) * B)
                C_b = _h_coefficients(stats, quad, t_tr[sl], m_tr[sl])
                eps0[sl] = epoch_residuals(params, X_tr[sl], Ghat_tr[sl], C_b)
        omega = temporal_weights(eps0, config.causality_strength)
        wmat = zw * omega  # frozen for the epoch

        for s in range(n_batches):
            sl = slice(s * B, (s + 1) * B)
            C_b = C_tr[sl] if cache_coeffs else _h_coefficients(stats, quad, t_tr[sl], m_tr[sl])
            X_all = np.vstack([X_tr[sl], X_quad] if X_cont is None else [X_tr[sl], X_quad, X_cont])
            out, cache = dgm.forward_scaled(params, X_all, want_cache=True)
            u_row = out[:B]
            u_quad = out[B : B + n_quad].reshape(Q, M, D)
            eps = Ghat_tr[sl] - u_row - np.einsum("bjkqz,qzk->bj", C_b, u_quad)
            we = wmat[sl] * eps
            cot = np.empty_like(out)
            cot[:B] = -(2.0 / B) * we
            cot[B : B + n_quad] = (-(2.0 / B) * np.einsum("bj,bjkqz->qzk", we, C_b)).reshape(n_quad, D)
            if X_cont is not None:
                cot[B + n_quad :] = 2.0 * config.continuity_weight * out[B + n_quad :]
            grad = dgm.vjp(params, cache, cot)
            if adam is None:
                dgm.add_scaled(params, grad, -lr)
            else:
                adam.step(params, grad, lr)

        Ghat_va = _g_hat(stats, row, t_va, m_va)
        C_va = _h_coefficients(stats, quad, t_va, m_va)
        eps_va = epoch_residuals(params, scaler.scale(t_va, m_va), Ghat_va, C_va)
        loss = float(np.sum(eps_va**2))
        if not np.isfinite(loss):
            raise DivergenceError(f"validation loss diverged at epoch {e}", epoch=e)
        history[e - 1] = loss

    return RowModel(row=row, params=params, scaler=scaler, config=config, loss_history=history, t_min=t_min, T=T)


def row_seed(master_seed: int, row: int) -> int:
    """Per-row seed derivation used by fit(): row i draws stream i of the
    master seed's seed sequence."""
    return int(np.random.SeedSequence([master_seed, row]).generate_state(1, np.uint64)[0])


def _train_one(args):
    row, stats, config = args
    return train_row(row, stats, config)


def fit(stats: SecondOrderStats, config: TrainConfig, n_jobs: int = 1) -> list:
    """Train all D row models.  Row trainings are independent; identical
    results whether run serially or across processes."""
    D = stats.dimension
    jobs = [(i, stats, replace(config, seed=row_seed(config.seed, i))) for i in range(1, D + 1)]
    if n_jobs <= 1 or D == 1:
        return [_train_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_jobs, D)) as pool:
        return list(pool.map(_train_one, jobs))


# --------------------------------------------------------------------------
# tabulation and goodness of fit


def default_tabulation_nodes(t_min: float, T: float, n: int = 1000) -> np.ndarray:
    """Node 0 plus geometric nodes from t_min/10 to T; the fitted network is
    flat below its time floor, so linear interpolation from 0 is faithful."""
    return np.concatenate([[0.0], np.geomspace(t_min / 10.0, T, n - 1)])


def tabulate(models: list, time_nodes: np.ndarray, M: int):
    """Sample the fitted kernels on the nodes: rows of Tabulated entries with
    per-(i,j,mark) values (the stored maxima give the simulator its thinning
    bounds)."""
    nodes = np.ascontiguousarray(time_nodes, dtype=np.float64)
    if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
        raise ArgumentError("tabulation nodes must be strictly increasing")
    D = models[0].params.outputs
    if len(models) != D or sorted(m.row for m in models) != list(range(1, D + 1)):
        raise ArgumentError("need exactly one model per kernel row")
    rows = []
    for model in sorted(models, key=lambda m: m.row):
        vals = np.empty((D, M, nodes.size))
        for m in range(1, M + 1):
            out = model.kernel_values(np.maximum(nodes, model.scaler.t_floor), np.full(nodes.size, m))
            vals[:, m - 1, :] = out.T
        rows.append(tuple(Tabulated(grid=nodes, values=vals[j]) for j in range(D)))
    return rows


def tabulated_spec(models: list, stats: SecondOrderStats, n_nodes: int = 1000) -> KernelSpec:
    """Full spec of the fitted model: tabulated kernel matrix, mark laws from
    the data, and the baseline recovered through the first-order identity."""
    model0 = sorted(models, key=lambda m: m.row)[0]
    nodes = default_tabulation_nodes(model0.t_min, model0.T, n_nodes)
    M = stats.mark_cardinality
    rows = tabulate(models, nodes, M)
    norms = fitted_norms(models, stats)
    mu_hat = baseline_from_rates(norms, stats.rates)
    mu_hat = np.maximum(mu_hat, 0.0)
    return KernelSpec(
        dimension=stats.dimension,
        mark_cardinality=M,
        baseline=mu_hat,
        kernels=tuple(rows),
        mark_factors=tuple(tuple(None for _ in range(stats.dimension)) for _ in range(stats.dimension)),
        mark_pmfs=stats.pmfs,
    )


def fitted_norms(models: list, stats: SecondOrderStats, absolute: bool = False) -> NormMatrix:
    """Mark-weighted L1 norms of the fitted kernels by the solver's
    quadrature.  The integration reaches three decades below t_min, where the
    fit extends flat, so short-lag mass is approximated rather than dropped.
    Signed by default; absolute=True integrates |phi|."""
    D, M = stats.dimension, stats.mark_cardinality
    model0 = sorted(models, key=lambda m: m.row)[0]
    quad = build_quadrature(max(1500, model0.config.quadratures), model0.t_min * 1e-3, model0.T)
    vals = np.zeros((D, D))
    for model in models:
        i = model.row
        for m in range(1, M + 1):
            out = model.kernel_values(quad.nodes, np.full(quad.nodes.size, m))  # (Q, D)
            if absolute:
                out = np.abs(out)
            vals[i - 1, :] += (quad.weights @ out) * stats.pmfs[:, m - 1]
    return NormMatrix(vals)


@dataclass(frozen=True)
class GoodnessReport:
    rates_data: np.ndarray
    rates_sim: np.ndarray
    rate_mare: float
    g_rms: np.ndarray
    g_rms_total: float
    branching_ratio_fit: float
    baseline_fit: np.ndarray


def goodness_of_fit(models: list, stats: SecondOrderStats, n_events: int, seed: int) -> GoodnessReport:
    """Resimulate the tabulated fit, re-estimate the moments on the same
    grid, and report the rate and statistics discrepancies."""
    from hawkesnet.simulate import SimConfig, simulate

    spec_fit = tabulated_spec(models, stats)
    norms_abs = fitted_norms(models, stats, absolute=True)
    ratio = branching_ratio(norms_abs)
    if ratio >= 1.0:
        raise StationarityError(f"fitted |kernel| branching ratio {ratio:.4f} >= 1; refusing to resimulate")
    rates_fit = expected_rates(fitted_norms(models, stats), spec_fit.baseline)
    horizon = n_events / float(np.sum(rates_fit))
    stream = simulate(SimConfig(spec=spec_fit, horizon=horizon, seed=seed, max_events=int(2 * n_events + 10_000)))
    rates_sim, _ = estimate_first_order(stream)
    stats_sim = estimate_second_order(stream, stats.grid, stats.mark_cardinality)
    rate_mare = float(np.mean(np.abs(rates_sim - stats.rates) / stats.rates))
    g_rms = np.sqrt(np.mean((stats_sim.g - stats.g) ** 2, axis=2))
    return GoodnessReport(
        rates_data=stats.rates,
        rates_sim=rates_sim,
        rate_mare=rate_mare,
        g_rms=g_rms,
        g_rms_total=float(np.sqrt(np.mean((stats_sim.g - stats.g) ** 2))),
        branching_ratio_fit=ratio,
        baseline_fit=spec_fit.baseline,
    )


def refit_second_order(models: list, stats: SecondOrderStats, quad: QuadratureGrid | None = None) -> np.ndarray:
    """Analytic second-order curves implied by the fitted kernels (unmarked
    case): Gtilde^{ij}(t) = phi^{ij}(t) + sum_k int phi^{ik}(s) K^{kj}(t-s) ds
    evaluated on the statistics grid centers.  Useful as a smoothed
    replacement for the raw statistics."""
    if stats.mark_cardinality != 1:
        raise ArgumentError("the analytic refit is defined for the unmarked case (M = 1)")
    D = stats.dimension
    model0 = sorted(models, key=lambda m: m.row)[0]
    if quad is None:
        quad = build_quadrature(max(500, model0.config.quadratures), model0.t_min * 1e-3, model0.T)
    centers = stats.grid.centers
    out = np.empty((D, D, centers.size))
    phi_quad = np.stack([m.kernel_values(quad.nodes, np.ones(quad.nodes.size)) for m in sorted(models, key=lambda m: m.row)])
    # phi_quad[i, q, k] = phi^{ik}(s_q)
    lags = centers[:, None] - quad.nodes[None, :]
    for j in range(1, D + 1):
        for k in range(1, D + 1):
            pos = interpolate_g(stats, k, j, np.maximum(lags, 0.0), 1)
            pos[lags <= 0] = 0.0
            neg = interpolate_g(stats, j, k, np.maximum(-lags, 0.0), 1)
            neg[lags >= 0] = 0.0
            K = pos + (stats.rates[k - 1] / stats.rates[j - 1]) * neg  # (nb, Q)
            for i in range(1, D + 1):
                contrib = (K * quad.weights[None, :]) @ phi_quad[i - 1, :, k - 1]
                if k == 1:
                    out[i - 1, j - 1] = contrib
                else:
                    out[i - 1, j - 1] += contrib
    for i in range(1, D + 1):
        phi_centers = sorted(models, key=lambda m: m.row)[i - 1].kernel_values(centers, np.ones(centers.size))
        for j in range(1, D + 1):
            out[i - 1, j - 1] += phi_centers[:, j - 1]
    return out
