"""Gated deep-Galerkin-style network over (log-time, z-scored mark) inputs.

One network represents one row of the kernel matrix: input is a scaled
(t, m) pair, output a D-vector of kernel values.  Cells are LSTM-like
gated blocks with ReLU activations; the raw linear output is the kernel
value, so inhibition (negative values) is representable.

Because the training loss is a linear functional of network outputs at
known evaluation points, the only derivative ever needed is the
vector-Jacobian product of a (point, coefficient) sum — implemented here as
a hand-written reverse pass over the forward cache.  The ReLU subgradient
at 0 is fixed to 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from hawkesnet.errors import ArgumentError

FORMAT_VERSION = 1

_CELL_FIELDS = ("u_z", "w_z", "b_z", "u_g", "w_g", "b_g", "u_r", "w_r", "b_r", "u_h", "w_h", "b_h")


@dataclass
class DgmCell:
    u_z: np.ndarray
    w_z: np.ndarray
    b_z: np.ndarray
    u_g: np.ndarray
    w_g: np.ndarray
    b_g: np.ndarray
    u_r: np.ndarray
    w_r: np.ndarray
    b_r: np.ndarray
    u_h: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray


@dataclass
class DgmParams:
    """All trainable arrays.  width = hidden units, outputs = row length D."""

    w_in: np.ndarray
    b_in: np.ndarray
    cells: list
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def width(self) -> int:
        return self.w_in.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def outputs(self) -> int:
        return self.w_out.shape[0]

    def arrays(self):
        """(name, array) pairs in a fixed, documented order."""
        yield "w_in", self.w_in
        yield "b_in", self.b_in
        for l, c in enumerate(self.cells):
            for f in _CELL_FIELDS:
                yield f"cell{l}.{f}", getattr(c, f)
        yield "w_out", self.w_out
        yield "b_out", self.b_out

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.arrays()])

    def from_vector(self, vec: np.ndarray) -> "DgmParams":
        out = zeros_like(self)
        pos = 0
        for (_, src), (_, dst) in zip(self.arrays(), out.arrays()):
            dst[...] = vec[pos : pos + src.size].reshape(src.shape)
            pos += src.size
        if pos != vec.size:
            raise ArgumentError("parameter vector length mismatch")
        return out

    def copy(self) -> "DgmParams":
        return DgmParams(
            w_in=self.w_in.copy(),
            b_in=self.b_in.copy(),
            cells=[DgmCell(**{f: getattr(c, f).copy() for f in _CELL_FIELDS}) for c in self.cells],
            w_out=self.w_out.copy(),
            b_out=self.b_out.copy(),
        )

    # ---------------------------------------------------------------- JSON

    def to_json(self) -> str:
        payload = {
            "format_version": FORMAT_VERSION,
            "width": self.width,
            "cells": self.n_cells,
            "outputs": self.outputs,
            "arrays": {name: a.ravel().tolist() for name, a in self.arrays()},
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DgmParams":
        payload = json.loads(text)
        if payload.get("format_version") != FORMAT_VERSION:
            raise ArgumentError(f"unsupported model format {payload.get('format_version')!r}")
        W, L, D = payload["width"], payload["cells"], payload["outputs"]
        params = zeros(W, L, D)
        for name, arr in params.arrays():
            flat = np.asarray(payload["arrays"][name], dtype=np.float64)
            arr[...] = flat.reshape(arr.shape)
        return params


def zeros(width: int, n_cells: int, outputs: int) -> DgmParams:
    W, D = width, outputs
    cells = []
    for _ in range(n_cells):
        cells.append(
            DgmCell(
                **{f: np.zeros((W, 2) if f.startswith("u_") else (W, W) if f.startswith("w_") else W) for f in _CELL_FIELDS}
            )
        )
    return DgmParams(
        w_in=np.zeros((W, 2)),
        b_in=np.zeros(W),
        cells=cells,
        w_out=np.zeros((D, W)),
        b_out=np.zeros(D),
    )


def zeros_like(params: DgmParams) -> DgmParams:
    return zeros(params.width, params.n_cells, params.outputs)


def glorot_init(width: int, n_cells: int, outputs: int, seed: int) -> DgmParams:
    """Matrices uniform on +-sqrt(6/(fan_in+fan_out)), biases zero.

    Deterministic: a fixed draw order (input layer, then per cell
    u_z, w_z, u_g, w_g, u_r, w_r, u_h, w_h, then the output layer) over a
    seeded generator.
    """
    if width < 1 or n_cells < 0 or outputs < 1:
        raise ArgumentError("need width >= 1, n_cells >= 0, outputs >= 1")
    gen = np.random.Generator(np.random.PCG64(seed))
    params = zeros(width, n_cells, outputs)

    def draw(a: np.ndarray):
        fan_out, fan_in = a.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        a[...] = gen.uniform(-bound, bound, size=a.shape)

    draw(params.w_in)
    for c in params.cells:
        for f in _CELL_FIELDS:
            if not f.startswith("b_"):
                draw(getattr(c, f))
    draw(params.w_out)
    return params


# --------------------------------------------------------------------------
# input scaling


@dataclass(frozen=True)
class InputScaler:
    """Standardized log10 time transform with a positive floor; z-score mark
    transform.  Both network inputs end up near zero mean / unit variance,
    which the plain-gradient training needs for decent conditioning."""

    t_floor: float
    mark_mean: float
    mark_std: float
    time_mean: float = 0.0
    time_std: float = 1.0

    def __post_init__(self):
        if self.t_floor <= 0:
            raise ArgumentError("t_floor must be positive")
        if self.mark_std <= 0 or self.time_std <= 0:
            raise ArgumentError("scaling std must be positive")

    @staticmethod
    def _uniform_log_moments(a: float, b: float):
        """Mean and raw second moment of ln(t) for t ~ U(a, b)."""
        if a <= 0:
            m1 = np.log(b) - 1.0
            m2 = np.log(b) ** 2 - 2 * np.log(b) + 2.0
        else:
            la, lb = np.log(a), np.log(b)
            m1 = (b * (lb - 1) - a * (la - 1)) / (b - a)
            m2 = (b * (lb * lb - 2 * lb + 2) - a * (la * la - 2 * la + 2)) / (b - a)
        return m1, m2

    @classmethod
    def for_training(
        cls, t_min: float, short_fraction: float, tau: float, T: float, mark_cardinality: int
    ) -> "InputScaler":
        """Scaler whose time moments are those of log10(t) under the sampling
        mixture (short_fraction on (0, tau), the rest on (tau, T)); mark
        moments are the uniform law's (std 1 when M = 1)."""
        m1a, m2a = cls._uniform_log_moments(0.0, tau)
        m1b, m2b = cls._uniform_log_moments(tau, T)
        s = short_fraction
        m1 = s * m1a + (1 - s) * m1b
        m2 = s * m2a + (1 - s) * m2b
        ln10 = np.log(10.0)
        mean = m1 / ln10
        std = float(np.sqrt(max(m2 - m1 * m1, 1e-12))) / ln10
        M = mark_cardinality
        mstd = np.sqrt((M * M - 1) / 12.0) if M > 1 else 1.0
        return cls(t_floor=t_min / 10.0, mark_mean=(M + 1) / 2.0, mark_std=mstd, time_mean=mean, time_std=std)

    @classmethod
    def for_domain(cls, t_min: float, mark_cardinality: int) -> "InputScaler":
        """Unstandardized-time variant (raw log10) used where no sampling
        distribution exists."""
        M = mark_cardinality
        std = np.sqrt((M * M - 1) / 12.0) if M > 1 else 1.0
        return cls(t_floor=t_min / 10.0, mark_mean=(M + 1) / 2.0, mark_std=std)

    def scale(self, t, m) -> np.ndarray:
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        m_arr = np.atleast_1d(np.asarray(m, dtype=np.float64))
        if np.any(t_arr <= 0):
            raise ArgumentError("time input must be positive (log scaling)")
        t_arr, m_arr = np.broadcast_arrays(t_arr, m_arr)
        X = np.empty((t_arr.size, 2))
        X[:, 0] = (np.log10(np.maximum(t_arr, self.t_floor)) - self.time_mean) / self.time_std
        X[:, 1] = (m_arr - self.mark_mean) / self.mark_std
        return X

    def to_dict(self) -> dict:
        return {
            "t_floor": self.t_floor,
            "mark_mean": self.mark_mean,
            "mark_std": self.mark_std,
            "time_mean": self.time_mean,
            "time_std": self.time_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InputScaler":
        return cls(
            t_floor=d["t_floor"],
            mark_mean=d["mark_mean"],
            mark_std=d["mark_std"],
            time_mean=d.get("time_mean", 0.0),
            time_std=d.get("time_std", 1.0),
        )


# --------------------------------------------------------------------------
# forward / reverse


def _relu(a):
    return np.maximum(a, 0.0)


def forward_scaled(params: DgmParams, X: np.ndarray, want_cache: bool = False):
    """Batched forward over pre-scaled inputs X of shape (P, 2)."""
    A1 = X @ params.w_in.T + params.b_in
    S = _relu(A1)
    cache = {"X": X, "A1": A1, "cells": []} if want_cache else None
    for c in params.cells:
        AZ = X @ c.u_z.T + S @ c.w_z.T + c.b_z
        Z = _relu(AZ)
        AG = X @ c.u_g.T + S @ c.w_g.T + c.b_g
        G = _relu(AG)
        AR = X @ c.u_r.T + S @ c.w_r.T + c.b_r
        Rg = _relu(AR)
        SR = S * Rg
        AH = X @ c.u_h.T + SR @ c.w_h.T + c.b_h
        H = _relu(AH)
        if want_cache:
            cache["cells"].append({"S": S, "AZ": AZ, "Z": Z, "AG": AG, "G": G, "AR": AR, "R": Rg, "SR": SR, "AH": AH, "H": H})
        S = (1.0 - G) * H + Z * S
    out = S @ params.w_out.T + params.b_out
    if want_cache:
        cache["S_final"] = S
        return out, cache
    return out


def vjp(params: DgmParams, cache: dict, cotangent: np.ndarray) -> DgmParams:
    """Gradient of sum(cotangent * output) with respect to every parameter."""
    X = cache["X"]
    grad = zeros_like(params)
    C = np.asarray(cotangent, dtype=np.float64)
    grad.w_out[...] = C.T @ cache["S_final"]
    grad.b_out[...] = C.sum(axis=0)
    dS = C @ params.w_out
    for c, gc, cc in zip(reversed(params.cells), reversed(grad.cells), reversed(cache["cells"])):
        S, Z, G, Rg, SR, H = cc["S"], cc["Z"], cc["G"], cc["R"], cc["SR"], cc["H"]
        dZ = dS * S
        dG = -dS * H
        dH = dS * (1.0 - G)
        dS_in = dS * Z

        dAH = dH * (cc["AH"] > 0)
        gc.u_h[...] = dAH.T @ X
        gc.w_h[...] = dAH.T @ SR
        gc.b_h[...] = dAH.sum(axis=0)
        dSR = dAH @ c.w_h
        dS_in += dSR * Rg
        dR = dSR * S

        dAR = dR * (cc["AR"] > 0)
        gc.u_r[...] = dAR.T @ X
        gc.w_r[...] = dAR.T @ S
        gc.b_r[...] = dAR.sum(axis=0)
        dS_in += dAR @ c.w_r

        dAG = dG * (cc["AG"] > 0)
        gc.u_g[...] = dAG.T @ X
        gc.w_g[...] = dAG.T @ S
        gc.b_g[...] = dAG.sum(axis=0)
        dS_in += dAG @ c.w_g

        dAZ = dZ * (cc["AZ"] > 0)
        gc.u_z[...] = dAZ.T @ X
        gc.w_z[...] = dAZ.T @ S
        gc.b_z[...] = dAZ.sum(axis=0)
        dS_in += dAZ @ c.w_z

        dS = dS_in
    dA1 = dS * (cache["A1"] > 0)
    grad.w_in[...] = dA1.T @ X
    grad.b_in[...] = dA1.sum(axis=0)
    return grad


def forward(params: DgmParams, scaler: InputScaler, t, m):
    """Kernel-row values at (t, m); scalar t gives a length-D vector."""
    X = scaler.scale(t, m)
    out = forward_scaled(params, X)
    return out[0] if np.isscalar(t) or np.asarray(t).shape == () else out


def gradient(params: DgmParams, scaler: InputScaler, weighted_points) -> DgmParams:
    """Gradient of sum_points coeff . forward(t, m) over all parameters."""
    pts = list(weighted_points)
    if not pts:
        return zeros_like(params)
    ts = np.array([p[0] for p in pts], dtype=np.float64)
    ms = np.array([p[1] for p in pts], dtype=np.float64)
    C = np.array([np.asarray(p[2], dtype=np.float64) for p in pts])
    if not np.all(np.isfinite(C)):
        raise ArgumentError("coefficients must be finite")
    X = scaler.scale(ts, ms)
    _, cache = forward_scaled(params, X, want_cache=True)
    return vjp(params, cache, C)


def add_scaled(target: DgmParams, delta: DgmParams, factor: float) -> None:
    """target += factor * delta, in place (the SGD update)."""
    for (_, a), (_, d) in zip(target.arrays(), delta.arrays()):
        a += factor * d
