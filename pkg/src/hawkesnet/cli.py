"""Command-line pipelines: simulate -> stats -> fit -> eval/metrics.

Every subcommand reads and writes only documented file formats, embeds the
config hash and seed in each output (comment lines in CSV, fields in JSON)
and is deterministic given its inputs, so reruns are byte-identical.
Argument errors exit 1, numerical failures exit 2, both with a
machine-readable JSON error on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from hawkesnet import dgm
from hawkesnet.algebra import NormMatrix
from hawkesnet.errors import (
    ArgumentError,
    DegenerateKernelError,
    DivergenceError,
    EstimationError,
    HawkesError,
    NumericalError,
    StationarityError,
    TruncationError,
)
from hawkesnet.events import EventStream
from hawkesnet.ingest import VolumeBinning, build_event_stream, read_trades_csv, window_filter
from hawkesnet.kernels import KernelSpec
from hawkesnet.metrics import causality_report, convergence_study, error_report, model_evaluator, wh_evaluator
from hawkesnet.moments import SecondOrderStats, StatGrid, build_grid, estimate_second_order, linear_grid
from hawkesnet.solver import RowModel, TrainConfig, fit, fitted_norms, goodness_of_fit, tabulate, default_tabulation_nodes
from hawkesnet.wienerhopf import wh_reconstruct, wh_solve

_NUMERICAL = (NumericalError, StationarityError, DivergenceError, TruncationError, DegenerateKernelError, EstimationError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _provenance(args: dict, seed) -> list:
    return [f"config_hash={_config_hash(args)}", f"seed={seed}"]


def _write_json(path, payload: dict, args: dict, seed) -> None:
    payload = dict(payload)
    payload["config_hash"] = _config_hash(args)
    payload["seed"] = seed
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _load_stats(csv_path, json_path) -> SecondOrderStats:
    return SecondOrderStats.load(csv_path, json_path)


def _grid_from_args(a) -> StatGrid:
    if a.grid_linear is not None:
        return linear_grid(a.grid_linear, a.grid_T)
    return build_grid(a.grid_h, a.grid_nlin, a.grid_nlog, a.grid_T)


def _train_config(path, seed_override=None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = TrainConfig.from_dict(json.load(fh))
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    return cfg


def _load_models(models_dir) -> list:
    paths = sorted(Path(models_dir).glob("row_*.json"))
    if not paths:
        raise ArgumentError(f"no row_*.json models under {models_dir}")
    return [RowModel.load(p) for p in paths]


# --------------------------------------------------------------------------
# subcommands


def _cmd_simulate(a) -> int:
    from hawkesnet.simulate import SimConfig, simulate

    spec = KernelSpec.load(a.spec)
    stream = simulate(SimConfig(spec=spec, horizon=a.horizon, seed=a.seed, max_events=a.max_events))
    stream.to_csv(a.out, header_comments=_provenance(vars(a), a.seed) + [f"horizon={a.horizon!r}", f"dimension={spec.dimension}", f"marks={spec.mark_cardinality}"])
    return 0


def _cmd_stats(a) -> int:
    stream = EventStream.from_csv(a.stream, horizon=a.horizon, dimension=a.dimension, mark_cardinality=a.marks)
    grid = _grid_from_args(a)
    stats = estimate_second_order(stream, grid, a.marks)
    stats.save(a.out_csv, a.out_json, header_comments=_provenance(vars(a), 0))
    return 0


def _cmd_fit_neural(a) -> int:
    stats = _load_stats(a.stats_csv, a.stats_json)
    config = _train_config(a.config, a.seed)
    models = fit(stats, config, n_jobs=a.jobs)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for m in models:
        m.save(out / f"row_{m.row}.json")
    prov = _provenance(vars(a), config.seed)
    with open(out / "loss_history.csv", "w", encoding="utf-8") as fh:
        for line in prov:
            fh.write(f"# {line}\n")
        fh.write("epoch,row,validation_loss\n")
        for m in models:
            for e, v in enumerate(m.loss_history, start=1):
                fh.write(f"{e},{m.row},{float(v)!r}\n")
    nodes = default_tabulation_nodes(models[0].t_min, models[0].T, a.tabulation_nodes)
    rows = tabulate(models, nodes, stats.mark_cardinality)
    with open(out / "tabulated.csv", "w", encoding="utf-8") as fh:
        for line in prov:
            fh.write(f"# {line}\n")
        fh.write("i,j,t,m,value\n")
        for i, row in enumerate(rows, start=1):
            for j, tab in enumerate(row, start=1):
                for m in range(1, stats.mark_cardinality + 1):
                    vals = tab.values[m - 1 if tab.values.shape[0] > 1 else 0]
                    for t, v in zip(nodes, vals):
                        fh.write(f"{i},{j},{float(t)!r},{m},{float(v)!r}\n")
    return 0


def _cmd_fit_wh(a) -> int:
    stats = _load_stats(a.stats_csv, a.stats_json)
    sol = wh_solve(stats, a.quadratures)
    prov = _provenance(vars(a), 0)
    with open(a.out, "w", encoding="utf-8") as fh:
        for line in prov:
            fh.write(f"# {line}\n")
        fh.write("i,j,t,m,value\n")
        D, M = sol.dimension, sol.phi.shape[3]
        for i in range(1, D + 1):
            for j in range(1, D + 1):
                for m in range(1, M + 1):
                    for t, v in zip(sol.nodes, sol.phi[i - 1, j - 1, :, m - 1]):
                        fh.write(f"{i},{j},{float(t)!r},{m},{float(v)!r}\n")
    if a.reconstruct_out:
        ts = np.linspace(0.0, stats.grid.T, a.reconstruct_points)
        with open(a.reconstruct_out, "w", encoding="utf-8") as fh:
            for line in prov:
                fh.write(f"# {line}\n")
            fh.write("i,j,t,m,value\n")
            D, M = sol.dimension, sol.phi.shape[3]
            for i in range(1, D + 1):
                for j in range(1, D + 1):
                    for m in range(1, M + 1):
                        vals = wh_reconstruct(sol, i, j, ts, m)
                        for t, v in zip(ts, vals):
                            fh.write(f"{i},{j},{float(t)!r},{m},{float(v)!r}\n")
    return 0


def _cmd_eval(a) -> int:
    spec = KernelSpec.load(a.true_spec)
    if a.models_dir:
        models = _load_models(a.models_dir)
        ev = model_evaluator(models)
        t0 = models[0].t_min
    else:
        stats = _load_stats(a.stats_csv, a.stats_json)
        ev = wh_evaluator(wh_solve(stats, a.quadratures))
        t0 = stats.grid.t_min
    rep = error_report(ev, spec, a.grid_size, a.T, spec.mark_cardinality, t_floor=t0)
    _write_json(
        a.out,
        {
            "delta_2": rep.delta_2,
            "delta_inf": rep.delta_inf,
            "delta_2_norm": rep.delta_2_norm,
            "delta_inf_norm": rep.delta_inf_norm,
            "sup_true": rep.sup_true,
            "per_entry_rms": rep.per_entry.tolist(),
        },
        vars(a),
        0,
    )
    return 0


def _cmd_metrics(a) -> int:
    stats = _load_stats(a.stats_csv, a.stats_json)
    models = _load_models(a.models_dir)
    norms = fitted_norms(models, stats)
    volumes = np.asarray([float(x) for x in a.volumes.split(",")]) if a.volumes else None
    rep = causality_report(norms, stats.rates, volumes)
    payload = rep.to_dict()
    if a.goodness_events:
        gof = goodness_of_fit(models, stats, a.goodness_events, a.seed)
        payload["goodness_of_fit"] = {
            "rate_mare": gof.rate_mare,
            "rates_sim": gof.rates_sim.tolist(),
            "rates_data": gof.rates_data.tolist(),
            "g_rms_total": gof.g_rms_total,
        }
    _write_json(a.out, payload, vars(a), a.seed)
    return 0


def _cmd_ingest(a) -> int:
    records = read_trades_csv(a.trades)
    pairs = a.pairs.split(",") if a.pairs else None
    binning = None
    if a.edges_json:
        with open(a.edges_json, "r", encoding="utf-8") as fh:
            binning = VolumeBinning(tuple(json.load(fh)))
    stream = build_event_stream(records, pairs=pairs, binning=binning)
    if a.window:
        lo, hi = a.window.split("-")

        def clock_s(hhmm: str) -> float:
            hh, mm = hhmm.split(":")
            return int(hh) * 3600.0 + int(mm) * 60.0

        stream = window_filter(stream, clock_s(lo), clock_s(hi))
    comments = _provenance(vars(a), 0) + [
        f"horizon={float(stream.horizon)!r}",
        f"dimension={stream.dimension}",
        f"marks={stream.mark_cardinality}",
    ]
    if stream.segments is not None:
        comments.append("segments=" + ",".join(repr(float(s)) for s in stream.segments))
    stream.to_csv(a.out, header_comments=comments)
    return 0


def _cmd_sweep(a) -> int:
    stats = _load_stats(a.stats_csv, a.stats_json)
    base = _train_config(a.config, a.seed)
    values = [json.loads(v) for v in a.values.split(",")]
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = KernelSpec.load(a.true_spec) if a.true_spec else None
    summary = []
    for v in values:
        cfg = replace(base, **{a.param: v})
        models = fit(stats, cfg, n_jobs=a.jobs)
        tag = f"{a.param}_{v}"
        for m in models:
            m.save(out / f"{tag}_row_{m.row}.json")
        entry = {a.param: v, "final_validation_loss": float(np.mean([m.loss_history[-1] for m in models]))}
        if spec is not None:
            rep = error_report(model_evaluator(models), spec, a.grid_size, stats.grid.T, stats.mark_cardinality)
            entry.update({"delta_2_norm": rep.delta_2_norm, "delta_inf_norm": rep.delta_inf_norm})
        summary.append(entry)
        with open(out / f"{tag}_loss.csv", "w", encoding="utf-8") as fh:
            for line in _provenance(vars(a), cfg.seed):
                fh.write(f"# {line}\n")
            fh.write("epoch,row,validation_loss\n")
            for m in models:
                for e, lv in enumerate(m.loss_history, start=1):
                    fh.write(f"{e},{m.row},{float(lv)!r}\n")
    _write_json(out / "sweep_summary.json", {"parameter": a.param, "results": summary}, vars(a), a.seed)
    return 0


def _cmd_convergence(a) -> int:
    spec = KernelSpec.load(a.spec)
    grid = _grid_from_args(a)
    config = _train_config(a.config, a.seed)
    ns = [int(float(x)) for x in a.n_list.split(",")]
    seeds = [int(x) for x in a.seeds.split(",")]
    study = convergence_study(spec, ns, grid, config, seeds, K=a.grid_size, n_jobs=a.jobs)
    _write_json(
        a.out,
        {
            "slope_2": study.slope_2,
            "slope_inf": study.slope_inf,
            "points": [
                {"n_events": p.n_events, "seed": p.seed, "delta_2_norm": p.delta_2_norm, "delta_inf_norm": p.delta_inf_norm}
                for p in study.points
            ],
        },
        vars(a),
        a.seed,
    )
    return 0


# --------------------------------------------------------------------------
# parser


def _add_grid_args(p):
    p.add_argument("--grid-h", type=float, help="linear/log switch point (s)")
    p.add_argument("--grid-nlin", type=int, help="points in the linear part")
    p.add_argument("--grid-nlog", type=int, help="points in the log part")
    p.add_argument("--grid-linear", type=int, help="use a uniform grid of this many points instead")
    p.add_argument("--grid-T", type=float, required=True, help="lag horizon (s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hawkesnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a kernel spec to an event CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-events", type=int, default=20_000_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("stats", help="estimate first/second-order statistics")
    p.add_argument("--stream", required=True)
    p.add_argument("--horizon", type=float)
    p.add_argument("--dimension", type=int)
    p.add_argument("--marks", type=int)
    _add_grid_args(p)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("fit-neural", help="train the row networks")
    p.add_argument("--stats-csv", required=True)
    p.add_argument("--stats-json", required=True)
    p.add_argument("--config", required=True, help="training-config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--tabulation-nodes", type=int, default=1000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_fit_neural)

    p = sub.add_parser("fit-wh", help="direct dense solve of the moment equation")
    p.add_argument("--stats-csv", required=True)
    p.add_argument("--stats-json", required=True)
    p.add_argument("--quadratures", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--reconstruct-out")
    p.add_argument("--reconstruct-points", type=int, default=400)
    p.set_defaults(func=_cmd_fit_wh)

    p = sub.add_parser("eval", help="error metrics against a known spec")
    p.add_argument("--true-spec", required=True)
    p.add_argument("--models-dir")
    p.add_argument("--stats-csv")
    p.add_argument("--stats-json")
    p.add_argument("--quadratures", type=int, default=200)
    p.add_argument("--grid-size", type=int, default=200)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("metrics", help="causality ratios from a fitted model")
    p.add_argument("--models-dir", required=True)
    p.add_argument("--stats-csv", required=True)
    p.add_argument("--stats-json", required=True)
    p.add_argument("--volumes", help="comma-separated traded volumes per component")
    p.add_argument("--goodness-events", type=int, default=0, help="resimulate this many events for goodness-of-fit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("ingest", help="trades CSV -> event stream CSV")
    p.add_argument("--trades", required=True)
    p.add_argument("--pairs", help="comma-separated pair selection (sorted order = component index)")
    p.add_argument("--edges-json", help="JSON array of volume bin edges (USD)")
    p.add_argument("--window", help="daily clock window HH:MM-HH:MM (UTC)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("sweep", help="refit over a list of hyperparameter values")
    p.add_argument("--stats-csv", required=True)
    p.add_argument("--stats-json", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=sorted(TrainConfig.__dataclass_fields__))
    p.add_argument("--values", required=True, help="comma-separated JSON values")
    p.add_argument("--true-spec")
    p.add_argument("--grid-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("convergence", help="error decay versus sample size")
    p.add_argument("--spec", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--n-list", required=True)
    p.add_argument("--seeds", required=True)
    _add_grid_args(p)
    p.add_argument("--grid-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convergence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ArgumentError as exc:
        json.dump({"error": "argument", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except _NUMERICAL as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except OSError as exc:
        json.dump({"error": "io", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
