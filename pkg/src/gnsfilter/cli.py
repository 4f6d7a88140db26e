"""Command line entry point: ``gnsfilter {run,tune,table1,convergence,gen-data}``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import config as cfgmod
from .data import DatasetParseError, dataset_csv_text, generate_synthetic_dataset, random_coordinates
from .filters import FilterConfigError
from .graph import ContractError, GraphSizeError
from .harness import (
    TIME_INVARIANT,
    ExperimentDivergedError,
    TuningError,
    detect_steady_state,
    prepare_experiment,
    run_online_prediction,
    pick_step,
    step_size_scores,
)
from .noise import AlphaStableParams, MomentUndefinedError
from .results import (
    METRICS_HEADER,
    STEADY_HEADER,
    SUMMARY_HEADER,
    csv_text,
    json_text,
    metrics_rows,
    software_version,
    steady_rows,
    summary_rows,
    table1_rows,
    write_artifacts,
)
from .sampling import IdentifiabilityError
from .studies import alpha_sweep, convergence_study, tune_config

log = logging.getLogger("gnsfilter")

EXPECTED_ERRORS = (
    cfgmod.ConfigError,
    ContractError,
    DatasetParseError,
    ExperimentDivergedError,
    FilterConfigError,
    GraphSizeError,
    IdentifiabilityError,
    MomentUndefinedError,
    TuningError,
    OSError,
)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config, or a metadata.json from an earlier run")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--alpha", type=float, help="noise characteristic exponent")
    common.add_argument("--gamma", type=float, help="noise dispersion (see noise.gamma_convention)")
    common.add_argument("--runs", type=int, help="Monte Carlo runs")
    common.add_argument("--full", action="store_true", help="use 1000 Monte Carlo runs")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--band-size", type=int, help="number of frequencies |F|")
    common.add_argument("--observed", type=int, help="number of observed nodes (random mask)")
    common.add_argument("--no-noise", action="store_true", help="disable observation noise")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gnsfilter", description="Graph sign-algorithm benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one experiment (tunes steps marked auto)")
    sub.add_parser("tune", parents=[common], help="grid-search step sizes and write the scores")
    sub.add_parser("table1", parents=[common], help="steady-state MSE across the alpha sweep")
    sub.add_parser("convergence", parents=[common], help="time-invariant convergence at matched error")
    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset CSV")
    g.add_argument("--nodes", type=int, help="number of stations")
    g.add_argument("--steps", type=int, help="number of time steps")
    return p


def _overrides(args) -> dict:
    ov = {
        "noise.alpha": args.alpha,
        "noise.gamma": args.gamma,
        "n_runs": 1000 if args.full else args.runs,
        "seed": args.seed,
        "band_size": args.band_size,
    }
    if args.observed is not None:
        ov["mask.count"] = args.observed
        ov["mask.nodes"] = None
    if args.no_noise:
        ov["noise.enabled"] = False
    if getattr(args, "nodes", None) is not None:
        ov["dataset.n_nodes"] = args.nodes
    if getattr(args, "steps", None) is not None:
        ov["dataset.n_steps"] = args.steps
    return ov


def _load(args) -> cfgmod.LoadedConfig:
    raw = cfgmod.read_config_file(args.config) if args.config else {}
    resolved = cfgmod.resolve(raw, {})
    for key, value in _overrides(args).items():
        # explicit None clears a value (mask.nodes); other Nones mean "not given"
        if value is None and key != "mask.nodes":
            continue
        node = resolved
        *head, last = key.split(".")
        for k in head:
            node = node[k]
        node[last] = value
    return cfgmod.build(resolved)


def _alpha(exp) -> float | None:
    return None if exp.noise is None else exp.noise.alpha


def _meta(loaded, result_meta: dict, command: str, steps: dict | None = None) -> dict:
    meta = dict(result_meta)
    meta["command"] = command
    meta["software_version"] = software_version()
    meta["config"] = cfgmod.with_steps(loaded.raw, steps or {})
    return meta


def cmd_run(args) -> dict:
    loaded = _load(args)
    exp = loaded.experiment
    exp, chosen = tune_config(exp, loaded.auto, loaded.grid, int(loaded.tuning["pilot_runs"]))
    result = run_online_prediction(exp)
    ss = loaded.steady_state
    criteria = ((int(ss["window"]), float(ss["rel_tol"])),)
    meta = _meta(loaded, result.metadata, "run", chosen)
    meta["tuned_step_sizes"] = {k: v for k, v in chosen.items() if k in loaded.auto}
    meta["floor_events"] = {k: a.floor_events for k, a in result.per_algorithm.items()}
    meta["steady_mse"] = {k: dict(zip(("mean", "stderr"), result.steady_mse(k))) for k in result.per_algorithm}
    return {
        "metrics.csv": csv_text(METRICS_HEADER, metrics_rows(result)),
        "summary.csv": csv_text(SUMMARY_HEADER, summary_rows(result, _alpha(exp), *criteria[0])),
        "steady_state.csv": csv_text(STEADY_HEADER, steady_rows(_spatial_reports(result, criteria))),
        "metadata.json": json_text(meta),
    }


def _spatial_reports(result, criteria) -> dict:
    return {
        (w, t): {
            label: detect_steady_state(a.spatial_mse, min(w, result.n_steps), t)
            for label, a in result.per_algorithm.items()
        }
        for (w, t) in criteria
    }


def cmd_tune(args) -> dict:
    loaded = _load(args)
    exp = loaded.experiment
    grid = loaded.grid
    pilot = int(loaded.tuning["pilot_runs"])
    rows, chosen = [], {}
    for algo in exp.algorithms:
        scores = step_size_scores(exp, algo, grid, pilot)
        chosen[algo.label] = pick_step(grid, scores) if grid.size > 1 else float(grid[0])
        rows += [(algo.label, mu, s) for mu, s in zip(grid, scores)]
    base = prepare_experiment(exp)
    meta = {
        "command": "tune",
        "software_version": software_version(),
        "seed": exp.seed,
        "noise": None if exp.noise is None else {"alpha": exp.noise.alpha, "gamma": exp.noise.gamma},
        "tuned_step_sizes": chosen,
        "tuning": {"grid": grid, "pilot_runs": pilot},
        "band": list(base.projector.band.indices),
        "observed_nodes": base.mask.nodes(),
        "config": cfgmod.with_steps(loaded.raw, chosen),
    }
    return {
        "tuning.csv": csv_text(["algorithm", "step_size", "steady_mse"], rows),
        "metadata.json": json_text(meta),
    }


def cmd_table1(args) -> dict:
    loaded = _load(args)
    exp = loaded.experiment
    if exp.noise is None:
        raise cfgmod.ConfigError("table1 needs noise enabled")
    alphas = [float(a) for a in loaded.sweep["alphas"]]
    ss = loaded.steady_state
    sweep = alpha_sweep(exp, alphas, loaded.auto, loaded.grid, int(loaded.tuning["pilot_runs"]),
                        int(ss["window"]), float(ss["rel_tol"]))
    header, wide = table1_rows(sweep)
    files = {
        "summary.csv": csv_text(
            SUMMARY_HEADER, ((r.alpha, r.label, r.steady_mse, r.iters_to_steady) for r in sweep.rows)
        ),
        "table1.csv": csv_text(header, wide),
    }
    for alpha, res in sweep.results.items():
        files[f"metrics_alpha{alpha:g}.csv"] = csv_text(METRICS_HEADER, metrics_rows(res))
    meta = _meta(loaded, sweep.metadata, "table1")
    files["metadata.json"] = json_text(meta)
    return files


def cmd_convergence(args) -> dict:
    loaded = _load(args)
    conv = loaded.convergence
    exp = loaded.experiment
    if exp.noise is not None and args.alpha is None:
        exp = exp.replace(noise=AlphaStableParams(float(conv["alpha"]), exp.noise.gamma))
        loaded.raw["noise"]["alpha"] = float(conv["alpha"])
    exp = exp.replace(mode=TIME_INVARIANT, steady_window=int(conv["steady_window"]))
    loaded.raw["mode"] = TIME_INVARIANT
    criteria = tuple((int(w), float(t)) for w, t in conv["criteria"])
    matched = tuple(l for l in conv["matched"] if l in loaded.auto)
    study = convergence_study(
        exp, reference=conv["reference"], matched=matched, auto=loaded.auto - set(matched),
        grid=loaded.grid, pilot_runs=int(loaded.tuning["pilot_runs"]),
        match_runs=int(conv["match_runs"]), criteria=criteria,
    )
    result = study.result
    first = study.reports[criteria[0]]
    summary = (
        (exp.noise.alpha if exp.noise else None, label, result.steady_mse(label)[0], first[label].iterations_to_steady)
        for label in result.per_algorithm
    )
    meta = _meta(loaded, study.metadata, "convergence", study.step_sizes)
    meta["config"]["steady_window"] = int(conv["steady_window"])
    meta["steady_mae"] = {k: dict(zip(("mean", "stderr"), result.steady_mae(k))) for k in result.per_algorithm}
    return {
        "metrics.csv": csv_text(METRICS_HEADER, metrics_rows(result)),
        "summary.csv": csv_text(SUMMARY_HEADER, summary),
        "steady_state.csv": csv_text(STEADY_HEADER, steady_rows(study.reports)),
        "metadata.json": json_text(meta),
    }


def cmd_gen_data(args) -> dict:
    """Synthetic dataset exactly as ``run`` would generate it for this config."""
    loaded = _load(args)
    ds = loaded.raw["dataset"]
    if ds["source"] != "synthetic":
        raise cfgmod.ConfigError("gen-data needs dataset.source = synthetic")
    exp = loaded.experiment
    if ds["truth_band"] == "experiment":
        bundle = prepare_experiment(exp).dataset
    else:
        bundle = generate_synthetic_dataset(
            k=exp.k, band_size=exp.band_size, n_steps=int(ds["n_steps"]), seed=int(ds["seed"]) + 1,
            coords=random_coordinates(int(ds["n_nodes"]), int(ds["seed"])),
            amplitude=float(ds["amplitude"]), drift=float(ds["drift"]),
            offset=float(ds["offset"]), metric=exp.metric,
        )
    meta = {
        "command": "gen-data",
        "software_version": software_version(),
        "n_nodes": bundle.n_nodes,
        "n_steps": bundle.n_steps,
        "band": list(bundle.band.indices),
        "config": loaded.raw,
    }
    return {"dataset.csv": dataset_csv_text(bundle), "metadata.json": json_text(meta)}


COMMANDS = {
    "run": cmd_run,
    "tune": cmd_tune,
    "table1": cmd_table1,
    "convergence": cmd_convergence,
    "gen-data": cmd_gen_data,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        with np.errstate(over="ignore"):
            files = COMMANDS[args.command](args)
        written = write_artifacts(args.out, files)
    except EXPECTED_ERRORS as exc:
        print(f"gnsfilter {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"gnsfilter {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
