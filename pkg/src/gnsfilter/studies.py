"""Composite experiments: the alpha sweep (MSE table) and the convergence study."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .filters import FilterConfig, FilterKind
from .harness import (
    TIME_INVARIANT,
    ExperimentConfig,
    RunResult,
    default_step_grid,
    detect_steady_state,
    match_steady_state,
    pilot_seed,
    run_online_prediction,
    tune_step_size,
)
from .noise import AlphaStableParams

log = logging.getLogger(__name__)

SWEEP_ALPHAS = (1.05, 1.1, 1.15, 1.2, 1.25)
DEFAULT_CRITERIA = ((20, 0.05), (40, 0.02))


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    label: str
    step_size: float
    steady_mse: float
    steady_mse_se: float
    iters_to_steady: int | None


@dataclass
class SweepResult:
    rows: list
    results: dict
    metadata: dict = field(default_factory=dict)

    def row(self, alpha: float, label: str) -> SweepRow:
        for r in self.rows:
            if r.alpha == alpha and r.label == label:
                return r
        raise KeyError((alpha, label))

    def labels(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.label not in seen:
                seen.append(r.label)
        return seen

    def alphas(self) -> list[float]:
        return sorted({r.alpha for r in self.rows})


def tune_config(config: ExperimentConfig, auto: set, grid, pilot_runs: int) -> tuple[ExperimentConfig, dict]:
    """Tune the algorithms whose labels are in ``auto``; leave the rest as given."""
    algos = []
    chosen = {}
    for cfg in config.algorithms:
        if cfg.label in auto:
            mu = tune_step_size(config, cfg, grid, pilot_runs)
            log.info("tuned %s at %s: mu = %g", cfg.label, _noise_tag(config), mu)
            cfg = cfg.with_step(mu)
        chosen[cfg.label] = cfg.step_size
        algos.append(cfg)
    return config.replace(algorithms=tuple(algos)), chosen


def _noise_tag(config: ExperimentConfig) -> str:
    return "noiseless" if config.noise is None else f"alpha={config.noise.alpha:g}"


def alpha_sweep(
    config: ExperimentConfig,
    alphas=SWEEP_ALPHAS,
    auto: set | None = None,
    grid=None,
    pilot_runs: int = 50,
    window: int = 20,
    rel_tol: float = 0.05,
) -> SweepResult:
    """Steady-state MSE of every algorithm for each alpha, with per-alpha step tuning.

    ``auto`` names the algorithms to tune (default: all of them); the dispersion
    stays at ``config.noise.gamma``.
    """
    if config.noise is None:
        raise ValueError("alpha sweep needs a noise model")
    grid = default_step_grid() if grid is None else np.asarray(grid, dtype=float)
    auto = {c.label for c in config.algorithms} if auto is None else set(auto)
    rows, results, tuned = [], {}, {}
    for alpha in alphas:
        cfg = config.replace(noise=AlphaStableParams(float(alpha), config.noise.gamma))
        cfg, chosen = tune_config(cfg, auto, grid, pilot_runs)
        res = run_online_prediction(cfg)
        res.metadata["tuned_step_sizes"] = chosen
        results[float(alpha)] = res
        tuned[str(float(alpha))] = chosen
        for label, algo in res.per_algorithm.items():
            mean, se = res.steady_mse(label)
            entry = detect_steady_state(algo.spatial_mse, min(window, res.n_steps), rel_tol)
            rows.append(SweepRow(float(alpha), label, chosen[label], mean, se, entry.iterations_to_steady))
    first = next(iter(results.values()))
    meta = dict(first.metadata)
    meta.pop("tuned_step_sizes", None)
    meta["noise"] = {"alphas": [float(a) for a in alphas], "gamma": config.noise.gamma,
                     "gamma_convention": "dispersion"}
    meta["tuned_step_sizes"] = tuned
    meta["tuning"] = {"grid": [float(g) for g in grid], "pilot_runs": pilot_runs,
                      "pilot_seed": pilot_seed(config.seed)}
    meta["steady_state"] = {"window": window, "rel_tol": rel_tol}
    meta["steady_mse_se"] = {f"{r.alpha}:{r.label}": r.steady_mse_se for r in rows}
    return SweepResult(rows=rows, results=results, metadata=meta)


@dataclass
class ConvergenceResult:
    result: RunResult
    reports: dict
    step_sizes: dict
    target_mae: float | None
    metadata: dict = field(default_factory=dict)

    def ratio(self, label: str, reference: str, criterion) -> float:
        a = self.reports[criterion][label].iterations_to_steady
        b = self.reports[criterion][reference].iterations_to_steady
        if a is None or b is None or b == 0:
            return float("nan")
        return a / b


def steady_state_reports(result: RunResult, criteria=DEFAULT_CRITERIA) -> dict:
    """Steady-state entries on the run-averaged spectral MAE, per criterion and algorithm."""
    out = {}
    for window, tol in criteria:
        out[(window, tol)] = {
            label: detect_steady_state(algo.spectral_mae, window, tol)
            for label, algo in result.per_algorithm.items()
        }
    return out


def convergence_study(
    config: ExperimentConfig,
    reference: str = "G-Sign",
    matched: tuple = ("GNS",),
    auto: set | None = None,
    grid=None,
    pilot_runs: int = 50,
    match_runs: int = 100,
    criteria=DEFAULT_CRITERIA,
) -> ConvergenceResult:
    """Time-invariant convergence comparison at matched steady-state error.

    Step sizes in ``auto`` (default: all algorithms not in ``matched``) are tuned
    for minimum steady-state MSE. Each algorithm in ``matched`` then gets the
    step size at which its steady spectral MAE equals the reference's, so the
    iteration counts compare convergence speed at equal final accuracy.
    """
    config = config.replace(mode=TIME_INVARIANT)
    grid = default_step_grid() if grid is None else np.asarray(grid, dtype=float)
    labels = [c.label for c in config.algorithms]
    if reference not in labels:
        raise ValueError(f"reference {reference!r} not among algorithms {labels}")
    if auto is None:
        auto = {l for l in labels if l not in matched}
    config, chosen = tune_config(config, set(auto) - set(matched), grid, pilot_runs)

    target = None
    if matched:
        ref_cfg = next(c for c in config.algorithms if c.label == reference)
        ref_pilot = run_online_prediction(
            config.replace(algorithms=(ref_cfg,), n_runs=match_runs, seed=pilot_seed(config.seed))
        )
        target, _ = ref_pilot.steady_mae(reference)
        algos = []
        for cfg in config.algorithms:
            if cfg.label in matched:
                mu = match_steady_state(config, cfg, target, pilot_runs=match_runs)
                log.info("matched %s to %s steady MAE %.4g: mu = %g", cfg.label, reference, target, mu)
                cfg = cfg.with_step(mu)
                chosen[cfg.label] = mu
            algos.append(cfg)
        config = config.replace(algorithms=tuple(algos))

    result = run_online_prediction(config)
    reports = steady_state_reports(result, criteria)
    meta = dict(result.metadata)
    meta["tuned_step_sizes"] = chosen
    meta["matched"] = {"reference": reference, "algorithms": list(matched), "target_steady_mae": target}
    meta["tuning"] = {"grid": [float(g) for g in grid], "pilot_runs": pilot_runs, "match_runs": match_runs,
                      "pilot_seed": pilot_seed(config.seed)}
    meta["steady_state"] = [
        {"window": w, "rel_tol": t,
         "iterations": {l: e.iterations_to_steady for l, e in reports[(w, t)].items()}}
        for (w, t) in criteria
    ]
    return ConvergenceResult(result, reports, chosen, target, meta)


def default_algorithms(kinds=("GLMS", "GSIGN", "GNS"), step: float = 0.1) -> tuple:
    return tuple(FilterConfig(FilterKind(k), step) for k in kinds)
