"""Monte Carlo experiments: online prediction, error metrics, steady state, tuning."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetBundle, generate_synthetic_dataset
from .filters import (
    FilterConfig,
    FilterKind,
    gns_spectral_sign_step,
    gns_step,
    gsign_step,
    init_state,
    step,
)
from .graph import ContractError, GraphTopology, LaplacianSpectrum, build_knn_graph, eigendecompose, laplacian
from .noise import AlphaStableParams, estimate_abs_moment_empirical, flom_abs_moment, standard_sas
from .sampling import (
    BandlimitProjector,
    FrequencySet,
    IdentifiabilityError,
    SamplingMask,
    build_projector,
    check_sampling_condition,
    greedy_select_frequencies,
)

log = logging.getLogger(__name__)

TIME_VARYING = "time_varying"
TIME_INVARIANT = "time_invariant"

# noise floats held in memory per chunk of runs
_CHUNK_BUDGET = 8_000_000


class ExperimentDivergedError(RuntimeError):
    pass


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for the default synthetic dataset (see ``generate_synthetic_dataset``)."""

    n_nodes: int = 197
    n_steps: int = 95
    seed: int = 0
    amplitude: float = 5.0
    drift: float = 1.0
    offset: float = 15.0
    truth_band: str = "experiment"


@dataclass(frozen=True)
class MaskSpec:
    """Either an explicit node list or ``count`` nodes drawn with ``seed``."""

    nodes: tuple | None = None
    count: int | None = None
    seed: int = 0

    def build(self, n: int) -> SamplingMask:
        if self.nodes is not None:
            return SamplingMask.from_nodes(n, self.nodes)
        if self.count is None:
            return SamplingMask(np.ones(n))
        return SamplingMask.random(n, self.count, self.seed)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetBundle | SyntheticSpec
    noise: AlphaStableParams | None
    mask_spec: MaskSpec
    band_size: int
    algorithms: tuple
    n_runs: int = 200
    mode: str = TIME_VARYING
    seed: int = 0
    k: int = 8
    metric: str = "haversine"
    band_criterion: str = "min_singular"
    band: FrequencySet | None = None
    iterations: int = 1000
    snapshot: int = 0
    init: str = "zero"
    steady_window: int = 20
    moment_source: str = "closed_form"
    warmup: int = 10
    abort_on_nan: bool = True

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.n_runs < 1:
            raise ContractError("n_runs must be at least 1")
        if self.mode not in (TIME_VARYING, TIME_INVARIANT):
            raise ContractError(f"unknown mode {self.mode!r}")
        if self.init not in ("zero", "masked"):
            raise ContractError(f"unknown init {self.init!r}")
        if self.moment_source not in ("closed_form", "empirical"):
            raise ContractError(f"unknown moment_source {self.moment_source!r}")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Experiment:
    """Everything derived from a config before any noise is drawn."""

    topology: GraphTopology
    spectrum: LaplacianSpectrum
    mask: SamplingMask
    projector: BandlimitProjector
    dataset: DatasetBundle
    sampling_margin: float

    @property
    def n(self) -> int:
        return self.spectrum.n


@dataclass
class AlgorithmResult:
    config: FilterConfig
    spatial_mse_runs: np.ndarray
    spectral_mae_runs: np.ndarray
    mse_observed_runs: np.ndarray
    mse_unobserved_runs: np.ndarray
    floor_events: int = 0

    @property
    def spatial_mse(self) -> np.ndarray:
        return self.spatial_mse_runs.mean(axis=0)

    @property
    def spectral_mae(self) -> np.ndarray:
        return self.spectral_mae_runs.mean(axis=0)

    @property
    def spatial_mse_observed(self) -> np.ndarray:
        return self.mse_observed_runs.mean(axis=0)

    @property
    def spatial_mse_unobserved(self) -> np.ndarray:
        return self.mse_unobserved_runs.mean(axis=0)

    def steady_mse_runs(self, window: int) -> np.ndarray:
        """Per-run mean spatial MSE over the final ``window`` steps."""
        return self.spatial_mse_runs[:, -window:].mean(axis=1)

    def steady_mae_runs(self, window: int) -> np.ndarray:
        return self.spectral_mae_runs[:, -window:].mean(axis=1)


@dataclass
class RunResult:
    per_algorithm: dict
    metadata: dict = field(default_factory=dict)
    steady_window: int = 20

    @property
    def n_steps(self) -> int:
        return next(iter(self.per_algorithm.values())).spatial_mse_runs.shape[1]

    def steady_mse(self, label: str) -> tuple[float, float]:
        """Mean and standard error over runs of the steady-state spatial MSE."""
        v = self.per_algorithm[label].steady_mse_runs(self.steady_window)
        return float(v.mean()), _stderr(v)

    def steady_mae(self, label: str) -> tuple[float, float]:
        v = self.per_algorithm[label].steady_mae_runs(self.steady_window)
        return float(v.mean()), _stderr(v)


@dataclass(frozen=True)
class SteadyStateEntry:
    iterations_to_steady: int | None
    steady_value: float
    window: int
    rel_tol: float

    @property
    def converged(self) -> bool:
        return self.iterations_to_steady is not None


def _stderr(v: np.ndarray) -> float:
    if v.size < 2 or not np.all(np.isfinite(v)):
        return float("nan")
    return float(v.std(ddof=1) / np.sqrt(v.size))


def spatial_mse(estimate, truth) -> float:
    """Mean squared error over all nodes."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ContractError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    return float(np.mean((estimate - truth) ** 2))


def spectral_mae(estimate, truth, projector: BandlimitProjector) -> float:
    """Mean absolute error of the in-band GFT coefficients."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape or estimate.shape[0] != projector.u_f.shape[0]:
        raise ContractError("shape mismatch")
    return float(np.mean(np.abs(projector.u_f.T @ (estimate - truth))))


def detect_steady_state(
    series, window: int = 20, rel_tol: float = 0.05, settle: bool = True
) -> SteadyStateEntry:
    """First index whose window ``series[t:t + window]`` is flat and settled.

    Flat: ``(max - min) / mean <= rel_tol`` over the window. Settled (when
    ``settle`` is on): the window mean is within ``rel_tol`` of the final
    level, the mean of the last window. Without the settling check a plateau
    at the initial error would count as steady state. If no window qualifies,
    ``iterations_to_steady`` is ``None`` and ``steady_value`` is the final level.
    """
    s = np.asarray(series, dtype=float)
    if window < 2:
        raise ContractError("window must be at least 2")
    if s.size < window:
        raise ContractError("series shorter than window")
    win = np.lib.stride_tricks.sliding_window_view(s, window)
    mean = win.mean(axis=1)
    spread = win.max(axis=1) - win.min(axis=1)
    final = mean[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (spread <= rel_tol * mean) | ((spread == 0) & (mean == 0))
        if settle:
            ok &= np.abs(mean - final) <= rel_tol * abs(final)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return SteadyStateEntry(None, float(final), window, rel_tol)
    t = int(hits[0])
    return SteadyStateEntry(t, float(s[t:].mean()), window, rel_tol)


_EXPERIMENT_CACHE: dict = {}


def _cache_key(config: ExperimentConfig):
    ds = config.dataset
    ds_key = ds if isinstance(ds, SyntheticSpec) else (ds.coords.tobytes(), ds.signal_matrix.tobytes())
    return (ds_key, config.mask_spec, config.band_size, config.k, config.metric,
            config.band_criterion, config.band)


def prepare_experiment(config: ExperimentConfig) -> Experiment:
    """Build graph, mask, band and ground truth for ``config`` (memoized)."""
    key = _cache_key(config)
    if key in _EXPERIMENT_CACHE:
        return _EXPERIMENT_CACHE[key]

    ds = config.dataset
    if isinstance(ds, SyntheticSpec):
        rng = np.random.default_rng(ds.seed)
        coords = np.column_stack(
            [rng.uniform(35.0, 45.0, ds.n_nodes), rng.uniform(-110.0, -90.0, ds.n_nodes)]
        )
    else:
        coords = ds.coords
    topology = build_knn_graph(coords, config.k, metric=config.metric)
    spectrum = eigendecompose(laplacian(topology))
    n = spectrum.n
    mask = config.mask_spec.build(n)
    if config.band_size > mask.count:
        raise IdentifiabilityError(
            f"band_size {config.band_size} exceeds observed node count {mask.count}; "
            "identifiability requires |F| <= |S|"
        )
    band = config.band or greedy_select_frequencies(spectrum, mask, config.band_size, config.band_criterion)
    projector = build_projector(spectrum, band)
    margin = check_sampling_condition(mask, projector)
    if margin <= 1e-10:
        raise IdentifiabilityError(f"sampling condition fails: sigma_min(D_S U_F) = {margin:.3g}")

    if isinstance(ds, SyntheticSpec):
        ds = generate_synthetic_dataset(
            k=config.k, n_steps=ds.n_steps, seed=ds.seed + 1, coords=coords,
            band_size=config.band_size, band=band if ds.truth_band == "experiment" else None,
            amplitude=ds.amplitude, drift=ds.drift, offset=ds.offset, metric=config.metric,
        )
    elif ds.n_nodes != n:
        raise ContractError("dataset size does not match graph")

    exp = Experiment(topology, spectrum, mask, projector, ds, margin)
    _EXPERIMENT_CACHE[key] = exp
    return exp


def truth_sequence(config: ExperimentConfig, exp: Experiment) -> np.ndarray:
    """Ground truth as an (n, T) matrix for the configured mode."""
    sig = exp.dataset.signal_matrix
    if config.mode == TIME_VARYING:
        return sig
    if not 0 <= config.snapshot < sig.shape[1]:
        raise ContractError("snapshot index out of range")
    return np.repeat(sig[:, config.snapshot : config.snapshot + 1], config.iterations, axis=1)


def run_rng(seed: int, run: int) -> np.random.Generator:
    """Independent generator for Monte Carlo run ``run``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(run)]))


def _noise_block(config: ExperimentConfig, runs: range, n: int, T: int) -> np.ndarray:
    out = np.zeros((T, n, len(runs)))
    if config.noise is None:
        return out
    scale = config.noise.scale
    for j, r in enumerate(runs):
        out[:, :, j] = scale * standard_sas(config.noise.alpha, (T, n), run_rng(config.seed, r))
    return out


def resolve_algorithms(config: ExperimentConfig) -> tuple[list[FilterConfig], dict]:
    """Fill in GNS moments and GLMP exponents; return configs and notes for metadata."""
    notes = {}
    resolved = []
    for cfg in config.algorithms:
        if cfg.kind is FilterKind.GLMP and config.noise is not None and cfg.p_exponent >= config.noise.alpha:
            p = config.noise.alpha - 0.05
            notes[f"{cfg.label}.p_exponent"] = p
            cfg = dataclasses.replace(cfg, p_exponent=p)
        if cfg.kind is FilterKind.GNS and cfg.moment_abs is None:
            if config.moment_source == "empirical":
                # per-run estimate is applied as a step-size scale after warm-up
                cfg = dataclasses.replace(cfg, moment_abs=1.0)
            elif config.noise is None:
                cfg = dataclasses.replace(cfg, moment_abs=1.0)
                notes[f"{cfg.label}.moment_abs"] = "1.0 (noiseless)"
            else:
                cfg = dataclasses.replace(cfg, moment_abs=flom_abs_moment(config.noise))
        resolved.append(cfg)
    labels = [c.label for c in resolved]
    if len(set(labels)) != len(labels):
        raise ContractError(f"algorithm labels must be unique: {labels}")
    return resolved, notes


def _chunks(n_runs: int, per_run: int):
    size = max(1, min(n_runs, _CHUNK_BUDGET // max(per_run, 1)))
    for start in range(0, n_runs, size):
        yield range(start, min(n_runs, start + size))


def _run_algorithm_chunk(cfg, config, exp, truth, noise, runs, blind: bool):
    n, T = truth.shape
    r = len(runs)
    mask = exp.mask
    obs = mask.observed == 1.0
    u_f = exp.projector.u_f

    y0 = mask.observed[:, None] * (truth[:, :1] + noise[0])
    x0 = np.zeros((n, r)) if config.init == "zero" else exp.projector.matrix @ y0
    state = init_state(cfg, exp.projector, mask, x0)
    warm_resid = []
    mu_run = None
    gns_update = gns_spectral_sign_step if cfg.spectral_sign else gns_step

    mse = np.empty((r, T))
    mae = np.empty((r, T))
    mse_obs = np.empty((r, T))
    mse_unobs = np.empty((r, T))
    for t in range(T):
        y = mask.observed[:, None] * (truth[:, t : t + 1] + noise[t])
        if blind and t < config.warmup:
            warm_resid.append(np.abs(y - state.estimate)[obs])
            state = gsign_step(state, y, cfg.step_size)
        elif blind:
            if mu_run is None:
                # B_n scales linearly with E|w|, so the estimate rescales the step per run
                m_hat = np.array([
                    estimate_abs_moment_empirical(np.concatenate([w[:, j] for w in warm_resid]))
                    for j in range(r)
                ]) if warm_resid else np.ones(r)
                mu_run = cfg.step_size * m_hat
            state = gns_update(state, y, mu_run)
        else:
            state = step(cfg, state, y)

        err = state.estimate - truth[:, t : t + 1]
        if not np.all(np.isfinite(err)):
            bad = np.flatnonzero(~np.all(np.isfinite(err), axis=0))
            if config.abort_on_nan:
                raise ExperimentDivergedError(
                    f"{cfg.label} (mu={cfg.step_size:g}) diverged at step {t} in run {runs[bad[0]]}"
                )
        sq = err**2
        with np.errstate(invalid="ignore", over="ignore"):
            mse[:, t] = sq.mean(axis=0)
            mse_obs[:, t] = sq[obs].mean(axis=0) if obs.any() else 0.0
            mse_unobs[:, t] = sq[~obs].mean(axis=0) if (~obs).any() else 0.0
            mae[:, t] = np.abs(u_f.T @ err).mean(axis=0)
    return mse, mae, mse_obs, mse_unobs, state.floor_events


def run_online_prediction(config: ExperimentConfig) -> RunResult:
    """Monte Carlo online prediction for every configured algorithm.

    Each run draws its own noise stream; within a run all algorithms see the
    same observations ``y[t] = D_S (x_g[t] + w[t])``. Series are averaged over
    runs, per-run values are kept for standard errors.
    """
    if not config.algorithms:
        raise ContractError("no algorithms configured")
    exp = prepare_experiment(config)
    truth = truth_sequence(config, exp)
    n, T = truth.shape
    algorithms, notes = resolve_algorithms(config)
    blind = config.moment_source == "empirical"

    parts = {c.label: [] for c in algorithms}
    floors = {c.label: 0 for c in algorithms}
    for runs in _chunks(config.n_runs, n * T):
        noise = _noise_block(config, runs, n, T)
        for cfg in algorithms:
            # overflow surfaces as non-finite estimates, handled by the divergence check
            with np.errstate(over="ignore", invalid="ignore"):
                out = _run_algorithm_chunk(
                    cfg, config, exp, truth, noise, runs, blind and cfg.kind is FilterKind.GNS
                )
            parts[cfg.label].append(out[:4])
            floors[cfg.label] += out[4]

    per_algorithm = {}
    for cfg in algorithms:
        cols = list(zip(*parts[cfg.label]))
        per_algorithm[cfg.label] = AlgorithmResult(
            cfg, *(np.concatenate(c, axis=0) for c in cols), floor_events=floors[cfg.label]
        )
    window = min(config.steady_window, T)
    metadata = experiment_metadata(config, exp, algorithms)
    metadata.update(notes)
    return RunResult(per_algorithm=per_algorithm, metadata=metadata, steady_window=window)


def experiment_metadata(config: ExperimentConfig, exp: Experiment, algorithms) -> dict:
    noise = None
    if config.noise is not None:
        noise = {"alpha": config.noise.alpha, "gamma": config.noise.gamma, "gamma_convention": "dispersion"}
    return {
        "mode": config.mode,
        "seed": config.seed,
        "n_runs": config.n_runs,
        "noise": noise,
        "n_nodes": exp.n,
        "n_edges": exp.topology.n_edges,
        "k": config.k,
        "metric": config.metric,
        "band_size": config.band_size,
        "band": list(exp.projector.band.indices),
        "band_criterion": config.band_criterion,
        "observed_nodes": exp.mask.nodes(),
        "sampling_margin": exp.sampling_margin,
        "init": config.init,
        "moment_source": config.moment_source,
        "steady_window": config.steady_window,
        "iterations": config.iterations if config.mode == TIME_INVARIANT else exp.dataset.n_steps,
        "algorithms": [
            {
                "label": c.label,
                "kind": c.kind.value,
                "step_size": c.step_size,
                "p_exponent": c.p_exponent if c.kind is FilterKind.GLMP else None,
                "moment_abs": c.moment_abs if c.kind is FilterKind.GNS else None,
                "spectral_sign": c.spectral_sign,
            }
            for c in algorithms
        ],
    }


def default_step_grid(points: int = 25) -> np.ndarray:
    return np.geomspace(1e-3, 1.0, points)


def pilot_seed(seed: int) -> int:
    return (int(seed) + 0x5EED) % 2**32


def step_size_scores(
    config: ExperimentConfig, algorithm: FilterConfig, grid, pilot_runs: int = 50, seed: int | None = None
) -> np.ndarray:
    """Mean steady-state spatial MSE of ``algorithm`` at every grid step size.

    All grid points share the pilot noise realizations. Diverged entries score inf.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise TuningError("empty step-size grid")
    variants = tuple(
        dataclasses.replace(algorithm, step_size=float(mu), name=f"mu{i}") for i, mu in enumerate(grid)
    )
    pilot = config.replace(
        algorithms=variants,
        n_runs=pilot_runs,
        seed=pilot_seed(config.seed) if seed is None else seed,
        abort_on_nan=False,
    )
    result = run_online_prediction(pilot)
    scores = np.array([result.steady_mse(v.label)[0] for v in variants])
    return np.where(np.isfinite(scores), scores, np.inf)


def pick_step(grid, scores) -> float:
    """Smallest grid value whose score ties the minimum."""
    grid = np.asarray(grid, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if not np.any(np.isfinite(scores)):
        raise TuningError("every step size in the grid diverged")
    best = np.min(scores)
    tied = np.isclose(scores, best, rtol=1e-9, atol=1e-12)
    return float(np.min(grid[tied]))


def tune_step_size(
    config: ExperimentConfig, algorithm: FilterConfig, grid, pilot_runs: int = 50, seed: int | None = None
) -> float:
    """Grid-search the step size minimizing mean steady-state spatial MSE."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return float(grid[0])
    return pick_step(grid, step_size_scores(config, algorithm, grid, pilot_runs, seed))


def tune_all(config: ExperimentConfig, grid=None, pilot_runs: int = 50) -> tuple[ExperimentConfig, dict]:
    """Tune every algorithm in ``config`` and return the config with tuned steps."""
    grid = default_step_grid() if grid is None else np.asarray(grid, dtype=float)
    tuned = []
    chosen = {}
    for cfg in config.algorithms:
        mu = tune_step_size(config, cfg, grid, pilot_runs)
        log.info("tuned %s: mu = %g", cfg.label, mu)
        chosen[cfg.label] = mu
        tuned.append(cfg.with_step(mu))
    return config.replace(algorithms=tuple(tuned)), chosen


def steady_mae_of(config: ExperimentConfig, algorithm: FilterConfig, steps, tail: int, seed: int) -> np.ndarray:
    """Final-``tail`` mean spectral MAE (run-averaged) for each step size."""
    variants = tuple(
        dataclasses.replace(algorithm, step_size=float(mu), name=f"mu{i}") for i, mu in enumerate(steps)
    )
    res = run_online_prediction(
        config.replace(algorithms=variants, seed=seed, steady_window=tail, abort_on_nan=False)
    )
    return np.array([res.steady_mae(v.label)[0] for v in variants])


def match_steady_state(
    config: ExperimentConfig,
    algorithm: FilterConfig,
    target: float,
    lo: float = 1e-4,
    hi: float = 1.0,
    tail: int | None = None,
    points: int = 12,
    rounds: int = 3,
    pilot_runs: int | None = None,
    seed: int | None = None,
) -> float:
    """Step size at which ``algorithm`` reaches steady spectral MAE ``target``.

    Once a sign-type filter converges within the budget its steady MAE grows
    with the step size; too small a step never converges and reads high. The
    search therefore brackets the target on the increasing branch (the largest
    grid point still below target and its upper neighbour), zooms in, and
    log-linearly interpolates on the last round.
    """
    tail = tail or max(config.steady_window, config.iterations // 5)
    seed = pilot_seed(config.seed) if seed is None else seed
    cfg = config if pilot_runs is None else config.replace(n_runs=pilot_runs)
    for _ in range(rounds):
        steps = np.geomspace(lo, hi, points)
        vals = steady_mae_of(cfg, algorithm, steps, tail, seed)
        below = np.flatnonzero(vals < target)
        if below.size == 0:
            raise TuningError(f"{algorithm.label} never reaches steady MAE {target:g} in [{lo:g}, {hi:g}]")
        j = int(below[-1])
        if j == steps.size - 1:
            raise TuningError(
                f"{algorithm.label} stays below steady MAE {target:g} up to step {hi:g}; "
                "the target lies off the converged branch"
            )
        lo, hi = steps[j], steps[j + 1]
        v_lo, v_hi = vals[j], vals[j + 1]
    w = (np.log(target) - np.log(v_lo)) / (np.log(v_hi) - np.log(v_lo))
    return float(np.exp(np.log(lo) + w * (np.log(hi) - np.log(lo))))
