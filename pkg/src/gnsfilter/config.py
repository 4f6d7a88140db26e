"""Experiment configuration files (YAML or JSON) and their mapping to ExperimentConfig."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data import load_dataset_csv
from .filters import FilterConfig, FilterKind
from .harness import TIME_INVARIANT, TIME_VARYING, ExperimentConfig, MaskSpec, SyntheticSpec
from .noise import AlphaStableParams


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "dataset": {
        "source": "synthetic",
        "path": None,
        "n_nodes": 197,
        "n_steps": 95,
        "seed": 0,
        "amplitude": 5.0,
        "drift": 1.0,
        "offset": 15.0,
        "truth_band": "experiment",
    },
    "graph": {"k": 8, "metric": "haversine"},
    "noise": {"enabled": True, "alpha": 1.1, "gamma": 0.1, "gamma_convention": "dispersion"},
    "mask": {"count": 130, "seed": 1, "nodes": None},
    "band_size": 120,
    "band_criterion": "min_singular",
    "algorithms": [
        {"kind": "GLMS", "step_size": "auto"},
        {"kind": "GSIGN", "step_size": "auto"},
        {"kind": "GNS", "step_size": "auto"},
    ],
    "n_runs": 200,
    "mode": TIME_VARYING,
    "seed": 0,
    "iterations": 1000,
    "snapshot": 0,
    "init": "zero",
    "steady_window": 20,
    "moment_source": "closed_form",
    "warmup": 10,
    "tuning": {"grid_min": 1e-3, "grid_max": 1.0, "grid_points": 25, "pilot_runs": 50},
    "steady_state": {"window": 20, "rel_tol": 0.05},
    "convergence": {
        "alpha": 1.1,
        "reference": "G-Sign",
        "matched": ["GNS"],
        "steady_window": 200,
        "match_runs": 100,
        "criteria": [[20, 0.05], [40, 0.02]],
    },
    "sweep": {"alphas": [1.05, 1.1, 1.15, 1.2, 1.25]},
}

_ALGO_KEYS = {"kind", "step_size", "p_exponent", "moment_abs", "spectral_sign", "name"}


@dataclass
class LoadedConfig:
    """A parsed config: the experiment, which steps to tune, and the raw dict."""

    experiment: ExperimentConfig
    auto: set
    raw: dict
    tuning: dict = field(default_factory=dict)
    steady_state: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    @property
    def grid(self):
        import numpy as np

        t = self.tuning
        return np.geomspace(float(t["grid_min"]), float(t["grid_max"]), int(t["grid_points"]))


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def read_config_file(path) -> dict:
    """Read a YAML/JSON config. A results sidecar (with a ``config`` key) also works."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return data


def resolve(raw: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults <- file values <- command-line overrides."""
    merged = _merge(DEFAULTS, raw or {})
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = merged
        keys = dotted.split(".")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return merged


def _algorithm(entry: dict, index: int) -> tuple[FilterConfig, bool]:
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError(f"algorithms[{index}] needs a 'kind'")
    unknown = set(entry) - _ALGO_KEYS
    if unknown:
        raise ConfigError(f"algorithms[{index}]: unknown keys {sorted(unknown)}")
    try:
        kind = FilterKind(str(entry["kind"]).upper().replace("-", ""))
    except ValueError:
        raise ConfigError(f"algorithms[{index}]: unknown kind {entry['kind']!r}") from None
    step = entry.get("step_size", "auto")
    auto = step == "auto"
    kwargs = {k: entry[k] for k in ("p_exponent", "moment_abs", "spectral_sign", "name") if entry.get(k) is not None}
    try:
        cfg = FilterConfig(kind, 1.0 if auto else float(step), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"algorithms[{index}]: {exc}") from exc
    return cfg, auto


def build(raw: dict) -> LoadedConfig:
    """Turn a resolved config dict into an ExperimentConfig."""
    ds = raw["dataset"]
    if ds["source"] == "synthetic":
        dataset = SyntheticSpec(
            n_nodes=int(ds["n_nodes"]), n_steps=int(ds["n_steps"]), seed=int(ds["seed"]),
            amplitude=float(ds["amplitude"]), drift=float(ds["drift"]), offset=float(ds["offset"]),
            truth_band=str(ds["truth_band"]),
        )
    elif ds["source"] == "csv":
        if not ds.get("path"):
            raise ConfigError("dataset.path is required for csv source")
        dataset = load_dataset_csv(ds["path"])
    else:
        raise ConfigError(f"unknown dataset source {ds['source']!r}")

    nz = raw["noise"]
    noise = None
    if nz["enabled"]:
        try:
            noise = AlphaStableParams.from_convention(float(nz["alpha"]), float(nz["gamma"]),
                                                      str(nz["gamma_convention"]))
        except ValueError as exc:
            raise ConfigError(f"noise: {exc}") from exc

    m = raw["mask"]
    if m.get("nodes") is not None:
        mask = MaskSpec(nodes=tuple(int(i) for i in m["nodes"]))
    else:
        mask = MaskSpec(count=None if m.get("count") is None else int(m["count"]), seed=int(m["seed"]))

    algos, auto = [], set()
    if not raw["algorithms"]:
        raise ConfigError("at least one algorithm is required")
    for i, entry in enumerate(raw["algorithms"]):
        cfg, is_auto = _algorithm(entry, i)
        algos.append(cfg)
        if is_auto:
            auto.add(cfg.label)

    if raw["mode"] not in (TIME_VARYING, TIME_INVARIANT):
        raise ConfigError(f"unknown mode {raw['mode']!r}")
    try:
        exp = ExperimentConfig(
            dataset=dataset,
            noise=noise,
            mask_spec=mask,
            band_size=int(raw["band_size"]),
            algorithms=tuple(algos),
            n_runs=int(raw["n_runs"]),
            mode=raw["mode"],
            seed=int(raw["seed"]),
            k=int(raw["graph"]["k"]),
            metric=str(raw["graph"]["metric"]),
            band_criterion=str(raw["band_criterion"]),
            iterations=int(raw["iterations"]),
            snapshot=int(raw["snapshot"]),
            init=str(raw["init"]),
            steady_window=int(raw["steady_window"]),
            moment_source=str(raw["moment_source"]),
            warmup=int(raw["warmup"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return LoadedConfig(exp, auto, raw, dict(raw["tuning"]), dict(raw["steady_state"]),
                        dict(raw["convergence"]), dict(raw["sweep"]))


def load_config(path=None, overrides: dict | None = None) -> LoadedConfig:
    raw = read_config_file(path) if path else {}
    return build(resolve(raw, overrides))


def with_steps(raw: dict, steps: dict) -> dict:
    """Copy of ``raw`` with the given step sizes pinned (keyed by algorithm label)."""
    out = copy.deepcopy(raw)
    for i, entry in enumerate(out["algorithms"]):
        cfg, _ = _algorithm(entry, i)
        if cfg.label in steps:
            entry["step_size"] = float(steps[cfg.label])
    return out
