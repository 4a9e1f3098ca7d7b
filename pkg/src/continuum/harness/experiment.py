"""Experiment configs, the multi-run runner and its on-disk outputs.

Output layout under the experiment's output directory::

    summary.json                 aggregate over every (arm, seed) run
    runs/<arm>__seed<n>.csv      per-step log of one run
    timing/<arm>__seed<n>.csv    wall-clock per agent and step (ms)
    timing/summary.json          wall-clock aggregates

Everything outside ``timing/`` is a pure function of the config and is
byte-identical across reruns, sequential or parallel.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..sim.episode import CSV_VERSION, run_episode
from ..sim.scenario import AGENT_KINDS, Scenario, ScenarioError, builtin_scenario_path, load_scenario_file, validate
from ..sim.scope import compile_agent_specs
from .baselines import make_agent
from .metrics import NOT_RECOVERED, RunSummary, summarize

OUTPUT_ROOT_ENV = "CONTINUUM_OUTPUT_ROOT"
CONFIG_VERSION = 1
SUMMARY_VERSION = 1
DEFAULT_SEEDS = tuple(range(1, 11))
SCENARIO_OVERRIDES = ("horizon", "noise_sigma", "m_sat", "gpu_penalty", "payload_threshold_kb")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Arm:
    """One agent assignment: a kind per bound agent plus config overrides."""

    name: str
    kinds: Mapping[str, str]
    hyperparameters: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario_path: Path
    arms: tuple[Arm, ...]
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    output_dir: Path = Path("results")
    coordination: bool | None = None
    overrides: Mapping = field(default_factory=dict)
    efe_column: bool = False
    timing: bool = True
    workers: int = 1
    raw: Mapping = field(default_factory=dict)

    def load_scenario(self) -> Scenario:
        scenario = load_scenario_file(self.scenario_path)
        if self.overrides:
            scenario = scenario.with_overrides(**self.overrides)
        return scenario

    def resolved_output(self) -> Path:
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


def _resolve_scenario(ref: str, base: Path) -> Path:
    p = Path(ref)
    if p.is_absolute() and p.exists():
        return p
    if (base / p).exists():
        return base / p
    builtin = builtin_scenario_path(p.name)
    if builtin.exists():
        return builtin
    raise ConfigError(f"scenario {ref!r} not found (looked in {base} and the built-in scenarios)")


def parse_config(data: Mapping, base: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("experiment config must be a mapping")
    if data.get("format_version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config format_version {data.get('format_version')!r}")
    known = {"format_version", "scenario", "seeds", "output_dir", "arms", "coordination", "overrides", "metrics", "workers"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    if "scenario" not in data:
        raise ConfigError("missing required field 'scenario'")
    path = _resolve_scenario(str(data["scenario"]), base)
    try:
        scenario = load_scenario_file(path)
    except ScenarioError as exc:
        raise ConfigError(f"scenario {path}: {exc}") from exc

    seeds = data.get("seeds", list(DEFAULT_SEEDS))
    if isinstance(seeds, Mapping):
        seeds = list(range(int(seeds["from"]), int(seeds["to"]) + 1))
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ConfigError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("duplicate seeds")

    arms_raw = data.get("arms")
    if not arms_raw:
        raise ConfigError("need at least one arm")
    if isinstance(arms_raw, (list, tuple)):
        arms_raw = {str(k): str(k) for k in arms_raw}
    arms = []
    for name, spec in arms_raw.items():
        arms.append(_parse_arm(str(name), spec, scenario))

    overrides = dict(data.get("overrides") or {})
    bad = set(overrides) - set(SCENARIO_OVERRIDES)
    if bad:
        raise ConfigError(f"unsupported scenario overrides {sorted(bad)}; allowed: {SCENARIO_OVERRIDES}")
    metrics = dict(data.get("metrics") or {})
    bad = set(metrics) - {"efe_column", "timing"}
    if bad:
        raise ConfigError(f"unknown metrics toggles {sorted(bad)}")
    coordination = data.get("coordination")
    workers = int(data.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    cfg = ExperimentConfig(
        scenario_path=path,
        arms=tuple(arms),
        seeds=seeds,
        output_dir=Path(str(data.get("output_dir", "results"))),
        coordination=None if coordination is None else bool(coordination),
        overrides=overrides,
        efe_column=bool(metrics.get("efe_column", False)),
        timing=bool(metrics.get("timing", True)),
        workers=workers,
        raw=copy.deepcopy(dict(data)),
    )
    try:
        scenario = cfg.load_scenario()
        validate(scenario)
        for arm in cfg.arms:
            _build_agents(scenario, arm, cfg.coordination)
    except (ScenarioError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _parse_arm(name: str, spec, scenario: Scenario) -> Arm:
    agents = sorted(scenario.agents)
    hyper = {}
    if isinstance(spec, str):
        kinds = {aid: spec for aid in agents}
    elif isinstance(spec, Mapping):
        extra = set(spec) - {"kind", "agents", "hyperparameters"}
        if extra:
            raise ConfigError(f"arm {name!r}: unknown fields {sorted(extra)}")
        if "agents" in spec:
            per = dict(spec["agents"])
            unknown = set(per) - set(agents)
            if unknown:
                raise ConfigError(f"arm {name!r}: unknown agents {sorted(unknown)}")
            default = spec.get("kind")
            kinds = {aid: str(per.get(aid, default or scenario.agents[aid].kind)) for aid in agents}
        elif "kind" in spec:
            kinds = {aid: str(spec["kind"]) for aid in agents}
        else:
            kinds = {aid: scenario.agents[aid].kind for aid in agents}
        hyper = dict(spec.get("hyperparameters") or {})
    else:
        raise ConfigError(f"arm {name!r}: expected a kind or a mapping")
    for aid, kind in kinds.items():
        if kind not in AGENT_KINDS:
            raise ConfigError(f"arm {name!r}: unknown agent kind {kind!r} for {aid!r}")
    if "/" in name or name.startswith("."):
        raise ConfigError(f"arm name {name!r} is not usable as a file name")
    return Arm(name, kinds, hyper)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path}: parse error: {exc}") from exc
    return parse_config(data, path.parent)


def _build_agents(scenario: Scenario, arm: Arm, coordination: bool | None):
    specs = compile_agent_specs(scenario, coordination)
    agents = {}
    for aid in sorted(specs):
        kind = arm.kinds[aid]
        config = dict(scenario.agents[aid].config)
        if kind == "aif" and arm.hyperparameters:
            config["hyperparameters"] = {**(config.get("hyperparameters") or {}), **arm.hyperparameters}
        if kind != scenario.agents[aid].kind and kind != "threshold":
            config.pop("rules", None)
        agents[aid] = make_agent(kind, specs[aid], config)
    return agents


@dataclass
class RunResult:
    arm: str
    seed: int
    csv: str
    summary: RunSummary
    timing_csv: str
    wall_ms: dict[str, list[float]]


def run_one(cfg: ExperimentConfig, arm: Arm, seed: int) -> RunResult:
    scenario = cfg.load_scenario()
    agents = _build_agents(scenario, arm, cfg.coordination)
    log = run_episode(scenario, agents, seed=seed, coordination=cfg.coordination, record_efe=cfg.efe_column)
    summary = summarize(log, arm.name)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "agent", "kind", "wall_ms"])
    wall: dict[str, list[float]] = {aid: [] for aid in sorted(agents)}
    for r in log.records:
        for aid in sorted(r.wall):
            ms = r.wall[aid] * 1000.0
            wall[aid].append(ms)
            writer.writerow([r.t, aid, arm.kinds[aid], f"{ms:.4f}"])
    return RunResult(arm.name, seed, log.to_csv(efe=cfg.efe_column), summary, buf.getvalue(), wall)


def _run_job(args):
    cfg, arm, seed = args
    return run_one(cfg, arm, seed)


def _mean_sd(values):
    a = np.asarray(values, dtype=float)
    if len(a) == 0:
        return None, None
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0


def aggregate(cfg: ExperimentConfig, scenario: Scenario, results: list[RunResult]) -> dict:
    arms = {}
    for arm in cfg.arms:
        runs = sorted((r for r in results if r.arm == arm.name), key=lambda r: r.seed)
        rates = [r.summary.fulfillment_rate for r in runs]
        mean, sd = _mean_sd(rates)
        recov = {}
        for r in runs:
            for t, v in r.summary.recovery.items():
                recov.setdefault(t, []).append(v)
        recovery = {
            t: {
                "recovered": sum(v != NOT_RECOVERED for v in vals),
                "not_recovered": sum(v == NOT_RECOVERED for v in vals),
                "median_steps": float(np.median([v for v in vals if v != NOT_RECOVERED]))
                if any(v != NOT_RECOVERED for v in vals)
                else None,
            }
            for t, vals in sorted(recov.items())
        }
        arms[arm.name] = {
            "kinds": dict(sorted(arm.kinds.items())),
            "hyperparameters": dict(sorted(arm.hyperparameters.items())),
            "fulfillment_mean": mean,
            "fulfillment_sd": sd,
            "recovery": recovery,
            "runs": [r.summary.to_dict() for r in runs],
        }
    return {
        "format_version": SUMMARY_VERSION,
        "csv_version": CSV_VERSION,
        "scenario": scenario.name,
        "horizon": scenario.horizon,
        "seeds": list(cfg.seeds),
        "coordination": cfg.coordination if cfg.coordination is not None else scenario.coordination.enabled,
        "overrides": dict(sorted(cfg.overrides.items())),
        "arms": arms,
    }


def dumps(obj) -> str:
    """Canonical JSON text (sorted keys, NaN rejected, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _clean(obj):
    """Replace non-finite floats (e.g. infinite surprise) with strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, output_dir: Path | None = None) -> dict:
    """Run every (arm, seed) pair and write the output tree; returns the aggregate."""
    scenario = cfg.load_scenario()
    out = Path(output_dir) if output_dir is not None else cfg.resolved_output()
    try:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        if cfg.timing:
            (out / "timing").mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    jobs = [(cfg, arm, seed) for arm in cfg.arms for seed in cfg.seeds]
    workers = cfg.workers if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]

    for r in results:
        stem = f"{r.arm}__seed{r.seed}"
        (out / "runs" / f"{stem}.csv").write_text(r.csv)
        if cfg.timing:
            (out / "timing" / f"{stem}.csv").write_text(r.timing_csv)
    summary = _clean(aggregate(cfg, scenario, results))
    (out / "summary.json").write_text(dumps(summary))
    if cfg.timing:
        (out / "timing" / "summary.json").write_text(dumps(timing_summary(results)))
    return summary


def timing_summary(results: list[RunResult]) -> dict:
    out: dict[str, dict] = {}
    for r in sorted(results, key=lambda r: (r.arm, r.seed)):
        arm = out.setdefault(r.arm, {})
        for aid, ms in r.wall_ms.items():
            arm.setdefault(aid, []).extend(ms)
    return {
        arm: {
            aid: {
                "mean_ms": float(np.mean(ms)),
                "p95_ms": float(np.percentile(ms, 95)),
                "max_ms": float(np.max(ms)),
            }
            for aid, ms in sorted(agents.items())
            if ms
        }
        for arm, agents in sorted(out.items())
    }


def with_param(cfg_data: Mapping, dotted: str, value) -> dict:
    """Copy of a raw config mapping with ``a.b.c`` set to ``value``."""
    data = copy.deepcopy(dict(cfg_data))
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        if k in node and not isinstance(node[k], dict):
            raise ConfigError(f"cannot set {dotted!r}: {k!r} is not a mapping")
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return data
