"""Service pipelines, SLOs, actions, workload traces and the metric model."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .infrastructure import NodeSpec

METRICS = {
    "latency_ms": "ms",
    "throughput_rps": "rps",
    "energy_j": "J",
    "quality_level": "level",
}
COMPARATORS = ("<=", ">=")
M_SAT = 50.0
GPU_PENALTY = 3.0


@dataclass(frozen=True)
class ParamLevel:
    name: str
    demand_factor: float = 1.0
    latency_factor: float = 1.0
    output_factor: float = 1.0  # scales the demand of downstream services


@dataclass(frozen=True)
class ServiceSpec:
    id: str
    application: str
    node: str | None
    replicas: int = 1
    upstream_ids: tuple[str, ...] = ()
    params: Mapping[str, tuple[ParamLevel, ...]] = field(default_factory=dict)
    initial_levels: Mapping[str, int] = field(default_factory=dict)
    quality_param: str | None = None
    base_demand: float = 1.0  # compute units per request
    base_latency: float = 10.0  # ms at reference conditions
    replica_capacity: float = 10.0  # compute units one replica can serve per step
    replica_overhead: float = 0.0  # idle compute units reserved per replica
    gpu_required: bool = False
    min_replicas: int = 1
    max_replicas: int = 4
    payload_kb: float = 0.0
    source_node: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "upstream_ids", tuple(self.upstream_ids))
        object.__setattr__(self, "params", {k: tuple(v) for k, v in self.params.items()})
        for name, levels in self.params.items():
            if len(levels) < 2:
                raise ValueError(f"service {self.id!r}: param {name!r} needs >= 2 levels")
            factors = [lv.demand_factor for lv in levels]
            if any(b <= a for a, b in zip(factors, factors[1:])):
                raise ValueError(f"service {self.id!r}: demand must strictly increase along {name!r} levels")
            if len({lv.name for lv in levels}) != len(levels):
                raise ValueError(f"service {self.id!r}: duplicate level names in {name!r}")
        init = {name: int(self.initial_levels.get(name, 0)) for name in self.params}
        for name, lv in self.initial_levels.items():
            if name not in self.params:
                raise ValueError(f"service {self.id!r}: initial level for unknown param {name!r}")
        for name, lv in init.items():
            if not 0 <= lv < len(self.params[name]):
                raise ValueError(f"service {self.id!r}: initial level out of range for {name!r}")
        object.__setattr__(self, "initial_levels", init)
        if self.quality_param is not None and self.quality_param not in self.params:
            raise ValueError(f"service {self.id!r}: quality_param {self.quality_param!r} is not a param")
        if not (0 <= self.min_replicas <= self.max_replicas):
            raise ValueError(f"service {self.id!r}: need 0 <= min_replicas <= max_replicas")
        if self.replicas < 0:
            raise ValueError(f"service {self.id!r}: replicas must be >= 0")
        if self.base_demand <= 0 or self.base_latency <= 0 or self.replica_capacity <= 0:
            raise ValueError(f"service {self.id!r}: demand, latency and capacity must be > 0")

    def level_index(self, param: str, level: str | int) -> int:
        levels = self.params[param]
        if isinstance(level, int):
            if not 0 <= level < len(levels):
                raise ValueError(f"level {level} out of range for {self.id}.{param}")
            return level
        for i, lv in enumerate(levels):
            if lv.name == level:
                return i
        raise ValueError(f"unknown level {level!r} for {self.id}.{param}")

    def demand(self, levels: Mapping[str, int], input_factor: float = 1.0) -> float:
        d = self.base_demand * input_factor
        for name, lv in levels.items():
            d *= self.params[name][lv].demand_factor
        return d

    def latency_factor(self, levels: Mapping[str, int]) -> float:
        f = 1.0
        for name, lv in levels.items():
            f *= self.params[name][lv].latency_factor
        return f

    def output_factor(self, levels: Mapping[str, int]) -> float:
        f = 1.0
        for name, lv in levels.items():
            f *= self.params[name][lv].output_factor
        return f


@dataclass(frozen=True)
class Slo:
    id: str
    service_id: str
    metric: str
    comparator: str
    threshold: float
    weight: float = 1.0
    unit: str | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"slo {self.id!r}: unknown metric {self.metric!r}")
        if self.comparator not in COMPARATORS:
            raise ValueError(f"slo {self.id!r}: comparator must be one of {COMPARATORS}")
        if not math.isfinite(self.threshold):
            raise ValueError(f"slo {self.id!r}: threshold must be finite")
        if not self.weight > 0:
            raise ValueError(f"slo {self.id!r}: weight must be > 0")
        unit = METRICS[self.metric]
        if self.unit is None:
            object.__setattr__(self, "unit", unit)
        elif self.unit != unit:
            raise ValueError(f"slo {self.id!r}: unit {self.unit!r} does not match {self.metric} ({unit})")


def evaluate_slo(slo: Slo, value: float) -> bool:
    """Fulfilled iff the comparator holds; equality counts as fulfilled."""
    if slo.comparator == "<=":
        return value <= slo.threshold
    return value >= slo.threshold


ACTION_KINDS = ("no_op", "scale", "migrate", "set_param")


@dataclass(frozen=True)
class Action:
    kind: str
    issuer: str = ""
    target: str = ""
    delta: int = 0
    node: str | None = None
    param: str | None = None
    level: str | None = None

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == "scale" and self.delta not in (-1, 1):
            raise ValueError("scale actions take delta of +1 or -1")
        if self.kind == "migrate" and not self.node:
            raise ValueError("migrate needs a target node")
        if self.kind == "set_param" and (not self.param or self.level is None):
            raise ValueError("set_param needs a param and a level")

    @property
    def encoding(self) -> str:
        if self.kind == "scale":
            return f"scale:{self.delta:+d}"
        if self.kind == "migrate":
            return f"migrate:{self.node}"
        if self.kind == "set_param":
            return f"set_param:{self.param}:{self.level}"
        return "no_op"

    @classmethod
    def parse(cls, text: str, issuer: str = "", target: str = "") -> "Action":
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == "no_op" and len(parts) == 1:
            return cls("no_op", issuer, target)
        if kind == "scale" and len(parts) == 2:
            return cls("scale", issuer, target, delta=int(parts[1]))
        if kind == "migrate" and len(parts) == 2:
            return cls("migrate", issuer, target, node=parts[1])
        if kind == "set_param" and len(parts) == 3:
            return cls("set_param", issuer, target, param=parts[1], level=parts[2])
        raise ValueError(f"cannot parse action {text!r}")

    def __str__(self):
        return self.encoding


def no_op(issuer: str = "", target: str = "") -> Action:
    return Action("no_op", issuer, target)


@dataclass(frozen=True)
class WorkloadSpec:
    base_rate: float
    diurnal_amplitude: float = 0.0
    period: int = 100
    drift_per_step: float = 0.0
    noise_sd: float = 0.0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("workload period must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("workload noise_sd must be >= 0")


def workload_rate(spec: WorkloadSpec, t: int, rng: np.random.Generator | None = None) -> float:
    """Offered request rate at step ``t``, clamped at zero."""
    if t < 0:
        raise ValueError("t must be >= 0")
    noise = rng.normal(0.0, spec.noise_sd) if (rng is not None and spec.noise_sd > 0) else 0.0
    rate = (
        spec.base_rate
        + spec.diurnal_amplitude * spec.base_rate * math.sin(2 * math.pi * t / spec.period)
        + spec.drift_per_step * t
        + noise
    )
    return max(0.0, rate)


def contention(u: float, m_sat: float = M_SAT) -> float:
    """1/(1-u) capped at the saturation constant; overload (u >= 1) saturates."""
    if u >= 1.0:
        return m_sat
    return min(1.0 / (1.0 - u), m_sat)


def replica_utilization(spec: ServiceSpec, load: float, demand: float, replicas: int) -> float:
    return load * demand / (replicas * spec.replica_capacity)


def service_latency_model(
    spec: ServiceSpec,
    load: float,
    host: NodeSpec,
    host_util: float,
    upstream_latency: float = 0.0,
    link_latency: float = 0.0,
    replicas: int = 1,
    levels: Mapping[str, int] | None = None,
    demand: float | None = None,
    rng: np.random.Generator | None = None,
    sigma: float = 0.0,
    m_sat: float = M_SAT,
    gpu_penalty: float = GPU_PENALTY,
) -> float:
    """End-to-end latency (ms) of one service.

    upstream + link + base_latency(levels) * contention(u) * gpu penalty * noise,
    with u the larger of host utilization and per-replica utilization.
    Zero replicas yield ``inf``.
    """
    if replicas < 1 or math.isinf(upstream_latency) or math.isinf(link_latency):
        return math.inf
    levels = spec.initial_levels if levels is None else levels
    if demand is None:
        demand = spec.demand(levels)
    u = max(host_util, replica_utilization(spec, load, demand, replicas))
    penalty = gpu_penalty if (spec.gpu_required and not host.has_gpu) else 1.0
    noise = float(rng.lognormal(0.0, sigma)) if (rng is not None and sigma > 0) else 1.0
    own = spec.base_latency * spec.latency_factor(levels) * contention(u, m_sat) * penalty * noise
    return upstream_latency + link_latency + own


def throughput(spec: ServiceSpec, load: float, demand: float, replicas: int, host_util: float) -> float:
    """min(offered load, capacity); an overloaded host scales capacity down."""
    if replicas < 1:
        return 0.0
    capacity = replicas * spec.replica_capacity / demand
    if host_util > 1.0:
        capacity /= host_util
    return min(load, capacity)


def energy(spec: ServiceSpec, served: float, demand: float, replicas: int, host: NodeSpec) -> float:
    """Consumed compute units times the host's energy coefficient."""
    if replicas < 1:
        return 0.0
    return (served * demand + replicas * spec.replica_overhead) * host.energy_coefficient
