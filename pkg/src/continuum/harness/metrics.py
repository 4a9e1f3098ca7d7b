"""Per-run summaries: fulfillment, violation runs, actions, surprise, recovery."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from ..services import Slo, evaluate_slo
from ..sim.episode import CSV_COLUMNS, EpisodeLog
from ..sim.scenario import Scenario

RECOVERY_WINDOW = 25
NOT_RECOVERED = "not_recovered"


@dataclass
class RunSummary:
    scenario: str
    kind: str
    seed: int
    horizon: int
    fulfillment_rate: float
    slo_rates: dict[str, float]
    violation_runs: dict[str, list[int]]
    action_counts: dict[str, int]
    surprise_deciles: list[float | None]
    recovery: dict[str, int | str] = field(default_factory=dict)  # event t -> steps or not_recovered
    rejected_actions: int = 0
    agent_errors: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        return cls(**d)


def step_rates(log: EpisodeLog) -> np.ndarray:
    """Fraction of current SLOs fulfilled at each step."""
    return np.array([sum(r.slo_ok.values()) / len(r.slo_ok) if r.slo_ok else 1.0 for r in log.records])


def violation_runs(flags: list[bool]) -> list[int]:
    """Lengths of maximal runs of consecutive violations."""
    runs, cur = [], 0
    for ok in flags:
        if ok:
            if cur:
                runs.append(cur)
            cur = 0
        else:
            cur += 1
    if cur:
        runs.append(cur)
    return runs


def recovery_time(rates: np.ndarray, event_t: int, window: int = RECOVERY_WINDOW) -> int | str:
    """Steps from ``event_t`` until a full post-event window of length
    ``window`` reaches the mean rate of the ``window`` steps before the event.

    Measured to the end of the first qualifying window, so the smallest
    possible value is ``window``.
    """
    pre = rates[max(0, event_t - window) : event_t]
    if len(pre) == 0:
        raise ValueError("event at t=0 has no pre-event level")
    level = float(pre.mean())
    for start in range(event_t, len(rates) - window + 1):
        if float(rates[start : start + window].mean()) >= level - 1e-12:
            return start + window - event_t
    return NOT_RECOVERED


def decile_means(values: list[float | None]) -> list[float | None]:
    n = len(values)
    out = []
    for k in range(10):
        chunk = [v for v in values[k * n // 10 : (k + 1) * n // 10] if v is not None and math.isfinite(v)]
        out.append(float(np.mean(chunk)) if chunk else None)
    return out


def mean_surprise(log: EpisodeLog) -> list[float | None]:
    """Per step mean surprise over agents that report one."""
    out = []
    for r in log.records:
        vals = [v for v in r.surprise.values() if v is not None]
        out.append(float(np.mean(vals)) if vals else None)
    return out


def summarize(log: EpisodeLog, kind: str, window: int = RECOVERY_WINDOW) -> RunSummary:
    records = log.records
    ids = sorted({k for r in records for k in r.slo_ok})
    slo_rates = {k: float(np.mean([r.slo_ok[k] for r in records if k in r.slo_ok])) for k in ids}
    runs = {k: violation_runs([r.slo_ok[k] for r in records if k in r.slo_ok]) for k in ids}
    actions = Counter(enc.split(":")[0] for r in records for enc in r.actions.values())
    rates = step_rates(log)
    recovery = {}
    for t in sorted({ev.t for ev in log.scenario.slo_schedule if ev.t > 0}):
        recovery[str(t)] = recovery_time(rates, t, window)
    return RunSummary(
        scenario=log.scenario.name,
        kind=kind,
        seed=log.seed,
        horizon=len(records),
        fulfillment_rate=log.fulfillment_rate(),
        slo_rates=slo_rates,
        violation_runs=runs,
        action_counts=dict(sorted(actions.items())),
        surprise_deciles=decile_means(mean_surprise(log)),
        recovery=recovery,
        rejected_actions=sum(len(r.rejected) for r in records),
        agent_errors=sum(len(r.errors) for r in records),
    )


def slos_at(scenario: Scenario, t: int) -> dict[str, Slo]:
    """SLO definitions in force at step ``t`` after scheduled changes."""
    current = {s.id: s for s in scenario.slos}
    for ev in scenario.slo_schedule:
        if ev.t <= t:
            current.update({s.id: s for s in ev.slos})
    return current


def fulfillment_from_csv(text: str, scenario: Scenario) -> float:
    """Recompute the fulfillment rate from the raw metric columns."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames[: len(CSV_COLUMNS)]) != CSV_COLUMNS:
        raise ValueError("unexpected CSV columns")
    ok = total = 0
    for row in reader:
        t = int(row["t"])
        for slo in slos_at(scenario, t).values():
            if slo.service_id != row["service"]:
                continue
            ok += evaluate_slo(slo, float(row[slo.metric]))
            total += 1
    return ok / total if total else 1.0
