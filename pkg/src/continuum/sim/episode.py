"""Episode loop and the per-step log."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from collections.abc import Mapping
from dataclasses import dataclass, field

from ..composition import IdentificationMap, incorporate_summaries, publish_summary
from ..rng import Streams
from ..services import Action
from .scenario import Scenario
from .world import WorldState, apply_slo_events, initial_world, observe_all, step

log = logging.getLogger(__name__)

CSV_VERSION = 1
CSV_COLUMNS = (
    "t",
    "agent",
    "service",
    "action",
    "rejected",
    "slo_ok",
    "surprise",
    "load",
    "latency_ms",
    "throughput_rps",
    "energy_j",
    "quality_level",
    "replicas",
    "node",
    "levels",
)


@dataclass
class StepRecord:
    t: int
    world: dict
    observations: dict[str, dict[str, int]]
    actions: dict[str, str]
    slo_ok: dict[str, bool]
    surprise: dict[str, float | None]
    rejected: dict[str, str] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    efe: dict[str, list[dict]] = field(default_factory=dict)
    slo_changed: bool = False
    wall: dict[str, float] = field(default_factory=dict)  # seconds per agent; not part of the log's identity


class EpisodeLog:
    """Append-only list of step records for one run."""

    def __init__(self, scenario: Scenario, seed: int, agent_kinds: Mapping[str, str]):
        self.scenario = scenario
        self.seed = seed
        self.agent_kinds = dict(agent_kinds)
        self._records: list[StepRecord] = []

    def append(self, record: StepRecord):
        if self._records and record.t != self._records[-1].t + 1:
            raise ValueError("records must advance one step at a time")
        self._records.append(record)

    @property
    def records(self) -> tuple[StepRecord, ...]:
        return tuple(self._records)

    def __len__(self):
        return len(self._records)

    def fulfillment_rate(self) -> float:
        flags = [ok for r in self._records for ok in r.slo_ok.values()]
        return sum(flags) / len(flags) if flags else 1.0

    def summary(self, windows: int = 10) -> dict:
        """Fulfillment rate, action counts and mean surprise per window."""
        counts: dict[str, int] = {}
        for r in self._records:
            for enc in r.actions.values():
                kind = enc.split(":")[0]
                counts[kind] = counts.get(kind, 0) + 1
        n = len(self._records)
        by_window = []
        for k in range(windows):
            vals = [
                v
                for r in self._records[k * n // windows : (k + 1) * n // windows]
                for v in r.surprise.values()
                if v is not None and math.isfinite(v)
            ]
            by_window.append(sum(vals) / len(vals) if vals else None)
        return {
            "csv_version": CSV_VERSION,
            "scenario": self.scenario.name,
            "seed": self.seed,
            "horizon": n,
            "agents": dict(sorted(self.agent_kinds.items())),
            "fulfillment_rate": self.fulfillment_rate(),
            "action_counts": dict(sorted(counts.items())),
            "mean_surprise_by_window": by_window,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def agent_for(self, sid: str) -> str:
        for aid, b in self.scenario.agents.items():
            if b.service_id == sid:
                return aid
        return ""

    def to_csv(self, efe: bool = False) -> str:
        buf = io.StringIO()
        cols = CSV_COLUMNS + (("efe",) if efe else ())
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        owner = {slo.id: slo.service_id for slo in self.scenario.slos}
        for r in self._records:
            for sid in sorted(r.world):
                aid = self.agent_for(sid)
                w = r.world[sid]
                ids = sorted(k for k in r.slo_ok if owner[k] == sid)
                s = r.surprise.get(aid)
                row = [
                    r.t,
                    aid,
                    sid,
                    r.actions.get(aid, ""),
                    r.rejected.get(aid, ""),
                    ";".join(f"{k}={int(r.slo_ok[k])}" for k in ids),
                    "" if s is None else fmt(s),
                    fmt(w["load"]),
                    fmt(w["latency_ms"]),
                    fmt(w["throughput_rps"]),
                    fmt(w["energy_j"]),
                    fmt(w["quality_level"]),
                    w["replicas"],
                    w["node"] or "",
                    ";".join(f"{k}={v}" for k, v in sorted(w["levels"].items())),
                ]
                if efe:
                    row.append(
                        ";".join(f"{b['action']}:{fmt(b['pragmatic'])}:{fmt(b['epistemic'])}" for b in r.efe.get(aid, []))
                    )
                writer.writerow(row)
        return buf.getvalue()


def fmt(x: float) -> str:
    """Decimal text that round-trips exactly (repr of the float)."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _call(agent, method: str, errors: dict, aid: str, *args):
    fn = getattr(agent, method, None)
    if fn is None:
        return None
    try:
        return fn(*args)
    except Exception as exc:  # agent faults never abort the episode
        errors.setdefault(aid, f"{method}: {type(exc).__name__}: {exc}")
        log.debug("agent %s failed in %s", aid, method, exc_info=True)
        return None


def run_episode(
    scenario: Scenario,
    agents: Mapping[str, object],
    seed: int | None = None,
    coordination: bool | None = None,
    record_efe: bool = False,
) -> EpisodeLog:
    """Run ``scenario.horizon`` synchronous steps.

    Per step: apply scheduled SLO changes, observe, run the coordination round
    (observe -> propose -> publish -> incorporate) when enabled, let each
    agent perceive and act in agent-id order, log, then advance the world.
    """
    missing = set(scenario.agents) - set(agents)
    if missing:
        raise ValueError(f"no agent instance for bindings {sorted(missing)}")
    seed = scenario.seed if seed is None else seed
    if coordination is None:
        coordination = scenario.coordination.enabled
    streams = Streams(seed)
    idmap = IdentificationMap(scenario.coordination.identifications) if coordination else None
    world: WorldState = initial_world(scenario, streams, coordination)
    order = sorted(scenario.agents)
    kinds = {aid: getattr(agents[aid], "kind", type(agents[aid]).__name__) for aid in order}
    episode = EpisodeLog(scenario, seed, kinds)
    event_times = {ev.t for ev in scenario.slo_schedule}

    for t in range(scenario.horizon):
        world = apply_slo_events(world)
        errors: dict[str, str] = {}
        changed = t in event_times
        if changed and t > 0:
            current = {slo.id: slo for sid in world.slos for slo in world.slos[sid]}
            for aid in order:
                _call(agents[aid], "on_slo_change", errors, aid, current)
        obs = observe_all(world)
        wall = {aid: 0.0 for aid in order}
        for aid in order:
            _call(agents[aid], "bind_world", errors, aid, world, streams)

        if coordination:
            for aid in order:
                t0 = time.perf_counter()
                _call(agents[aid], "observe", errors, aid, obs[aid])
                _call(agents[aid], "propose", errors, aid, streams.gen("agent-propose", aid, t))
                wall[aid] += time.perf_counter() - t0
            summaries = []
            for aid in order:
                if getattr(agents[aid], "last_obs", None) is not None:
                    summaries.append(publish_summary(agents[aid], idmap, t))
            for aid in order:
                t0 = time.perf_counter()
                _call(incorporate_summaries, "__call__", errors, aid, agents[aid], summaries)
                wall[aid] += time.perf_counter() - t0

        actions: dict[str, Action] = {}
        surprises: dict[str, float | None] = {}
        efe: dict[str, list[dict]] = {}
        for aid in order:
            agent = agents[aid]
            t0 = time.perf_counter()
            surprises[aid] = _call(agent, "perceive", errors, aid, obs[aid])
            action = _call(agent, "act", errors, aid, streams.gen("agent", aid, t))
            wall[aid] += time.perf_counter() - t0
            if not isinstance(action, Action):
                action = Action("no_op", aid, scenario.agents[aid].service_id)
            actions[aid] = action
            if record_efe and getattr(agent, "last_breakdowns", None):
                efe[aid] = [b.as_dict() for b in agent.last_breakdowns]

        record = StepRecord(
            t=t,
            world=world.summary(),
            observations={aid: dict(obs[aid].values) for aid in order},
            actions={aid: actions[aid].encoding for aid in order},
            slo_ok=world.slo_flags(),
            surprise=surprises,
            errors=errors,
            efe=efe,
            slo_changed=changed,
            wall=wall,
        )
        world, _ = step(world, actions, streams)
        record.rejected = dict(world.rejected)
        episode.append(record)
    return episode
