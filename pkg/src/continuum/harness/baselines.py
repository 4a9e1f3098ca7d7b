"""Reference agents sharing the AIF agent's step contract.

Every agent exposes ``perceive(obs) -> surprise | None`` and
``act(rng) -> Action``; the episode runner also calls the optional hooks
``observe``, ``propose``, ``bind_world`` and ``on_slo_change``.
"""

from __future__ import annotations

from collections.abc import Mapping

from ..aif import AifAgent, AifConfig
from ..services import Action
from ..sim.scenario import AGENT_KINDS
from ..sim.scope import AgentSpec, slo_var
from ..sim.world import WorldState, apply_slo_events, step

BASELINE_KINDS = ("random", "threshold", "oracle_greedy", "static")


class BaselineAgent:
    kind = "baseline"

    def __init__(self, spec: AgentSpec, config: Mapping | None = None):
        self.spec = spec
        self.id = spec.id
        self.config = dict(config or {})
        self.actions = spec.actions
        self.last_obs = None
        self.act_every_k = int(self.config.get("act_every_k", 1))
        if self.act_every_k < 1:
            raise ValueError("act_every_k must be >= 1")

    def no_op(self) -> Action:
        return Action("no_op", self.id, self.spec.service.id)

    def observe(self, obs):
        self.last_obs = obs

    def perceive(self, obs):
        self.last_obs = obs
        return None

    def act(self, rng=None) -> Action:
        if self.last_obs is None:
            raise RuntimeError("act() before any observation")
        if self.last_obs.t % self.act_every_k:
            return self.no_op()
        return self.choose(rng)

    def choose(self, rng) -> Action:
        return self.no_op()


class StaticAgent(BaselineAgent):
    """Keeps the initial configuration: always ``no_op``."""

    kind = "static"


class RandomAgent(BaselineAgent):
    """Uniform over the permitted actions (no_op included)."""

    kind = "random"

    def choose(self, rng) -> Action:
        if rng is None:
            raise ValueError("random baseline needs an rng")
        return self.actions[int(rng.integers(len(self.actions)))]


def default_rules(spec: AgentSpec) -> list[dict]:
    """One rule per SLO: scale up for latency/throughput, down for energy,
    and raise the quality parameter to the SLO's level for quality SLOs."""
    permitted = {a.encoding for a in spec.actions}
    rules = []
    for slo in spec.slos:
        if slo.metric in ("latency_ms", "throughput_rps"):
            act = "scale:+1"
        elif slo.metric == "energy_j":
            act = "scale:-1"
        else:
            levels = spec.service.params[spec.service.quality_param]
            idx = min(max(int(slo.threshold + (0 if float(slo.threshold).is_integer() else 1)), 0), len(levels) - 1)
            act = f"set_param:{spec.service.quality_param}:{levels[idx].name}"
        if act in permitted:
            rules.append({"slo": slo.id, "action": act})
    return rules


class ThresholdAgent(BaselineAgent):
    """Fires the first rule whose SLO is currently violated."""

    kind = "threshold"

    def __init__(self, spec: AgentSpec, config: Mapping | None = None):
        super().__init__(spec, config)
        rules = self.config.get("rules")
        if rules is None:
            rules = default_rules(spec)
        permitted = {a.encoding: a for a in spec.actions}
        slo_ids = {s.id for s in spec.slos}
        self.rules: list[tuple[str, Action]] = []
        for rule in rules:
            if not isinstance(rule, Mapping) or set(rule) != {"slo", "action"}:
                raise ValueError(f"malformed threshold rule {rule!r}: needs exactly 'slo' and 'action'")
            if rule["slo"] not in slo_ids:
                raise ValueError(f"threshold rule references SLO {rule['slo']!r} outside the agent's service")
            action = Action.parse(str(rule["action"]), self.id, spec.service.id)
            if action.encoding not in permitted:
                raise ValueError(f"threshold rule action {action.encoding!r} is not permitted")
            self.rules.append((rule["slo"], permitted[action.encoding]))

    def choose(self, rng) -> Action:
        values = self.last_obs.values
        for slo_id, action in self.rules:
            if values.get(slo_var(slo_id)) == 1:
                return action
        return self.no_op()


class OracleGreedyAgent(BaselineAgent):
    """Cheating reference: one-step lookahead on a clone of the true world.

    Each candidate is simulated with the same random streams while every
    other agent does ``no_op``; the action maximizing the weighted number of
    fulfilled SLOs at the next step wins, ties going to ``no_op`` and then to
    the smaller encoding. Only usable inside the simulator.
    """

    kind = "oracle_greedy"

    def __init__(self, spec: AgentSpec, config: Mapping | None = None):
        super().__init__(spec, config)
        self.world: WorldState | None = None
        self.streams = None

    def bind_world(self, world: WorldState, streams):
        self.world = world
        self.streams = streams

    def score(self, action: Action) -> float:
        joint = {aid: Action("no_op", aid, s.service.id) for aid, s in self.world.agents.items()}
        joint[self.id] = action
        nxt, _ = step(self.world, joint, self.streams)
        if self.id in nxt.rejected:
            return float("-inf")
        nxt = apply_slo_events(nxt)
        weights = {slo.id: slo.weight for sid in nxt.slos for slo in nxt.slos[sid]}
        return sum(weights[k] for k, ok in nxt.slo_flags().items() if ok)

    def choose(self, rng) -> Action:
        if self.world is None:
            raise RuntimeError("oracle_greedy needs bind_world() from the simulator")
        candidates = sorted(self.actions, key=lambda a: (a.kind != "no_op", a.encoding))
        best, best_score = candidates[0], self.score(candidates[0])
        for a in candidates[1:]:
            s = self.score(a)
            if s > best_score + 1e-12:
                best, best_score = a, s
        return best


_CLASSES = {
    "static": StaticAgent,
    "random": RandomAgent,
    "threshold": ThresholdAgent,
    "oracle_greedy": OracleGreedyAgent,
}


def make_baseline(kind: str, spec: AgentSpec, config: Mapping | None = None) -> BaselineAgent:
    if kind not in _CLASSES:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    return _CLASSES[kind](spec, config)


def make_agent(kind: str, spec: AgentSpec, config: Mapping | None = None):
    """Any agent kind accepted in a scenario binding."""
    if kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {kind!r}")
    config = dict(config or {})
    if kind == "aif":
        hyper = dict(config.get("hyperparameters") or {})
        if "act_every_k" in config:
            hyper.setdefault("act_every_k", config["act_every_k"])
        return AifAgent(spec, AifConfig.from_mapping(hyper))
    return make_baseline(kind, spec, config)
