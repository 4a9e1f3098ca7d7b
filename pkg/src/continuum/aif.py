"""Active-inference service agents.

Each agent wraps one service: it perceives a scoped observation, scores its
surprise under its Bayesian network, folds the observation into the Cpt
counts, and picks the permitted action with minimal expected free energy
(pragmatic SLO value plus beta-weighted Dirichlet information gain).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma

from .bayesnet import BayesNet, Cpt, ImpossibleEvidence, Variable, infer, log_evidence, surprise
from .bayesnet.blanket import markov_blanket
from .bayesnet.learning import reset_counts, update_parameters
from .services import Action, Slo
from .sim.scope import AgentSpec, slo_var

log = logging.getLogger(__name__)

ACTION_VAR = "action"
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Preferences:
    """Log-preferences ln C over each SLO indicator (index 0 = fulfilled)."""

    log_c: Mapping[str, np.ndarray]
    temperature: float

    def gap(self, var: str) -> float:
        row = self.log_c[var]
        return float(row[0] - row[1])


def preference_distribution(slos: Iterable[Slo], w: float = 2.0, names: Mapping[str, str] | None = None) -> Preferences:
    """ln C(v) = +w*weight if v is 'fulfilled', -w*weight otherwise.

    ``names`` maps SLO id to indicator variable name (default ``slo:<id>``).
    """
    slos = list(slos)
    if not slos:
        raise ValueError("preferences need at least one SLO")
    if not w > 0:
        raise ValueError("preference temperature must be > 0")
    names = dict(names or {})
    log_c = {}
    for slo in slos:
        var = names.get(slo.id, slo_var(slo.id))
        log_c[var] = np.array([w * slo.weight, -w * slo.weight])
    return Preferences(log_c, w)


@dataclass(frozen=True)
class EfeBreakdown:
    action: Action
    pragmatic: float
    epistemic: float
    beta: float
    total: float

    @classmethod
    def make(cls, action: Action, pragmatic: float, epistemic: float, beta: float) -> "EfeBreakdown":
        return cls(action, pragmatic, epistemic, beta, pragmatic + beta * epistemic)

    def as_dict(self) -> dict:
        return {
            "action": self.action.encoding,
            "pragmatic": self.pragmatic,
            "epistemic": self.epistemic,
            "beta": self.beta,
            "total": self.total,
        }


@dataclass
class AifConfig:
    beta: float = 1.0
    beta_decay: float = 0.995
    beta_floor: float = 0.05
    tau: float = 0.0
    pref_temperature: float = 2.0
    act_every_k: int = 1
    batch_size: int = 1
    count_decay: float = 1.0

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> "AifConfig":
        data = dict(data or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown AIF hyperparameters {sorted(unknown)}")
        cfg = cls(**data)
        if cfg.beta < 0 or cfg.tau < 0 or cfg.act_every_k < 1 or cfg.batch_size < 1:
            raise ValueError("invalid AIF hyperparameters")
        if not 0 < cfg.count_decay <= 1:
            raise ValueError("count_decay must be in (0, 1]")
        return cfg


def dirichlet_gain(counts: np.ndarray) -> np.ndarray:
    """KL(Dir(a + e_v) || Dir(a)) for every row and child value v.

    Closed form: ln a0 - ln a_v + psi(a_v + 1) - psi(a0 + 1). Cells with zero
    count (hand-set impossible outcomes) get zero gain.
    """
    a = np.asarray(counts, dtype=float)
    a0 = a.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.log(a0) - np.log(a) + digamma(a + 1.0) - digamma(a0 + 1.0)
    gain = np.where(a > 0, gain, 0.0)
    return np.maximum(gain, 0.0)


# -- model template ------------------------------------------------------

STATE_SOURCES = ("replicas", "node")


def _is_state(decl) -> bool:
    return decl.source in STATE_SOURCES or decl.source.startswith("param:")


def prev_name(name: str) -> str:
    return f"prev_{name}"


def build_model(spec: AgentSpec) -> BayesNet:
    """Laplace-prior network over the agent's scope plus lagged and action nodes.

    Structure: prev_load -> load; (prev_x, action) -> x for every controllable
    state x; (load, state, remote inputs) -> each metric; metric -> its SLO
    indicator (quality SLOs hang off the quality parameter); remote SLO
    indicators depend on load and the agent's own state.
    """
    decls = {d.name: d for d in spec.variables}
    variables: list[Variable] = [
        Variable(ACTION_VAR, max(len(spec.actions), 2), "action", labels=_action_labels(spec.actions))
    ]
    edges: list[tuple[str, str]] = []
    state = [d.name for d in spec.variables if _is_state(d)]
    metrics = [
        d.name for d in spec.variables if not _is_state(d) and d.source != "load" and not d.source.startswith("slo:")
    ]
    remote_inputs = [d.name for d in spec.remote if d.variable.role != "slo_indicator"]
    remote_slos = [d.name for d in spec.remote if d.variable.role == "slo_indicator"]

    load = decls["load"].variable
    variables.append(Variable(prev_name("load"), load.card, "context", load.cuts))
    variables.append(load)
    edges.append((prev_name("load"), "load"))
    for name in state:
        var = decls[name].variable
        variables.append(Variable(prev_name(name), var.card, "context", var.cuts, var.labels))
        variables.append(var)
        edges += [(prev_name(name), name), (ACTION_VAR, name)]
    for d in spec.remote:
        variables.append(d.variable)
    drivers = ["load"] + state + remote_inputs
    for m in metrics:
        variables.append(decls[m].variable)
        edges += [(p, m) for p in drivers]
    service = spec.service
    for slo in spec.slos:
        name = slo_var(slo.id)
        variables.append(decls[name].variable)
        if slo.metric == "quality_level":
            edges.append((service.quality_param, name))
        else:
            edges.append((slo.metric, name))
    for name in remote_slos:
        edges += [(p, name) for p in ["load"] + state]
    return BayesNet.from_edges(variables, edges)


def _action_labels(actions: Sequence[Action]) -> tuple[str, ...]:
    labels = tuple(a.encoding for a in actions)
    if len(labels) < 2:
        labels = labels + ("_unused",)
    return labels


# -- agent ---------------------------------------------------------------


@dataclass
class BeliefState:
    observation: Mapping[str, int]
    posterior: object  # Joint over unobserved model variables, or None
    model: BayesNet


class AifAgent:
    """Action-perception loop around a service's Bayesian network."""

    kind = "aif"

    def __init__(self, spec: AgentSpec, config: AifConfig | None = None, model: BayesNet | None = None):
        self.spec = spec
        self.id = spec.id
        self.config = config or AifConfig()
        self.actions: tuple[Action, ...] = spec.actions
        self._action_index = {a.encoding: i for i, a in enumerate(self.actions)}
        self.model = model if model is not None else build_model(spec)
        self.state_vars = [d.name for d in spec.variables if _is_state(d)]
        self.remote_inputs = [d.name for d in spec.remote if d.variable.role != "slo_indicator"]
        self._remote_by_source = {(d.owner, d.remote_name): d.name for d in spec.remote}
        self._remote_slo_var = {(d.owner, d.source[4:]): d.name for d in spec.remote if d.source.startswith("slo:")}
        self.slos: dict[str, Slo] = {s.id: s for s in spec.slos}
        self.remote_slos: dict[str, Slo] = dict(spec.remote_slos)
        self.preferences = self._make_preferences()
        outside = sorted(v for v in self.preferences.log_c if v not in self.model.variables)
        if outside:
            raise ValueError(f"agent {self.id!r}: SLO indicators outside the model scope: {outside}")
        self.beta = self.config.beta
        self.acting_steps = 0
        self.last_obs = None
        self.prev_values: dict[str, int] | None = None
        self.last_action: Action = Action("no_op", self.id, spec.service.id)
        self.intent: Action | None = None
        self.boundary: dict[str, int] = {}
        self.neighbor_intents: dict[str, str] = {}
        self.warnings: list[str] = []
        self.batch: list[dict[str, int]] = []
        self.last_surprise: float | None = None
        self.last_breakdowns: list[EfeBreakdown] = []
        self._gains: dict[str, np.ndarray] | None = None
        self._gain_model = None

    # preferences -------------------------------------------------------

    def _make_preferences(self) -> Preferences:
        slos = list(self.slos.values()) + list(self.remote_slos.values())
        names = {s.id: slo_var(s.id) for s in self.slos.values()}
        names.update({slo.id: var for var, slo in self.remote_slos.items()})
        return preference_distribution(slos, self.config.pref_temperature, names)

    def on_slo_change(self, slos: Mapping[str, Slo]):
        """Regenerate preferences; reset indicator Cpts whose definition moved.

        Only the changed indicators restart from the prior: their meaning
        (threshold or comparator) changed, while the learned dynamics of
        metrics and actions stay valid.
        """
        changed = []
        for sid, slo in slos.items():
            if sid in self.slos and self.slos[sid] != slo:
                if _definition(self.slos[sid]) != _definition(slo):
                    changed.append(slo_var(sid))
                self.slos[sid] = slo
        for var, old in list(self.remote_slos.items()):
            new = slos.get(old.id)
            if new is not None and new != old:
                if _definition(old) != _definition(new):
                    changed.append(var)
                self.remote_slos[var] = new
        self.preferences = self._make_preferences()
        if changed:
            self.model = reset_counts(self.model, [c for c in changed if c in self.model.variables])
            self.batch = []

    # perception --------------------------------------------------------

    def observe(self, obs):
        """Store the current observation without learning (coordination pre-pass)."""
        if obs.scope != self.id:
            raise ValueError(f"observation for {obs.scope!r} delivered to {self.id!r}")
        if self.last_obs is None or obs.t != self.last_obs.t:
            self.boundary = {}
            self.neighbor_intents = {}
        self.last_obs = obs

    def completed_assignment(self, obs) -> dict[str, int]:
        values = dict(obs.values)
        prev = self.prev_values if self.prev_values is not None else values
        out = {ACTION_VAR: self._action_index.get(self.last_action.encoding, 0)}
        for name in ("load", *self.state_vars):
            if name in prev:
                out[prev_name(name)] = prev[name]
        out.update(values)
        out.update(self.boundary)
        return out

    def perceive(self, obs) -> float:
        """Surprise of the completed observation, then a parameter update."""
        if self.last_obs is None or self.last_obs is not obs:
            self.observe(obs)
        full = self.completed_assignment(obs)
        assignment = {k: v for k, v in full.items() if k in self.model.variables}
        if len(assignment) == len(self.model.variables):
            s = surprise(self.model, assignment)
            self.batch.append(assignment)
            if len(self.batch) >= self.config.batch_size:
                self.model = update_parameters(self.model, self.batch, self.config.count_decay)
                self.batch = []
        else:
            s = -log_evidence(self.model, assignment)
        self.prev_values = dict(obs.values)
        self.last_surprise = s
        return s

    def belief(self) -> BeliefState:
        evidence = self.decision_evidence(None)
        obs = dict(self.last_obs.values) if self.last_obs is not None else {}
        unobserved = [
            n for n in self.spec.scope + tuple(d.name for d in self.spec.remote) if n not in obs and n not in self.boundary
        ]
        posterior = infer(self.model, unobserved, evidence) if unobserved else None
        return BeliefState(obs, posterior, self.model)

    # decision ----------------------------------------------------------

    def decision_evidence(self, action: Action | None) -> dict[str, int]:
        """Clamp current state as the lagged context (and the candidate action)."""
        values = self.last_obs.values
        ev = {}
        for name in ("load", *self.state_vars):
            if name in values and prev_name(name) in self.model.variables:
                ev[prev_name(name)] = values[name]
        for name in self.remote_inputs:
            if name in self.boundary:
                ev[name] = self.boundary[name]
        if action is not None:
            ev[ACTION_VAR] = self._action_index[action.encoding]
        return ev

    def gains(self) -> dict[str, np.ndarray]:
        if self._gain_model is not self.model:
            self._gains = {n: dirichlet_gain(c.counts) for n, c in self.model.cpts.items()}
            self._gain_model = self.model
        return self._gains

    def markov_blanket(self):
        targets = [n for n in self.model.variables if self.model.variables[n].role == "slo_indicator"]
        return markov_blanket(self.model, targets)

    def is_acting_step(self, t: int) -> bool:
        return t % self.config.act_every_k == 0

    def score_all(self) -> list[EfeBreakdown]:
        return [expected_free_energy(self, a) for a in self.actions]

    def propose(self, rng=None) -> Action:
        """Tentative action from the current model (published as intent)."""
        if self.last_obs is None or not self.is_acting_step(self.last_obs.t):
            self.intent = Action("no_op", self.id, self.spec.service.id)
        else:
            self.intent = select_action(self.score_all(), 0.0, None)
        return self.intent

    def act(self, rng=None) -> Action:
        if self.last_obs is None:
            raise RuntimeError("act() before any observation")
        if not self.is_acting_step(self.last_obs.t) or len(self.actions) == 1:
            action = Action("no_op", self.id, self.spec.service.id)
            self.last_breakdowns = []
        else:
            self.last_breakdowns = self.score_all()
            action = select_action(self.last_breakdowns, self.config.tau, rng)
            self.acting_steps += 1
            self.beta = max(self.config.beta_floor, self.config.beta * self.config.beta_decay**self.acting_steps)
        self.last_action = action
        return action

    def step(self, obs, rng=None) -> Action:
        """perceive, then score and select (no_op off-cadence)."""
        self.perceive(obs)
        return self.act(rng)


def _definition(slo: Slo):
    return (slo.metric, slo.comparator, slo.threshold)


def expected_free_energy(agent: AifAgent, action: Action) -> EfeBreakdown:
    """One-step expected free energy of ``action``.

    pragmatic = -sum_o q(o|a) ln C(o) over the SLO indicators,
    epistemic = -sum_o q(o|a) IG(o, a) with IG the summed Dirichlet KL gain of
    the Cpt rows the hypothetical observation would update.
    """
    if action.encoding not in agent._action_index:
        raise ValueError(f"action {action.encoding} not permitted for {agent.id}")
    net = agent.model
    evidence = agent.decision_evidence(action)
    query = [n for n in net.names if n not in evidence]
    q = infer(net, query, evidence)
    if isinstance(q, ImpossibleEvidence):
        return EfeBreakdown(action, math.inf, 0.0, agent.beta, math.inf)

    pragmatic = 0.0
    for var, log_c in agent.preferences.log_c.items():
        if var in evidence:
            pragmatic -= float(log_c[evidence[var]])
        elif var in net.variables:
            pragmatic -= float(q.marginal(var) @ log_c)

    info_gain = 0.0
    for name, gain in agent.gains().items():
        family = net.cpts[name].parents + (name,)
        idx = tuple(evidence[v] if v in evidence else slice(None) for v in family)
        reduced = gain[idx]
        free = [v for v in family if v not in evidence]
        if free:
            info_gain += float(np.sum(q.marginal_over(free) * reduced))
        else:
            info_gain += float(reduced)
    return EfeBreakdown.make(action, pragmatic, -info_gain, agent.beta)


def select_action(breakdowns: Sequence[EfeBreakdown], tau: float = 0.0, rng: np.random.Generator | None = None) -> Action:
    """tau == 0: argmin total, ties broken by the smaller action encoding;
    tau > 0: sample from softmax(-total / tau)."""
    if not breakdowns:
        raise ValueError("no candidate actions")
    ordered = sorted(breakdowns, key=lambda b: b.action.encoding)
    totals = np.array([b.total for b in ordered], dtype=float)
    if tau <= 0 or rng is None:
        best = float(np.min(totals))
        for b in ordered:
            if b.total <= best + TIE_TOL * max(1.0, abs(best)):
                return b.action
    finite = np.isfinite(totals)
    if not finite.any():
        return ordered[0].action
    logits = np.where(finite, -(totals - np.min(totals[finite])) / tau, -np.inf)
    probs = np.exp(logits)
    probs /= probs.sum()
    return ordered[int(rng.choice(len(ordered), p=probs))].action


def softmax_probabilities(breakdowns: Sequence[EfeBreakdown], tau: float) -> dict[str, float]:
    ordered = sorted(breakdowns, key=lambda b: b.action.encoding)
    totals = np.array([b.total for b in ordered])
    logits = -(totals - totals.min()) / tau
    p = np.exp(logits)
    p /= p.sum()
    return {b.action.encoding: float(x) for b, x in zip(ordered, p)}
