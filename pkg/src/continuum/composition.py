"""Composing agents' networks and exchanging coordination summaries."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .bayesnet import BayesNet, Cpt, ImpossibleEvidence, Variable, infer
from .bayesnet.network import is_acyclic

log = logging.getLogger(__name__)

Ref = tuple[str, str]  # (model or agent id, variable name)


class CompositionError(ValueError):
    pass


class IdentificationMap:
    """Declared-identical variables across models, closed under symmetry and
    transitivity. The first member (sorted) of each class names it."""

    def __init__(self, pairs: Iterable[tuple[Ref, Ref]] = ()):
        self.pairs = tuple((tuple(a), tuple(b)) for a, b in pairs)
        parent: dict[Ref, Ref] = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups: dict[Ref, set[Ref]] = {}
        for x in list(parent):
            groups.setdefault(find(x), set()).add(x)
        self.classes: list[frozenset[Ref]] = [frozenset(g) for _, g in sorted(groups.items())]
        self._class_of = {m: c for c in self.classes for m in c}

    def class_of(self, ref: Ref) -> frozenset[Ref] | None:
        return self._class_of.get(tuple(ref))

    def counterparts(self, ref: Ref) -> list[Ref]:
        cls = self.class_of(ref)
        return sorted(m for m in cls if m != tuple(ref)) if cls else []

    def shared(self, owner: str) -> list[str]:
        return sorted(v for a, v in self._class_of if a == owner)

    def __bool__(self):
        return bool(self.pairs)


@dataclass(frozen=True)
class ComposedModel:
    net: BayesNet
    provenance: Mapping[str, tuple[str, ...]]  # merged variable -> owning model ids
    names: Mapping[Ref, str]  # (model id, local variable) -> merged variable

    def name(self, model_id: str, var: str) -> str:
        return self.names[(model_id, var)]


def compose(
    models: Sequence[BayesNet] | Mapping[str, BayesNet],
    idmap: IdentificationMap | Iterable[tuple[Ref, Ref]] = (),
    owners: Mapping[str, str] | None = None,
) -> ComposedModel:
    """Merge networks along identified variables.

    Each merged class keeps the Cpt of its owner: by default the model in
    which the variable has parents (the producing side); ``owners`` maps a
    class's merged name to a model id to override. Unidentified variables are
    renamed ``<model>.<var>`` only when names would collide across models.
    """
    if not isinstance(models, Mapping):
        models = {str(i): m for i, m in enumerate(models)}
    if not isinstance(idmap, IdentificationMap):
        idmap = IdentificationMap(idmap)
    owners = dict(owners or {})
    for a, b in idmap.pairs:
        for mid, var in (a, b):
            if mid not in models or var not in models[mid].variables:
                raise CompositionError(f"identification references unknown variable {mid}.{var}")

    # merged names
    names: dict[Ref, str] = {}
    for cls in idmap.classes:
        base = min(cls)
        merged = base[1] if all(m[1] == base[1] for m in cls) else f"{base[0]}.{base[1]}"
        for m in cls:
            names[m] = merged
    counts: dict[str, int] = {}
    for mid, net in models.items():
        for v in net.variables:
            if (mid, v) not in names:
                counts[v] = counts.get(v, 0) + 1
    taken = set(names.values())
    for mid, net in models.items():
        for v in net.variables:
            if (mid, v) not in names:
                names[(mid, v)] = v if counts[v] == 1 and v not in taken else f"{mid}.{v}"

    # classes: members, cardinality check, owner choice
    members: dict[str, list[Ref]] = {}
    for ref, merged in names.items():
        members.setdefault(merged, []).append(ref)
    variables: dict[str, Variable] = {}
    owner_of: dict[str, Ref] = {}
    for merged, refs in sorted(members.items()):
        refs = sorted(refs)
        cards = {models[m].card(v) for m, v in refs}
        if len(cards) > 1:
            detail = ", ".join(f"{m}.{v}={models[m].card(v)}" for m, v in refs)
            raise CompositionError(f"cardinality mismatch in class {merged!r}: {detail}")
        if merged in owners:
            chosen = [r for r in refs if r[0] == owners[merged]]
            if not chosen:
                raise CompositionError(f"owner {owners[merged]!r} has no member of class {merged!r}")
            owner = chosen[0]
        else:
            with_parents = [r for r in refs if models[r[0]].parents(r[1])]
            owner = with_parents[0] if with_parents else refs[0]
        owner_of[merged] = owner
        src = models[owner[0]].variables[owner[1]]
        variables[merged] = Variable(merged, src.card, src.role, src.cuts, src.labels)

    cpts = []
    edges = []
    for merged, (mid, v) in sorted(owner_of.items()):
        cpt = models[mid].cpts[v]
        parents = tuple(names[(mid, p)] for p in cpt.parents)
        cpts.append(Cpt(merged, parents, cpt.counts, allow_zero=cpt.allow_zero))
        edges += [(p, merged) for p in parents]
    if not is_acyclic(list(variables), edges):
        offenders = sorted(m for m in members if len(members[m]) > 1)
        raise CompositionError(f"composition introduces a cycle through identified classes {offenders}")
    net = BayesNet([variables[n] for n in sorted(variables)], cpts)
    provenance = {merged: tuple(sorted({m for m, _ in refs})) for merged, refs in members.items()}
    return ComposedModel(net, provenance, names)


def global_slo_estimate(composed: ComposedModel | BayesNet, evidence: Mapping[str, int]) -> dict[str, object]:
    """Posterior P(fulfilled) for every SLO indicator not clamped by evidence.

    Indicators fixed by the evidence report 1.0/0.0 directly; impossible
    evidence yields an ``ImpossibleEvidence`` marker per indicator.
    """
    net = composed.net if isinstance(composed, ComposedModel) else composed
    indicators = [n for n, v in net.variables.items() if v.role == "slo_indicator"]
    out: dict[str, object] = {}
    for name in indicators:
        if name in evidence:
            post = infer(net, [], {k: v for k, v in evidence.items()})
            out[name] = post if isinstance(post, ImpossibleEvidence) else (1.0 if int(evidence[name]) == 0 else 0.0)
            continue
        post = infer(net, [name], evidence)
        out[name] = post if isinstance(post, ImpossibleEvidence) else float(post.table[0])
    return out


# -- summaries -----------------------------------------------------------


@dataclass(frozen=True)
class CoordinationSummary:
    issuer: str
    t: int
    boundary: Mapping[str, int] = field(default_factory=dict)
    intent: str = "no_op"
    constraints: Mapping[str, bool] = field(default_factory=dict)

    def to_text(self) -> str:
        return json.dumps(
            {
                "format_version": 1,
                "issuer": self.issuer,
                "t": self.t,
                "boundary": dict(sorted(self.boundary.items())),
                "intent": self.intent,
                "constraints": dict(sorted(self.constraints.items())),
            },
            sort_keys=True,
        )

    @classmethod
    def from_text(cls, text: str) -> "CoordinationSummary":
        d = json.loads(text)
        if d.get("format_version") != 1:
            raise ValueError("unsupported summary format_version")
        return cls(
            d["issuer"],
            int(d["t"]),
            {k: int(v) for k, v in d["boundary"].items()},
            d["intent"],
            {k: bool(v) for k, v in d["constraints"].items()},
        )

    @property
    def size(self) -> int:
        return len(self.boundary) + len(self.constraints) + 1


def publish_summary(agent, idmap: IdentificationMap | None, t: int) -> CoordinationSummary:
    """Boundary values of the agent's identified variables, its tentative
    action and its SLO fulfillment flags. Nothing else leaves the agent."""
    obs = agent.last_obs
    if obs is None:
        raise RuntimeError(f"agent {agent.id!r} has not observed step {t}")
    if idmap is not None:
        shared = [v for v in idmap.shared(agent.id) if v in obs.values]
    else:
        shared = [v for v in getattr(agent.spec, "shared", ()) if v in obs.values]
    boundary = {v: int(obs.values[v]) for v in shared}
    constraints = {
        name[4:]: int(value) == 0 for name, value in sorted(obs.values.items()) if name.startswith("slo:")
    }
    intent = agent.intent.encoding if getattr(agent, "intent", None) is not None else "no_op"
    return CoordinationSummary(agent.id, int(t), boundary, intent, constraints)


def incorporate_summaries(agent, summaries: Sequence[CoordinationSummary]):
    """Clamp neighbours' boundary values onto the agent's identified variables.

    Duplicate summaries from one issuer: the later ``t`` wins; equal ``t`` is
    recorded as an error and the first is kept. Values for variables the
    agent has no counterpart for are ignored with a warning record.
    """
    if not summaries:
        return agent
    chosen: dict[str, CoordinationSummary] = {}
    for s in summaries:
        if s.issuer == agent.id:
            continue
        prev = chosen.get(s.issuer)
        if prev is None or s.t > prev.t:
            chosen[s.issuer] = s
        elif s.t == prev.t and s != prev:
            agent.warnings.append(f"t={s.t}: conflicting summaries from {s.issuer}; kept the first")
    remote = getattr(agent, "_remote_by_source", {})
    remote_slo = getattr(agent, "_remote_slo_var", {})
    for issuer in sorted(chosen):
        s = chosen[issuer]
        for var, value in sorted(s.boundary.items()):
            local = remote.get((issuer, var))
            if local is None:
                agent.warnings.append(f"t={s.t}: unmapped variable {issuer}.{var} ignored")
                continue
            agent.boundary[local] = int(value)
        for slo_id, ok in sorted(s.constraints.items()):
            local = remote_slo.get((issuer, slo_id))
            if local is not None and local not in agent.boundary:
                agent.boundary[local] = 0 if ok else 1
        agent.neighbor_intents[issuer] = s.intent
    return agent
