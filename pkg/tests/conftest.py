"""Shared fixtures and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
import textwrap

import numpy as np
import pytest

from continuum.bayesnet import BayesNet, Cpt, Variable
from continuum.sim.scenario import load_scenario


def random_net(rng: np.random.Generator, n: int, max_parents: int = 3, card: int = 2, edge_p: float = 0.5) -> BayesNet:
    """Random DAG over x0..x{n-1} (edges respect index order) with random positive Cpts."""
    names = [f"x{i}" for i in range(n)]
    variables = [Variable(v, card) for v in names]
    cpts = []
    for i, v in enumerate(names):
        cands = [names[j] for j in range(i) if rng.random() < edge_p]
        rng.shuffle(cands)
        parents = sorted(cands[:max_parents])
        shape = (card,) * len(parents) + (card,)
        cpts.append(Cpt(v, parents, rng.uniform(0.05, 1.0, size=shape) * 10))
    return BayesNet(variables, cpts)


def sample(net: BayesNet, rng: np.random.Generator, n: int) -> list[dict[str, int]]:
    """Ancestral sampling."""
    out = []
    for _ in range(n):
        a: dict[str, int] = {}
        for name in net.order:
            row = net.cpts[name].row(a)
            a[name] = int(rng.choice(len(row), p=row))
        out.append(a)
    return out


def dsep_paths(net: BayesNet, x: str, y: str, z: set[str]) -> bool:
    """d-separation by enumerating every simple undirected path (oracle)."""
    parents = {n: set(net.parents(n)) for n in net.variables}
    children = {n: set(net.children(n)) for n in net.variables}
    adj = {n: parents[n] | children[n] for n in net.variables}

    def descendants(n):
        seen, stack = set(), [n]
        while stack:
            for c in children[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def active(path):
        for a, m, b in zip(path, path[1:], path[2:]):
            collider = a in parents[m] and b in parents[m]
            if collider:
                if m not in z and not (descendants(m) & z):
                    return False
            elif m in z:
                return False
        return True

    def walk(path):
        last = path[-1]
        if last == y:
            yield path
            return
        for nb in sorted(adj[last]):
            if nb not in path:
                yield from walk(path + [nb])

    return not any(active(p) for p in walk([x]))


def all_assignments(net: BayesNet):
    names = net.names
    for vals in itertools.product(*(range(net.card(n)) for n in names)):
        yield dict(zip(names, vals))


MINIMAL_SCN = textwrap.dedent(
    """
    format_version: 1
    name: minimal
    horizon: 10
    seed: 7
    topology:
      nodes:
        - {id: cloud-1, tier: cloud, cpu_capacity: 100}
    applications:
      - id: app
        workload: {base_rate: 5}
        services:
          - {id: svc, node: cloud-1, base_latency: 10, replica_capacity: 10, min_replicas: 1, max_replicas: 3}
        slos:
          - {id: svc-latency, service: svc, metric: latency_ms, comparator: "<=", threshold: 20}
    agents:
      svc: {kind: static}
    """
)

# One service whose single replica runs at 90% utilization (latency 100 ms,
# SLO 30 ms); a second replica halves it (about 18 ms). Permitted actions are
# no_op and scale +/-1.
TWO_ACTION_SCN = textwrap.dedent(
    """
    format_version: 1
    name: two-action
    horizon: 300
    seed: 3
    noise_sigma: {sigma}
    metric_ranges:
      load: [0.0, 20.0]
    topology:
      nodes:
        - {{id: edge-1, tier: edge, cpu_capacity: 10}}
        - {{id: cloud-1, tier: cloud, cpu_capacity: 100}}
      links:
        - {{a: edge-1, b: cloud-1, latency: 10}}
    applications:
      - id: app
        workload: {{base_rate: 9, noise_sd: {load_sd}}}
        services:
          - id: svc
            node: cloud-1
            replicas: 1
            base_demand: 1.0
            base_latency: 10
            replica_capacity: 10
            min_replicas: 1
            max_replicas: 2
        slos:
          - {{id: svc-latency, service: svc, metric: latency_ms, comparator: "<=", threshold: 30}}
    agents:
      svc: {{kind: {kind}, actions: ["scale:+1", "scale:-1"], bins: {{latency_ms: [20, 30, 60]}}}}
    """
)


@pytest.fixture
def minimal_scenario():
    return load_scenario(MINIMAL_SCN)


def two_action_scenario(kind: str = "aif", sigma: float = 0.0, load_sd: float = 0.0):
    return load_scenario(TWO_ACTION_SCN.format(kind=kind, sigma=sigma, load_sd=load_sd))


def pipeline_pair(rng):
    """Two-service pipeline as separate agent models plus the monolith.

    upstream:   prev_q -> q -> slo:up
    downstream: load, in_q -> lat -> slo:down     (in_q identified with q)
    """
    def counts(*shape):
        return rng.uniform(0.05, 1.0, shape) * 10

    V = lambda n, c=2, role="context": Variable(n, c, role)
    up = BayesNet(
        [V("prev_q", 3), V("q", 3), V("slo:up", 2, "slo_indicator")],
        [Cpt("prev_q", (), counts(3)), Cpt("q", ("prev_q",), counts(3, 3)), Cpt("slo:up", ("q",), counts(3, 2))],
    )
    down = BayesNet(
        [V("load", 3), V("in_q", 3), V("lat", 4), V("slo:down", 2, "slo_indicator")],
        [
            Cpt("load", (), counts(3)),
            Cpt("in_q", (), counts(3)),
            Cpt("lat", ("load", "in_q"), counts(3, 3, 4)),
            Cpt("slo:down", ("lat",), counts(4, 2)),
        ],
    )
    # by hand: q keeps the upstream Cpt, the downstream prior on in_q is dropped
    mono = BayesNet(
        [V("prev_q", 3), V("q", 3), V("slo:up", 2, "slo_indicator"), V("load", 3), V("lat", 4), V("slo:down", 2, "slo_indicator")],
        [
            up.cpts["prev_q"],
            up.cpts["q"],
            up.cpts["slo:up"],
            down.cpts["load"],
            Cpt("lat", ("load", "q"), down.cpts["lat"].counts),
            down.cpts["slo:down"],
        ],
    )
    return {"up": up, "down": down}, [(("up", "q"), ("down", "in_q"))], mono


def random_evidence(rng, net, max_vars=3):
    names = sorted(net.variables)
    k = int(rng.integers(0, max_vars + 1))
    chosen = rng.choice(len(names), size=k, replace=False)
    return {names[i]: int(rng.integers(net.card(names[i]))) for i in chosen}


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
