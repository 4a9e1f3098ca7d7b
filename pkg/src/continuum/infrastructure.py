"""Tiered compute nodes, links, node churn and host utilization."""

from __future__ import annotations

import heapq
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np

TIERS = ("edge", "fog", "cloud")
UNREACHABLE = math.inf


@dataclass(frozen=True)
class NodeSpec:
    id: str
    tier: str
    cpu_capacity: float
    gpu_units: int = 0
    memory: float = 1024.0
    energy_coefficient: float = 1.0

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"node {self.id!r}: unknown tier {self.tier!r}")
        if not self.cpu_capacity > 0:
            raise ValueError(f"node {self.id!r}: cpu_capacity must be > 0")
        if self.gpu_units < 0:
            raise ValueError(f"node {self.id!r}: gpu_units must be >= 0")

    @property
    def has_gpu(self) -> bool:
        return self.gpu_units > 0


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    latency: float
    bandwidth: float = 1000.0

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"self-link on {self.a!r}")
        if self.latency < 0:
            raise ValueError(f"link {self.a}-{self.b}: latency must be >= 0")
        if not self.bandwidth > 0:
            raise ValueError(f"link {self.a}-{self.b}: bandwidth must be > 0")

    @property
    def key(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class ChurnSpec:
    p_fail: float = 0.0
    p_recover: float = 0.0

    def __post_init__(self):
        for p in (self.p_fail, self.p_recover):
            if not 0.0 <= p <= 1.0:
                raise ValueError("churn probabilities must lie in [0, 1]")

    @property
    def stationary_down(self) -> float:
        total = self.p_fail + self.p_recover
        return self.p_fail / total if total > 0 else 0.0


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...] = ()
    churn: Mapping[str, ChurnSpec] = field(default_factory=dict)
    available: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        known = set(ids)
        seen = set()
        for link in self.links:
            if link.a not in known or link.b not in known:
                raise ValueError(f"link {link.a}-{link.b} references unknown node")
            if link.key in seen:
                raise ValueError(f"duplicate link {link.a}-{link.b}")
            seen.add(link.key)
        for nid in self.churn:
            if nid not in known:
                raise ValueError(f"churn for unknown node {nid!r}")
        avail = {nid: bool(self.available.get(nid, True)) for nid in ids}
        object.__setattr__(self, "available", avail)
        object.__setattr__(self, "churn", dict(self.churn))
        if len(ids) > 1 and not _connected(ids, self.links):
            raise ValueError("topology graph is not connected")

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node {node_id!r}")

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def is_up(self, node_id: str) -> bool:
        return self.available[node_id]

    def with_availability(self, available: Mapping[str, bool]) -> "Topology":
        return replace(self, available=dict(available))


def _connected(ids, links) -> bool:
    adj = {i: set() for i in ids}
    for link in links:
        adj[link.a].add(link.b)
        adj[link.b].add(link.a)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(ids)


def _shortest(topology: Topology, src: str, dst: str):
    """Dijkstra over available nodes; returns (latency, link list) or (inf, None)."""
    if src not in topology.available or dst not in topology.available:
        raise KeyError(f"unknown node in path query {src!r} -> {dst!r}")
    if src == dst:
        return 0.0, []
    if not (topology.is_up(src) and topology.is_up(dst)):
        return UNREACHABLE, None
    adj: dict[str, list[tuple[str, LinkSpec]]] = {i: [] for i in topology.node_ids}
    for link in topology.links:
        if topology.is_up(link.a) and topology.is_up(link.b):
            adj[link.a].append((link.b, link))
            adj[link.b].append((link.a, link))
    dist = {src: 0.0}
    prev: dict[str, tuple[str, LinkSpec]] = {}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        if u == dst:
            break
        for v, link in adj[u]:
            nd = d + link.latency
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = (u, link)
                heapq.heappush(heap, (nd, v))
    if dst not in dist:
        return UNREACHABLE, None
    path = []
    node = dst
    while node != src:
        node, link = prev[node]
        path.append(link)
    return dist[dst], path[::-1]


def path_latency(topology: Topology, src: str, dst: str) -> float:
    """Minimum total link latency (ms) over available nodes; inf if unreachable."""
    return _shortest(topology, src, dst)[0]


def transfer_latency(topology: Topology, src: str, dst: str, payload_kb: float, threshold_kb: float = 0.0) -> float:
    """Path latency plus a serialization surcharge over the bottleneck link.

    The surcharge (payload kilobits / bandwidth Mbps = ms) applies only when
    the payload exceeds ``threshold_kb``.
    """
    latency, path = _shortest(topology, src, dst)
    if path is None:
        return UNREACHABLE
    if payload_kb > threshold_kb and path:
        latency += payload_kb * 8.0 / min(link.bandwidth for link in path)
    return latency


def apply_churn(topology: Topology, rng: np.random.Generator) -> Topology:
    """One step of each node's two-state up/down Markov chain.

    One uniform draw per node in declaration order, so the stream layout does
    not depend on the current availability.
    """
    draws = rng.random(len(topology.nodes))
    avail = {}
    for node, u in zip(topology.nodes, draws):
        spec = topology.churn.get(node.id)
        up = topology.available[node.id]
        if spec is None:
            avail[node.id] = up
        elif up:
            avail[node.id] = not (u < spec.p_fail)
        else:
            avail[node.id] = u < spec.p_recover
    if avail == topology.available:
        return topology
    return topology.with_availability(avail)


def host_utilization(
    topology: Topology,
    placements: Mapping[str, tuple[str | None, int]],
    demands: Mapping[str, float],
) -> dict[str, float]:
    """Per node: sum of replica demand over cpu capacity (may exceed 1)."""
    used = {nid: 0.0 for nid in topology.node_ids}
    for sid, (node_id, replicas) in placements.items():
        if node_id is None or replicas <= 0:
            continue
        if node_id not in used:
            raise KeyError(f"service {sid!r} placed on unknown node {node_id!r}")
        used[node_id] += replicas * demands[sid]
    return {nid: used[nid] / topology.node(nid).cpu_capacity for nid in topology.node_ids}
