"""Markov blankets and d-separation."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from .network import BayesNet


@dataclass(frozen=True)
class MarkovBlanket:
    targets: frozenset[str]
    members: frozenset[str]
    net: BayesNet  # induced sub-network over targets | members

    @property
    def names(self) -> list[str]:
        return sorted(self.targets | self.members)


def markov_blanket(net: BayesNet, targets: Iterable[str]) -> MarkovBlanket:
    """Parents, children and co-parents of ``targets``, minus the targets."""
    targets = frozenset(targets)
    if not targets:
        raise ValueError("markov blanket needs at least one target")
    unknown = targets - set(net.variables)
    if unknown:
        raise KeyError(f"unknown targets {sorted(unknown)}")
    members = set()
    for t in targets:
        members.update(net.parents(t))
        for child in net.children(t):
            members.add(child)
            members.update(net.parents(child))
    members = frozenset(members - targets)
    return MarkovBlanket(targets, members, net.subnet(targets | members))


def d_separated(net: BayesNet, xs: Iterable[str], ys: Iterable[str], zs: Iterable[str] = ()) -> bool:
    """True when every path from xs to ys is blocked given zs.

    Reachability over (node, direction) states: a trail may pass a collider
    only if the collider or one of its descendants is observed.
    """
    xs, ys, zs = set(xs), set(ys), set(zs)
    if xs & ys:
        return False
    # ancestors of the conditioning set (colliders there are active)
    anc = set()
    stack = list(zs)
    while stack:
        n = stack.pop()
        if n not in anc:
            anc.add(n)
            stack.extend(net.parents(n))

    children = {n: net.children(n) for n in net.variables}
    # direction "up": arrived from a child; "down": arrived from a parent
    frontier = [(x, "up") for x in xs]
    seen = set()
    while frontier:
        node, direction = frontier.pop()
        if (node, direction) in seen:
            continue
        seen.add((node, direction))
        if node in ys and node not in zs:
            return False
        if direction == "up" and node not in zs:
            frontier.extend((p, "up") for p in net.parents(node))
            frontier.extend((c, "down") for c in children[node])
        elif direction == "down":
            if node not in zs:
                frontier.extend((c, "down") for c in children[node])
            if node in anc:
                frontier.extend((p, "up") for p in net.parents(node))
    return True
