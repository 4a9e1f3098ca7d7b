"""Exact inference by variable elimination, plus the full-joint oracle."""

from __future__ import annotations

import math
import string
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from .network import BayesNet

MAX_JOINT = 2**20
_LETTERS = string.ascii_letters


@dataclass(frozen=True)
class Factor:
    vars: tuple[str, ...]
    table: np.ndarray

    def reduce(self, evidence: Mapping[str, int]) -> "Factor":
        idx = []
        keep = []
        for v in self.vars:
            if v in evidence:
                idx.append(int(evidence[v]))
            else:
                idx.append(slice(None))
                keep.append(v)
        if len(keep) == len(self.vars):
            return self
        return Factor(tuple(keep), self.table[tuple(idx)])

    def sum_out(self, var: str) -> "Factor":
        axis = self.vars.index(var)
        return Factor(self.vars[:axis] + self.vars[axis + 1 :], self.table.sum(axis=axis))

    def transpose(self, order: Iterable[str]) -> "Factor":
        order = tuple(order)
        return Factor(order, np.transpose(self.table, [self.vars.index(v) for v in order]))


def multiply(factors: list[Factor], keep: Iterable[str] | None = None) -> Factor:
    """Product of factors, optionally summing out everything not in ``keep``."""
    scope: list[str] = []
    for f in factors:
        for v in f.vars:
            if v not in scope:
                scope.append(v)
    out = scope if keep is None else [v for v in scope if v in set(keep)]
    if len(scope) > len(_LETTERS):
        raise ValueError("too many variables in one factor product")
    letter = {v: _LETTERS[i] for i, v in enumerate(scope)}
    spec = ",".join("".join(letter[v] for v in f.vars) for f in factors)
    spec += "->" + "".join(letter[v] for v in out)
    table = np.einsum(spec, *[f.table for f in factors], optimize=len(factors) > 2)
    return Factor(tuple(out), np.asarray(table, dtype=float))


@dataclass(frozen=True)
class Joint:
    """Normalized distribution over an ordered tuple of variables."""

    vars: tuple[str, ...]
    table: np.ndarray

    def marginal(self, var: str) -> np.ndarray:
        axis = self.vars.index(var)
        others = tuple(i for i in range(len(self.vars)) if i != axis)
        return self.table.sum(axis=others) if others else self.table

    def marginal_over(self, names: Iterable[str]) -> np.ndarray:
        names = tuple(names)
        f = Factor(self.vars, self.table)
        for v in self.vars:
            if v not in names:
                f = f.sum_out(v)
        return f.transpose(names).table

    def prob(self, assignment: Mapping[str, int]) -> float:
        return float(self.table[tuple(int(assignment[v]) for v in self.vars)])


@dataclass(frozen=True)
class ImpossibleEvidence:
    """Returned instead of a distribution when P(evidence) == 0."""

    evidence: tuple[tuple[str, int], ...]

    def __bool__(self):
        return False


def cpt_factor(net: BayesNet, name: str) -> Factor:
    cpt = net.cpts[name]
    return Factor(cpt.parents + (name,), cpt.probs)


def _relevant(net: BayesNet, names: set[str]) -> set[str]:
    """Ancestral closure: the only variables whose factors can matter."""
    out = set()
    stack = list(names)
    while stack:
        n = stack.pop()
        if n in out:
            continue
        out.add(n)
        stack.extend(net.parents(n))
    return out


def _eliminate(net: BayesNet, query: tuple[str, ...], evidence: dict[str, int]) -> Factor:
    """Unnormalized factor over ``query`` with evidence reduced in."""
    relevant = _relevant(net, set(query) | set(evidence))
    factors = [cpt_factor(net, n).reduce(evidence) for n in net.order if n in relevant]
    hidden = [n for n in net.order if n in relevant and n not in evidence and n not in query]
    for var in _elimination_order(factors, hidden):
        touching = [f for f in factors if var in f.vars]
        rest = [f for f in factors if var not in f.vars]
        keep = {v for f in touching for v in f.vars} - {var}
        factors = rest + [multiply(touching, keep)]
    result = multiply(factors, keep=query) if factors else Factor((), np.array(1.0))
    return result.transpose(query) if query else result


def _check(net: BayesNet, query: tuple[str, ...], evidence: dict[str, int]):
    if len(set(query)) != len(query):
        raise ValueError("duplicate query variables")
    overlap = set(query) & set(evidence)
    if overlap:
        raise ValueError(f"query and evidence overlap: {sorted(overlap)}")
    for q in query:
        if q not in net.variables:
            raise KeyError(f"unknown query variable {q!r}")
    net.validate_assignment(evidence)


def infer(net: BayesNet, query: Iterable[str], evidence: Mapping[str, int] | None = None):
    """Posterior joint over ``query`` given ``evidence`` by variable elimination.

    Returns a :class:`Joint` with axes in query order, or
    :class:`ImpossibleEvidence` when the evidence has zero prior probability.
    """
    query = tuple(query)
    evidence = {k: int(v) for k, v in (evidence or {}).items()}
    _check(net, query, evidence)
    result = _eliminate(net, query, evidence)
    z = float(result.table.sum())
    if z <= 0.0 or not math.isfinite(z):
        return ImpossibleEvidence(tuple(sorted(evidence.items())))
    return Joint(query, result.table / z)


def log_evidence(net: BayesNet, evidence: Mapping[str, int]) -> float:
    """ln P(evidence) for a partial assignment (-inf when impossible)."""
    evidence = {k: int(v) for k, v in evidence.items()}
    _check(net, (), evidence)
    z = float(_eliminate(net, (), evidence).table.sum())
    return math.log(z) if z > 0 else -math.inf


def _elimination_order(factors: list[Factor], hidden: list[str]) -> list[str]:
    """Greedy min-size order with name tie-break (deterministic)."""
    scopes = [set(f.vars) for f in factors]
    remaining = set(hidden)
    order = []
    while remaining:
        best = None
        for v in sorted(remaining):
            merged = set().union(*(s for s in scopes if v in s)) - {v}
            key = (len(merged), v)
            if best is None or key < best[0]:
                best = (key, v, merged)
        _, v, merged = best
        scopes = [s for s in scopes if v not in s] + [merged]
        remaining.discard(v)
        order.append(v)
    return order


def enumerate_joint(net: BayesNet) -> Joint:
    """Full joint table as the product of every Cpt; axes follow ``net.names``."""
    size = math.prod(v.card for v in net.variables.values())
    if size > MAX_JOINT:
        raise ValueError(f"joint table of {size} entries exceeds bound {MAX_JOINT}")
    names = tuple(net.names)
    table = np.ones(tuple(net.card(n) for n in names))
    for n in names:
        cpt = net.cpts[n]
        axes = [names.index(p) for p in cpt.parents] + [names.index(n)]
        # move cpt axes into the joint layout and broadcast
        order = np.argsort(axes)
        shape = [1] * len(names)
        for ax in axes:
            shape[ax] = net.card(names[ax])
        table = table * np.transpose(cpt.probs, order).reshape(shape)
    return Joint(names, table)


def marginalize_joint(joint: Joint, query: Iterable[str], evidence: Mapping[str, int] | None = None):
    """Brute-force conditional from a full joint (the oracle path)."""
    query = tuple(query)
    idx = tuple(int(evidence[v]) if evidence and v in evidence else slice(None) for v in joint.vars)
    sub_vars = tuple(v for v in joint.vars if not (evidence and v in evidence))
    sub = joint.table[idx]
    f = Factor(sub_vars, np.asarray(sub))
    for v in sub_vars:
        if v not in query:
            f = f.sum_out(v)
    f = f.transpose(query)
    z = float(f.table.sum())
    if z <= 0:
        return ImpossibleEvidence(tuple(sorted((evidence or {}).items())))
    return Joint(query, f.table / z)


def log_prob(net: BayesNet, assignment: Mapping[str, int]) -> float:
    net.validate_assignment(assignment, complete=True)
    total = 0.0
    for n, cpt in net.cpts.items():
        p = cpt.probs[tuple(int(assignment[v]) for v in cpt.parents) + (int(assignment[n]),)]
        if p <= 0.0:
            return -math.inf
        total += math.log(p)
    return total


def surprise(net: BayesNet, assignment: Mapping[str, int]) -> float:
    """-ln P(assignment) in nats under the joint factorization."""
    return -log_prob(net, assignment)
