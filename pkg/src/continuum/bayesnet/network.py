"""Conditional probability tables and the network container."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping

import numpy as np

from .variables import Variable

LAPLACE = 1.0


class Cpt:
    """Dirichlet pseudo-count table for one child given ordered parents.

    ``counts`` has shape ``(*parent_cards, child_card)``; probabilities are the
    row-normalized counts. Counts must be strictly positive unless the table
    is a hand-set fixture built with ``allow_zero=True``.
    """

    __slots__ = ("child", "parents", "counts", "allow_zero", "_probs")

    def __init__(self, child: str, parents: Iterable[str], counts, allow_zero: bool = False):
        self.child = child
        self.parents = tuple(parents)
        counts = np.array(counts, dtype=float)
        if counts.ndim != len(self.parents) + 1:
            raise ValueError(f"cpt {child!r}: counts must have {len(self.parents) + 1} axes")
        if not np.all(np.isfinite(counts)):
            raise ValueError(f"cpt {child!r}: counts must be finite")
        if allow_zero:
            if np.any(counts < 0) or np.any(counts.sum(axis=-1) <= 0):
                raise ValueError(f"cpt {child!r}: counts must be >= 0 with nonzero rows")
        elif np.any(counts <= 0):
            raise ValueError(f"cpt {child!r}: counts must be strictly positive")
        counts.setflags(write=False)
        self.counts = counts
        self.allow_zero = allow_zero
        self._probs = None

    @classmethod
    def uniform(cls, child: str, parents: Iterable[str], shape, prior: float = LAPLACE) -> "Cpt":
        return cls(child, parents, np.full(tuple(shape), float(prior)))

    @classmethod
    def from_probs(cls, child: str, parents: Iterable[str], probs, scale: float = 1.0) -> "Cpt":
        """Hand-set table; zeros allowed so deterministic fixtures are expressible."""
        probs = np.asarray(probs, dtype=float)
        return cls(child, parents, probs * scale, allow_zero=bool(np.any(probs == 0)))

    @property
    def probs(self) -> np.ndarray:
        if self._probs is None:
            p = self.counts / self.counts.sum(axis=-1, keepdims=True)
            p.setflags(write=False)
            self._probs = p
        return self._probs

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts.shape

    def row(self, parent_values: Mapping[str, int]) -> np.ndarray:
        return self.probs[tuple(parent_values[p] for p in self.parents)]

    def with_counts(self, counts) -> "Cpt":
        return Cpt(self.child, self.parents, counts, allow_zero=self.allow_zero)

    def __eq__(self, other):
        return (
            isinstance(other, Cpt)
            and self.child == other.child
            and self.parents == other.parents
            and np.array_equal(self.counts, other.counts)
        )

    def __repr__(self):
        return f"Cpt({self.child!r} | {', '.join(self.parents) or '-'}, shape={self.shape})"


class BayesNet:
    """Discrete Bayesian network: variables, one Cpt per variable, acyclic.

    Instances are treated as immutable; update operations return new nets.
    """

    def __init__(self, variables: Iterable[Variable], cpts: Iterable[Cpt]):
        self.variables: dict[str, Variable] = {}
        for v in variables:
            if v.name in self.variables:
                raise ValueError(f"duplicate variable {v.name!r}")
            self.variables[v.name] = v
        self.cpts: dict[str, Cpt] = {}
        for c in cpts:
            if c.child not in self.variables:
                raise ValueError(f"cpt for unknown variable {c.child!r}")
            if c.child in self.cpts:
                raise ValueError(f"duplicate cpt for {c.child!r}")
            for p in c.parents:
                if p not in self.variables:
                    raise ValueError(f"cpt {c.child!r}: unknown parent {p!r}")
            expected = tuple(self.variables[p].card for p in c.parents) + (self.variables[c.child].card,)
            if c.shape != expected:
                raise ValueError(f"cpt {c.child!r}: shape {c.shape} != {expected}")
            self.cpts[c.child] = c
        missing = set(self.variables) - set(self.cpts)
        if missing:
            raise ValueError(f"variables without cpt: {sorted(missing)}")
        self._order = _topological_order(self.variables, {n: c.parents for n, c in self.cpts.items()})

    @classmethod
    def from_edges(cls, variables: Iterable[Variable], edges: Iterable[tuple[str, str]], prior: float = LAPLACE):
        """Net with the given structure and Laplace-prior (uniform) counts.

        Parent order per child follows the order of ``edges``.
        """
        variables = list(variables)
        cards = {v.name: v.card for v in variables}
        parents: dict[str, list[str]] = {v.name: [] for v in variables}
        for a, b in edges:
            if a not in cards or b not in cards:
                raise ValueError(f"edge {a}->{b} references unknown variable")
            if a in parents[b]:
                raise ValueError(f"duplicate edge {a}->{b}")
            parents[b].append(a)
        cpts = [
            Cpt.uniform(v.name, parents[v.name], [cards[p] for p in parents[v.name]] + [v.card], prior)
            for v in variables
        ]
        return cls(variables, cpts)

    @property
    def names(self) -> list[str]:
        return list(self.variables)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return sorted((p, c) for c, cpt in self.cpts.items() for p in cpt.parents)

    @property
    def order(self) -> list[str]:
        """A topological order (deterministic)."""
        return list(self._order)

    def card(self, name: str) -> int:
        return self.variables[name].card

    def parents(self, name: str) -> tuple[str, ...]:
        return self.cpts[name].parents

    def children(self, name: str) -> list[str]:
        return [c for c, cpt in self.cpts.items() if name in cpt.parents]

    def with_cpts(self, cpts: Iterable[Cpt]) -> "BayesNet":
        new = dict(self.cpts)
        for c in cpts:
            new[c.child] = c
        return BayesNet(self.variables.values(), new.values())

    def subnet(self, names: Iterable[str]) -> "BayesNet":
        """Induced sub-network; variables whose parents fall outside lose them
        and get a Laplace prior over their own values."""
        keep = [n for n in self.variables if n in set(names)]
        keep_set = set(keep)
        cpts = []
        for n in keep:
            cpt = self.cpts[n]
            if set(cpt.parents) <= keep_set:
                cpts.append(cpt)
            else:
                cpts.append(Cpt.uniform(n, (), (self.card(n),)))
        return BayesNet((self.variables[n] for n in keep), cpts)

    def validate_assignment(self, assignment: Mapping[str, int], complete: bool = False):
        for name, value in assignment.items():
            if name not in self.variables:
                raise KeyError(f"unknown variable {name!r}")
            if not 0 <= int(value) < self.variables[name].card:
                raise ValueError(f"value {value} out of range for {name!r} (card {self.card(name)})")
        if complete:
            missing = set(self.variables) - set(assignment)
            if missing:
                raise ValueError(f"incomplete assignment, missing {sorted(missing)}")

    def __eq__(self, other):
        return (
            isinstance(other, BayesNet)
            and self.variables == other.variables
            and self.cpts == other.cpts
        )

    def __repr__(self):
        return f"BayesNet({len(self.variables)} vars, {len(self.edges)} edges)"

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "variables": [
                {
                    "name": v.name,
                    "card": v.card,
                    "role": v.role,
                    **({"cuts": [repr(c) for c in v.cuts]} if v.cuts is not None else {}),
                    **({"labels": list(v.labels)} if v.labels is not None else {}),
                }
                for v in self.variables.values()
            ],
            "edges": [list(e) for e in self.edges],
            "cpts": [
                {
                    "child": c.child,
                    "parents": list(c.parents),
                    "shape": list(c.shape),
                    "counts": [repr(float(x)) for x in c.counts.ravel()],
                    **({"allow_zero": True} if c.allow_zero else {}),
                }
                for c in self.cpts.values()
            ],
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "BayesNet":
        if data.get("format_version") != 1:
            raise ValueError("unsupported network format_version")
        variables = [
            Variable(
                d["name"],
                int(d["card"]),
                d.get("role", "context"),
                tuple(float(c) for c in d["cuts"]) if "cuts" in d else None,
                tuple(d["labels"]) if "labels" in d else None,
            )
            for d in data["variables"]
        ]
        cpts = [
            Cpt(
                d["child"],
                d["parents"],
                np.array([float(x) for x in d["counts"]]).reshape(d["shape"]),
                allow_zero=d.get("allow_zero", False),
            )
            for d in data["cpts"]
        ]
        net = cls(variables, cpts)
        declared = sorted(tuple(e) for e in data.get("edges", net.edges))
        if declared != net.edges:
            raise ValueError("edge list does not match cpt parent lists")
        return net

    @classmethod
    def from_text(cls, text: str) -> "BayesNet":
        return cls.from_dict(json.loads(text))


def _topological_order(names, parents: Mapping[str, tuple[str, ...]]) -> list[str]:
    """Kahn's algorithm with name-ordered frontier; raises on cycles."""
    indeg = {n: len(parents[n]) for n in names}
    kids: dict[str, list[str]] = {n: [] for n in names}
    for n in names:
        for p in parents[n]:
            kids[p].append(n)
    ready = sorted(n for n, d in indeg.items() if d == 0)
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for k in kids[n]:
            indeg[k] -= 1
            if indeg[k] == 0:
                ready.append(k)
        ready.sort()
    if len(order) != len(indeg):
        cyclic = sorted(n for n, d in indeg.items() if d > 0)
        raise ValueError(f"network has a cycle among {cyclic}")
    return order


def is_acyclic(names, edges) -> bool:
    parents = {n: [] for n in names}
    for a, b in edges:
        parents[b].append(a)
    try:
        _topological_order(list(names), {n: tuple(p) for n, p in parents.items()})
    except ValueError:
        return False
    return True
