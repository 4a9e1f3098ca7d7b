"""Dirichlet parameter updates and BIC hill-climbing structure search."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence

import numpy as np

from .network import LAPLACE, BayesNet, Cpt, is_acyclic
from .variables import Variable

TIE_TOL = 1e-9


def update_parameters(net: BayesNet, batch: Sequence[Mapping[str, int]], decay: float = 1.0) -> BayesNet:
    """Add one pseudo-count per observed (parent assignment, child value) cell.

    ``decay`` < 1 shrinks existing counts toward the Laplace prior before the
    batch is added (optional forgetting; 1.0 disables it).
    """
    if not batch and decay == 1.0:
        return net
    for assignment in batch:
        net.validate_assignment(assignment, complete=True)
    cpts = []
    for name, cpt in net.cpts.items():
        counts = np.array(cpt.counts)
        if decay != 1.0:
            counts = LAPLACE + decay * (counts - LAPLACE)
        idx = np.array(
            [[int(a[p]) for p in cpt.parents] + [int(a[name])] for a in batch], dtype=np.intp
        ).reshape(len(batch), len(cpt.parents) + 1)
        np.add.at(counts, tuple(idx.T), 1.0)
        cpts.append(cpt.with_counts(counts))
    return BayesNet(net.variables.values(), cpts)


def reset_counts(net: BayesNet, names: Iterable[str], prior: float = LAPLACE) -> BayesNet:
    """Return ``net`` with the named Cpts reset to the Laplace prior."""
    return net.with_cpts(Cpt.uniform(n, net.parents(n), net.cpts[n].shape, prior) for n in names)


def _data_matrix(variables: Sequence[Variable], data: Sequence[Mapping[str, int]]) -> np.ndarray:
    arr = np.array([[int(row[v.name]) for v in variables] for row in data], dtype=np.intp)
    for j, v in enumerate(variables):
        if arr.size and (arr[:, j].min() < 0 or arr[:, j].max() >= v.card):
            raise ValueError(f"value out of range for {v.name!r}")
    return arr


def family_bic(data: np.ndarray, cards: Sequence[int], child: int, parents: Sequence[int]) -> float:
    """BIC contribution of one family: max log-likelihood minus (ln N / 2) * free params."""
    n = data.shape[0]
    r = cards[child]
    q = math.prod(cards[p] for p in parents)
    if parents:
        pidx = np.ravel_multi_index(tuple(data[:, p] for p in parents), [cards[p] for p in parents])
    else:
        pidx = np.zeros(n, dtype=np.intp)
    table = np.zeros((q, r))
    np.add.at(table, (pidx, data[:, child]), 1.0)
    row = table.sum(axis=1, keepdims=True)
    nz = table > 0
    ll = float(np.sum(table[nz] * np.log(table[nz] / np.broadcast_to(row, table.shape)[nz])))
    return ll - 0.5 * math.log(n) * q * (r - 1)


def bic_score(net_or_parents, data: Sequence[Mapping[str, int]], variables: Sequence[Variable] | None = None) -> float:
    if isinstance(net_or_parents, BayesNet):
        variables = list(net_or_parents.variables.values())
        parents = {n: net_or_parents.parents(n) for n in net_or_parents.variables}
    else:
        parents = net_or_parents
    names = [v.name for v in variables]
    arr = _data_matrix(variables, data)
    cards = [v.card for v in variables]
    return sum(family_bic(arr, cards, names.index(n), [names.index(p) for p in parents[n]]) for n in names)


def learn_structure(
    variables: Sequence[Variable],
    data: Sequence[Mapping[str, int]],
    candidates: Iterable[tuple[str, str]] | None = None,
    max_parents: int = 3,
) -> BayesNet:
    """Greedy hill climbing over add/remove/reverse moves scored by BIC.

    Starts from the empty graph. Each iteration applies the single best
    strictly improving move; moves whose gains differ by less than
    ``TIE_TOL`` are ordered lexicographically by (edge, move kind). The result
    carries Laplace-prior counts updated with ``data``.
    """
    if not data:
        raise ValueError("structure learning needs data")
    if not 0 <= max_parents <= 3:
        raise ValueError("max_parents must be in [0, 3]")
    variables = list(variables)
    names = [v.name for v in variables]
    cards = [v.card for v in variables]
    arr = _data_matrix(variables, data)
    index = {n: i for i, n in enumerate(names)}
    if candidates is None:
        allowed = {(a, b) for a in names for b in names if a != b}
    else:
        allowed = set()
        for a, b in candidates:
            if a not in index or b not in index or a == b:
                raise ValueError(f"invalid candidate edge {a}->{b}")
            allowed.add((a, b))

    parents: dict[str, list[str]] = {n: [] for n in names}
    cache: dict[tuple[str, tuple[str, ...]], float] = {}

    def score(child, pars):
        key = (child, tuple(sorted(pars)))
        if key not in cache:
            cache[key] = family_bic(arr, cards, index[child], [index[p] for p in key[1]])
        return cache[key]

    def edges():
        return {(p, c) for c, ps in parents.items() for p in ps}

    while True:
        current = edges()
        moves = []
        for a, b in sorted(allowed):
            if (a, b) in current:
                continue
            if (b, a) in current or len(parents[b]) >= max_parents:
                continue
            if not is_acyclic(names, current | {(a, b)}):
                continue
            gain = score(b, parents[b] + [a]) - score(b, parents[b])
            moves.append((gain, (a, b), 0, "add"))
        for a, b in sorted(current):
            gain = score(b, [p for p in parents[b] if p != a]) - score(b, parents[b])
            moves.append((gain, (a, b), 1, "remove"))
            if (b, a) in allowed and len(parents[a]) < max_parents:
                trial = (current - {(a, b)}) | {(b, a)}
                if is_acyclic(names, trial):
                    gain_rev = (
                        score(b, [p for p in parents[b] if p != a])
                        - score(b, parents[b])
                        + score(a, parents[a] + [b])
                        - score(a, parents[a])
                    )
                    moves.append((gain_rev, (a, b), 2, "reverse"))
        improving = [m for m in moves if m[0] > TIE_TOL]
        if not improving:
            break
        top = max(m[0] for m in improving)
        gain, (a, b), _, kind = min(
            (m for m in improving if top - m[0] <= TIE_TOL), key=lambda m: (m[1], m[2])
        )
        if kind == "add":
            parents[b].append(a)
        elif kind == "remove":
            parents[b].remove(a)
        else:
            parents[b].remove(a)
            parents[a].append(b)

    edge_list = sorted((p, c) for c, ps in parents.items() for p in sorted(ps))
    net = BayesNet.from_edges(variables, edge_list)
    return update_parameters(net, data)
