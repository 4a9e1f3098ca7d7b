"""Paired per-seed comparison of fulfillment rates across arms."""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..sim.episode import CSV_VERSION
from .metrics import RunSummary


class CompareError(ValueError):
    pass


@dataclass(frozen=True)
class PairedDiff:
    a: str
    b: str
    seeds: tuple[int, ...]
    diffs: tuple[float, ...]  # a - b per seed

    @property
    def mean(self) -> float:
        return float(np.mean(self.diffs))

    @property
    def sd(self) -> float:
        return float(np.std(self.diffs, ddof=1)) if len(self.diffs) > 1 else 0.0

    @property
    def signs(self) -> dict[str, int]:
        d = np.asarray(self.diffs)
        return {"positive": int((d > 0).sum()), "negative": int((d < 0).sum()), "zero": int((d == 0).sum())}

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "seeds": list(self.seeds),
            "diffs": list(self.diffs),
            "mean": self.mean,
            "sd": self.sd,
            "signs": self.signs,
        }


@dataclass(frozen=True)
class Report:
    scenario: str
    pairs: tuple[PairedDiff, ...]

    def pair(self, a: str, b: str) -> PairedDiff:
        for p in self.pairs:
            if (p.a, p.b) == (a, b):
                return p
        raise KeyError((a, b))

    def to_json(self) -> str:
        body = {"format_version": 1, "scenario": self.scenario, "pairs": [p.as_dict() for p in self.pairs]}
        return json.dumps(body, sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        header = f"{'A':<16} {'B':<16} {'mean(A-B)':>10} {'sd':>8} {'+/-/0':>10}  n"
        lines = [f"scenario: {self.scenario}", header, "-" * len(header)]
        for p in self.pairs:
            s = p.signs
            lines.append(
                f"{p.a:<16} {p.b:<16} {p.mean:>+10.4f} {p.sd:>8.4f} {s['positive']:>3}/{s['negative']}/{s['zero']:<4}  {len(p.diffs)}"
            )
        return "\n".join(lines) + "\n"


def compare(summaries: Sequence[RunSummary], reference: str | None = None) -> Report:
    """Paired differences in fulfillment rate between arms (``RunSummary.kind``).

    With ``reference`` every other arm is compared against it; otherwise all
    ordered pairs (a, b) with a before b in first-seen order.
    """
    if not summaries:
        raise CompareError("nothing to compare")
    scenarios = {s.scenario for s in summaries}
    if len(scenarios) > 1:
        raise CompareError(f"summaries come from different scenarios: {sorted(scenarios)}")
    by_arm: dict[str, dict[int, float]] = {}
    for s in summaries:
        runs = by_arm.setdefault(s.kind, {})
        if s.seed in runs:
            raise CompareError(f"duplicate run for arm {s.kind!r} seed {s.seed}")
        runs[s.seed] = s.fulfillment_rate
    arms = list(by_arm)
    seed_sets = {a: frozenset(r) for a, r in by_arm.items()}
    if len(set(seed_sets.values())) > 1:
        detail = "; ".join(f"{a}: {sorted(s)}" for a, s in seed_sets.items())
        raise CompareError(f"seed sets differ between arms ({detail})")
    seeds = tuple(sorted(seed_sets[arms[0]]))
    if reference is not None:
        if reference not in by_arm:
            raise CompareError(f"unknown reference arm {reference!r}")
        pairs = [(a, reference) for a in arms if a != reference]
    else:
        pairs = [(a, b) for i, a in enumerate(arms) for b in arms[i + 1 :]]
        if len(arms) == 1:
            pairs = [(arms[0], arms[0])]
    out = [
        PairedDiff(a, b, seeds, tuple(by_arm[a][s] - by_arm[b][s] for s in seeds)) for a, b in pairs
    ]
    return Report(scenarios.pop(), tuple(out))


def load_summaries(directories: Sequence[str | Path]) -> list[RunSummary]:
    """Run summaries from experiment output directories (their summary.json).

    Refuses directories written with a different CSV or summary version.
    """
    from .experiment import SUMMARY_VERSION

    out = []
    for d in directories:
        path = Path(d) / "summary.json"
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise CompareError(f"cannot read {path}: {exc}") from exc
        if data.get("csv_version") != CSV_VERSION or data.get("format_version") != SUMMARY_VERSION:
            raise CompareError(
                f"{path}: csv_version {data.get('csv_version')!r} / format_version {data.get('format_version')!r} "
                f"do not match this build ({CSV_VERSION}/{SUMMARY_VERSION})"
            )
        for arm in data["arms"].values():
            out.extend(RunSummary.from_dict(r) for r in arm["runs"])
    return out
