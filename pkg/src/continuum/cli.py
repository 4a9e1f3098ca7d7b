"""Command line: ``continuum run|compare|validate|sweep``.

Exit codes: 0 ok, 1 usage error, 2 invalid config or scenario, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .harness.compare import CompareError, compare, load_summaries
from .harness.experiment import ConfigError, load_config, parse_config, run_experiment, with_param
from .sim.scenario import ScenarioError, load_scenario_file

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _table(summary: dict) -> str:
    lines = [f"scenario {summary['scenario']}  seeds {summary['seeds']}"]
    for name, arm in summary["arms"].items():
        rec = "; ".join(
            f"t={t}: {r['recovered']} recovered, {r['not_recovered']} not" for t, r in arm["recovery"].items()
        )
        lines.append(
            f"  {name:<16} fulfillment {arm['fulfillment_mean']:.4f} +/- {arm['fulfillment_sd']:.4f}"
            + (f"  [{rec}]" if rec else "")
        )
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output) if args.output else None
    summary = run_experiment(cfg, workers=args.workers, output_dir=out)
    print(_table(summary))
    print(f"wrote {out or cfg.resolved_output()}")
    return EXIT_OK


def cmd_compare(args) -> int:
    report = compare(load_summaries(args.dirs), reference=args.reference)
    print(report.to_text(), end="")
    if args.json:
        Path(args.json).write_text(report.to_json())
    return EXIT_OK


def cmd_validate(args) -> int:
    s = load_scenario_file(args.scenario)
    print(
        f"ok: {s.name}: {len(s.topology.nodes)} nodes, {len(s.services)} services, "
        f"{len(s.slos)} SLOs, {len(s.agents)} agents, horizon {s.horizon}"
    )
    return EXIT_OK


def _parse_values(text: str) -> list:
    return [yaml.safe_load(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    path = Path(args.config)
    try:
        base = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = _parse_values(args.values)
    if not values:
        raise ConfigError("--values needs at least one value")
    configs = []
    for v in values:
        data = with_param(base, args.param, v)
        cfg = parse_config(data, path.parent)
        configs.append((v, cfg))
    root = Path(args.output) if args.output else configs[0][1].resolved_output()
    for v, cfg in configs:
        out = root / f"{args.param}={v}"
        summary = run_experiment(cfg, workers=args.workers, output_dir=out)
        print(f"{args.param}={v}")
        print(_table(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="continuum", description="Simulate and compare orchestration agents on a compute continuum.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None, help="parallel runs (default: from config)")
    r.add_argument("--output", help="output directory (overrides config and env)")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("compare", help="paired comparison of experiment outputs")
    c.add_argument("dirs", nargs="+")
    c.add_argument("--reference", help="arm to compare every other arm against")
    c.add_argument("--json", help="also write the report as JSON here")
    c.set_defaults(fn=cmd_compare)

    v = sub.add_parser("validate", help="parse and validate a scenario file")
    v.add_argument("scenario")
    v.set_defaults(fn=cmd_validate)

    s = sub.add_parser("sweep", help="rerun an experiment over values of one config field")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="dotted config key, e.g. overrides.noise_sigma")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--output", help="root directory for the sweep")
    s.set_defaults(fn=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CompareError as exc:
        print(f"compare failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
