"""Command line entry point: ``fsslab run|validate|batch``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, ScenarioConfig, validate_config
from .runner import EXIT_CONFIG, EXIT_OK, dump_json, run_scenario

log = logging.getLogger("fsslab")


def _run_one(path: str, out: str, seed: int | None) -> tuple[str, int, str]:
    try:
        report, code = run_scenario(path, out, seed)
    except ConfigError as exc:
        return path, EXIT_CONFIG, str(exc)
    return path, code, report.get("status", "")


def cmd_run(args) -> int:
    out = Path(args.out) if args.out else Path("runs") / Path(args.config).stem
    try:
        report, code = run_scenario(args.config, out, args.seed)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    summary = {"status": report["status"], "out": str(out)}
    if "verdicts" in report:
        summary["verdicts"] = report["verdicts"]
    print(json.dumps(summary, indent=2, sort_keys=True))
    return code


def cmd_validate(args) -> int:
    rep = validate_config(args.config)
    print(dump_json(rep), end="")
    return EXIT_OK if rep["valid"] else EXIT_CONFIG


def cmd_batch(args) -> int:
    configs = sorted(Path(args.config_dir).glob("*.yaml")) + sorted(Path(args.config_dir).glob("*.yml"))
    if not configs:
        print(f"no *.yaml configs in {args.config_dir}", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(args.out) if args.out else Path("runs")
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(str(c), str(root / c.stem), args.seed) for c in configs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    summary = [{"config": Path(p).name, "exit_code": c, "status": s} for p, c, s in results]
    (root / "batch_summary.json").write_text(dump_json({"runs": summary}))
    for row in summary:
        print(f"{row['config']}: exit {row['exit_code']} {row['status']}")
    return max(c for _, c, _ in results)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsslab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate one scenario and write its artifacts")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default runs/<config stem>)")
    r.add_argument("--seed", type=int, help="override the configured seed")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="static checks of a scenario file")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    b = sub.add_parser("batch", help="run every *.yaml in a directory")
    b.add_argument("config_dir")
    b.add_argument("--out", help="root output directory (default runs/)")
    b.add_argument("--seed", type=int)
    b.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    b.set_defaults(func=cmd_batch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
