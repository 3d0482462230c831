"""Command line: ``moesched run|sweep|verify``.

Exit codes: 0 success, 1 verify found violations, 2 config error,
3 capacity error, 4 simulator self-check failure.
"""

from __future__ import annotations

import argparse
import datetime
import logging
import sys
from pathlib import Path

from .errors import CapacityError, ConfigError, InvariantError, SizeError
from .scenario import (SWEEP_AXES, layer_costs, load_scenario, resolve_K, run_scenario, sweep,
                       write_sweep)
from .traces import dumps_json, read_events_csv, write_atomic
from .verification import replay_check

log = logging.getLogger("moesched")


def _parse_values(text: str) -> list:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(int(item))
        except ValueError:
            try:
                out.append(float(item))
            except ValueError:
                raise ConfigError(f"--values: {item!r} is not a number") from None
    if not out:
        raise ConfigError("--values: no values given")
    return out


def _write_meta(out: Path, command: str, config: str) -> None:
    # timestamps live only here so the other outputs stay byte-reproducible
    write_atomic(out / "run_meta.json", dumps_json({
        "command": command,
        "config": config,
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }))


def cmd_run(args) -> int:
    s = load_scenario(args.config, seed=args.seed)
    out = Path(args.out or s.output_dir)
    written = run_scenario(s, out, args.trace_format)
    _write_meta(out, "run", args.config)
    print((out / "summary.csv").read_text(), end="")
    log.info("wrote %d files to %s", len(written), out)
    return 0


def cmd_sweep(args) -> int:
    s = load_scenario(args.config, seed=args.seed)
    out = Path(args.out or s.output_dir)
    rows = sweep(s, args.axis, _parse_values(args.values), jobs=args.jobs)
    path = write_sweep(rows, out)
    _write_meta(out, "sweep", args.config)
    print(path.read_text(), end="")
    return 0


def cmd_verify(args) -> int:
    s = load_scenario(args.config, seed=args.seed)
    events = read_events_csv(args.trace)
    costs = dict(enumerate(layer_costs(s)))
    violations = replay_check(events, costs, resolve_K(s))
    for v in violations:
        where = f"layer {v.layer_id}" + (f" expert {v.expert_id}" if v.expert_id is not None else "")
        print(f"{v.kind}: {where}: {v.detail}")
    if violations:
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return 1
    print(f"ok: {len(events)} events, no violations")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="moesched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one scenario")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    run.add_argument("--trace-format", choices=("chrome", "csv", "both"), default="both")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    sw.add_argument("config")
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma separated values")
    sw.add_argument("--out", default=None)
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", parents=[common], help="replay-check an events CSV")
    ver.add_argument("trace", help="events CSV written by run")
    ver.add_argument("config", help="scenario config, ideally scenario.resolved.json")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
