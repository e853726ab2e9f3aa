"""Command line entry point: ``hawkesbandit {simulate,ingest,run,sweep,report}``.

Failures exit with status 1 (2 for usage errors) and print
``{"errors": [...]}`` on stderr.
"""
import argparse
import json
import logging
import os
import sys

from ._rng import stream
from .environment import GridSpec, ingest
from .hawkes import generate_synthetic
from .policies import POLICY_KINDS
from .runner import ConfigError, _synth_from_dict, config_from_dict, load_config, report, run_experiment, sweep, \
    write_table


class UsageError(Exception):
    pass


def _load_json(path):
    if not path:
        raise UsageError("--config is required")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc


def _experiment_config(args):
    if not args.config:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.policy is not None:
        cfg.policy = args.policy
    return cfg


def cmd_simulate(args):
    doc = _load_json(args.config) if args.config else {}
    synth = _synth_from_dict(doc.get("synth", doc.get("data", {}).get("synth", {})))
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    events = generate_synthetic(synth, stream(seed, "data"))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "events.csv")
    events.to_csv(path, with_parent=doc.get("with_parent", False))
    return {"events": len(events), "path": path}


def cmd_ingest(args):
    doc = _load_json(args.config)
    if "input" not in doc:
        raise ConfigError(["ingest config needs an 'input' path"])
    grid = GridSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc["grid"].items()}) \
        if "grid" in doc else None
    filters = dict(doc.get("filters", {}))
    if "bbox" in filters:
        filters["bbox"] = tuple(tuple(b) for b in filters["bbox"])
    inp = doc["input"]
    if not os.path.isabs(inp):
        inp = os.path.join(os.path.dirname(os.path.abspath(args.config)), inp)
    dataset, rep = ingest(inp, doc.get("schema"), filters, grid)
    os.makedirs(args.out, exist_ok=True)
    dataset.to_csv(os.path.join(args.out, "events.csv"))
    with open(os.path.join(args.out, "ingest_report.json"), "w") as fh:
        json.dump(rep.as_dict(), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(args.out, "ingest_report.txt"), "w") as fh:
        fh.write(rep.to_text())
    return rep.as_dict()


def cmd_run(args):
    cfg = _experiment_config(args)
    result = run_experiment(cfg, parallel=args.parallel)
    result.write(args.out)
    return {"out": args.out, "mean": result.summary["mean"]}


def cmd_sweep(args):
    doc = _load_json(args.config)
    if "base" not in doc or "grid" not in doc:
        raise ConfigError(["sweep config needs 'base' and 'grid'"])
    base = config_from_dict(doc["base"])
    if args.seed is not None:
        base.seed = args.seed
    if args.policy is not None:
        base.policy = args.policy
    table, best = sweep(doc["grid"], base, parallel=args.parallel, out_dir=args.out)
    os.makedirs(args.out, exist_ok=True)
    write_table(os.path.join(args.out, "sweep.csv"), table)
    write_table(os.path.join(args.out, "best.csv"), [{"metric": m, **row} for m, row in best.items()])
    failed = [r for r in table if r["error"]]
    return {"points": len(table), "failed": len(failed), "out": args.out}


def cmd_report(args):
    if not args.results:
        raise UsageError("report needs at least one result directory")
    summary, _, _ = report(args.results, args.out)
    return {"runs": len(summary), "out": args.out}


COMMANDS = {"simulate": cmd_simulate, "ingest": cmd_ingest, "run": cmd_run, "sweep": cmd_sweep,
            "report": cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(prog="hawkesbandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--policy", choices=POLICY_KINDS, help="policy kind override")
        p.add_argument("--parallel", type=int, default=1, help="worker processes")
        if name == "report":
            p.add_argument("results", nargs="*", help="run directories or rows.csv files")
    return parser


def _fail(errors, code=1):
    print(json.dumps({"errors": errors}), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.seed is not None and args.seed < 0:
        return _fail(["--seed must be >= 0"], 2)
    if args.parallel < 1:
        return _fail(["--parallel must be >= 1"], 2)
    try:
        out = COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail([str(exc)], 2)
    except ConfigError as exc:
        return _fail(exc.errors)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail([f"{type(exc).__name__}: {exc}"])
    print(json.dumps(out, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
