"""Command line entry point.

    gffpin run <experiment> [--config FILE] [--set key=value]... [--out DIR]
                            [--seed S] [--threads T] [--force]
    gffpin list
    gffpin verify [--out DIR] [--threads T]

`run` executes one registry experiment and persists the resolved config,
JSONL records and CSV tables; `verify` runs the whole acceptance suite and
prints one verdict line per criterion.  GFFPIN_THREADS is the fallback for
--threads.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import config as cfgmod
from . import experiments, io
from .errors import ConfigError, GffpinError


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("GFFPIN_THREADS")
    return max(1, int(env)) if env else 1


def _resolve_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        cfg.update(cfgmod.parse_config(Path(args.config).read_text(encoding="utf-8")))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        cfg[key.strip()] = cfgmod.parse_value(val)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _prepare_outdir(path: str | None, force: bool) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty (use --force to reuse)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _persist(result: experiments.ExperimentResult, out: Path | None) -> None:
    if out is None:
        return
    stamp = {
        "experiment": result.name,
        "passed": result.passed,
        "wall_time": result.wall_time,
        "git": io.git_describe(),
        "config": result.config,
        "streams": result.streams,
    }
    Path(out / "config.resolved").write_text(
        cfgmod.render_config(result.config, header=f"resolved config for {result.name}"),
        encoding="utf-8")
    for rec in [stamp] + list(result.records):
        io.append_jsonl(out / "results.jsonl", rec)
    for name, (header, rows) in result.tables.items():
        io.write_csv(out / f"{name}.csv", header, rows)


def _cmd_run(args) -> int:
    try:
        cfg = _resolve_config(args)
        out = _prepare_outdir(args.out, args.force)
        cfg.setdefault("threads", _threads(args))
        result = experiments.run_experiment(args.experiment, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in result.lines:
        print(line)
    print(f"{result.name}: wall time {result.wall_time:.1f} s")
    _persist(result, out)
    if result.passed is None:
        return 0
    return 0 if result.passed else 1


def _cmd_list(_args) -> int:
    rows = experiments.list_experiments()
    width = max(len(name) for name, _, _ in rows)
    for name, desc, statement in rows:
        print(f"{name:<{width}}  {desc}")
        print(f"{'':<{width}}  probes: {statement}")
    return 0


def _cmd_verify(args) -> int:
    out = _prepare_outdir(args.out, True)
    all_ok = True
    t0 = time.time()
    for name in experiments.acceptance_names():
        exp = experiments.REGISTRY[name]
        result = experiments.run_experiment(name, {"threads": _threads(args)})
        ok = bool(result.passed)
        all_ok &= ok
        print(f"criterion {exp.acceptance:2d} [{'PASS' if ok else 'FAIL'}] "
              f"{name} ({result.wall_time:.1f} s)")
        if not ok:
            for line in result.lines:
                print(f"    {line}")
        if out is not None:
            _persist(result, out)
    print(f"acceptance suite: {'PASS' if all_ok else 'FAIL'} "
          f"({time.time() - t0:.1f} s total)")
    return 0 if all_ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gffpin", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one named experiment")
    p_run.add_argument("experiment")
    p_run.add_argument("--config", help="flat key = value config file")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_run.add_argument("--out", help="output directory for records and tables")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--force", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list", help="list registered experiments")
    p_list.set_defaults(fn=_cmd_list)

    p_ver = sub.add_parser("verify", help="run the full acceptance suite")
    p_ver.add_argument("--out")
    p_ver.add_argument("--threads", type=int)
    p_ver.set_defaults(fn=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GffpinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
