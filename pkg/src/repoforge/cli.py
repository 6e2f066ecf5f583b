"""Command line entry point: analyze, simulate, optimize, flatten, mix, stats, run."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .backends import GENERATORS, SCORERS, make_generator, make_scorer
from .config import ConfigError, load_config

log = logging.getLogger("repoforge")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML config file")
    parser.add_argument("--seed", type=int, default=default, help="override every seed in the config")
    parser.add_argument("--jobs", type=int, default=default, help="worker threads")
    parser.add_argument("--log", default=default, help="write warning records (JSONL) here instead of stderr")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repoforge", description=__doc__)
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="scan, filter and analyze repositories")
    p.add_argument("--root", required=True, help="directory whose subdirectories are repositories")
    p.add_argument("--out", default="-", help="analysis JSONL (default: stdout)")

    p = sub.add_parser("simulate", parents=[common], help="simulate and ground trajectories")
    p.add_argument("--analysis", required=True)
    p.add_argument("--backend", choices=GENERATORS, default=None)
    p.add_argument("--out", required=True, help="output .traj.jsonl")

    p = sub.add_parser("optimize", parents=[common], help="refine Think steps by PPL-guided search")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--gen-backend", choices=GENERATORS, default=None)
    p.add_argument("--score-backend", choices=SCORERS, default=None)
    p.add_argument("--include-main", action="store_true", default=None)

    p = sub.add_parser("flatten", parents=[common], help="trajectories -> loss-masked documents")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--drop-sub-system-prompt", action="store_true")

    p = sub.add_parser("mix", parents=[common], help="compose a corpus from token shares")
    p.add_argument("--spec", required=True, help="config file with a mixture section")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("stats", parents=[common], help="token distribution of a corpus")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--analysis", default=None, help="analysis JSONL, for raw-code token counts")

    sub.add_parser("run", parents=[common], help="all stages end to end")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    log_stream = open(args.log, "a", encoding="utf-8") if args.log else None
    sink = pipeline.WarningSink(log_stream)
    try:
        cfg = load_config(args.spec if args.command == "mix" else args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        jobs = args.jobs or cfg.pipeline.jobs
        return _dispatch(args, cfg, jobs, sink)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if log_stream:
            log_stream.close()


def _dispatch(args, cfg, jobs: int, sink) -> int:
    cmd = args.command
    if cmd == "analyze":
        statuses = pipeline.stage_analyze(args.root, cfg.filter.build(), args.out, jobs, sink)
        for st in statuses:
            if st.status != "ok":
                sink.emit({"type": "failure", **st.to_dict()})
        return 0 if any(s.status == "ok" for s in statuses) else 1
    if cmd == "simulate":
        gen = make_generator(args.backend or cfg.backends.generator, cfg.simulate.seed, cfg.endpoint("gen"),
                             cfg.backends.max_inflight)
        statuses = pipeline.stage_simulate(args.analysis, gen, cfg.simulate.build(), args.out, jobs, sink)
        for st in statuses:
            if st.status != "ok":
                sink.emit({"type": "failure", **st.to_dict()})
        return 0 if any(s.status == "ok" for s in statuses) else 1
    if cmd == "optimize":
        sec = cfg.search
        if args.k is not None:
            sec.k = args.k
        if args.rounds is not None:
            sec.rounds = args.rounds
        if args.include_main:
            sec.include_main = True
        gen = make_generator(args.gen_backend or cfg.backends.generator, sec.seed, cfg.endpoint("gen"),
                             cfg.backends.max_inflight)
        scorer = make_scorer(args.score_backend or cfg.backends.scorer, sec.seed, cfg.endpoint("score"),
                             cfg.backends.max_inflight)
        traces = pipeline.stage_optimize(args.inp, args.out, args.trace, gen, scorer, sec.build(), jobs)
        accepted = sum(1 for t in traces for r in t.records if r.accepted is not None)
        print(json.dumps({"chains": len(traces), "accepted": accepted}))
        return 0
    if cmd == "flatten":
        n = pipeline.stage_flatten(args.inp, args.out, not args.drop_sub_system_prompt)
        print(json.dumps({"documents": n}))
        return 0
    if cmd == "mix":
        try:
            manifest = pipeline.stage_mix(cfg.mixture_spec(), args.out, args.manifest)
        except ValueError as exc:
            print(f"mix failed: {exc}", file=sys.stderr)
            return 1
        print(json.dumps({"documents": manifest["documents"], "total_tokens": manifest["total_tokens"]}))
        return 0
    if cmd == "stats":
        pipeline.stage_stats(args.inp, args.out, args.analysis)
        return 0
    if cmd == "run":
        record = pipeline.run(cfg, jobs, sink)
        print(json.dumps(record.to_dict(timings=False)["counts"]))
        return 0 if record.ok_count >= 1 else 1
    raise AssertionError(cmd)


if __name__ == "__main__":
    sys.exit(main())
