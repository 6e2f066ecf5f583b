"""Pipeline stages. Each stage reads and writes files so it can be re-run alone."""

from __future__ import annotations

import json
import logging
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

from .analysis import AnalysisError, RepoAnalysis, analyze_snapshot
from .backends import BackendError, make_generator, make_scorer
from .config import PipelineConfig
from .corpus import _atomic_write_lines, corpus_stats, emit_jsonl, flatten, iter_jsonl, mix_corpus, write_mixture
from .ingest import FilterConfig, RepoSnapshot, discover_repositories, filter_snapshot, scan_repository
from .search import SearchConfig, search_optimize, write_trace
from .simulation import DiscardError, GroundingError, SimulationConfig, SimulationError, synthesize_repo_trajectory
from .tokens import count_tokens
from .trajectory import read_trajectories, validate_trajectory, write_trajectories

log = logging.getLogger(__name__)


class WarningSink:
    """Line-delimited JSON warning/failure records to a file or stderr."""

    def __init__(self, stream: TextIO | None = None):
        self._stream = stream or sys.stderr
        self._lock = threading.Lock()

    def emit(self, record: dict) -> None:
        with self._lock:
            self._stream.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
            self._stream.flush()


@dataclass
class RepoStatus:
    repo_id: str
    status: str = "ok"          # ok | discarded | failed
    stage: str | None = None
    reason: str | None = None

    def to_dict(self) -> dict:
        d = {"repo_id": self.repo_id, "status": self.status}
        if self.stage:
            d["stage"] = self.stage
        if self.reason:
            d["reason"] = self.reason
        return d


@dataclass
class PipelineRunRecord:
    repos: dict[str, RepoStatus] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    @property
    def ok_count(self) -> int:
        return sum(1 for r in self.repos.values() if r.status == "ok")

    def fail(self, repo_id: str, status: str, stage: str, reason: str) -> None:
        rec = self.repos.setdefault(repo_id, RepoStatus(repo_id))
        if rec.status == "ok":
            rec.status, rec.stage, rec.reason = status, stage, reason

    def to_dict(self, timings: bool = True) -> dict:
        d = {
            "repos": [self.repos[k].to_dict() for k in sorted(self.repos)],
            "counts": {s: sum(1 for r in self.repos.values() if r.status == s) for s in ("ok", "discarded", "failed")},
            "outputs": dict(sorted(self.outputs.items())),
        }
        if timings:
            d["timings"] = {k: round(v, 4) for k, v in self.timings.items()}
        return d


def _map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- analyze ------------------------------------------------------------------

def analysis_record(snap: RepoSnapshot, analysis: RepoAnalysis) -> dict:
    return {
        "repo_id": snap.repo_id,
        "root": snap.root,
        "files": {p: snap.text(p) for p in snap.files},
        "analysis": analysis.to_dict(),
    }


def load_analysis_record(obj: dict) -> tuple[RepoSnapshot, RepoAnalysis]:
    snap = RepoSnapshot.from_texts(obj["repo_id"], obj["files"], obj.get("root", ""))
    return snap, RepoAnalysis.from_dict(obj["analysis"], list(snap.files))


def stage_analyze(root, cfg: FilterConfig, out_path, jobs: int = 1, sink: WarningSink | None = None) -> list[RepoStatus]:
    roots = discover_repositories(root)

    def one(repo_root: Path):
        status = RepoStatus(repo_root.name)
        try:
            snap = scan_repository(repo_root, cfg)
        except OSError as exc:
            status.status, status.stage, status.reason = "failed", "ingest", str(exc)
            return status, None
        if sink:
            for w in snap.warnings:
                sink.emit({"type": "warning", **w.to_dict()})
        decision = filter_snapshot(snap, cfg)
        if not decision:
            status.status, status.stage, status.reason = "discarded", "filter", decision.reason
            return status, None
        try:
            analysis = analyze_snapshot(snap, strict=True)
        except AnalysisError as exc:
            status.status, status.stage, status.reason = "failed", "static-analysis", str(exc)
            return status, None
        return status, analysis_record(snap, analysis)

    results = _map(one, roots, jobs)
    _atomic_write_lines(out_path, (json.dumps(rec, ensure_ascii=False) for _, rec in results if rec is not None))
    return [s for s, _ in results]


# -- simulate -----------------------------------------------------------------

def stage_simulate(analysis_path, generator, cfg: SimulationConfig, out_path, jobs: int = 1,
                   sink: WarningSink | None = None) -> list[RepoStatus]:
    records = [obj for _, obj in iter_jsonl(analysis_path)]

    def one(obj):
        snap, analysis = load_analysis_record(obj)
        try:
            traj, report = synthesize_repo_trajectory(snap, analysis, generator, cfg)
        except SimulationError as exc:
            status = "discarded" if isinstance(exc, (DiscardError, GroundingError)) else "failed"
            return RepoStatus(snap.repo_id, status, exc.stage, exc.reason), None
        except BackendError as exc:
            return RepoStatus(snap.repo_id, "failed", "simulate", f"backend: {exc}"), None
        if sink and report.forward_reads:
            sink.emit({"type": "warning", "repo_id": snap.repo_id, "stage": "grounding",
                       "forward_reads": [list(p) for p in report.forward_reads]})
        return RepoStatus(snap.repo_id), traj

    results = _map(one, records, jobs)
    write_trajectories(out_path, [t for _, t in sorted(results, key=lambda r: r[0].repo_id) if t is not None])
    return [s for s, _ in results]


# -- optimize -----------------------------------------------------------------

def stage_optimize(in_path, out_path, trace_path, generator, scorer, cfg: SearchConfig, jobs: int = 1) -> list:
    trajectories = read_trajectories(in_path)
    results = _map(lambda t: search_optimize(t, None, generator, scorer, cfg), trajectories, jobs)
    write_trajectories(out_path, [t for t, _ in results])
    traces = [tr for _, trs in results for tr in trs]
    write_trace(trace_path, traces)
    return traces


# -- flatten / mix / stats ----------------------------------------------------

def stage_flatten(in_path, out_path, keep_sub_system_prompt: bool = True) -> int:
    docs = []
    for t in read_trajectories(in_path):
        report = validate_trajectory(t)
        if not report.ok:
            raise ValueError(f"{t.repo_id}: invalid trajectory:\n{report}")
        docs.append(flatten(t, keep_sub_system_prompt))
    emit_jsonl(docs, out_path)
    return len(docs)


def stage_mix(spec, out_path, manifest_path) -> dict:
    result = mix_corpus(spec)
    write_mixture(result, out_path, manifest_path)
    return result.manifest


def raw_code_tokens(analysis_path) -> dict[str, int]:
    return {
        obj["repo_id"]: sum(count_tokens(t) for t in obj["files"].values())
        for _, obj in iter_jsonl(analysis_path)
    }


def stage_stats(in_path, out_path, analysis_path=None) -> dict:
    raw = raw_code_tokens(analysis_path) if analysis_path else None
    stats = corpus_stats(in_path, raw).to_dict()
    _atomic_write_lines(out_path, [json.dumps(stats, indent=2, sort_keys=True)])
    return stats


# -- run ----------------------------------------------------------------------

def run(cfg: PipelineConfig, jobs: int | None = None, sink: WarningSink | None = None) -> PipelineRunRecord:
    """Every stage in order. Per-repo failures are recorded, never fatal for the batch."""
    jobs = jobs or cfg.pipeline.jobs
    out = cfg.resolve(cfg.pipeline.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = PipelineRunRecord()
    paths = {
        "analysis": out / "analysis.jsonl",
        "trajectories": out / "trajectories.traj.jsonl",
        "optimized": out / "optimized.traj.jsonl",
        "trace": out / "search_trace.jsonl",
        "docs": out / "docs.jsonl",
        "stats": out / "stats.json",
        "run_record": out / "run_record.json",
    }

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            record.timings[name] = time.perf_counter() - t0

    gen = make_generator(cfg.backends.generator, cfg.simulate.seed, cfg.endpoint("gen"), cfg.backends.max_inflight)

    for st in timed("analyze", lambda: stage_analyze(cfg.resolve(cfg.pipeline.repos_root), cfg.filter.build(),
                                                      paths["analysis"], jobs, sink)):
        record.repos[st.repo_id] = st
        if st.status != "ok" and sink:
            sink.emit({"type": "failure", **st.to_dict()})
    for st in timed("simulate", lambda: stage_simulate(paths["analysis"], gen, cfg.simulate.build(),
                                                        paths["trajectories"], jobs, sink)):
        if st.status != "ok":
            record.fail(st.repo_id, st.status, st.stage, st.reason)
            if sink:
                sink.emit({"type": "failure", **st.to_dict()})

    flatten_in = paths["trajectories"]
    if cfg.search.enabled:
        scorer = make_scorer(cfg.backends.scorer, cfg.search.seed, cfg.endpoint("score"), cfg.backends.max_inflight)
        search_gen = make_generator(cfg.backends.generator, cfg.search.seed, cfg.endpoint("gen"), cfg.backends.max_inflight)
        timed("optimize", lambda: stage_optimize(paths["trajectories"], paths["optimized"], paths["trace"],
                                                 search_gen, scorer, cfg.search.build(), jobs))
        flatten_in = paths["optimized"]
    else:
        paths.pop("optimized")
        paths.pop("trace")
    timed("flatten", lambda: stage_flatten(flatten_in, paths["docs"], cfg.flatten.keep_sub_system_prompt))
    timed("stats", lambda: stage_stats(paths["docs"], paths["stats"], paths["analysis"]))

    if cfg.mixture is not None:
        paths["corpus"] = out / "corpus.jsonl"
        paths["manifest"] = out / "manifest.json"
        try:
            timed("mix", lambda: stage_mix(cfg.mixture_spec(paths["docs"]), paths["corpus"], paths["manifest"]))
        except ValueError as exc:
            log.error("mixing failed: %s", exc)
            if sink:
                sink.emit({"type": "failure", "stage": "mix", "reason": str(exc)})
            paths.pop("corpus")
            paths.pop("manifest")
            record.outputs["mix_error"] = str(exc)

    record.outputs.update({k: str(v) for k, v in paths.items()})
    _atomic_write_lines(paths["run_record"], [json.dumps(record.to_dict(), indent=2)])
    return record
