"""Greedy perplexity-guided refinement of Think steps.

The ground-truth code is scored under the reasoning that precedes it; a
thought step is swapped for a sampled rewrite only when that rewrite makes
the code strictly less perplexing.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from . import prompts
from .backends import BackendError, GenerationRequest, ScoreRequest, derive_seed, with_retries
from .corpus import render_steps
from .trajectory import Agent, Kind, Tool, Trajectory

log = logging.getLogger(__name__)

# refinements must read as first-pass reasoning, not as commentary on an edit
DENYLIST = tuple(re.compile(p, re.I) for p in (
    r"\bin this (refinement|revision|rewrite)\b",
    r"\bcorrect(ing|ed)? (the|my) previous\b",
    r"\b(better|improved|refined|revised) (reasoning|version|step)\b",
    r"\blet'?s (refine|revise|improve)\b",
    r"\bhere is the (refined|revised|improved|better)\b",
    r"\breference (code|implementation)\b",
    r"\bprovided solution\b",
    r"\bground[- ]truth\b",
))

_BLOCK_SEP = re.compile(r"\n[ \t]*\n\s*")
_REFINE_RE = re.compile(r"<refine>(.*?)</refine>", re.S)
CHAIN_SEPARATOR = "\n\n"


@dataclass(frozen=True)
class CoTStep:
    index: int
    text: str
    location: tuple[int, tuple[int, int]]   # (trajectory step index, (start, end) in its content)


@dataclass(frozen=True)
class CoTChain:
    steps: tuple[CoTStep, ...]
    target: str
    context_prefix: str
    repo_id: str = ""
    target_file: str | None = None

    def __post_init__(self):
        if not self.steps:
            raise EmptyChainError("a chain needs at least one step")
        if not self.target:
            raise ValueError("chain target must be non-empty")

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.steps]

    def with_texts(self, texts: Sequence[str]) -> "CoTChain":
        return replace(self, steps=tuple(replace(s, text=t) for s, t in zip(self.steps, texts)))


class EmptyChainError(ValueError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    k: int = 2
    rounds: int = 3
    seed: int = 0
    acceptance: str = "strictly-lower-ppl"
    max_proposal_attempts: int = 3
    include_main: bool = False
    temperature: float = 0.7

    def __post_init__(self):
        if self.k < 1 or self.rounds < 1:
            raise ValueError("k and rounds must be >= 1")
        if self.acceptance != "strictly-lower-ppl":
            raise ValueError("only 'strictly-lower-ppl' acceptance is supported")


def split_blocks(text: str) -> list[tuple[int, int]]:
    """Spans of the blank-line separated, non-blank blocks of `text`."""
    spans, start = [], 0
    for m in _BLOCK_SEP.finditer(text):
        spans.append((start, m.start()))
        start = m.end()
    spans.append((start, len(text)))
    return [(a, b) for a, b in spans if text[a:b].strip()]


def _written_content(t: Trajectory, path: str | None) -> str | None:
    for s in t.steps:
        if s.kind is Kind.ACTION and s.tool_call and s.tool_call.tool is Tool.WRITE:
            if path is None or s.tool_call.path == path:
                return s.tool_call.arguments["content"]
    return None


def decompose_cot(t: Trajectory, target_file: str | None = None, target: str | None = None) -> CoTChain:
    target_file = target_file or t.target_file
    if target is None:
        target = _written_content(t, target_file)
    if not target:
        raise ValueError(f"no written content for {target_file!r}")
    steps: list[CoTStep] = []
    first_think = None
    for i, s in enumerate(t.steps):
        if s.kind is not Kind.THINK:
            continue
        if first_think is None:
            first_think = i
        for a, b in split_blocks(s.content):
            steps.append(CoTStep(len(steps), s.content[a:b], (i, (a, b))))
    if not steps:
        raise EmptyChainError("trajectory has no Think steps")
    return CoTChain(tuple(steps), target, render_steps(t.steps[:first_think]), t.repo_id, target_file)


def chain_context(chain: CoTChain, texts: Sequence[str] | None = None) -> str:
    texts = chain.texts if texts is None else texts
    return chain.context_prefix + CHAIN_SEPARATOR.join(x for x in texts if x)


def score_chain(chain: CoTChain, scorer, texts: Sequence[str] | None = None) -> float:
    """Perplexity of the chain's target given its context and thoughts."""
    res = with_retries(lambda: scorer.score(ScoreRequest(chain_context(chain, texts), chain.target)))
    return res.ppl


def extract_refinement(output: str) -> str:
    m = _REFINE_RE.search(output)
    if not m or not m.group(1).strip():
        raise ValueError("no <refine> block")
    text = m.group(1).strip("\n")
    for pattern in DENYLIST:
        m = pattern.search(text)
        if m:
            raise ValueError(f"meta-commentary: {m.group(0)!r}")
    return text


@dataclass
class Proposal:
    candidates: list[str]
    attempts: int
    failures: list[str] = field(default_factory=list)


def propose_refinements(chain: CoTChain, i: int, generator, cfg: SearchConfig, round_index: int = 1,
                        texts: Sequence[str] | None = None) -> Proposal:
    if not 0 <= i < len(chain.steps):
        raise IndexError(i)
    texts = list(chain.texts if texts is None else texts)
    prompt = prompts.refine_prompt(chain.target, chain_context(chain, texts), texts[i])
    out = Proposal([], 0)
    for j in range(cfg.k):
        for attempt in range(cfg.max_proposal_attempts):
            out.attempts += 1
            seed = derive_seed(cfg.seed, chain.repo_id, chain.target_file, round_index, i, j, attempt)
            try:
                text = generator.generate(GenerationRequest((("user", prompt),), cfg.temperature, 4096, seed))
                out.candidates.append(extract_refinement(text))
                break
            except (BackendError, ValueError) as exc:
                out.failures.append(str(exc))
    return out


@dataclass(frozen=True)
class TraceRecord:
    repo_id: str
    target_file: str | None
    round: int
    step: int
    original_ppl: float | None
    candidate_ppls: tuple[float | None, ...]
    accepted: int | None
    ppl_after: float | None
    chain_chars_after: int
    skipped: str | None = None

    def to_dict(self) -> dict:
        return {
            "repo_id": self.repo_id, "target_file": self.target_file, "round": self.round, "step": self.step,
            "original_ppl": self.original_ppl, "candidate_ppls": list(self.candidate_ppls),
            "accepted": self.accepted, "ppl_after": self.ppl_after,
            "chain_chars_after": self.chain_chars_after, "skipped": self.skipped,
        }


@dataclass
class ChainTrace:
    repo_id: str
    target_file: str | None
    n_steps: int
    initial_ppl: float | None
    initial_chars: int
    records: list[TraceRecord] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return sum(1 for r in self.records if r.skipped is None)

    @property
    def skips(self) -> int:
        return sum(1 for r in self.records if r.skipped is not None)

    def ppl_by_round(self) -> list[float | None]:
        """Chain PPL before round 1 and after each round."""
        out = [self.initial_ppl]
        for rec in self.records:
            if rec.step == self.n_steps - 1:
                out.append(rec.ppl_after)
        return out

    def chars_by_round(self) -> list[int]:
        out = [self.initial_chars]
        for rec in self.records:
            if rec.step == self.n_steps - 1:
                out.append(rec.chain_chars_after)
        return out


def optimize_chain(chain: CoTChain, generator, scorer, cfg: SearchConfig) -> tuple[list[str], ChainTrace]:
    texts = chain.texts
    n = len(texts)
    try:
        current = score_chain(chain, scorer, texts)
    except BackendError as exc:
        log.warning("cannot score initial chain for %s: %s", chain.target_file, exc)
        current = None
    trace = ChainTrace(chain.repo_id, chain.target_file, n, current, sum(map(len, texts)))
    for r in range(1, cfg.rounds + 1):
        for i in range(n):
            before = current
            ppls: list[float | None] = []
            accepted = None
            skipped = None
            if current is None:
                skipped = "scorer unavailable"
            else:
                proposal = propose_refinements(chain, i, generator, cfg, r, texts)
                for cand in proposal.candidates:
                    trial = texts[:i] + [cand] + texts[i + 1:]
                    try:
                        ppls.append(score_chain(chain, scorer, trial))
                    except BackendError as exc:
                        log.warning("scoring failed: %s", exc)
                        ppls.append(None)
                scored = [(p, j) for j, p in enumerate(ppls) if p is not None]
                if not proposal.candidates:
                    skipped = "no candidates: " + "; ".join(proposal.failures[-cfg.k:])
                elif not scored:
                    skipped = "scorer failed on every candidate"
                else:
                    best_ppl, best = min(scored)
                    if best_ppl < current:
                        texts[i] = proposal.candidates[best]
                        current = best_ppl
                        accepted = best
            trace.records.append(
                TraceRecord(chain.repo_id, chain.target_file, r, i, before, tuple(ppls), accepted, current,
                            sum(map(len, texts)), skipped)
            )
    return texts, trace


def splice(t: Trajectory, chain: CoTChain, texts: Sequence[str]) -> Trajectory:
    """Write step texts back into their Think steps; every other step is untouched."""
    by_step: dict[int, list[tuple[tuple[int, int], str]]] = {}
    for step, text in zip(chain.steps, texts):
        idx, span = step.location
        by_step.setdefault(idx, []).append((span, text))
    steps = list(t.steps)
    for idx, parts in by_step.items():
        content = steps[idx].content
        out, pos = [], 0
        for (a, b), text in sorted(parts):
            out.append(content[pos:a])
            out.append(text)
            pos = b
        out.append(content[pos:])
        new = "".join(out)
        if new != content:
            steps[idx] = replace(steps[idx], content=new)
    return t.with_steps(steps) if steps != list(t.steps) else t


def search_optimize(t: Trajectory, snap, generator, scorer, cfg: SearchConfig = SearchConfig()
                    ) -> tuple[Trajectory, list[ChainTrace]]:
    """Refine the Think steps of every sub-agent (and optionally the main agent).

    Sub-agent chains target the file they write; the main chain targets the
    concatenation of all written files. `snap`, when given, supplies the
    targets instead of the trajectory's own Write content.
    """
    traces: list[ChainTrace] = []

    def target_for(path):
        if snap is not None and path in snap.files:
            return snap.text(path)
        return None

    def optimize_sub(sub: Trajectory) -> Trajectory:
        try:
            chain = decompose_cot(sub, sub.target_file, target_for(sub.target_file))
        except EmptyChainError:
            return sub
        texts, trace = optimize_chain(chain, generator, scorer, cfg)
        traces.append(trace)
        return splice(sub, chain, texts)

    if t.agent is Agent.SUB:
        return optimize_sub(t), traces

    steps = list(t.steps)
    for i, sub in t.sub_trajectories():
        new = optimize_sub(sub)
        if new is not sub:
            steps[i] = replace(steps[i], sub_trajectory=new)
    result = t.with_steps(steps) if steps != list(t.steps) else t
    if cfg.include_main:
        files = [s.sub_trajectory for s in result.steps if s.sub_trajectory is not None]
        target = "\n".join(
            target_for(sub.target_file) or _written_content(sub, sub.target_file) or "" for sub in files
        )
        if target.strip():
            try:
                chain = decompose_cot(result, None, target)
            except EmptyChainError:
                return result, traces
            texts, trace = optimize_chain(replace(chain, target_file=None), generator, scorer, cfg)
            traces.append(trace)
            result = splice(result, chain, texts)
    return result, traces


def write_trace(path, traces: Sequence[ChainTrace]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for tr in traces:
            for rec in tr.records:
                f.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
