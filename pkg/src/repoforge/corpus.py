"""Flattening, loss masks, corpus mixing, JSONL emission and token statistics."""

from __future__ import annotations

import json
import os
import random
import statistics
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backends.base import derive_seed
from .tokens import TokenCounter, count_tokens
from .trajectory import Kind, Trajectory, validate_trajectory

ROLE_TAGS = {
    Kind.SYSTEM_PROMPT: "system",
    Kind.TASK_BRIEF: "user",
    Kind.THINK: "assistant_think",
    Kind.ACTION: "assistant_action",
    Kind.OBSERVATION: "tool_response",
}
SEGMENT_TEMPLATE = "<|{role_tag}|>\n{text}\n"


@dataclass(frozen=True)
class Segment:
    role_tag: str
    text: str
    trainable: bool
    origin: tuple = ()   # (repo_id, agent, step index path)

    @property
    def agent(self) -> str:
        return self.origin[1] if len(self.origin) > 1 else ""

    def render(self) -> str:
        return SEGMENT_TEMPLATE.format(role_tag=self.role_tag, text=self.text)

    def to_dict(self) -> dict:
        return {"role_tag": self.role_tag, "text": self.text, "trainable": self.trainable, "agent": self.agent}


@dataclass(frozen=True)
class FlattenedDocument:
    repo_id: str
    segments: tuple[Segment, ...]
    approx_tokens: int

    @property
    def text(self) -> str:
        return "".join(s.render() for s in self.segments)

    def to_dict(self) -> dict:
        return {"repo_id": self.repo_id, "segments": [s.to_dict() for s in self.segments], "approx_tokens": self.approx_tokens}

    @classmethod
    def from_dict(cls, d: dict) -> "FlattenedDocument":
        segs = tuple(
            Segment(s["role_tag"], s["text"], s["trainable"], (d["repo_id"], s.get("agent", "")))
            for s in d["segments"]
        )
        return cls(d["repo_id"], segs, d["approx_tokens"])


def render_steps(steps: Iterable) -> str:
    return "".join(SEGMENT_TEMPLATE.format(role_tag=ROLE_TAGS[s.kind], text=s.content) for s in steps)


def flatten(
    t: Trajectory, keep_sub_system_prompt: bool = True, counter: TokenCounter = count_tokens
) -> FlattenedDocument:
    """Inline every sub-agent trajectory at its CallSubAgent site, depth first."""
    report = validate_trajectory(t)
    if not report.ok:
        raise ValueError(f"refusing to flatten an invalid trajectory:\n{report}")
    segments: list[Segment] = []

    def walk(traj: Trajectory, path: tuple[int, ...]):
        for i, step in enumerate(traj.steps):
            if traj.agent.value == "Sub" and step.kind is Kind.SYSTEM_PROMPT and not keep_sub_system_prompt:
                continue
            tag = ROLE_TAGS[step.kind]
            segments.append(Segment(tag, step.content, tag != "tool_response", (t.repo_id, traj.agent.value, path + (i,))))
            if step.sub_trajectory is not None:
                walk(step.sub_trajectory, path + (i,))

    walk(t, ())
    return FlattenedDocument(t.repo_id, tuple(segments), sum(counter(s.text) for s in segments))


@dataclass(frozen=True)
class MaskSummary:
    trainable_chars: int
    masked_chars: int
    masked_segment_count: int


def compute_mask_summary(d: FlattenedDocument) -> MaskSummary:
    trainable = masked = count = 0
    for s in d.segments:
        if s.trainable:
            trainable += len(s.text)
        else:
            masked += len(s.text)
            count += 1
    return MaskSummary(trainable, masked, count)


# -- JSONL ------------------------------------------------------------------

def _atomic_write_lines(path: str | Path, lines: Iterable[str]) -> None:
    if str(path) == "-":
        for line in lines:
            sys.stdout.write(line + "\n")
        sys.stdout.flush()
        return
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_jsonl(docs: Iterable[FlattenedDocument], path: str | Path) -> None:
    _atomic_write_lines(path, (json.dumps(d.to_dict(), ensure_ascii=False) for d in docs))


def iter_jsonl(path: str | Path):
    """Yield (line number, object); malformed lines raise with their number."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def read_documents(path: str | Path) -> list[FlattenedDocument]:
    return [FlattenedDocument.from_dict(obj) for _, obj in iter_jsonl(path)]


def doc_tokens(obj: Mapping, counter: TokenCounter = count_tokens) -> int:
    """Token count of a corpus record: `approx_tokens`, else its segments or `text`."""
    if "approx_tokens" in obj:
        return int(obj["approx_tokens"])
    if "segments" in obj:
        return sum(counter(s["text"]) for s in obj["segments"])
    if "text" in obj:
        return counter(obj["text"])
    raise ValueError("record has none of approx_tokens, segments, text")


# -- mixing -------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureSource:
    name: str
    path: str
    share: float


@dataclass(frozen=True)
class MixtureSpec:
    sources: tuple[MixtureSource, ...]
    total_token_budget: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.sources:
            raise ValueError("mixture needs at least one source")
        total = sum(s.share for s in self.sources)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"source shares sum to {total}, not 1")
        if any(s.share < 0 for s in self.sources):
            raise ValueError("source shares must be non-negative")
        names = [s.name for s in self.sources]
        if len(set(names)) != len(names):
            raise ValueError("source names must be unique")
        if self.total_token_budget <= 0:
            raise ValueError("total_token_budget must be positive")


class SourceExhausted(ValueError):
    def __init__(self, shortfalls: dict[str, tuple[int, int]]):
        self.shortfalls = shortfalls
        detail = ", ".join(f"{n}: {got}/{want} tokens" for n, (got, want) in shortfalls.items())
        super().__init__(f"sources exhausted before reaching their share ({detail})")


@dataclass
class MixResult:
    manifest: dict
    records: list[dict] = field(repr=False)


def mix_corpus(
    spec: MixtureSpec,
    inputs: Mapping[str, Sequence[dict]] | None = None,
    counter: TokenCounter = count_tokens,
) -> MixResult:
    """Draw documents per source until each reaches share * budget tokens.

    Each source is visited in its own seeded random order and documents are
    taken whole, so a source overshoots its target by less than one document.
    The combined stream is shuffled with the same seed.
    """
    if inputs is None:
        inputs = {s.name: [obj for _, obj in iter_jsonl(s.path)] for s in spec.sources}
    selected: list[tuple[str, dict]] = []
    rows = []
    shortfalls = {}
    for src in spec.sources:
        docs = list(inputs[src.name])
        target = round(src.share * spec.total_token_budget)
        idx = list(range(len(docs)))
        random.Random(derive_seed(spec.seed, "source", src.name)).shuffle(idx)
        got = taken = 0
        for k in idx:
            if got >= target:
                break
            got += doc_tokens(docs[k], counter)
            taken += 1
            selected.append((src.name, docs[k]))
        if got < target:
            shortfalls[src.name] = (got, target)
        rows.append({"name": src.name, "path": src.path, "share": src.share, "target_tokens": target,
                     "achieved_tokens": got, "documents": taken})
    if shortfalls:
        raise SourceExhausted(shortfalls)
    total = sum(r["achieved_tokens"] for r in rows)
    for r in rows:
        r["achieved_share"] = r["achieved_tokens"] / total if total else 0.0
    random.Random(derive_seed(spec.seed, "stream")).shuffle(selected)
    records = [{"source": name, **doc} for name, doc in selected]
    manifest = {
        "seed": spec.seed,
        "total_token_budget": spec.total_token_budget,
        "total_tokens": total,
        "documents": len(records),
        "sources": rows,
    }
    return MixResult(manifest, records)


def write_mixture(result: MixResult, corpus_path: str | Path, manifest_path: str | Path) -> None:
    _atomic_write_lines(corpus_path, (json.dumps(r, ensure_ascii=False) for r in result.records))
    _atomic_write_lines(manifest_path, [json.dumps(result.manifest, indent=2, ensure_ascii=False)])


# -- statistics ---------------------------------------------------------------

CATEGORIES = ("main_think", "main_action", "main_response", "sub_think", "sub_action", "sub_response")
_CATEGORY_SUFFIX = {"assistant_think": "think", "assistant_action": "action", "tool_response": "response"}


@dataclass
class TokenDistribution:
    categories: dict[str, int]
    prompt_tokens: int          # system + user segments
    plain_text_tokens: int      # records without segments
    per_repo: dict[str, int]
    raw_code_tokens: dict[str, int] = field(default_factory=dict)

    @property
    def total_tokens(self) -> int:
        return sum(self.categories.values()) + self.prompt_tokens + self.plain_text_tokens

    def length_summary(self) -> dict:
        vals = sorted(self.per_repo.values())
        if not vals:
            return {"repos": 0}
        return {"repos": len(vals), "mean": statistics.fmean(vals), "median": statistics.median(vals),
                "min": vals[0], "max": vals[-1]}

    def to_dict(self) -> dict:
        out = {
            "categories": dict(self.categories),
            "prompt_tokens": self.prompt_tokens,
            "plain_text_tokens": self.plain_text_tokens,
            "total_tokens": self.total_tokens,
            "per_repo": dict(sorted(self.per_repo.items())),
            "trajectory_length": self.length_summary(),
        }
        if self.raw_code_tokens:
            raw = sorted(self.raw_code_tokens.values())
            out["raw_code_tokens"] = dict(sorted(self.raw_code_tokens.items()))
            out["raw_code_length"] = {"repos": len(raw), "mean": statistics.fmean(raw)}
        return out


def corpus_stats(
    path: str | Path, raw_code_tokens: Mapping[str, int] | None = None, counter: TokenCounter = count_tokens
) -> TokenDistribution:
    cats = dict.fromkeys(CATEGORIES, 0)
    prompt = plain = 0
    per_repo: dict[str, int] = {}
    for lineno, obj in iter_jsonl(path):
        if "segments" not in obj:
            if "text" not in obj:
                raise ValueError(f"{path}:{lineno}: record has neither segments nor text")
            plain += counter(obj["text"])
            continue
        repo = obj.get("repo_id", "")
        doc_total = 0
        for seg in obj["segments"]:
            try:
                n = counter(seg["text"])
                tag, agent = seg["role_tag"], seg.get("agent", "Main")
            except (KeyError, TypeError):
                raise ValueError(f"{path}:{lineno}: malformed segment") from None
            doc_total += n
            if tag in _CATEGORY_SUFFIX:
                cats[f"{'sub' if agent == 'Sub' else 'main'}_{_CATEGORY_SUFFIX[tag]}"] += n
            else:
                prompt += n
        per_repo[repo] = per_repo.get(repo, 0) + doc_total
    return TokenDistribution(cats, prompt, plain, per_repo, dict(raw_code_tokens or {}))
