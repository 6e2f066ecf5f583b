"""Deterministic stand-ins for generation and scoring."""

from __future__ import annotations

import json
import math
import random
import re
import threading
from collections import Counter
from typing import Iterable

from .. import prompts
from ..tokens import identifiers, tokenize
from .base import BackendError, GenerationRequest, ScoreRequest, ScoreResult


class ScriptedGenerator:
    """Returns queued outputs in order; an Exception in the queue is raised instead."""

    def __init__(self, outputs: Iterable[str | Exception]):
        self._queue = list(outputs)
        self._lock = threading.Lock()
        self.requests: list[GenerationRequest] = []

    def generate(self, req: GenerationRequest) -> str:
        with self._lock:
            self.requests.append(req)
            if not self._queue:
                raise BackendError("scripted generator exhausted")
            item = self._queue.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    @property
    def remaining(self) -> int:
        return len(self._queue)


# -- template generator -----------------------------------------------------

_FILE_RE = re.compile(r'<file path="([^"]+)">\n(.*?)\n</file>', re.S)
_GOLDEN_RE = re.compile(r'<golden path="([^"]+)">\n(.*?)\n</golden>', re.S)


def _section(text: str, tag: str) -> str:
    m = re.search(rf"<{tag}>\n(.*?)\n</{tag}>", text, re.S)
    return m.group(1) if m else ""


def _rng(req: GenerationRequest, seed: int) -> random.Random:
    from .base import derive_seed

    return random.Random(derive_seed(seed, req.seed, req.prompt))


class TemplateGenerator:
    """Answers the pipeline's own prompts with plausible, structured output.

    It reads the tagged sections of a prompt and fills fixed templates, so
    output is a pure function of (request, seed). Tool results it invents
    are deliberately wrong, which gives grounding something to fix.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, req: GenerationRequest) -> str:
        prompt = req.prompt
        if prompts.REFINE_MARKER in prompt:
            return self._refine(prompt, _rng(req, self.seed))
        if prompts.SUB_MARKER in prompt:
            return self._sub(prompt, _rng(req, self.seed))
        if prompts.MAIN_MARKER in prompt:
            return self._main(prompt, _rng(req, self.seed))
        return "I am not sure what to do with this request."

    def _main(self, prompt: str, rng: random.Random) -> str:
        files = dict(_FILE_RE.findall(prompt.split("Tree structure of the repository:")[0]))
        tree = _section(prompt, "tree")
        order_block = prompt.split("Implementation order of files:\n", 1)[1].split("\n\n", 1)[0]
        order = [line.split(". ", 1)[1] for line in order_block.splitlines() if re.match(r"\d+\. ", line)]
        names = sorted({n for text in files.values() for n in _defined_names(text)})
        shown = ", ".join(f"`{n}`" for n in names[:6]) or "a handful of helpers"
        requirement = (
            f"Build a small project made of {len(order)} module(s). It should expose {shown} "
            "and work as a coherent whole that can be run and imported."
        )
        memory = [
            {"role": "system_prompt", "content": prompts.MAIN_SYSTEM_PROMPT},
            {"role": "user", "content": requirement},
        ]
        openers = ["First,", "To begin,", "Starting out,"]
        for i, path in enumerate(order):
            if i == 0:
                think = (
                    f"The repository is laid out as follows:\n{tree}\n\n"
                    f"{rng.choice(openers)} I fix the order so every file is written after the files it "
                    f"imports: {', '.join(order)}. I hand `{path}` to the code generator now."
                )
            else:
                think = f"`{order[i - 1]}` is done. Next in the plan is `{path}`."
            memory.append(
                {
                    "role": "gpt",
                    "content": think,
                    "tool-call": {
                        "function_name": "code_generator",
                        "arguments": {
                            "requirement_for_repo": requirement,
                            "tree_structure": tree,
                            "file_name": path.rsplit("/", 1)[-1],
                            "file_path": path,
                            "requirement": _file_requirement(path, files.get(path, "")),
                        },
                    },
                }
            )
            memory.append({"role": "tool-response", "content": "done"})
        memory.append({"role": "gpt", "content": "All planned files have been generated. The project is complete."})
        return "```json\n" + json.dumps(memory, indent=2) + "\n```"

    def _sub(self, prompt: str, rng: random.Random) -> str:
        args = json.loads(_section(prompt, "arguments"))
        path = args["file_path"]
        golden = dict(_GOLDEN_RE.findall(prompt)).get(path, "")
        related_block = prompt.split("Related files (what `read` returns):", 1)[-1]
        related = dict(_FILE_RE.findall(related_block))
        memory = [
            {"role": "system_prompt", "content": prompts.SUB_SYSTEM_PROMPT},
            {"role": "user", "content": json.dumps(args, ensure_ascii=False)},
        ]
        own = _defined_names(golden)
        for dep, text in related.items():
            used = [n for n in _defined_names(text) if n in golden] or _defined_names(text)[:2]
            memory.append(
                {
                    "role": "gpt",
                    "content": (
                        f"I need to create `{path}`. It relies on `{dep}`, so before writing anything I "
                        f"check how {', '.join(f'`{u}`' for u in used) or 'its contents'} are defined there."
                    ),
                    "tool-call": {"function_name": "read", "arguments": {"file_to_read": dep}},
                }
            )
            # an invented reply; grounding swaps in the real file
            memory.append({"role": "tool-response", "content": f"# {dep}\n" + "\n".join(f"def {u}(...): ..." for u in used)})
        styles = [
            "I will structure `{p}` around {names}, keeping each piece small and testable.",
            "My plan for `{p}`: define {names} and wire them together, paying attention to edge cases.",
            "Now I can write `{p}`. The key parts are {names}.",
        ]
        names = ", ".join(f"`{n}`" for n in own[:5]) or "a short script body"
        memory.append(
            {
                "role": "gpt",
                "content": rng.choice(styles).format(p=path, names=names),
                "tool-call": {
                    "function_name": "write",
                    "arguments": {"file_path": path, "content": golden.split("\n", 1)[0] + "\n# ..."},
                },
            }
        )
        return json.dumps(memory, indent=2)

    def _refine(self, prompt: str, rng: random.Random) -> str:
        reference = _section(prompt, "reference")
        context = _section(prompt, "context")
        block = _section(prompt, "replace")
        seen = set(identifiers(context)) | set(identifiers(block))
        missing = [n for n in dict.fromkeys(identifiers(reference)) if n not in seen]
        if not missing:
            extra = "I double-check that the plan covers every requirement before writing."
        else:
            picked = rng.sample(missing, min(len(missing), rng.randint(1, 2)))
            extra = "I also need " + " and ".join(f"`{n}`" for n in picked) + " to get this right."
        return f"<think>\nThe block misses a few concrete names.\n</think>\n<refine>\n{block} {extra}\n</refine>"


def _defined_names(source: str) -> list[str]:
    return re.findall(r"^\s*(?:async\s+)?(?:def|class)\s+([A-Za-z_]\w*)", source, re.M)


def _file_requirement(path: str, source: str) -> str:
    names = _defined_names(source)
    if names:
        return f"Implement `{path}` providing " + ", ".join(f"`{n}`" for n in names[:8]) + "."
    return f"Implement `{path}` as the entry point that ties the project together."


# -- scorers ----------------------------------------------------------------

class UniformScorer:
    """Every target token gets the same log-probability."""

    def __init__(self, logprob: float = -math.log(2)):
        self.logprob = logprob

    def score(self, req: ScoreRequest) -> ScoreResult:
        n = len(tokenize(req.target)) or len(req.target)
        return ScoreResult(self.logprob * n, n)


class NgramScorer:
    """Character trigram cache model over the context.

    Each target character is scored by how often its trigram (two chars of
    history plus itself) occurs in the context: p = (count + 1) / (count + V).
    An unseen trigram gets 1/V. Adding text to the context can only raise
    counts, so it never raises perplexity.
    """

    def __init__(self, n: int = 3, vocab_size: int = 256):
        self.n = n
        self.vocab_size = vocab_size

    def _counts(self, text: str) -> Counter:
        padded = "\x02" * (self.n - 1) + text
        return Counter(padded[i : i + self.n] for i in range(len(padded) - self.n + 1))

    def score(self, req: ScoreRequest) -> ScoreResult:
        counts = self._counts(req.context)
        padded = "\x02" * (self.n - 1) + req.target
        total = 0.0
        for i in range(len(req.target)):
            c = counts.get(padded[i : i + self.n], 0)
            total += math.log((c + 1) / (c + self.vocab_size))
        return ScoreResult(total, len(req.target))


class OverlapScorer:
    """Rewards target identifiers that the context already mentions.

    Identifier tokens present in the context score `hit`, absent ones score
    `miss`; punctuation and numbers score `hit` so only naming matters.
    """

    def __init__(self, hit: float = math.log(0.9), miss: float = math.log(0.05)):
        self.hit = hit
        self.miss = miss

    def score(self, req: ScoreRequest) -> ScoreResult:
        known = set(identifiers(req.context))
        toks = tokenize(req.target)
        total = 0.0
        for tok in toks:
            is_ident = tok[0].isalpha() or tok[0] == "_"
            total += self.miss if is_ident and tok not in known else self.hit
        return ScoreResult(total, max(len(toks), 1)) if toks else ScoreResult(self.hit, 1)
