"""Main/sub-agent simulation against a generation backend, plus grounding."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from . import prompts
from .analysis import RepoAnalysis
from .backends import BackendError, GenerationRequest, derive_seed
from .ingest import RepoSnapshot
from .trajectory import (
    Agent,
    Kind,
    Provenance,
    Tool,
    ToolCall,
    Trajectory,
    TrajectoryStep,
    action_step,
    brief_step,
    observation_step,
    system_step,
    think_step,
    validate_trajectory,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationConfig:
    max_prompt_retries: int = 3
    temperature: float = 0.7
    seed: int = 0
    max_read_calls_per_file: int = 8
    max_output_tokens: int = 16384

    def __post_init__(self):
        if self.max_prompt_retries < 1:
            raise ValueError("max_prompt_retries must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class SimulationError(Exception):
    """A repository (or one of its files) could not be turned into a trajectory."""

    def __init__(self, stage: str, reason: str, path: str | None = None):
        self.stage = stage
        self.reason = reason
        self.path = path
        super().__init__(f"{stage}: {path + ': ' if path else ''}{reason}")


class DiscardError(SimulationError):
    pass


class GroundingError(SimulationError):
    def __init__(self, reason: str, path: str | None = None):
        super().__init__("grounding", reason, path)


class MemoryFormatError(ValueError):
    """Model output that does not follow the JSON memory contract."""


# -- JSON memory extraction -------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z]*\n?|```")


def extract_json_list(text: str) -> list:
    """First well-formed JSON array in `text`, ignoring markdown fences."""
    cleaned = _FENCE_RE.sub("", text)
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\[", cleaned):
        try:
            value, _ = decoder.raw_decode(cleaned, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value
    raise MemoryFormatError("no JSON list found in the output")


def _entries(memory: list) -> list[dict]:
    out = []
    for i, entry in enumerate(memory):
        if not isinstance(entry, dict) or "role" not in entry:
            raise MemoryFormatError(f"entry {i} is not an object with a 'role'")
        content = entry.get("content", "")
        if content is None:
            content = ""
        if not isinstance(content, str):
            content = json.dumps(content, ensure_ascii=False, sort_keys=True)
        out.append({**entry, "content": content})
    return out


def _tool_call(entry: dict) -> tuple[str, dict] | None:
    call = entry.get("tool-call") or entry.get("tool_call")
    if not call:
        return None
    if not isinstance(call, dict) or "function_name" not in call:
        raise MemoryFormatError("tool-call must be an object with 'function_name'")
    args = call.get("arguments") or {}
    if not isinstance(args, dict):
        raise MemoryFormatError("tool-call arguments must be an object")
    return str(call["function_name"]).strip().lower(), {k: v if isinstance(v, str) else json.dumps(v) for k, v in args.items()}


# -- main agent ---------------------------------------------------------------

def parse_main_memory(memory: list, repo_id: str, order: list[str], tree: str) -> Trajectory:
    entries = _entries(memory)
    steps: list[TrajectoryStep] = []
    if not entries or entries[0]["role"] != "system_prompt":
        steps.append(system_step(prompts.MAIN_SYSTEM_PROMPT))
    requirement = None
    called: list[str] = []
    for entry in entries:
        role = entry["role"]
        if role == "system_prompt":
            if steps:
                raise MemoryFormatError("system_prompt must be the first entry")
            steps.append(system_step(entry["content"]))
        elif role == "user":
            if requirement is not None:
                raise MemoryFormatError("only one user entry is allowed")
            requirement = entry["content"]
            steps.append(brief_step(requirement))
        elif role in ("gpt", "assistant"):
            if requirement is None:
                raise MemoryFormatError("the requirement (user entry) must precede the agent's turns")
            if entry["content"].strip():
                steps.append(think_step(entry["content"]))
            call = _tool_call(entry)
            if call is None:
                continue
            name, args = call
            if name == "final_answer":
                steps.append(action_step(ToolCall(Tool.FINAL_ANSWER, {"answer": args.get("answer", "")})))
                continue
            if name not in ("code_generator", "callsubagent", "call_sub_agent"):
                raise MemoryFormatError(f"main agent cannot call {name!r}")
            path = args.get("file_path")
            if not path or "requirement" not in args:
                raise MemoryFormatError("code_generator calls need file_path and requirement")
            args = {
                "requirement_for_repo": args.get("requirement_for_repo") or requirement,
                "tree_structure": tree,
                "file_name": args.get("file_name") or path.rsplit("/", 1)[-1],
                "file_path": path,
                "requirement": args["requirement"],
            }
            called.append(path)
            steps.append(action_step(ToolCall(Tool.CALL_SUB_AGENT, args)))
            steps.append(observation_step(prompts.success_message(path), Provenance.GROUNDED))
        elif role in ("tool-response", "tool_response", "tool"):
            continue  # completion messages come from the pipeline
        else:
            raise MemoryFormatError(f"unknown role {role!r}")
    if requirement is None:
        raise MemoryFormatError("missing the user requirement entry")
    if called != list(order):
        raise MemoryFormatError(
            f"sub-agent calls must follow the implementation order {list(order)}, got {called}"
        )
    return Trajectory(Agent.MAIN, tuple(steps), None, repo_id)


def _generate(backend, prompt: str, cfg: SimulationConfig, parse, seed_parts: tuple, stage: str, path=None):
    error = None
    for attempt in range(cfg.max_prompt_retries):
        text = prompt + (prompts.retry_suffix(error) if error else "")
        req = GenerationRequest(
            (("user", text),), cfg.temperature, cfg.max_output_tokens, derive_seed(cfg.seed, *seed_parts, attempt)
        )
        try:
            output = backend.generate(req)
        except BackendError as exc:
            if not exc.retryable:
                raise SimulationError(stage, f"backend error: {exc}", path) from exc
            error = f"backend error: {exc}"
            log.info("%s attempt %d failed: %s", stage, attempt + 1, exc)
            continue
        try:
            return parse(extract_json_list(output))
        except MemoryFormatError as exc:
            error = str(exc)
            log.info("%s attempt %d unusable: %s", stage, attempt + 1, exc)
    raise DiscardError(stage, f"no usable output after {cfg.max_prompt_retries} attempts: {error}", path)


def simulate_main_agent(snap: RepoSnapshot, analysis: RepoAnalysis, backend, cfg: SimulationConfig) -> Trajectory:
    """Plan + one CallSubAgent per file, in implementation order (no nested trajectories yet)."""
    order = [p for p in analysis.order.order if p in snap.files]
    tree = analysis.tree.render()
    prompt = prompts.main_agent_prompt(
        {p: snap.text(p) for p in snap.files}, tree, order, analysis.graph.edges, analysis.order.cycle_groups
    )
    parse = lambda memory: parse_main_memory(memory, snap.repo_id, order, tree)  # noqa: E731
    return _generate(backend, prompt, cfg, parse, (snap.repo_id, "main"), "simulate-main")


# -- sub agent ----------------------------------------------------------------

def parse_sub_memory(memory: list, repo_id: str, task: Mapping[str, str], cfg: SimulationConfig) -> Trajectory:
    path = task["file_path"]
    entries = _entries(memory)
    steps: list[TrajectoryStep] = []
    if not entries or entries[0]["role"] != "system_prompt":
        steps.append(system_step(prompts.SUB_SYSTEM_PROMPT))
    if not any(e["role"] == "user" for e in entries):
        steps.append(brief_step(json.dumps(dict(task), ensure_ascii=False)))
    reads = writes = 0
    awaiting: ToolCall | None = None

    def close_pending():
        # the model did not report a tool result; add one for grounding to fill
        nonlocal awaiting
        if awaiting is not None and awaiting.tool is Tool.WRITE:
            steps.append(observation_step(prompts.write_result(awaiting.path, awaiting.arguments["content"])))
        elif awaiting is not None and awaiting.tool is Tool.READ:
            steps.append(observation_step(""))
        awaiting = None

    for entry in entries:
        role = entry["role"]
        if role == "system_prompt":
            if steps:
                raise MemoryFormatError("system_prompt must be the first entry")
            steps.append(system_step(entry["content"]))
        elif role == "user":
            if any(s.kind is Kind.TASK_BRIEF for s in steps):
                raise MemoryFormatError("only one user entry is allowed")
            steps.append(brief_step(entry["content"]))
        elif role in ("gpt", "assistant"):
            close_pending()
            if entry["content"].strip():
                steps.append(think_step(entry["content"]))
            call = _tool_call(entry)
            if call is None:
                continue
            name, args = call
            if name == "read":
                target = args.get("file_to_read") or args.get("file_path") or args.get("file")
                if not target:
                    raise MemoryFormatError("read needs file_to_read")
                tc = ToolCall(Tool.READ, {"file_to_read": target})
                reads += 1
            elif name == "write":
                if "file_path" not in args or "content" not in args:
                    raise MemoryFormatError("write needs file_path and content")
                if args["file_path"] != path:
                    raise DiscardError("simulate-sub", f"write targets {args['file_path']!r}", path)
                tc = ToolCall(Tool.WRITE, {"file_path": args["file_path"], "content": args["content"]})
                writes += 1
            elif name == "final_answer":
                tc = ToolCall(Tool.FINAL_ANSWER, {"answer": args.get("answer", "")})
            else:
                raise MemoryFormatError(f"sub-agent cannot call {name!r}")
            steps.append(action_step(tc))
            awaiting = tc if tc.tool is not Tool.FINAL_ANSWER else None
        elif role in ("tool-response", "tool_response", "tool"):
            if awaiting is None and not (steps and steps[-1].kind is Kind.ACTION):
                continue  # stray reply without a call
            steps.append(observation_step(entry["content"]))
            awaiting = None
        else:
            raise MemoryFormatError(f"unknown role {role!r}")
    close_pending()
    if writes != 1:
        raise MemoryFormatError(f"expected exactly one write to {path!r}, found {writes}")
    if reads > cfg.max_read_calls_per_file:
        raise MemoryFormatError(f"{reads} read calls exceed the limit of {cfg.max_read_calls_per_file}")
    return Trajectory(Agent.SUB, tuple(steps), path, repo_id)


def simulate_sub_agent(
    task: Mapping[str, str], snap: RepoSnapshot, analysis: RepoAnalysis, backend, cfg: SimulationConfig
) -> Trajectory:
    path = task["file_path"]
    if path not in snap.files:
        raise DiscardError("simulate-sub", "file not in snapshot", path)
    related = {dep: snap.text(dep) for dep in analysis.graph.dependencies(path) if dep in snap.files}
    skeleton = analysis.skeletons[path].render() if path in analysis.skeletons else ""
    prompt = prompts.sub_agent_prompt(task, path, snap.text(path), related, skeleton)
    parse = lambda memory: parse_sub_memory(memory, snap.repo_id, task, cfg)  # noqa: E731
    return _generate(backend, prompt, cfg, parse, (snap.repo_id, "sub", path), "simulate-sub", path)


# -- grounding ----------------------------------------------------------------

@dataclass
class GroundingReport:
    reads_corrected: int = 0
    writes_corrected: int = 0
    forward_reads: list[tuple[str, str]] = field(default_factory=list)

    def __iadd__(self, other: "GroundingReport"):
        self.reads_corrected += other.reads_corrected
        self.writes_corrected += other.writes_corrected
        self.forward_reads.extend(other.forward_reads)
        return self

    def to_dict(self) -> dict:
        return {
            "reads_corrected": self.reads_corrected,
            "writes_corrected": self.writes_corrected,
            "forward_reads": [list(p) for p in self.forward_reads],
        }


def _next_observation(steps: list[TrajectoryStep], i: int) -> int | None:
    for j in range(i + 1, len(steps)):
        if steps[j].kind is Kind.OBSERVATION:
            return j
        if steps[j].kind is Kind.ACTION:
            return None
    return None


def ground_trajectory(t: Trajectory, snap: RepoSnapshot, order=None) -> tuple[Trajectory, GroundingReport]:
    """Replace simulated tool results and written code with the snapshot's bytes.

    Read observations become the real file content; Write content becomes
    the real file, and its result message is recomputed from it. Only steps
    whose text actually changes are flipped to Grounded. Reads of files that
    come later in `order` are still grounded but reported.
    """
    position = {p: i for i, p in enumerate(order.order if hasattr(order, "order") else order or ())}
    report = GroundingReport()
    steps = list(t.steps)

    def put(j: int, new: TrajectoryStep) -> bool:
        if steps[j] == new:
            return False
        steps[j] = new
        return True

    for i, step in enumerate(list(steps)):
        call = step.tool_call
        if step.kind is not Kind.ACTION or call is None:
            continue
        if call.tool is Tool.READ:
            path = call.path
            if path not in snap.files:
                raise GroundingError("read of a file that is not in the repository", path)
            reader = t.target_file
            if reader in position and path in position and position[path] > position[reader]:
                report.forward_reads.append((reader, path))
            j = _next_observation(steps, i)
            real = snap.text(path)
            if j is not None and steps[j].content != real:
                put(j, replace(steps[j], content=real, provenance=Provenance.GROUNDED))
                report.reads_corrected += 1
        elif call.tool is Tool.WRITE:
            path = call.path
            if path not in snap.files:
                raise GroundingError("write of a file that is not in the repository", path)
            real = snap.text(path)
            if call.arguments.get("content") != real:
                fixed = ToolCall(Tool.WRITE, {**call.arguments, "content": real})
                put(i, action_step(fixed, provenance=Provenance.GROUNDED))
                report.writes_corrected += 1
            j = _next_observation(steps, i)
            if j is not None and steps[j].content != prompts.write_result(path, real):
                put(j, replace(steps[j], content=prompts.write_result(path, real), provenance=Provenance.GROUNDED))
                report.writes_corrected += 1
        elif call.tool is Tool.CALL_SUB_AGENT and step.sub_trajectory is not None:
            sub, sub_report = ground_trajectory(step.sub_trajectory, snap, order)
            if sub is not step.sub_trajectory:
                steps[i] = replace(steps[i], sub_trajectory=sub)
            report += sub_report
    if steps == list(t.steps):
        return t, report
    return t.with_steps(steps), report


# -- whole repository -----------------------------------------------------------

def synthesize_repo_trajectory(
    snap: RepoSnapshot, analysis: RepoAnalysis, backend, cfg: SimulationConfig
) -> tuple[Trajectory, GroundingReport]:
    """Main trajectory with every sub-agent simulated, grounded, validated and nested."""
    main = simulate_main_agent(snap, analysis, backend, cfg)
    report = GroundingReport()
    steps = list(main.steps)
    for i, step in enumerate(main.steps):
        call = step.tool_call
        if call is None or call.tool is not Tool.CALL_SUB_AGENT:
            continue
        sub = simulate_sub_agent(call.arguments, snap, analysis, backend, cfg)
        sub, sub_report = ground_trajectory(sub, snap, analysis.order)
        check = validate_trajectory(sub)
        if not check.ok:
            raise DiscardError("simulate-sub", f"invalid trajectory: {check}", call.path)
        report += sub_report
        steps[i] = action_step(call, sub=sub, provenance=step.provenance)
    result = main.with_steps(steps)
    check = validate_trajectory(result)
    if not check.ok:
        raise DiscardError("simulate-main", f"invalid trajectory: {check}")
    return result, report


def memory_from_entries(entries: list[dict[str, Any]]) -> str:
    """Serialize a memory list the way a model would return it (used by fixtures)."""
    return json.dumps(entries, ensure_ascii=False, indent=2)
