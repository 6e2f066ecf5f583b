"""Canonical trajectory data model, validation and JSON encoding."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class Tool(str, Enum):
    READ = "Read"
    WRITE = "Write"
    CALL_SUB_AGENT = "CallSubAgent"
    FINAL_ANSWER = "FinalAnswer"


class Role(str, Enum):
    SYSTEM = "System"
    USER = "User"
    AGENT = "Agent"
    TOOL_RESPONSE = "ToolResponse"


class Kind(str, Enum):
    THINK = "Think"
    ACTION = "Action"
    OBSERVATION = "Observation"
    TASK_BRIEF = "TaskBrief"
    SYSTEM_PROMPT = "SystemPrompt"


class Provenance(str, Enum):
    GENERATED = "Generated"
    GROUNDED = "Grounded"


class Agent(str, Enum):
    MAIN = "Main"
    SUB = "Sub"


TOOL_SCHEMAS: dict[Tool, tuple[str, ...]] = {
    Tool.READ: ("file_to_read",),
    Tool.WRITE: ("file_path", "content"),
    Tool.CALL_SUB_AGENT: ("requirement_for_repo", "tree_structure", "file_name", "file_path", "requirement"),
    Tool.FINAL_ANSWER: ("answer",),
}

AGENT_TOOLS = {
    Agent.MAIN: {Tool.CALL_SUB_AGENT, Tool.FINAL_ANSWER},
    Agent.SUB: {Tool.READ, Tool.WRITE, Tool.FINAL_ANSWER},
}

EXPECTED_ROLE = {
    Kind.SYSTEM_PROMPT: Role.SYSTEM,
    Kind.TASK_BRIEF: Role.USER,
    Kind.THINK: Role.AGENT,
    Kind.ACTION: Role.AGENT,
    Kind.OBSERVATION: Role.TOOL_RESPONSE,
}


@dataclass(frozen=True)
class ToolCall:
    tool: Tool
    arguments: dict[str, str]

    def __post_init__(self):
        object.__setattr__(self, "tool", Tool(self.tool))
        # schema order first so encoding is canonical
        keys = [k for k in TOOL_SCHEMAS[self.tool] if k in self.arguments]
        keys += sorted(k for k in self.arguments if k not in TOOL_SCHEMAS[self.tool])
        object.__setattr__(self, "arguments", {k: self.arguments[k] for k in keys})

    def schema_problems(self) -> list[str]:
        expected = set(TOOL_SCHEMAS[self.tool])
        got = set(self.arguments)
        problems = []
        if got - expected:
            problems.append(f"unexpected arguments {sorted(got - expected)}")
        if expected - got:
            problems.append(f"missing arguments {sorted(expected - got)}")
        problems += [f"argument {k!r} is not a string" for k, v in self.arguments.items() if not isinstance(v, str)]
        return problems

    @property
    def path(self) -> str | None:
        """The file this call is about, if any."""
        if self.tool is Tool.READ:
            return self.arguments.get("file_to_read")
        if self.tool in (Tool.WRITE, Tool.CALL_SUB_AGENT):
            return self.arguments.get("file_path")
        return None

    def render(self) -> str:
        """Text form used as the Action step's content.

        Short single-line arguments go inline; multi-line ones (file
        content, long requirements) follow as tagged blocks so code keeps
        its real line breaks.
        """
        inline, blocks = [], []
        for key, value in self.arguments.items():
            if "\n" in value:
                blocks.append(f'<{key}>\n{value}\n</{key}>')
            else:
                inline.append(f"{key}={json.dumps(value, ensure_ascii=False)}")
        head = f"{self.tool.value}({', '.join(inline)})"
        return "\n".join([head] + blocks)

    def to_dict(self) -> dict:
        return {"tool": self.tool.value, "arguments": dict(self.arguments)}

    @classmethod
    def from_dict(cls, d: dict) -> "ToolCall":
        return cls(Tool(d["tool"]), dict(d["arguments"]))


@dataclass(frozen=True)
class TrajectoryStep:
    role: Role
    kind: Kind
    content: str
    tool_call: ToolCall | None = None
    provenance: Provenance = Provenance.GENERATED
    sub_trajectory: "Trajectory | None" = None

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    def to_dict(self) -> dict:
        return {
            "role": self.role.value,
            "kind": self.kind.value,
            "content": self.content,
            "tool_call": self.tool_call.to_dict() if self.tool_call else None,
            "provenance": self.provenance.value,
            "sub_trajectory": self.sub_trajectory.to_dict() if self.sub_trajectory else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryStep":
        return cls(
            Role(d["role"]),
            Kind(d["kind"]),
            d["content"],
            ToolCall.from_dict(d["tool_call"]) if d.get("tool_call") else None,
            Provenance(d["provenance"]),
            Trajectory.from_dict(d["sub_trajectory"]) if d.get("sub_trajectory") else None,
        )


@dataclass(frozen=True)
class Trajectory:
    agent: Agent
    steps: tuple[TrajectoryStep, ...]
    target_file: str | None = None
    repo_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "agent", Agent(self.agent))
        object.__setattr__(self, "steps", tuple(self.steps))

    def with_steps(self, steps: Iterable[TrajectoryStep]) -> "Trajectory":
        return replace(self, steps=tuple(steps))

    def sub_trajectories(self) -> Iterator[tuple[int, "Trajectory"]]:
        for i, step in enumerate(self.steps):
            if step.sub_trajectory is not None:
                yield i, step.sub_trajectory

    def to_dict(self) -> dict:
        return {
            "agent": self.agent.value,
            "steps": [s.to_dict() for s in self.steps],
            "target_file": self.target_file,
            "repo_id": self.repo_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(Agent(d["agent"]), tuple(TrajectoryStep.from_dict(s) for s in d["steps"]), d.get("target_file"), d["repo_id"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "Trajectory":
        return cls.from_dict(json.loads(line))


# -- constructors -----------------------------------------------------------

def system_step(text: str) -> TrajectoryStep:
    return TrajectoryStep(Role.SYSTEM, Kind.SYSTEM_PROMPT, text)


def brief_step(text: str) -> TrajectoryStep:
    return TrajectoryStep(Role.USER, Kind.TASK_BRIEF, text)


def think_step(text: str) -> TrajectoryStep:
    return TrajectoryStep(Role.AGENT, Kind.THINK, text)


def action_step(call: ToolCall, sub: Trajectory | None = None, provenance=Provenance.GENERATED) -> TrajectoryStep:
    return TrajectoryStep(Role.AGENT, Kind.ACTION, call.render(), call, provenance, sub)


def observation_step(text: str, provenance=Provenance.GENERATED) -> TrajectoryStep:
    return TrajectoryStep(Role.TOOL_RESPONSE, Kind.OBSERVATION, text, provenance=provenance)


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    path: tuple[int, ...]   # step indices from the outermost trajectory down
    rule: str
    message: str

    def __str__(self):
        return f"step {'/'.join(map(str, self.path)) or '-'}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "\n".join(map(str, self.violations))


def validate_trajectory(t: Trajectory) -> ValidationReport:
    out: list[Violation] = []
    _validate(t, (), out)
    return ValidationReport(tuple(out))


def _validate(t: Trajectory, prefix: tuple[int, ...], out: list[Violation]):
    def bad(i, rule, msg):
        out.append(Violation(prefix + ((i,) if i is not None else ()), rule, msg))

    steps = t.steps
    if len(steps) < 2 or steps[0].kind is not Kind.SYSTEM_PROMPT or steps[1].kind is not Kind.TASK_BRIEF:
        bad(None, "preamble", "trajectory must start with SystemPrompt then TaskBrief")
    if t.agent is Agent.MAIN and t.target_file is not None:
        bad(None, "target_file", "Main trajectories have no target_file")

    pending: int | None = None   # index of an Action still waiting for its Observation
    for i, step in enumerate(steps):
        if step.role is not EXPECTED_ROLE[step.kind]:
            bad(i, "role", f"{step.kind.value} step must have role {EXPECTED_ROLE[step.kind].value}, got {step.role.value}")
        if step.kind in (Kind.SYSTEM_PROMPT, Kind.TASK_BRIEF) and i > 1:
            bad(i, "preamble", f"{step.kind.value} only allowed at the start")
        if step.kind is Kind.ACTION:
            if step.tool_call is None:
                bad(i, "tool_call", "Action without tool_call")
            else:
                call = step.tool_call
                for problem in call.schema_problems():
                    bad(i, "schema", f"{call.tool.value}: {problem}")
                if call.tool not in AGENT_TOOLS[t.agent]:
                    bad(i, "tool", f"{t.agent.value} agent cannot call {call.tool.value}")
                if step.content != call.render():
                    bad(i, "render", "Action content does not match its tool_call")
            if pending is not None:
                bad(pending, "missing_observation", f"Action at {pending} has no Observation before the Action at {i}")
            pending = i
        elif step.tool_call is not None:
            bad(i, "tool_call", f"{step.kind.value} step must not carry a tool_call")
        if step.kind is Kind.OBSERVATION:
            if pending is None:
                bad(i, "orphan_observation", "Observation without a preceding Action")
            pending = None

        if step.sub_trajectory is not None:
            call = step.tool_call
            if step.kind is not Kind.ACTION or call is None or call.tool is not Tool.CALL_SUB_AGENT:
                bad(i, "sub_trajectory", "sub_trajectory only allowed on CallSubAgent actions")
            else:
                sub = step.sub_trajectory
                if sub.agent is not Agent.SUB:
                    bad(i, "sub_trajectory", "nested trajectory must be a Sub agent")
                if sub.target_file != call.arguments.get("file_path"):
                    bad(i, "sub_trajectory", f"nested target_file {sub.target_file!r} != call file_path")
                _validate(sub, prefix + (i,), out)
    # a trailing Action may legitimately end the record without a reply

    if t.agent is Agent.SUB and t.target_file is not None:
        writes = [
            s.tool_call.arguments.get("file_path")
            for s in steps
            if s.kind is Kind.ACTION and s.tool_call is not None and s.tool_call.tool is Tool.WRITE
        ]
        hits = writes.count(t.target_file)
        if hits != 1 or len(writes) != 1:
            bad(None, "write", f"expected exactly one Write to {t.target_file!r}, found {writes}")


# -- JSONL ------------------------------------------------------------------

def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in trajectories:
            f.write(t.to_json() + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(Trajectory.from_json(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed trajectory: {exc}") from exc
    return out
