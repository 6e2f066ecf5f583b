"""Fixtures and independent oracles shared by the test modules."""

from __future__ import annotations

import json
import math
import random
import re
from itertools import permutations

from repoforge import prompts
from repoforge.trajectory import (
    Agent,
    Tool,
    ToolCall,
    Trajectory,
    action_step,
    brief_step,
    observation_step,
    system_step,
    think_step,
)

OPERATIONS_PY = "def add(a, b):\n    return a + b\n"
MAIN_PY = 'from operations import add\n\nresult = add(2, 3)\nprint(f"The result of 2 + 3 is {result}")\n'
CALC_FILES = {"operations.py": OPERATIONS_PY, "main.py": MAIN_PY}
TASK = "Build a tiny Python calculator: one module with the arithmetic, one script that demos it."


def write_repo(root, files: dict[str, str]):
    for rel, text in files.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
    return root


def call_args(path: str, requirement: str) -> dict:
    return {
        "requirement_for_repo": TASK,
        "tree_structure": ".\n├── main.py\n└── operations.py",
        "file_name": path,
        "file_path": path,
        "requirement": requirement,
    }


# origin path of each step (as produced by flatten) -> row of the worked example table
CALC_ROWS = {
    (1,): 0, (2,): 1, (3,): 2, (4,): 5, (5,): 6, (6,): 7,
    (6, 2): 8, (6, 3): 9, (6, 4): 10, (6, 5): 11, (6, 6): 12, (6, 7): 13,
    (7,): 14,
}


def calc_sub(read_obs: str = OPERATIONS_PY, write_content: str = MAIN_PY,
               write_obs: str = "Successfully wrote 89 bytes to main.py.") -> Trajectory:
    return Trajectory(
        Agent.SUB,
        (
            system_step(prompts.SUB_SYSTEM_PROMPT),
            brief_step(json.dumps(call_args("main.py", "main.py: demo script that prints add(2, 3)"))),
            think_step(
                "main.py is next. It calls add, which lives in operations.py, "
                "so I will look at that module before writing anything."
            ),
            action_step(ToolCall(Tool.READ, {"file_to_read": "operations.py"})),
            observation_step(read_obs),
            think_step(
                "add takes two arguments and returns their sum. main.py will import it, "
                "apply it to 2 and 3 and print the value."
            ),
            action_step(ToolCall(Tool.WRITE, {"file_path": "main.py", "content": write_content})),
            observation_step(write_obs),
        ),
        "main.py",
        "calc",
    )


def calc_trajectory(**sub_kwargs) -> Trajectory:
    """The calculator example, rows 0-14. Rows 3-4 (the first sub-agent) are elided."""
    return Trajectory(
        Agent.MAIN,
        (
            system_step(prompts.MAIN_SYSTEM_PROMPT),
            brief_step(TASK),
            think_step(
                "Two files: operations.py holds add, main.py uses it. "
                "main.py imports operations.py, so operations.py goes first, then main.py."
            ),
            action_step(ToolCall(Tool.CALL_SUB_AGENT, call_args("operations.py", "operations.py: provides add(a, b)"))),
            observation_step("operations.py has been generated successfully"),
            think_step("operations.py exists now; main.py can be built on it."),
            action_step(
                ToolCall(Tool.CALL_SUB_AGENT, call_args("main.py", "main.py: demo script that prints add(2, 3)")),
                sub=calc_sub(**sub_kwargs),
            ),
            think_step(
                "main.py is written as well. Both files are in place, nothing is left to do."
            ),
        ),
        None,
        "calc",
    )


# -- scripted model output for the calculator -------------------------------

def calc_main_memory() -> str:
    entries = [
        {"role": "system_prompt", "content": prompts.MAIN_SYSTEM_PROMPT},
        {"role": "user", "content": TASK},
        {
            "role": "gpt",
            "content": "main.py imports operations.py, so operations.py goes first.",
            "tool-call": {"function_name": "code_generator", "arguments": call_args("operations.py", "operations.py: provides add(a, b)")},
        },
        {"role": "tool-response", "content": "operations.py has been generated successfully"},
        {
            "role": "gpt",
            "content": "operations.py exists now; main.py can be built on it.",
            "tool-call": {"function_name": "code_generator", "arguments": call_args("main.py", "main.py: demo script that prints add(2, 3)")},
        },
        {"role": "tool-response", "content": "main.py has been generated successfully"},
        {"role": "gpt", "content": "Both files are in place, nothing is left to do."},
    ]
    return "Here is the memory:\n```json\n" + json.dumps(entries, indent=2) + "\n```"


def calc_sub_memory_ops() -> str:
    return json.dumps([
        {"role": "system_prompt", "content": prompts.SUB_SYSTEM_PROMPT},
        {"role": "user", "content": "create operations.py"},
        {"role": "gpt", "content": "operations.py needs a single add function.",
         "tool-call": {"function_name": "write", "arguments": {"file_path": "operations.py", "content": "def add(a, b): return a+b"}}},
    ])


def calc_sub_memory_main() -> str:
    return json.dumps([
        {"role": "system_prompt", "content": prompts.SUB_SYSTEM_PROMPT},
        {"role": "user", "content": "create main.py"},
        {"role": "gpt", "content": "main.py calls add, so I will look at operations.py first.",
         "tool-call": {"function_name": "read", "arguments": {"file_to_read": "operations.py"}}},
        {"role": "tool-response", "content": "def add(x, y): ...  # hallucinated"},
        {"role": "gpt", "content": "Now I can write main.py.",
         "tool-call": {"function_name": "write", "arguments": {"file_path": "main.py", "content": "from operations import add\nprint(add(2,3))"}}},
        {"role": "tool-response", "content": "Successfully wrote 40 bytes to main.py."},
    ])


# -- random repositories and an independent import resolver -------------------

POOL = [
    "a.py", "b.py", "c.py", "pkg/__init__.py", "pkg/mod.py", "pkg/util.py",
    "pkg/sub/__init__.py", "pkg/sub/deep.py", "tools/helper.py",
]
EXTERNAL = ["os", "sys", "json", "numpy", "collections.abc"]
NAMES = ["x", "mod", "util", "deep", "sub", "helper", "a", "b"]


def dotted(path: str) -> str:
    p = path[:-3]
    if p.endswith("/__init__"):
        p = p[: -len("/__init__")]
    return p.replace("/", ".")


def random_repo(rng: random.Random) -> dict[str, str]:
    files = rng.sample(POOL, rng.randint(1, 6))
    modules = [dotted(f) for f in POOL] + EXTERNAL
    out = {}
    for f in files:
        lines = []
        for _ in range(rng.randint(0, 4)):
            form = rng.randrange(7)
            m = rng.choice(modules)
            if form == 0:
                line = f"import {m}"
            elif form == 1:
                line = f"import {m} as alias{rng.randrange(9)}"
            elif form == 2:
                line = f"from {m} import {', '.join(rng.sample(NAMES, rng.randint(1, 2)))}"
            elif form == 3:
                line = f"from {'.' * rng.randint(1, 2)} import {rng.choice(NAMES)}"
            elif form == 4:
                line = f"from .{rng.choice(['mod', 'util', 'sub', 'sub.deep', 'nothing'])} import {rng.choice(NAMES)}"
            elif form == 5:
                line = f"from {m} import *"
            else:
                line = f"import {m}, {rng.choice(modules)}"
            if rng.random() < 0.3:
                line = "def f():\n    " + line + "\n    return 1"
            elif rng.random() < 0.2:
                line = "try:\n    " + line + "\nexcept ImportError:\n    pass"
            lines.append(line)
        out[f] = "\n".join(lines) + "\n"
    return out


def oracle_edges(files: dict[str, str]) -> set[tuple[str, str]]:
    """Line-scanning import resolver, written without the package's code."""
    present = set(files)

    def find(name):
        if not name:
            return None
        stem = "/".join(name.split("."))
        if stem + ".py" in present:
            return stem + ".py"
        if stem + "/__init__.py" in present:
            return stem + "/__init__.py"
        return None

    edges = set()
    for path, text in files.items():
        for raw in text.splitlines():
            line = raw.strip()
            targets = []
            m = re.match(r"^import (.+)$", line)
            if m:
                for part in m.group(1).split(","):
                    targets.append(find(part.split(" as ")[0].strip()))
            m = re.match(r"^from (\.*)([\w.]*) import (.+)$", line)
            if m:
                dots, mod, names = len(m.group(1)), m.group(2), m.group(3)
                if dots:
                    pkg = path.split("/")[:-1]
                    up = dots - 1
                    if up > len(pkg):
                        continue
                    pkg = pkg[: len(pkg) - up]
                    base = ".".join(pkg + ([mod] if mod else []))
                else:
                    base = mod
                for nm in names.split(","):
                    nm = nm.split(" as ")[0].strip()
                    hit = None
                    if nm != "*":
                        hit = find(f"{base}.{nm}" if base else nm)
                    targets.append(hit or find(base))
            for t in targets:
                if t and t != path:
                    edges.add((path, t))
    return edges


# -- ordering oracles ---------------------------------------------------------

def random_dag(rng: random.Random, max_nodes: int = 10):
    n = rng.randint(1, max_nodes)
    names = sorted(rng.sample([f"m{i:02d}.py" for i in range(40)], n))
    rank = names[:]
    rng.shuffle(rank)   # hidden topological rank, independent of names
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                edges.add((rank[j], rank[i]))   # later-ranked depends on earlier-ranked
    return names, sorted(edges)


def lexicographic_min_order_bruteforce(nodes, edges):
    """Smallest valid permutation by exhaustive enumeration (for small n)."""
    for perm in permutations(sorted(nodes)):
        pos = {p: i for i, p in enumerate(perm)}
        if all(pos[b] < pos[a] for a, b in edges):
            return list(perm)
    return None


def is_locally_lexicographic(order, edges) -> bool:
    """At every position the chosen node is the smallest one whose dependencies are already placed."""
    deps = {}
    for a, b in edges:
        deps.setdefault(a, set()).add(b)
    placed = set()
    for node in order:
        ready = [n for n in order if n not in placed and deps.get(n, set()) <= placed]
        if node != min(ready):
            return False
        placed.add(node)
    return True


def reachability(nodes, edges):
    reach = {n: {n} for n in nodes}
    changed = True
    while changed:
        changed = False
        for a, b in edges:
            new = reach[b] - reach[a]
            if new:
                reach[a] |= new
                changed = True
    return reach


# -- random nested trajectories -----------------------------------------------

def random_sub(rng: random.Random, path: str, others: list[str], repo_id="r") -> Trajectory:
    steps = [system_step("sys"), brief_step(f"make {path}")]
    for dep in rng.sample(others, min(len(others), rng.randint(0, 2))):
        steps.append(think_step(f"look at {dep}\n\nthen decide {rng.randrange(100)}"))
        steps.append(action_step(ToolCall(Tool.READ, {"file_to_read": dep})))
        steps.append(observation_step(f"content of {dep}"))
    steps.append(think_step(f"write {path}"))
    steps.append(action_step(ToolCall(Tool.WRITE, {"file_path": path, "content": f"# {path}\nx = {rng.randrange(9)}\n"})))
    steps.append(observation_step(f"wrote {path}"))
    return Trajectory(Agent.SUB, tuple(steps), path, repo_id)


def random_main(rng: random.Random, repo_id="r") -> Trajectory:
    files = [f"f{i}.py" for i in range(rng.randint(0, 4))]
    steps = [system_step("main sys"), brief_step("build it")]
    for i, path in enumerate(files):
        steps.append(think_step(f"next {path}"))
        args = {"requirement_for_repo": "r", "tree_structure": "t", "file_name": path, "file_path": path, "requirement": "q"}
        sub = random_sub(rng, path, files[:i], repo_id) if rng.random() < 0.8 else None
        steps.append(action_step(ToolCall(Tool.CALL_SUB_AGENT, args), sub=sub))
        steps.append(observation_step(prompts.success_message(path)))
    if rng.random() < 0.5:
        steps.append(think_step("done"))
    return Trajectory(Agent.MAIN, tuple(steps), None, repo_id)


def reference_flatten(t: Trajectory) -> list[tuple[str, str, bool]]:
    """Recursive flattener written independently: (role_tag, text, trainable)."""
    tags = {"SystemPrompt": "system", "TaskBrief": "user", "Think": "assistant_think",
            "Action": "assistant_action", "Observation": "tool_response"}
    out = []
    for step in t.steps:
        tag = tags[step.kind.value]
        out.append((tag, step.content, step.kind.value != "Observation"))
        if step.sub_trajectory:
            out.extend(reference_flatten(step.sub_trajectory))
    return out


def ppl_from_logprobs(logprobs) -> float:
    return math.exp(-sum(logprobs) / len(logprobs))


# -- small but realistic repositories for end-to-end runs ----------------------

VERBS = ["load", "parse", "render", "compute", "merge", "split", "score", "clean", "build", "check"]
NOUNS = ["config", "record", "table", "vector", "report", "token", "entry", "matrix", "item", "graph"]


def project_repo(rng: random.Random) -> dict[str, str]:
    """A few modules where later ones import and call functions of earlier ones."""
    n = rng.randint(2, 5)
    modules = [f"{rng.choice(NOUNS)}_{i}" for i in range(n)]
    layout = ["pkg/" + m + ".py" if rng.random() < 0.5 else m + ".py" for m in modules]
    funcs: dict[int, list[str]] = {}
    files = {}
    if any(p.startswith("pkg/") for p in layout):
        files["pkg/__init__.py"] = '"""Package."""\n'
    for i, (mod, path) in enumerate(zip(modules, layout)):
        names = [f"{rng.choice(VERBS)}_{rng.choice(NOUNS)}_{i}_{k}" for k in range(rng.randint(1, 3))]
        funcs[i] = names
        deps = rng.sample(range(i), min(i, rng.randint(0, 2)))
        lines = [f'"""{mod.replace("_", " ")} helpers."""', ""]
        for d in deps:
            dotted_dep = layout[d][:-3].replace("/", ".")
            lines.append(f"from {dotted_dep} import {', '.join(funcs[d])}")
        lines.append("")
        for name in names:
            arg = rng.choice(NOUNS)
            lines.append(f"def {name}({arg}, limit=10):")
            lines.append(f'    """{name.split("_")[0].capitalize()} the {arg}."""')
            body = [f"    values = [{arg}] * limit"]
            for d in deps:
                body.append(f"    values = [{rng.choice(funcs[d])}(v) for v in values]")
            body.append(f"    return values[:{rng.randint(1, 9)}]")
            lines.extend(body)
            lines.append("")
        if rng.random() < 0.5:
            cls = rng.choice(NOUNS).capitalize() + "Store"
            lines += [f"class {cls}:", "    def __init__(self):", "        self.items = []", "",
                      "    def add(self, item):", "        self.items.append(item)", ""]
        files[path] = "\n".join(lines)
    return files


def fixture_root(root, n: int = 5, seed: int = 0, broken: int = 0):
    """`n` project repos under `root` (plus the calculator); the first `broken` contain a syntax error."""
    rng = random.Random(seed)
    write_repo(root / "calc", CALC_FILES)
    for i in range(n):
        files = project_repo(rng)
        if i < broken:
            files["bad.py"] = "def broken(:\n    pass\n"
        write_repo(root / f"proj{i:02d}", files)
    return root


RUN_CONFIG = """\
filter:
  min_files: 2
  min_total_bytes: 1
pipeline:
  repos_root: repos
  out_dir: out
search:
  k: 2
  rounds: 2
backends:
  generator: template
  scorer: ngram
mixture:
  total_token_budget: 3000
  seed: 0
  sources:
    - {name: general, path: general.jsonl, share: 0.7}
    - {name: trajectories, path: "@docs", share: 0.3}
"""


def write_run_workspace(base, n: int = 5, seed: int = 0, broken: int = 0, general_docs: int = 400):
    fixture_root(base / "repos", n, seed, broken)
    rng = random.Random(seed)
    with open(base / "general.jsonl", "w", encoding="utf-8") as f:
        for i in range(general_docs):
            f.write(json.dumps({"id": i, "text": " ".join(rng.choice(NOUNS + VERBS) for _ in range(20))}) + "\n")
    (base / "config.yaml").write_text(RUN_CONFIG)
    return base / "config.yaml"
