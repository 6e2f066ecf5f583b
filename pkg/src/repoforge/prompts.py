"""Prompt templates for the main agent, the sub-agent and CoT refinement.

Sections are wrapped in simple tags (`<file path=...>`, `<tree>`, ...) so
both a model and the template mock backend can find them.
"""

from __future__ import annotations

import json
from typing import Mapping, Sequence

MAIN_SYSTEM_PROMPT = (
    "You are a planning agent that builds software repositories. You break a project "
    "into files, decide the order in which they must be written, and delegate each file "
    "to the `code_generator` sub-agent.\n\n"
    "Tool `code_generator`:\n"
    "  arguments: {requirement_for_repo, tree_structure, file_name, file_path, requirement}\n"
    "  returns: \"<file_path> has been generated successfully\""
)

SUB_SYSTEM_PROMPT = (
    "You are 'code_generator', a software engineer who implements one file of a repository "
    "from its requirement.\n\n"
    "Workflow:\n"
    "1. Study the file requirement and where the file sits in the repository tree.\n"
    "2. Look up dependencies: before using classes or functions from other files, inspect them with `read`.\n"
    "3. Plan the implementation: structure, names, edge cases.\n"
    "4. Write the whole file with `write`.\n\n"
    "Tools:\n"
    "- read(file_to_read): returns the content of a repository file.\n"
    "- write(file_path, content): writes the file.\n"
    "- final_answer(answer): reports completion."
)

SUCCESS_TEMPLATE = "{file_path} has been generated successfully"
WRITE_RESULT_TEMPLATE = "Successfully wrote {n} bytes to {file_path}."

MAIN_MARKER = "## Task: simulate the main agent"
SUB_MARKER = "## Task: simulate the sub-agent"
REFINE_MARKER = "## Task: rewrite one reasoning block"


def render_files(files: Mapping[str, str], tag: str = "file") -> str:
    return "\n".join(f'<{tag} path="{path}">\n{text}\n</{tag}>' for path, text in files.items())


def main_agent_prompt(
    repo_files: Mapping[str, str],
    tree: str,
    order: Sequence[str],
    edges: Sequence[tuple[str, str]],
    cycle_groups: Sequence[Sequence[str]] = (),
) -> str:
    dep_lines = "\n".join(f"{a} -> {b}" for a, b in edges) or "(no internal imports)"
    order_lines = "\n".join(f"{i}. {p}" for i, p in enumerate(order, 1))
    cycles = ""
    if cycle_groups:
        cycles = "\nMutually dependent files (written together, in this order):\n" + "\n".join(
            ", ".join(g) for g in cycle_groups
        ) + "\n"
    return f"""{MAIN_MARKER}

Repository code:
{render_files(repo_files)}

Tree structure of the repository:
<tree>
{tree}
</tree>

Dependency graph (importer -> imported):
{dep_lines}

Implementation order of files:
{order_lines}
{cycles}
I am turning this repository into multi-agent training data. Write the memory of the
main agent as a JSON list. The user turn is a requirement document for the whole
repository that describes what it does but NOT how it is implemented. The main agent
then lays out the tree structure and the implementation order above, and calls the
sub-agent once per file, strictly following that order. Every call is a "gpt" entry
with a "content" (the agent's reasoning) and a "tool-call" object.

Format:
[
  {{"role": "system_prompt", "content": "<system prompt describing the code_generator tool>"}},
  {{"role": "user", "content": "<requirement document, no implementation details>"}},
  {{"role": "gpt", "content": "<plan: tree, order, first file>",
    "tool-call": {{"function_name": "code_generator", "arguments": {{
      "requirement_for_repo": "...", "tree_structure": "...", "file_name": "...",
      "file_path": "...", "requirement": "..."}}}}}},
  {{"role": "tool-response", "content": "<file_path> has been generated successfully"}},
  ...
]

Return only the JSON list.
"""


def sub_agent_prompt(
    arguments: Mapping[str, str],
    file_path: str,
    golden_source: str,
    related: Mapping[str, str],
    skeleton: str = "",
) -> str:
    return f"""{SUB_MARKER}

A main agent has planned a repository and delegates one file to the `code_generator`
sub-agent. Produce the sub-agent's memory as a JSON list that records, step by step,
how it creates `{file_path}` from scratch. The simulated agent has NOT seen the final
code; it has to work its way there.

Entries:
- {{"role": "system_prompt", "content": ...}}: the sub-agent's system prompt.
- {{"role": "user", "content": ...}}: the arguments received from the main agent.
- {{"role": "gpt", "content": <reasoning>, "tool-call": {{"function_name": "read", "arguments": {{"file_to_read": <path>}}}}}}
  when the agent needs another file's interface; say precisely what it is looking for.
- {{"role": "tool-response", "content": <content of the file read>}}
- {{"role": "gpt", "content": <reasoning>, "tool-call": {{"function_name": "write", "arguments": {{"file_path": "{file_path}", "content": <code>}}}}}}
  The reasoning reacts to what was read, names the concrete classes, functions and
  variables it will use, and weighs edge cases. Avoid a fixed template: short files
  get short reasoning, algorithmic files get discussion of data structures and cost.

Arguments from the main agent:
<arguments>
{json.dumps(dict(arguments), indent=2, ensure_ascii=False)}
</arguments>

Structure of the target file:
<skeleton>
{skeleton}
</skeleton>

Golden source for `{file_path}` (the goal; the agent must not appear to know it):
<golden path="{file_path}">
{golden_source}
</golden>

Related files (what `read` returns):
{render_files(related) or "(none)"}

Return only the JSON list.
"""


def refine_prompt(reference_code: str, context: str, block: str) -> str:
    return f"""{REFINE_MARKER}

You reconstruct the reasoning a developer goes through while solving a programming task.
Rewrite the target block of the reasoning below so it is more precise, more detailed and
leads more directly to the correct code, while reading as a seamless part of the text.

Reference code (for your understanding only):
<reference>
{reference_code}
</reference>

Reasoning so far:
<context>
{context}
</context>

Target block:
<replace>
{block}
</replace>

Rules:
1. Reason as if the code does not exist yet. Never mention a reference, a provided
   solution or a ground truth; derive choices ("a dict fits here because ...").
2. The output is pasted in place of the block verbatim. Do not announce or comment on
   the rewrite; start directly with the reasoning.
3. First person, present tense, technical.

Answer with
<think>
your analysis of what the block misses
</think>
<refine>
the replacement reasoning only
</refine>
"""


def retry_suffix(error: str) -> str:
    return f"\n\nYour previous answer could not be used: {error}\nReturn only a valid JSON list."


def success_message(file_path: str) -> str:
    return SUCCESS_TEMPLATE.format(file_path=file_path)


def write_result(file_path: str, content: str) -> str:
    return WRITE_RESULT_TEMPLATE.format(n=len(content.encode("utf-8")), file_path=file_path)
