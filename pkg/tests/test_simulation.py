import random
from dataclasses import replace

import pytest

from repoforge import prompts
from repoforge.analysis import analyze_snapshot
from repoforge.backends import AuthError, ScriptedGenerator, TemplateGenerator, TransientBackendError
from repoforge.ingest import RepoSnapshot
from repoforge.simulation import (
    DiscardError,
    GroundingError,
    MemoryFormatError,
    SimulationConfig,
    SimulationError,
    extract_json_list,
    ground_trajectory,
    simulate_main_agent,
    simulate_sub_agent,
    synthesize_repo_trajectory,
)
from repoforge.trajectory import Agent, Kind, Provenance, Tool, ToolCall, action_step, validate_trajectory
from support import (
    CALC_FILES,
    MAIN_PY,
    OPERATIONS_PY,
    calc_main_memory,
    calc_sub_memory_main,
    calc_sub_memory_ops,
    random_repo,
    calc_trajectory,
)

CFG = SimulationConfig()


def calc():
    snap = RepoSnapshot.from_texts("calc", CALC_FILES)
    return snap, analyze_snapshot(snap)


def io_steps(t):
    """(path, kind, content) for every Read/Write action and its reply, recursively."""
    out = []
    for i, s in enumerate(t.steps):
        if s.sub_trajectory is not None:
            out.extend(io_steps(s.sub_trajectory))
        if s.kind is Kind.ACTION and s.tool_call.tool in (Tool.READ, Tool.WRITE):
            reply = t.steps[i + 1] if i + 1 < len(t.steps) and t.steps[i + 1].kind is Kind.OBSERVATION else None
            out.append((s.tool_call, reply.content if reply else None))
    return out


def assert_byte_exact(t, snap):
    n = 0
    for call, reply in io_steps(t):
        real = snap.text(call.path)
        if call.tool is Tool.READ:
            assert reply.encode() == snap.files[call.path]
        else:
            assert call.arguments["content"].encode() == snap.files[call.path]
            assert reply == prompts.write_result(call.path, real)
        n += 1
    return n


def test_extract_json_list_handles_fences_and_prose():
    assert extract_json_list('Sure!\n```json\n[{"a": 1}]\n```\nbye') == [{"a": 1}]
    assert extract_json_list("x [not json] then [1, 2]") == [1, 2]
    with pytest.raises(MemoryFormatError):
        extract_json_list("nothing here")


def test_calculator_end_to_end_with_scripted_model():
    snap, analysis = calc()
    gen = ScriptedGenerator([calc_main_memory(), calc_sub_memory_ops(), calc_sub_memory_main()])
    t, report = synthesize_repo_trajectory(snap, analysis, gen, CFG)
    assert validate_trajectory(t).ok
    assert gen.remaining == 0
    subs = [s for _, s in t.sub_trajectories()]
    assert [s.target_file for s in subs] == ["operations.py", "main.py"]
    main_sub = subs[1]
    assert [s.kind for s in main_sub.steps] == [
        Kind.SYSTEM_PROMPT, Kind.TASK_BRIEF, Kind.THINK, Kind.ACTION, Kind.OBSERVATION,
        Kind.THINK, Kind.ACTION, Kind.OBSERVATION,
    ]
    assert main_sub.steps[4].content == OPERATIONS_PY
    assert main_sub.steps[4].provenance is Provenance.GROUNDED
    assert main_sub.steps[6].tool_call.arguments["content"] == MAIN_PY
    assert main_sub.steps[7].content == "Successfully wrote 89 bytes to main.py."
    assert report.reads_corrected == 1
    assert report.forward_reads == []
    assert assert_byte_exact(t, snap) == 3


def test_main_kinds_follow_worked_example():
    """Same Think/Action/Observation rhythm as the hand-written example.

    The pipeline always answers a CallSubAgent with a completion message, so
    the final call gets one Observation the hand-written record omits.
    """
    snap, analysis = calc()
    gen = ScriptedGenerator([calc_main_memory(), calc_sub_memory_ops(), calc_sub_memory_main()])
    t, _ = synthesize_repo_trajectory(snap, analysis, gen, CFG)
    got = [s.kind for s in t.steps]
    expected = [s.kind for s in calc_trajectory().steps]
    expected.insert(7, Kind.OBSERVATION)
    assert got == expected
    assert t.steps[4].content == "operations.py has been generated successfully"


def test_main_tree_structure_is_the_real_tree():
    snap, analysis = calc()
    t = simulate_main_agent(snap, analysis, ScriptedGenerator([calc_main_memory()]), CFG)
    calls = [s.tool_call for s in t.steps if s.tool_call]
    assert {c.arguments["tree_structure"] for c in calls} == {analysis.tree.render()}


def test_main_out_of_order_calls_are_retried():
    snap, analysis = calc()
    swapped = calc_main_memory().replace("operations.py", "TMP").replace("main.py", "operations.py").replace("TMP", "main.py")
    gen = ScriptedGenerator([swapped, calc_main_memory()])
    t = simulate_main_agent(snap, analysis, gen, CFG)
    assert validate_trajectory(t).ok
    assert "implementation order" in gen.requests[1].prompt


def test_garbage_output_exhausts_retries_and_discards():
    snap, analysis = calc()
    gen = ScriptedGenerator(["no json", "still none", "[1]"])
    with pytest.raises(DiscardError) as err:
        simulate_main_agent(snap, analysis, gen, CFG)
    assert err.value.stage == "simulate-main"
    assert len(gen.requests) == 3


def test_transient_backend_errors_are_retried():
    snap, analysis = calc()
    gen = ScriptedGenerator([TransientBackendError("flaky"), calc_main_memory()])
    assert simulate_main_agent(snap, analysis, gen, CFG).agent is Agent.MAIN


def test_fatal_backend_error_fails_the_repo():
    snap, analysis = calc()
    with pytest.raises(SimulationError) as err:
        simulate_main_agent(snap, analysis, ScriptedGenerator([AuthError("bad key")]), CFG)
    assert not isinstance(err.value, DiscardError)


def test_sub_write_to_wrong_path_discards_immediately():
    snap, analysis = calc()
    bad = calc_sub_memory_main().replace('"file_path": "main.py"', '"file_path": "other.py"')
    gen = ScriptedGenerator([bad, calc_sub_memory_main()])
    task = {"file_path": "main.py", "requirement": "r"}
    with pytest.raises(DiscardError):
        simulate_sub_agent(task, snap, analysis, gen, CFG)
    assert len(gen.requests) == 1


def test_sub_missing_write_is_retried():
    snap, analysis = calc()
    no_write = '[{"role": "user", "content": "x"}, {"role": "gpt", "content": "thinking"}]'
    gen = ScriptedGenerator([no_write, calc_sub_memory_main()])
    sub = simulate_sub_agent({"file_path": "main.py", "requirement": "r"}, snap, analysis, gen, CFG)
    assert sub.target_file == "main.py"
    assert len(gen.requests) == 2


def test_sub_prompt_carries_golden_source_and_related_files():
    snap, analysis = calc()
    gen = ScriptedGenerator([calc_sub_memory_main()])
    simulate_sub_agent({"file_path": "main.py", "requirement": "r"}, snap, analysis, gen, CFG)
    prompt = gen.requests[0].prompt
    assert MAIN_PY in prompt and OPERATIONS_PY in prompt


def test_too_many_reads_is_rejected():
    snap, analysis = calc()
    cfg = SimulationConfig(max_read_calls_per_file=0, max_prompt_retries=1)
    with pytest.raises(DiscardError):
        simulate_sub_agent({"file_path": "main.py", "requirement": "r"}, snap, analysis,
                           ScriptedGenerator([calc_sub_memory_main()]), cfg)


def test_missing_observations_are_synthesized_then_grounded():
    snap, analysis = calc()
    memory = """[
      {"role": "gpt", "content": "read first", "tool-call": {"function_name": "read", "arguments": {"file_to_read": "operations.py"}}},
      {"role": "gpt", "content": "now write", "tool-call": {"function_name": "write", "arguments": {"file_path": "main.py", "content": "x"}}}
    ]"""
    sub = simulate_sub_agent({"file_path": "main.py", "requirement": "r"}, snap, analysis, ScriptedGenerator([memory]), CFG)
    assert validate_trajectory(sub).ok
    grounded, report = ground_trajectory(sub, snap)
    assert report.reads_corrected == 1
    assert assert_byte_exact(grounded, snap) == 2


# -- grounding -------------------------------------------------------------------

def test_grounding_fixes_the_corrupted_worked_example():
    snap = RepoSnapshot.from_texts("calc", CALC_FILES)
    bad = calc_trajectory(read_obs="def add(x, y): pass", write_content="print(1)", write_obs="wrote it")
    fixed, report = ground_trajectory(bad, snap)
    assert assert_byte_exact(fixed, snap) == 2
    assert [s.content for s in fixed.steps] == [s.content for s in calc_trajectory().steps]
    assert report.reads_corrected == 1 and report.writes_corrected == 2
    assert validate_trajectory(fixed).ok


def test_grounding_is_a_fixed_point():
    snap = RepoSnapshot.from_texts("calc", CALC_FILES)
    t = calc_trajectory()
    same, report = ground_trajectory(t, snap)
    assert same is t
    assert (report.reads_corrected, report.writes_corrected) == (0, 0)


def test_grounding_randomized_repos_with_injected_corruption():
    rng = random.Random(9)
    gen = TemplateGenerator(0)
    for k in range(20):
        files = random_repo(rng)
        snap = RepoSnapshot.from_texts(f"r{k}", files)
        analysis = analyze_snapshot(snap, strict=False)
        t, _ = synthesize_repo_trajectory(snap, analysis, gen, CFG)
        corrupted = _corrupt(t, rng)
        fixed, _ = ground_trajectory(corrupted, snap, analysis.order)
        assert validate_trajectory(fixed).ok
        assert assert_byte_exact(fixed, snap) == len(io_steps(t))


def _corrupt(t, rng):
    steps = list(t.steps)
    for i, s in enumerate(steps):
        if s.sub_trajectory is not None:
            steps[i] = replace(s, sub_trajectory=_corrupt(s.sub_trajectory, rng))
        elif s.kind is Kind.OBSERVATION and rng.random() < 0.7:
            steps[i] = replace(s, content=s.content[::-1] + "~", provenance=Provenance.GENERATED)
        elif s.kind is Kind.ACTION and s.tool_call.tool is Tool.WRITE and rng.random() < 0.7:
            steps[i] = action_step(ToolCall(Tool.WRITE, {"file_path": s.tool_call.path, "content": "corrupt\n"}))
    return t.with_steps(steps)


def test_forward_reads_are_reported():
    snap = RepoSnapshot.from_texts("calc", CALC_FILES)
    t = calc_trajectory()
    sub = t.steps[6].sub_trajectory
    reader = replace(sub, target_file="operations.py")
    _, report = ground_trajectory(reader.with_steps(sub.steps[:5]), snap, ["operations.py", "main.py"])
    assert report.forward_reads == []
    sub2 = sub.with_steps(sub.steps[:3] + (action_step(ToolCall(Tool.READ, {"file_to_read": "main.py"})),) + sub.steps[4:])
    _, report = ground_trajectory(replace(sub2, target_file="operations.py"), snap, ["operations.py", "main.py"])
    assert report.forward_reads == [("operations.py", "main.py")]


def test_read_of_unknown_file_is_a_grounding_error():
    snap = RepoSnapshot.from_texts("calc", CALC_FILES)
    sub = calc_trajectory().steps[6].sub_trajectory
    bad = sub.with_steps(sub.steps[:3] + (action_step(ToolCall(Tool.READ, {"file_to_read": "ghost.py"})),) + sub.steps[4:])
    with pytest.raises(GroundingError):
        ground_trajectory(bad, snap)


def test_template_generator_covers_every_file():
    rng = random.Random(2)
    for k in range(10):
        files = random_repo(rng)
        snap = RepoSnapshot.from_texts(f"r{k}", files)
        analysis = analyze_snapshot(snap, strict=False)
        t, _ = synthesize_repo_trajectory(snap, analysis, TemplateGenerator(k), CFG)
        assert [s.target_file for _, s in t.sub_trajectories()] == list(analysis.order.order)
