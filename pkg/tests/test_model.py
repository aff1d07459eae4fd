from __future__ import annotations

import itertools
import json
from collections import deque

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import tiny_bsr, tiny_lcr
from lcrbsr.dp import solve_lcr_dp
from lcrbsr.model import (
    Configuration,
    LcrInstance,
    MemoryOp,
    OpKind,
    ParseError,
    Program,
    SemanticError,
    Thread,
    Transition,
    absorb_initial_reads,
    instance_to_dict,
    merge_contributors,
    normalize_leader,
    parse_program,
    prepare_for_witness,
    serialize_program,
    successors,
    write_shortcuts,
)

W, R, E = MemoryOp.write, MemoryOp.read, MemoryOp.eps()


def chain(name: str, ops, n: int | None = None) -> Thread:
    n = n if n is not None else len(ops) + 1
    return Thread(name, tuple(f"s{i}" for i in range(n)), 0, tuple(Transition(i, op, i + 1) for i, op in enumerate(ops)))


def canonical(inst) -> dict:
    d = instance_to_dict(inst)

    def sort_threads(th):
        th["trans"] = sorted(map(tuple, th["trans"]))

    for key in ("leader",):
        if key in d:
            sort_threads(d[key])
    for th in d.get("contributors", []) + d.get("threads", []):
        sort_threads(th)
    return d


# -- parsing ---------------------------------------------------------------


def test_parse_witness_ex(witness_ex):
    assert witness_ex.leader.size == 5
    assert witness_ex.contributor().size == 3
    assert witness_ex.domain == ("a0", "a", "b", "c")
    assert witness_ex.unsafe == {witness_ex.leader.index("q4")}


def test_minimal_instance():
    text = json.dumps(
        {"domain": ["a0"], "init": "a0", "leader": {"init": "q0"}, "contributors": [{"init": "p0"}], "unsafe": ["q0"]}
    )
    inst = parse_program(text)
    assert inst.leader.size == 1 and not inst.leader.transitions
    assert inst.unsafe == {0}


def test_unknown_symbol_is_named():
    text = json.dumps(
        {"domain": ["a0"], "init": "a0", "leader": {"init": "q0", "trans": [["q0", "!z", "q1"]]}, "contributors": [{"init": "p0"}]}
    )
    with pytest.raises(SemanticError) as exc:
        parse_program(text)
    assert exc.value.identifier == "z"


def test_syntax_error_has_position():
    with pytest.raises(ParseError) as exc:
        parse_program('{"domain": ["a0"],\n  "init": }')
    assert exc.value.line == 2 and exc.value.column is not None


@pytest.mark.parametrize(
    "obj, ident",
    [
        ({"domain": ["a0"], "leader": {"init": "q0"}, "contributors": [{"init": "p0"}]}, "init"),
        ({"domain": ["a0"], "init": "b", "leader": {"init": "q0"}, "contributors": [{"init": "p0"}]}, "b"),
        ({"domain": ["a0"], "init": "a0", "leader": {"init": "q0"}, "contributors": [{"init": "p0"}], "unsafe": ["q9"]}, "q9"),
        (
            {"domain": ["a0"], "init": "a0", "leader": {"init": "q0", "states": ["q0"], "trans": [["q0", "eps", "q1"]]}, "contributors": [{"init": "p0"}]},
            "q1",
        ),
        ({"domain": ["a0"], "init": "a0", "threads": [{"name": "memory", "init": "s"}]}, "memory"),
        ({"domain": ["a0"], "init": "a0", "threads": [{"name": "t", "init": "s"}], "target": {"u": ["s"]}}, "u"),
    ],
)
def test_semantic_errors_name_the_identifier(obj, ident):
    with pytest.raises(SemanticError) as exc:
        parse_program(json.dumps(obj))
    assert exc.value.identifier == ident


def test_duplicate_transitions_are_merged():
    th = Thread("t", ("a", "b"), 0, (Transition(0, W(0), 1), Transition(0, W(0), 1)))
    assert len(th.transitions) == 1


def test_bsr_file_round_trip():
    obj = {
        "kind": "bsr",
        "domain": ["a0", "x"],
        "init": "a0",
        "threads": [
            {"name": "w", "init": "s0", "trans": [["s0", "!x", "s1"]]},
            {"name": "r", "init": "t0", "trans": [["t0", "?x", "t1"]]},
        ],
        "target": {"r": ["t1"], "memory": ["x"]},
        "stages": 2,
    }
    inst = parse_program(json.dumps(obj))
    assert inst.stages == 2 and inst.memory == {1}
    assert inst.targets == (None, frozenset({1}))
    assert parse_program(serialize_program(inst)) == inst


@given(st.integers(0, 10**6), st.booleans())
def test_round_trip(seed, multi):
    inst = tiny_lcr(seed, 4, 4, 3, templates=2 if multi else 1)
    again = parse_program(serialize_program(inst, indent=1))
    assert canonical(again) == canonical(inst)
    assert again == inst


@given(st.integers(0, 10**6))
def test_round_trip_bsr(seed):
    inst = tiny_bsr(seed)
    assert parse_program(serialize_program(inst)) == inst


# -- successors ------------------------------------------------------------


def test_witness_ex_first_step(witness_ex):
    prog = witness_ex.program(1)
    c0 = prog.initial_config()
    L, C = witness_ex.leader, witness_ex.contributor()
    succ = {c for c, _, _ in successors(prog, c0)}
    a = witness_ex.domain.index("a")
    assert Configuration((L.index("q0"), C.index("p1")), a) in succ
    assert all(c.pc[1] != C.index("p2") for c in succ)


def test_deadlock_has_no_successors():
    th = Thread("t", ("s0", "s1"), 0, (Transition(0, R(1), 1),))
    prog = Program(("a0", "b"), (th,), 0)
    assert successors(prog, prog.initial_config()) == set()


def naive_successors(prog: Program, c: Configuration) -> set:
    out = set()
    for i, th in enumerate(prog.threads):
        for src, op, dst in th.transitions:
            if src != c.pc[i]:
                continue
            if op.kind is OpKind.READ and op.symbol != c.memory:
                continue
            pc = list(c.pc)
            pc[i] = dst
            out.add((Configuration(tuple(pc), op.symbol if op.kind is OpKind.WRITE else c.memory), i, op))
    return out


def configs(prog: Program):
    for pc in itertools.product(*(range(t.size) for t in prog.threads)):
        for m in range(len(prog.domain)):
            yield Configuration(pc, m)


@given(st.integers(0, 10**6))
def test_successors_match_scan_and_enable_reads(seed):
    prog = tiny_bsr(seed).program
    for c in configs(prog):
        succ = successors(prog, c)
        assert succ == naive_successors(prog, c)
        for _, _, op in succ:
            if op.kind is OpKind.READ:
                assert op.symbol == c.memory


@given(st.integers(0, 10**6), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2))
def test_successors_monotone_in_delta(seed, src, dst, sym):
    prog = tiny_bsr(seed, P=3, D=3).program
    th = prog.threads[0]
    src, dst = src % th.size, dst % th.size
    sym %= len(prog.domain)
    for op in (W(sym), R(sym), E):
        bigger = Program(prog.domain, (th.with_transitions([Transition(src, op, dst)]),) + prog.threads[1:], prog.init_symbol)
        for c in configs(prog):
            assert successors(prog, c) <= successors(bigger, c)


# -- normalization ---------------------------------------------------------


def test_merge_single_template():
    p = chain("p", [W(1)])
    m = merge_contributors([p])
    assert m.size == p.size + 1
    assert (0, E, 1 + p.initial) in m.transitions


def test_merge_two_templates():
    m = merge_contributors([chain("p", [W(1)]), chain("r", [R(1)])])
    assert m.size == 5
    assert sum(1 for t in m.transitions if t.op == E) == 2


def bfs_with_templates(inst: LcrInstance, counts) -> bool:
    """Literal search with ``counts[k]`` copies of template ``k``."""
    threads = (inst.leader,) + tuple(t for t, n in zip(inst.contributors, counts) for _ in range(n))
    prog = Program(inst.domain, threads, inst.init_symbol)
    start = prog.initial_config()
    seen, todo = {start}, deque([start])
    while todo:
        c = todo.popleft()
        if c.pc[0] in inst.unsafe:
            return True
        for c2, _, _ in successors(prog, c):
            if c2 not in seen:
                seen.add(c2)
                todo.append(c2)
    return False


@given(st.integers(0, 10**6))
def test_merged_templates_match_separate_copies(seed):
    inst = tiny_lcr(seed, 3, 3, 2, templates=2)
    separate = any(bfs_with_templates(inst, n) for n in itertools.product(range(3), repeat=2))
    assert solve_lcr_dp(inst).reachable == separate


def test_write_shortcut_replaces_self_read():
    leader = chain("l", [W(1), R(1)])
    out = write_shortcuts(leader)
    assert (0, W(1), 2) in out.transitions
    assert set(leader.transitions) <= set(out.transitions)


def test_witness_ex_leader_has_no_shortcuts(witness_ex):
    assert normalize_leader(witness_ex) is witness_ex


@given(st.integers(0, 10**6))
def test_normalized_leader_keeps_dp_verdict(seed):
    inst = tiny_lcr(seed, 4, 3, 3)
    assert solve_lcr_dp(normalize_leader(inst)).reachable == solve_lcr_dp(inst).reachable


def test_absorb_initial_reads_adds_fresh_state_when_needed():
    th = Thread("t", ("s0", "s1"), 0, (Transition(0, R(0), 1), Transition(1, W(1), 0)))
    out = absorb_initial_reads(th, 0)
    assert out.size == 3 and out.states[out.initial] == "s0^"
    assert (2, E, 1) in out.transitions and (2, E, 0) in out.transitions
    # Without incoming edges the initial state itself gets the eps-edge.
    th2 = Thread("t", ("s0", "s1"), 0, (Transition(0, R(0), 1),))
    assert (0, E, 1) in absorb_initial_reads(th2, 0).transitions


def test_prepare_keeps_unsafe_states(witness_ex):
    prep = prepare_for_witness(witness_ex)
    assert prep.unsafe == witness_ex.unsafe
    assert prep.leader.size == witness_ex.leader.size
