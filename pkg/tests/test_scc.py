from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import tiny_lcr
from lcrbsr.dp import solve_lcr_dp
from lcrbsr.model import LcrInstance, MemoryOp, OpKind, Thread, Transition
from lcrbsr.scc import (
    check_scc_validity,
    first_write_words,
    restricted_leader,
    scc_depth,
    scc_from_tokens,
    scc_to_tokens,
    scc_validity_failure,
    solve_lcr_scc,
)
from lcrbsr.witness import ShapeError, as_prepared, solve_lcr_witness

COLLAPSED = "~a scc:{q0}@1 _ scc:{q1}@1 b ~c scc:{q2}@2"


def cand(inst, text: str):
    return scc_from_tokens(text.split(), as_prepared(inst))


def ring(n: int, ops=None) -> Thread:
    ops = ops or [MemoryOp.eps()] * n
    return Thread("l", tuple(f"q{i}" for i in range(n)), 0, tuple(Transition(i, ops[i], (i + 1) % n) for i in range(n)))


def test_restriction_level_zero(witness_ex):
    a, c = witness_ex.domain.index("a"), witness_ex.domain.index("c")
    th = restricted_leader(witness_ex.leader, (a, c), 0)
    kinds = {(op.kind, op.symbol) for _, op, _ in th.transitions}
    assert kinds == {(OpKind.WRITE, witness_ex.domain.index("b")), (OpKind.EPS, None)}


def test_restriction_full_word_keeps_everything(witness_ex):
    r = tuple(range(len(witness_ex.domain)))
    assert restricted_leader(witness_ex.leader, r, len(r)).transitions == witness_ex.leader.transitions


@given(st.integers(0, 10**6))
def test_restriction_count(seed):
    inst = tiny_lcr(seed, 4, 1, 3)
    D = len(inst.domain)
    for r in first_write_words(D):
        for i in range(len(r) + 1):
            outside = sum(1 for _, op, _ in inst.leader.transitions if op.kind is OpKind.READ and op.symbol not in r[:i])
            assert len(restricted_leader(inst.leader, r, i).transitions) == len(inst.leader.transitions) - outside


def test_depth_strongly_connected_empty_word():
    assert scc_depth(ring(3), ())[1] == 1


def test_depth_chain():
    th = Thread("l", ("q0", "q1", "q2"), 0, (Transition(0, MemoryOp.write(0), 1), Transition(1, MemoryOp.eps(), 2)))
    assert scc_depth(th, ())[1] == 3


@pytest.mark.parametrize("k", [1, 2, 3])
def test_depth_strongly_connected_counts_levels(k):
    # Each level holds the same single component; containment edges chain them.
    assert scc_depth(ring(3), tuple(range(k)))[1] == k + 1


def longest_path_brute(G) -> int:
    adj: dict = {}
    for u, v in G.edges:
        adj.setdefault(u, []).append(v)
    nodes = [(i, k) for i, lv in enumerate(G.levels) for k in range(len(lv))]

    def walk(u, seen) -> int:
        best = 1
        for v in adj.get(u, ()):
            assert v not in seen, "cycle in level graph"
            best = max(best, 1 + walk(v, seen | {v}))
        return best

    return max(walk(u, {u}) for u in nodes)


def test_depth_witness_ex_matches_brute(witness_ex):
    r = (witness_ex.domain.index("a"), witness_ex.domain.index("c"))
    G, d = scc_depth(witness_ex.leader, r)
    assert d == longest_path_brute(G)


@given(st.integers(0, 10**6))
def test_depth_bound_and_brute(seed):
    inst = tiny_lcr(seed, 4, 1, 3)
    L = inst.leader.size
    for r in first_write_words(len(inst.domain)):
        G, d = scc_depth(inst.leader, r)
        assert d == longest_path_brute(G)
        assert d <= L * (len(r) + 1)
        for i, lv in enumerate(G.levels):
            assert sorted(q for comp in lv for q in comp) == list(range(L))


def test_first_write_words_order():
    words = list(first_write_words(2))
    assert words == [(), (0,), (1,), (0, 1), (1, 0)]


def test_collapsed_example_is_valid(witness_ex):
    assert check_scc_validity(cand(witness_ex, COLLAPSED), witness_ex)
    assert scc_to_tokens(cand(witness_ex, COLLAPSED), as_prepared(witness_ex)) == COLLAPSED.split()


@pytest.mark.parametrize(
    "text, failure",
    [
        ("~a scc:{q0}@1 _ scc:{q2}@1 b ~c scc:{q3}@2", 1),  # no q0 -> q2 transition
        ("~a scc:{q1}@1 b ~c scc:{q2}@2", 1),  # does not start at the initial state
        ("~a scc:{q0}@1 _ scc:{q1}@1 _ ~c scc:{q2}@2", 2),  # nobody writes b for the contributor
    ],
)
def test_invalid_collapsed_candidates(witness_ex, text, failure):
    assert scc_validity_failure(cand(witness_ex, text), witness_ex) == failure


def test_component_repeat_in_block():
    ops = [MemoryOp.write(1), MemoryOp.eps()]
    leader = ring(2, ops)
    leader = Thread("l", leader.states + ("q2",), 0, leader.transitions + (Transition(0, MemoryOp.eps(), 2),))
    inst = LcrInstance(("a0", "x"), leader, (Thread("c", ("p0",), 0),), frozenset({2}))
    w = cand(inst, "scc:{q0,q1}@0 x scc:{q0,q1}@0 _ scc:{q2}@0")
    assert scc_validity_failure(w, inst) == 3


@pytest.mark.parametrize(
    "text",
    [
        "~a scc:{q0}@0 _ scc:{q1}@1",  # level does not match the first writes before it
        "~a ~a scc:{q0}@2",  # repeated first write
        "scc:{q0,q1}@0",  # not a component
        "~a scc:{q0}@1 _",  # ends in a letter
    ],
)
def test_scc_shape_errors(witness_ex, text):
    with pytest.raises(ShapeError):
        scc_validity_failure(cand(witness_ex, text), witness_ex)


def test_solver_witness_ex(witness_ex):
    v = solve_lcr_scc(witness_ex)
    assert v.reachable and check_scc_validity(v.certificate, witness_ex)


def test_single_state_unsafe_leader():
    inst = LcrInstance(("a0",), Thread("l", ("q0",), 0), (Thread("c", ("p0",), 0),), frozenset({0}))
    v = solve_lcr_scc(inst)
    assert v.reachable and v.extra["tokens"] == ["scc:{q0}@0"]


@given(st.integers(0, 10**6))
def test_agrees_with_witness_and_dp(seed):
    inst = tiny_lcr(seed, 4, 4, 3)
    v = solve_lcr_scc(inst)
    assert v.reachable == solve_lcr_witness(inst).reachable == solve_lcr_dp(inst).reachable
    if v.reachable:
        assert check_scc_validity(v.certificate, inst)
