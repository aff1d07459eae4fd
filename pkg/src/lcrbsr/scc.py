"""Witness search over strongly connected components of the leader.

For a first-write word ``r = c1 .. cl`` the leader is cut into levels: level
``i`` keeps only reads of ``c1 .. ci``.  Inside one component the leader can
move freely and repeat any write it sees, so a candidate names components
instead of states: ``X@i x ~c Y@j ...``.  The number of component letters is
bounded by the longest path in the level graph.

Level graph edges join distinct components of one level through a leader
transition, and every component to the component that contains it one level
up.  The second kind keeps the bound sound when the leader stays inside a
component while first writes happen around it.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import networkx as nx

from .model import LcrInstance, OpKind, PreparedLcr, Thread, prepare_for_witness
from .verdict import BudgetExceeded, Verdict
from .witness import (
    BOT,
    BOTTOM,
    FIRST,
    SYMBOL,
    Letter,
    ShapeError,
    Support,
    _bits,
    _mask,
    as_prepared,
    can_finish,
)


class SccLetter(NamedTuple):
    """A component letter: its state set and its level."""

    states: frozenset[int]
    level: int


def restricted_leader(leader: Thread, r: Sequence[int], i: int) -> Thread:
    """Drop every read of a symbol outside ``r[:i]``."""
    allowed = set(r[:i])
    keep = tuple(
        t for t in leader.transitions if t.op.kind is not OpKind.READ or t.op.symbol in allowed
    )
    return Thread(leader.name, leader.states, leader.initial, keep)


def components(th: Thread) -> list[frozenset[int]]:
    g = nx.DiGraph()
    g.add_nodes_from(range(th.size))
    g.add_edges_from((s, d) for s, _, d in th.transitions)
    return sorted((frozenset(c) for c in nx.strongly_connected_components(g)), key=min)


@dataclass
class SccGraph:
    """Components per level and the edges of the level graph."""

    levels: list[list[frozenset[int]]]
    edges: set[tuple[tuple[int, int], tuple[int, int]]] = field(default_factory=set)

    def owner(self, level: int, q: int) -> int:
        for k, comp in enumerate(self.levels[level]):
            if q in comp:
                return k
        raise KeyError(q)

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from((i, k) for i, lv in enumerate(self.levels) for k in range(len(lv)))
        g.add_edges_from(self.edges)
        return g


def scc_depth(leader: Thread, r: Sequence[int]) -> tuple[SccGraph, int]:
    """Build the level graph for ``r`` and return it with its longest path (in nodes)."""
    levels = [components(restricted_leader(leader, r, i)) for i in range(len(r) + 1)]
    G = SccGraph(levels)
    for i, lv in enumerate(levels):
        th = restricted_leader(leader, r, i)
        where = {q: k for k, comp in enumerate(lv) for q in comp}
        for s, _, d in th.transitions:
            if where[s] != where[d]:
                G.edges.add(((i, where[s]), (i, where[d])))
        if i:
            up = {q: k for k, comp in enumerate(lv) for q in comp}
            for k, comp in enumerate(levels[i - 1]):
                G.edges.add(((i - 1, k), (i, up[next(iter(comp))])))
    dg = G.digraph()
    assert nx.is_directed_acyclic_graph(dg), "level graph must be acyclic"
    return G, nx.dag_longest_path_length(dg) + 1


def first_write_words(ndomain: int) -> Iterator[tuple[int, ...]]:
    """Repetition-free words by length, then lexicographically."""
    for n in range(ndomain + 1):
        yield from itertools.permutations(range(ndomain), n)


# ---------------------------------------------------------------------------
# Tokens


def scc_to_tokens(w: Sequence, prep: PreparedLcr) -> list[str]:
    out = []
    for x in w:
        if isinstance(x, SccLetter):
            names = ",".join(prep.leader.states[q] for q in sorted(x.states))
            out.append(f"scc:{{{names}}}@{x.level}")
        elif x.kind == SYMBOL:
            out.append(prep.domain[x.value])
        elif x.kind == BOTTOM:
            out.append("_")
        else:
            out.append("~" + prep.domain[x.value])
    return out


def scc_from_tokens(tokens: Iterable[str], prep: PreparedLcr) -> tuple:
    symbols = {s: i for i, s in enumerate(prep.domain)}
    out: list = []
    for tok in tokens:
        if tok.startswith("scc:{"):
            body, _, level = tok[5:].rpartition("}@")
            names = [n for n in body.split(",") if n]
            try:
                states = frozenset(prep.leader.index(n) for n in names)
                out.append(SccLetter(states, int(level)))
            except (ValueError, KeyError) as e:
                raise ShapeError(f"bad component token {tok!r}") from e
        elif tok == "_":
            out.append(BOT)
        elif tok.startswith("~") and tok[1:] in symbols:
            out.append(Letter(FIRST, symbols[tok[1:]]))
        elif tok in symbols:
            out.append(Letter(SYMBOL, symbols[tok]))
        else:
            raise ShapeError(f"unknown token {tok!r}")
    return tuple(out)


# ---------------------------------------------------------------------------
# Validity


def _inner_writes(leader: Thread, X: frozenset[int]) -> int:
    return _mask(
        op.symbol
        for s, op, d in leader.transitions
        if op.kind is OpKind.WRITE and s in X and d in X
    )


def _check_scc_shape(w: Sequence, prep: PreparedLcr) -> tuple[int, ...]:
    """Validate the layout and return the first-write word it uses."""
    if not w or not isinstance(w[-1], SccLetter):
        raise ShapeError("a component candidate ends with a component")
    r: list[int] = []
    expect_scc_or_bar = True
    for x in w:
        if isinstance(x, SccLetter):
            if not expect_scc_or_bar:
                raise ShapeError("two components without a letter between them")
            if x.level != len(r):
                raise ShapeError("component level must equal the number of first writes before it")
            expect_scc_or_bar = False
        elif x.kind == FIRST:
            if not expect_scc_or_bar:
                raise ShapeError("a first write follows a component without a letter")
            r.append(x.value)
        elif x.kind in (SYMBOL, BOTTOM):
            if expect_scc_or_bar:
                raise ShapeError("a letter must follow a component")
            expect_scc_or_bar = True
        else:
            raise ShapeError(f"unexpected letter {x!r}")
    if len(r) > len(prep.domain):
        raise ShapeError("more first writes than domain symbols")
    for x in w:
        if isinstance(x, SccLetter):
            comps = components(restricted_leader(prep.leader, r, x.level))
            if x.states not in comps:
                raise ShapeError(f"{sorted(x.states)} is not a component at level {x.level}")
    return tuple(r)


def scc_validity_failure(w: Sequence, inst: LcrInstance | PreparedLcr) -> int | None:
    """First violated property (1 run, 2 contributors, 3 repeats) or ``None``.

    Distinct first writes are part of the shape here, since levels follow them.
    """
    prep = as_prepared(inst)
    bars = [x.value for x in w if not isinstance(x, SccLetter) and x.kind == FIRST]
    if len(set(bars)) != len(bars):
        raise ShapeError("first writes repeat")
    r = _check_scc_shape(w, prep)
    if not _scc_run_ok(w, r, prep):
        return 1
    if not _scc_contributors_ok(w, prep):
        return 2
    if not _scc_no_repeats(w):
        return 3
    return None


def check_scc_validity(w: Sequence, inst: LcrInstance | PreparedLcr) -> bool:
    return scc_validity_failure(w, inst) is None


def _scc_run_ok(w: Sequence, r: tuple[int, ...], prep: PreparedLcr) -> bool:
    leader = prep.leader
    comps = [i for i, x in enumerate(w) if isinstance(x, SccLetter)]
    if leader.initial not in w[comps[0]].states:
        return False
    for a, b in zip(comps, comps[1:]):
        X, x, Y = w[a], w[a + 1], w[b]
        seen = set(r[: X.level])
        ok = any(
            s in X.states
            and d in Y.states
            and (
                op.symbol == x.value and op.kind is OpKind.WRITE
                if x.kind == SYMBOL
                else op.kind is OpKind.EPS or (op.kind is OpKind.READ and op.symbol in seen)
            )
            for s, op, d in leader.transitions
        )
        if not ok:
            return False
    final = w[comps[-1]]
    return bool(final.states & can_finish(leader, prep.unsafe, r))


def _scc_no_repeats(w: Sequence) -> bool:
    block: set[frozenset[int]] = set()
    for x in w:
        if isinstance(x, SccLetter):
            if x.states in block:
                return False
            block.add(x.states)
        elif x.kind == FIRST:
            block = set()
    return True


def _scc_contributors_ok(w: Sequence, prep: PreparedLcr) -> bool:
    """Product search over (contributor state, position, phase) for every first write."""
    c = prep.contributor
    seen_at = [frozenset()]
    for x in w:
        cur = seen_at[-1]
        if not isinstance(x, SccLetter) and x.kind == FIRST:
            cur = cur | {x.value}
        seen_at.append(cur)
    for j, x in enumerate(w):
        if isinstance(x, SccLetter) or x.kind != FIRST:
            continue
        target = x.value
        start = (c.initial, 0, 0)
        seen = {start}
        stack = [start]
        ok = False
        while stack:
            p, i, ph = stack.pop()
            if any(op.kind is OpKind.WRITE and op.symbol == target for op, _ in c.out[p]):
                ok = True
                break
            fw = seen_at[i]
            letter = w[i - 1] if i else None
            readable = set(fw)
            block = None
            if isinstance(letter, SccLetter):
                readable |= set(_bits(_inner_writes(prep.leader, letter.states)))
            elif letter is not None and letter.kind == SYMBOL and letter.value not in fw:
                block = letter.value
            nxt = []
            for op, d in c.out[p]:
                if op.kind is OpKind.EPS:
                    nxt.append((d, i, ph))
                elif op.kind is OpKind.WRITE:
                    if ph != 1:
                        nxt.append((d, i, ph))
                elif ph == 1:
                    if op.symbol == block:
                        nxt.append((d, i, ph))
                elif op.symbol in readable:
                    nxt.append((d, i, ph))
            if block is not None and ph < 2:
                nxt.append((p, i, ph + 1))
            elif i < j:
                nxt.append((p, i + 1, 0))
            for n in nxt:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        if not ok:
            return False
    return True


# ---------------------------------------------------------------------------
# Search


class _RSearch:
    """Depth-first search for one first-write word ``r``."""

    def __init__(self, prep: PreparedLcr, r: tuple[int, ...], support: Support, budget: list[int]):
        self.prep = prep
        self.r = r
        self.sup = support
        self.budget = budget
        self.graph, self.depth = scc_depth(prep.leader, r)
        self.finish = can_finish(prep.leader, prep.unsafe, r)
        L = prep.leader
        self.where = [
            {q: k for k, comp in enumerate(lv) for q in comp} for lv in self.graph.levels
        ]
        self.inner = [[_inner_writes(L, comp) for comp in lv] for lv in self.graph.levels]
        self.prefix = [_mask(r[:i]) for i in range(len(r) + 1)]
        # Moves out of each component per level: (letter, target state).
        self.moves: list[list[list[tuple[Letter, int]]]] = []
        D = len(prep.domain)
        for i, lv in enumerate(self.graph.levels):
            allowed = set(r[:i])
            per = []
            for comp in lv:
                ms = set()
                for s, op, d in L.transitions:
                    if s not in comp:
                        continue
                    if op.kind is OpKind.WRITE:
                        ms.add((op.symbol, d))
                    elif op.kind is OpKind.EPS or op.symbol in allowed:
                        ms.add((D, d))
                per.append([(Letter(SYMBOL, a) if a < D else BOT, d) for a, d in sorted(ms)])
            self.moves.append(per)
        self.failed: set = set()

    def tick(self) -> None:
        self.budget[0] -= 1
        if self.budget[0] < 0:
            raise BudgetExceeded("component search node", self.budget[1])

    def bars(self, i: int, R: int, word: list) -> Iterator[tuple[int, int]]:
        """Yield (level, R) after emitting 0, 1, ... further first writes of ``r``."""
        yield i, R
        while i < len(self.r):
            c = self.r[i]
            if not R & self.sup.writers[c]:
                return
            i += 1
            R = self.sup.close(R, self.prefix[i], True)
            word.append(Letter(FIRST, c))
            yield i, R

    def run(self) -> tuple | None:
        word: list = []
        R0 = self.sup.start()
        q0 = self.prep.leader.initial
        for i, R in self.bars(0, R0, word):
            k = self.where[i][q0]
            found = self.visit(i, k, frozenset(), R, 1, word)
            if found:
                return tuple(found)
        return None

    def visit(self, i: int, k: int, block: frozenset, R: int, count: int, word: list):
        self.tick()
        X = self.graph.levels[i][k]
        word.append(SccLetter(X, i))
        try:
            if i == len(self.r) and X & self.finish:
                return list(word)
            key = (i, k, block, R, count)
            if count >= self.depth or key in self.failed:
                return None
            seen = self.prefix[i]
            R_x = self.sup.close(R, seen | self.inner[i][k], True)
            block2 = block | {k}
            for x, d in self.moves[i][k]:
                R1 = self.sup.after_write(R_x, x.value, seen) if x.kind == SYMBOL else R_x
                word.append(x)
                mark = len(word)
                for j, R2 in self.bars(i, R1, word):
                    k2 = self.where[j][d]
                    if j == i and k2 in block2:
                        continue
                    found = self.visit(j, k2, block2 if j == i else frozenset(), R2, count + 1, word)
                    if found:
                        return found
                del word[mark - 1 :]
            self.failed.add(key)
            return None
        finally:
            word.pop()


def solve_lcr_scc(inst: LcrInstance, max_nodes: int = 2_000_000) -> Verdict:
    t0 = time.perf_counter()
    prep = prepare_for_witness(inst)
    sup = Support(prep.contributor, len(prep.domain))
    budget = [max_nodes, max_nodes]
    tried = 0
    for r in first_write_words(len(prep.domain)):
        tried += 1
        cert = _RSearch(prep, r, sup, budget).run()
        if cert is not None:
            return Verdict(
                True,
                cert,
                nodes=max_nodes - budget[0],
                seconds=time.perf_counter() - t0,
                extra={"prepared": prep, "r": r, "tokens": scc_to_tokens(cert, prep), "words": tried},
            )
    return Verdict(
        False,
        nodes=max_nodes - budget[0],
        seconds=time.perf_counter() - t0,
        extra={"prepared": prep, "words": tried},
    )
