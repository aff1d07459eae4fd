"""Subset dynamic program over contributor-state sets.

Nodes of the saturation graph are ``(q, a, S)``: the leader state, the memory
value and the set of contributor states reached so far.  Since any number of
contributors can copy each other, the set is all that matters.  The table
``T[S]`` holds the ``(q, a)`` pairs reachable at set ``S``; it is filled layer
by layer in order of ``|S|``, and each layer only looks at the previous one.

Within one set, ``(q, a)`` pairs are packed into a Python int at bit
``q * D + a``.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .model import LcrInstance, OpKind, Thread
from .verdict import BudgetExceeded, Verdict

Node = tuple[int, int, int]  # (leader state, memory, contributor-set mask)


def _bits(m: int) -> Iterator[int]:
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


def set_names(mask: int, th: Thread) -> list[str]:
    return [th.states[p] for p in _bits(mask)]


class SaturationGraph:
    """Edge generator shared by the table and by the explicit oracle."""

    def __init__(self, inst: LcrInstance):
        self.inst = inst
        self.leader = inst.leader
        self.contributor = inst.contributor()
        self.L = self.leader.size
        self.D = len(inst.domain)
        self.C = self.contributor.size
        D = self.D
        # Leader successor bitmask per packed node.
        self.lsucc = [0] * (self.L * D)
        for s, op, d in self.leader.transitions:
            if op.kind is OpKind.WRITE:
                for b in range(D):
                    self.lsucc[s * D + b] |= 1 << (d * D + op.symbol)
            elif op.kind is OpKind.READ:
                self.lsucc[s * D + op.symbol] |= 1 << (d * D + op.symbol)
            else:
                for b in range(D):
                    self.lsucc[s * D + b] |= 1 << (d * D + b)
        self.row = (1 << D) - 1  # all memories for leader state 0
        self.mem = [sum(1 << (q * D + a) for q in range(self.L)) for a in range(D)]
        self.ctrans = self.contributor.transitions
        self.by_target: list[list[tuple[int, object]]] = [[] for _ in range(self.C)]
        for s, op, d in self.ctrans:
            self.by_target[d].append((s, op))
        self.unsafe_bits = 0
        for q in inst.unsafe:
            self.unsafe_bits |= self.row << (q * D)

    def pack(self, q: int, a: int) -> int:
        return q * self.D + a

    def unpack(self, n: int) -> tuple[int, int]:
        return divmod(n, self.D)

    def leader_rows(self, X: int) -> int:
        """Bitmask of leader states present in packed set ``X``."""
        rows = 0
        for q in range(self.L):
            if X >> (q * self.D) & self.row:
                rows |= 1 << q
        return rows

    def writes_within(self, S: int) -> int:
        """Symbols written by contributor transitions with both ends in ``S``."""
        syms = 0
        for s, op, d in self.ctrans:
            if op.kind is OpKind.WRITE and S >> s & 1 and S >> d & 1:
                syms |= 1 << op.symbol
        return syms

    def close(self, X: int, syms: int) -> int:
        """Saturate packed set ``X`` under leader edges and contributor writes ``syms``."""
        D = self.D
        todo = X
        while todo:
            low = todo & -todo
            todo ^= low
            n = low.bit_length() - 1
            nxt = self.lsucc[n]
            if syms:
                nxt |= syms << (n - n % D)
            new = nxt & ~X
            if new:
                X |= new
                todo |= new
        return X

    def cross(self, X: int, op) -> int:
        """Image of packed set ``X`` under one contributor transition into a larger set."""
        if op.kind is OpKind.READ:
            return X & self.mem[op.symbol]
        if op.kind is OpKind.EPS:
            return X
        out = 0
        for q in _bits(self.leader_rows(X)):
            out |= 1 << (q * self.D + op.symbol)
        return out

    def successors(self, node: Node) -> Iterator[Node]:
        """All edges out of one node, straight from the edge rules."""
        q, a, S = node
        D = self.D
        for n in _bits(self.lsucc[q * D + a]):
            q2, a2 = divmod(n, D)
            yield (q2, a2, S)
        for s, op, d in self.ctrans:
            if not S >> s & 1:
                continue
            S2 = S | 1 << d
            if op.kind is OpKind.WRITE:
                yield (q, op.symbol, S2)
            elif op.kind is OpKind.EPS or op.symbol == a:
                yield (q, a, S2)

    def initial(self) -> Node:
        return (self.leader.initial, self.inst.init_symbol, 1 << self.contributor.initial)


@dataclass
class Slice:
    """The two levels ``W`` and ``S = W + p`` and every edge among their nodes."""

    W: int
    S: int
    nodes: frozenset[Node]
    edges: frozenset[tuple[Node, Node]]

    def cross_edges(self) -> frozenset[tuple[Node, Node]]:
        return frozenset(e for e in self.edges if e[0][2] != e[1][2])


def build_slice(inst: LcrInstance, W: int, p: int) -> Slice:
    """Induced subgraph on levels ``W`` and ``W | {p}``; contributor self-loops are dropped."""
    if W >> p & 1:
        raise ValueError("p must not be in W")
    g = SaturationGraph(inst)
    S = W | 1 << p
    nodes = frozenset((q, a, X) for X in (W, S) for q in range(g.L) for a in range(g.D))
    edges = set()
    for v in nodes:
        for u in g.successors(v):
            if u in nodes and u != v:
                edges.add((v, u))
    return Slice(W, S, nodes, frozenset(edges))


def reach_in_slice(seed: Iterable[tuple[int, int]], sl: Slice) -> set[tuple[int, int]]:
    """Pairs at level ``S`` reachable from ``seed`` placed at level ``W``."""
    adj: dict[Node, list[Node]] = {}
    for v, u in sl.edges:
        adj.setdefault(v, []).append(u)
    start = [(q, a, sl.W) for q, a in seed]
    seen = set(start)
    queue = deque(start)
    while queue:
        v = queue.popleft()
        for u in adj.get(v, ()):
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return {(q, a) for q, a, X in seen if X == sl.S}


@dataclass
class ReachTable:
    """``T[S]`` as packed bitsets, keyed by contributor-set masks."""

    graph: SaturationGraph
    entries: dict[int, int] = field(default_factory=dict)

    def pairs(self, S: int) -> set[tuple[int, int]]:
        return {self.graph.unpack(n) for n in _bits(self.entries.get(S, 0))}

    def dump(self) -> str:
        g = self.graph
        dom = g.inst.domain
        lines = []
        for S in sorted(self.entries, key=lambda m: (bin(m).count("1"), m)):
            X = self.entries[S]
            if not X:
                continue
            pairs = " ".join(
                f"({g.leader.states[q]},{dom[a]})" for q, a in sorted(self.pairs(S))
            )
            lines.append(f"S={{{','.join(set_names(S, g.contributor))}}} : {pairs}")
        return "\n".join(lines)


def fill_table(inst: LcrInstance, max_sets: int = 1 << 22) -> ReachTable:
    """Fill ``T`` forward, one popcount layer at a time, touching only non-empty sets."""
    g = SaturationGraph(inst)
    q0, a0, S0 = g.initial()
    table = ReachTable(g)
    layer = {S0: g.close(1 << g.pack(q0, a0), g.writes_within(S0))}
    while layer:
        table.entries.update(layer)
        if len(table.entries) > max_sets:
            raise BudgetExceeded("table entry", max_sets)
        pending: dict[int, int] = {}
        for W, X in layer.items():
            if not X:
                continue
            for s, op, d in g.ctrans:
                if W >> s & 1 and not W >> d & 1:
                    S = W | 1 << d
                    seed = g.cross(X, op)
                    if seed:
                        pending[S] = pending.get(S, 0) | seed
        layer = {S: g.close(X, g.writes_within(S)) for S, X in pending.items()}
    return table


def _certificate(table: ReachTable, S: int, target: int) -> list[dict]:
    """Walk back from ``target`` at set ``S`` to the initial node, one set per step."""
    g = table.graph
    q0, a0, S0 = g.initial()
    steps = []
    while True:
        syms = g.writes_within(S)
        if S == S0:
            steps.append({"added": None, "set": S, "entry": (q0, a0), "pair": g.unpack(target)})
            break
        found = None
        for d in _bits(S):
            W = S & ~(1 << d)
            X = table.entries.get(W, 0)
            if not X:
                continue
            for s, op in g.by_target[d]:
                if not W >> s & 1:
                    continue
                for n in _bits(X):
                    entry = g.cross(1 << n, op)
                    for e in _bits(entry):
                        if g.close(1 << e, syms) >> target & 1:
                            found = (d, W, n, e)
                            break
                    if found:
                        break
                if found:
                    break
            if found:
                break
        assert found is not None, "table entry without a predecessor"
        d, W, n, e = found
        steps.append({"added": d, "set": S, "entry": g.unpack(e), "pair": g.unpack(target)})
        S, target = W, n
    steps.reverse()
    return steps


def render_certificate(steps: list[dict], inst: LcrInstance) -> list[dict]:
    c = inst.contributor()
    dom = inst.domain
    out = []
    for st in steps:
        q, a = st["pair"]
        eq, ea = st["entry"]
        out.append(
            {
                "added": None if st["added"] is None else c.states[st["added"]],
                "set": set_names(st["set"], c),
                "entry": [inst.leader.states[eq], dom[ea]],
                "reached": [inst.leader.states[q], dom[a]],
            }
        )
    return out


def solve_lcr_dp(inst: LcrInstance, max_sets: int = 1 << 22, certificate: bool = True) -> Verdict:
    t0 = time.perf_counter()
    table = fill_table(inst, max_sets)
    g = table.graph
    hit = None
    for S in sorted(table.entries, key=lambda m: (bin(m).count("1"), m)):
        bad = table.entries[S] & g.unsafe_bits
        if bad:
            hit = (S, (bad & -bad).bit_length() - 1)
            break
    cert = None
    if hit is not None and certificate:
        cert = render_certificate(_certificate(table, *hit), inst)
    return Verdict(
        hit is not None,
        cert,
        nodes=sum(bin(x).count("1") for x in table.entries.values()),
        seconds=time.perf_counter() - t0,
        extra={"table": table, "sets": len(table.entries)},
    )


def explicit_graph_reach(inst: LcrInstance, cap: int = 12) -> Verdict:
    """Materialize the whole saturation graph, then search it breadth-first."""
    t0 = time.perf_counter()
    g = SaturationGraph(inst)
    if g.C > cap:
        raise BudgetExceeded("contributor states for the explicit graph", cap)
    nodes = [(q, a, S) for S in range(1 << g.C) for q in range(g.L) for a in range(g.D)]
    adj = {v: list(g.successors(v)) for v in nodes}
    start = g.initial()
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    hit = any(q in inst.unsafe for q, _, _ in seen)
    return Verdict(
        hit, None, nodes=len(nodes), seconds=time.perf_counter() - t0, extra={"reached": seen}
    )
