"""Instance generators: hardness reductions used as test workloads, plus random instances.

Each reduction returns a :class:`GeneratorReport` carrying the instance, its
parameter summary and the source-problem property that reachability must
match.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from math import ceil, log2
from typing import Iterable, Sequence

from .model import (
    BsrInstance,
    LcrInstance,
    MemoryOp,
    Program,
    Thread,
    Transition,
)
from .oracles import CnfFormula, GridGraph, SetCoverInstance

A0 = "a0"


class _Builder:
    """Collects named states and transitions for one thread."""

    def __init__(self, name: str, initial: str):
        self.name = name
        self.states: dict[str, int] = {}
        self.trans: list[tuple[str, str, str]] = []
        self.state(initial)
        self.initial = initial

    def state(self, s: str) -> str:
        self.states.setdefault(s, len(self.states))
        return s

    def add(self, src: str, op: str, dst: str) -> None:
        self.state(src)
        self.state(dst)
        self.trans.append((src, op, dst))

    def build(self, symbols: dict[str, int]) -> Thread:
        ts = []
        for src, op, dst in self.trans:
            if op == "eps":
                mop = MemoryOp.eps()
            elif op[0] == "!":
                mop = MemoryOp.write(symbols[op[1:]])
            else:
                mop = MemoryOp.read(symbols[op[1:]])
            ts.append(Transition(self.states[src], mop, self.states[dst]))
        return Thread(self.name, tuple(self.states), self.states[self.initial], tuple(ts))


class _Domain:
    def __init__(self) -> None:
        self.symbols: dict[str, int] = {A0: 0}

    def __call__(self, s: str) -> str:
        self.symbols.setdefault(s, len(self.symbols))
        return s

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.symbols)


@dataclass
class GeneratorReport:
    instance: LcrInstance | BsrInstance
    params: dict[str, int]
    expected: str
    extra: dict[str, int] = field(default_factory=dict)


def _lcr(dom: _Domain, leader: _Builder, contributor: _Builder, unsafe: Iterable[str]) -> LcrInstance:
    L = leader.build(dom.symbols)
    C = contributor.build(dom.symbols)
    return LcrInstance(dom.names, L, (C,), frozenset(L.index(u) for u in unsafe))


def _report(inst: LcrInstance | BsrInstance, expected: str, **extra: int) -> GeneratorReport:
    return GeneratorReport(inst, inst.params(), expected, dict(extra))


def _bits_needed(count: int) -> int:
    return ceil(log2(count)) if count > 1 else 0


def _binary(value: int, width: int) -> str:
    return format(value, "b").zfill(width) if width else ""


def _same_shape(phis: Sequence[CnfFormula]) -> tuple[int, int]:
    if not phis:
        raise ValueError("at least one formula is required")
    n, m = phis[0].n, phis[0].m
    if any(p.n != n or p.m != m for p in phis):
        raise ValueError("all formulas must share the number of variables and clauses")
    return n, m


def _satisfies(phi: CnfFormula, j: int, i: int, v: int) -> bool:
    """Does setting x_i to v satisfy clause j (0-based)?"""
    return any(abs(l) == i and (l > 0) == bool(v) for l in phi.clauses[j])


# ---------------------------------------------------------------------------
# LCR reductions


def gen_lcr_from_kxk_clique(g: GridGraph) -> GeneratorReport:
    """Leader writes one (row, column) pair per row; each contributor stores one vertex
    and checks it against every written vertex, then confirms its row."""
    k = g.k
    dom = _Domain()
    for i in range(1, k + 1):
        dom(f"row{i}")
        dom(f"col{i}")
        dom(f"hash{i}")
    leader = _Builder("leader", "q0")
    prev = "q0"
    for i in range(1, k + 1):
        leader.add(prev, f"!row{i}", f"r{i}")
        for j in range(1, k + 1):
            leader.add(f"r{i}", f"!col{j}", f"c{i}")
        prev = f"c{i}"
    for i in range(1, k + 1):
        leader.add(prev, f"?hash{i}", f"h{i}")
        prev = f"h{i}"

    con = _Builder("contributor", "p0")
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            v = f"({i},{j})"
            con.add("p0", f"?{A0}", f"c0_{v}")
            for l in range(1, k + 1):
                con.add(f"c{l - 1}_{v}", f"?row{l}", f"r{l}_{v}")
                for j2 in range(1, k + 1):
                    ok = j2 == j if i == l else g.adjacent((l, j2), (i, j))
                    if ok:
                        con.add(f"r{l}_{v}", f"?col{j2}", f"c{l}_{v}")
            con.add(f"c{k}_{v}", f"!hash{i}", "pf")
    inst = _lcr(dom, leader, con, [prev])
    return _report(inst, "reachable iff the grid graph has a clique with one vertex per row", k=k)


def gen_lcr_from_3sat(phi: CnfFormula) -> GeneratorReport:
    """Leader guesses an assignment; contributors store one variable and confirm clauses."""
    n, m = phi.n, phi.m
    dom = _Domain()
    for i in range(1, n + 1):
        for v in (0, 1):
            dom(f"x{i}={v}")
    for j in range(1, m + 1):
        dom(f"hash{j}")
    leader = _Builder("leader", "x0")
    for i in range(1, n + 1):
        for v in (0, 1):
            leader.add(f"x{i - 1}", f"!x{i}={v}", f"x{i}")
    prev = f"x{n}"
    for j in range(1, m + 1):
        leader.add(prev, f"?hash{j}", f"h{j}")
        prev = f"h{j}"
    con = _Builder("contributor", "p0")
    for i in range(1, n + 1):
        for v in (0, 1):
            con.add("p0", f"?x{i}={v}", f"x{i}={v}")
            for j in range(m):
                if _satisfies(phi, j, i, v):
                    con.add(f"x{i}={v}", f"!hash{j + 1}", f"x{i}={v}")
    inst = _lcr(dom, leader, con, [prev])
    return _report(inst, "reachable iff the formula is satisfiable", n=n, m=m)


def gen_lcr_from_set_cover(sc: SetCoverInstance) -> GeneratorReport:
    """Leader picks r sets and writes their elements; contributors echo stored elements."""
    n, r = sc.n, sc.r
    dom = _Domain()
    for u in range(1, n + 1):
        dom(f"u{u}")
    for u in range(1, n + 1):
        dom(f"u{u}#")
    leader = _Builder("leader", "q1")
    for i in range(1, r + 1):
        for s, S in enumerate(sc.family):
            elems = sorted(S)
            if not elems:
                leader.add(f"q{i}", "eps", f"q{i + 1}")
                continue
            leader.add(f"q{i}", "eps", f"q{i}_S{s}_0")
            for j, u in enumerate(elems):
                nxt = f"q{i + 1}" if j == len(elems) - 1 else f"q{i}_S{s}_{j + 1}"
                leader.add(f"q{i}_S{s}_{j}", f"!u{u}", nxt)
    leader.state(f"q{r + 1}")
    prev = f"q{r + 1}"
    for u in range(1, n + 1):
        leader.add(prev, f"?u{u}#", f"h{u}")
        prev = f"h{u}"
    con = _Builder("contributor", "p0")
    for u in range(1, n + 1):
        con.add("p0", f"?u{u}", f"p{u}")
        con.add(f"p{u}", f"!u{u}#", f"p{u}")
    inst = _lcr(dom, leader, con, [prev])
    return _report(inst, f"reachable iff {r} sets cover the universe", n=n, r=r)


def gen_lcr_crosscomp_dl(phis: Sequence[CnfFormula]) -> GeneratorReport:
    """Leader sends an instance index in binary, then an assignment; a contributor
    walks a binary tree on the index bits and then checks clauses of that instance."""
    n, m = _same_shape(phis)
    I = len(phis)
    B = _bits_needed(I)
    dom = _Domain()
    for l in range(1, B + 1):
        for u in (0, 1):
            dom(f"bit{l}={u}")
    for i in range(1, n + 1):
        for v in (0, 1):
            dom(f"x{i}={v}")
    for j in range(1, m + 1):
        dom(f"hash{j}")
    leader = _Builder("leader", "b0")
    for l in range(1, B + 1):
        for u in (0, 1):
            leader.add(f"b{l - 1}", f"!bit{l}={u}", f"b{l}")
    prev = f"b{B}"
    for i in range(1, n + 1):
        for v in (0, 1):
            leader.add(prev, f"!x{i}={v}", f"x{i}")
        prev = f"x{i}"
    for j in range(1, m + 1):
        leader.add(prev, f"?hash{j}", f"h{j}")
        prev = f"h{j}"

    con = _Builder("contributor", "t.")
    frontier = [""]
    for depth in range(B):
        nxt = []
        for w in frontier:
            for u in "01":
                con.add(f"t.{w}", f"?bit{depth + 1}={u}", f"t.{w}{u}")
                nxt.append(w + u)
        frontier = nxt
    for w in frontier:
        l = int(w, 2) + 1 if w else 1
        if l <= I:
            con.add(f"t.{w}", "eps", f"ch{l}")
    for l, phi in enumerate(phis, start=1):
        for i in range(1, n + 1):
            for v in (0, 1):
                st = f"s{l}_x{i}={v}"
                con.add(f"ch{l}", f"?x{i}={v}", st)
                for j in range(m):
                    if _satisfies(phi, j, i, v):
                        con.add(st, f"!hash{j + 1}", st)
    inst = _lcr(dom, leader, con, [prev])
    return _report(inst, "reachable iff some formula is satisfiable", I=I, n=n, m=m, bits=B)


def gen_lcr_crosscomp_c(phis: Sequence[CnfFormula]) -> GeneratorReport:
    """Leader guesses an assignment, then picks an instance and waits for its clauses."""
    n, m = _same_shape(phis)
    I = len(phis)
    dom = _Domain()
    for i in range(1, n + 1):
        for v in (0, 1):
            dom(f"x{i}={v}")
    for l in range(1, I + 1):
        for j in range(1, m + 1):
            dom(f"hash{l}_{j}")
    leader = _Builder("leader", "x0")
    for i in range(1, n + 1):
        for v in (0, 1):
            leader.add(f"x{i - 1}", f"!x{i}={v}", f"x{i}")
    finals = []
    for l in range(1, I + 1):
        prev = f"x{n}"
        for j in range(1, m + 1):
            leader.add(prev, f"?hash{l}_{j}", f"h{l}_{j}")
            prev = f"h{l}_{j}"
        finals.append(prev)
    con = _Builder("contributor", "p0")
    for i in range(1, n + 1):
        for v in (0, 1):
            con.add("p0", f"?x{i}={v}", f"x{i}={v}")
            for l, phi in enumerate(phis, start=1):
                for j in range(m):
                    if _satisfies(phi, j, i, v):
                        con.add(f"x{i}={v}", f"!hash{l}_{j + 1}", f"x{i}={v}")
    inst = _lcr(dom, leader, con, finals)
    return _report(inst, "reachable iff some formula is satisfiable", I=I, n=n, m=m)


def gen_lcr_from_clique_L(nvertices: int, edges: Iterable[tuple[int, int]], k: int) -> GeneratorReport:
    """Leader writes k vertices twice (plain, then marked); contributors store one
    vertex with its slot and check adjacency against the marked copy."""
    es = {frozenset(e) for e in edges}
    V = range(1, nvertices + 1)
    dom = _Domain()
    for v in V:
        for i in range(1, k + 1):
            dom(f"v{v},{i}")
            dom(f"v{v}#,{i}")
    for i in range(1, k + 1):
        dom(f"hash{i}")
    leader = _Builder("leader", "q0")
    prev = "q0"
    for i in range(1, k + 1):
        for v in V:
            leader.add(prev, f"!v{v},{i}", f"V{i}")
        prev = f"V{i}"
    for i in range(1, k + 1):
        for v in V:
            leader.add(prev, f"!v{v}#,{i}", f"W{i}")
        prev = f"W{i}"
    for i in range(1, k + 1):
        leader.add(prev, f"?hash{i}", f"H{i}")
        prev = f"H{i}"
    con = _Builder("contributor", "p0")
    for v in V:
        for i in range(1, k + 1):
            st = f"({v},{i})"
            con.add("p0", f"?v{v},{i}", f"s0_{st}")
            for j in range(1, k + 1):
                for w in V:
                    if (j == i and v == w) or (j != i and v != w and frozenset((v, w)) in es):
                        con.add(f"s{j - 1}_{st}", f"?v{w}#,{j}", f"s{j}_{st}")
            con.add(f"s{k}_{st}", f"!hash{i}", "pf")
    inst = _lcr(dom, leader, con, [prev])
    return _report(inst, f"reachable iff the graph has a {k}-clique", k=k, V=nvertices)


# ---------------------------------------------------------------------------
# BSR reductions


def _bsr(dom: _Domain, builders: Sequence[_Builder], targets: Sequence[Iterable[str] | None], s: int) -> BsrInstance:
    threads = tuple(b.build(dom.symbols) for b in builders)
    tg = tuple(
        None if t is None else frozenset(th.index(x) for x in t) for th, t in zip(threads, targets)
    )
    return BsrInstance(Program(dom.names, threads, 0), tg, s)


def gen_bsr_from_kxk_clique(g: GridGraph) -> GeneratorReport:
    """One reader per row stores a vertex; a single writer emits one vertex per row."""
    k = g.k
    dom = _Domain()
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            dom(f"({i},{j})")
    readers = []
    targets: list[list[str]] = []
    for i in range(1, k + 1):
        b = _Builder(f"row{i}", "init")
        for j in range(1, k + 1):
            b.add("init", f"?{A0}", f"s{j}^0")
            for l in range(1, k + 1):
                for mcol in range(1, k + 1):
                    ok = mcol == j if l == i else g.adjacent((i, j), (l, mcol))
                    if ok:
                        b.add(f"s{j}^{l - 1}", f"?({l},{mcol})", f"s{j}^{l}")
            b.state(f"s{j}^{k}")
        readers.append(b)
        targets.append([f"s{j}^{k}" for j in range(1, k + 1)])
    w = _Builder("ch", "q0")
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            w.add(f"q{i - 1}", f"!({i},{j})", f"q{i}")
    inst = _bsr(dom, readers + [w], targets + [[f"q{k}"]], 1)
    return _report(inst, "1-stage reachable iff the grid graph has a clique with one vertex per row", k=k)


def gen_bsr_crosscomp(phis: Sequence[CnfFormula]) -> GeneratorReport:
    """The writer claims, clause by clause, an instance, variable and value that
    satisfy it; variable threads check the claims and bit checkers keep the
    instance index fixed."""
    n, m = _same_shape(phis)
    if m < 1:
        raise ValueError("formulas need at least one clause")
    I = len(phis)
    B = _bits_needed(I)
    dom = _Domain()
    for l in range(1, I + 1):
        for j in range(1, m + 1):
            for i in range(1, n + 1):
                for v in (0, 1):
                    dom(f"c{l},{j},{i},{v}")
    w = _Builder("w", "w0")
    for j in range(1, m + 1):
        for l in range(1, I + 1):
            for i in range(1, n + 1):
                for v in (0, 1):
                    w.add(f"w{j - 1}", f"!c{l},{j},{i},{v}", f"w{j}")
    builders = [w]
    targets: list[list[str]] = [[f"w{m}"]]
    for i in range(1, n + 1):
        b = _Builder(f"x{i}", "init")
        for v in (0, 1):
            b.add("init", f"?{A0}", f"v{v}^0")
            for j in range(1, m + 1):
                for l, phi in enumerate(phis, start=1):
                    if _satisfies(phi, j - 1, i, v):
                        b.add(f"v{v}^{j - 1}", f"?c{l},{j},{i},{v}", f"v{v}^{j}")
                    for i2 in range(1, n + 1):
                        if i2 == i:
                            continue
                        for v2 in (0, 1):
                            b.add(f"v{v}^{j - 1}", f"?c{l},{j},{i2},{v2}", f"v{v}^{j}")
                b.state(f"v{v}^{j}")
        builders.append(b)
        targets.append([f"v0^{m}", f"v1^{m}"])
    for bit in range(1, B + 1):
        b = _Builder(f"bit{bit}", "init")
        for l in range(1, I + 1):
            u = _binary(l - 1, B)[bit - 1]
            for i in range(1, n + 1):
                for v in (0, 1):
                    b.add("init", f"?c{l},1,{i},{v}", f"u{u}^1")
                    for j in range(2, m + 1):
                        b.add(f"u{u}^{j - 1}", f"?c{l},{j},{i},{v}", f"u{u}^{j}")
        for u in "01":
            for j in range(1, m + 1):
                b.state(f"u{u}^{j}")
        builders.append(b)
        targets.append([f"u0^{m}", f"u1^{m}"])
    inst = _bsr(dom, builders, targets, 1)
    return _report(inst, "1-stage reachable iff some formula is satisfiable", I=I, n=n, m=m, bits=B)


def literal_encoding(i: int, v: int, width: int) -> list[str]:
    """``v # b1 # b2 # ...`` with the index bits most significant first."""
    out = [str(v), "#"]
    for bit in _binary(i, width):
        out += [bit, "#"]
    return out


def gen_bsr_constant_domain(phi: CnfFormula) -> GeneratorReport:
    """A verifier writes, per clause, the encoding of one chosen literal over
    {0, 1, #}; each variable thread stores a value and must be able to read every
    encoding, which it can only do for its own variable with the stored value."""
    n, m = phi.n, phi.m
    width = ceil(log2(n)) + 1 if n > 1 else 1
    dom = _Domain()
    for s in ("#", "0", "1"):
        dom(s)
    ver = _Builder("verifier", "q0")
    for j, clause in enumerate(phi.clauses, start=1):
        for lit in sorted(set(clause), key=lambda x: (abs(x), x)):
            enc = literal_encoding(abs(lit), int(lit > 0), width)
            prev = f"q{j - 1}"
            for t, sym in enumerate(enc):
                nxt = f"q{j}" if t == len(enc) - 1 else f"q{j - 1}:{lit}:{t + 1}"
                ver.add(prev, f"!{sym}", nxt)
                prev = nxt
    ver.state(f"q{m}")
    builders = [ver]
    targets: list[list[str]] = [[f"q{m}"]]
    for i in range(1, n + 1):
        b = _Builder(f"x{i}", "init")
        for v in (0, 1):
            b.add("init", f"?{A0}", f"p{v}_0")
            words = [literal_encoding(i, v, width)]
            for i2 in range(1, n + 1):
                if i2 != i:
                    words += [literal_encoding(i2, v2, width) for v2 in (0, 1)]
            for j in range(1, m + 1):
                src, dst = f"p{v}_{j - 1}", f"p{v}_{j}"
                for word in words:
                    prev = src
                    for t, sym in enumerate(word):
                        nxt = dst if t == len(word) - 1 else f"{src}:{''.join(word[: t + 1])}"
                        b.add(prev, f"?{sym}", nxt)
                        prev = nxt
            b.state(f"p{v}_{m}")
        builders.append(b)
        targets.append([f"p0_{m}", f"p1_{m}"])
    inst = _bsr(dom, builders, targets, 1)
    return _report(inst, "1-stage reachable iff the formula is satisfiable", n=n, m=m, width=width)


# ---------------------------------------------------------------------------
# Random instances


def _random_thread(rng: random.Random, name: str, prefix: str, n: int, D: int, m: int, p_eps: float = 0.15) -> Thread:
    ts = []
    for _ in range(m):
        x = rng.random()
        if x < p_eps:
            op = MemoryOp.eps()
        elif x < p_eps + (1 - p_eps) / 2:
            op = MemoryOp.write(rng.randrange(D))
        else:
            op = MemoryOp.read(rng.randrange(D))
        ts.append(Transition(rng.randrange(n), op, rng.randrange(n)))
    return Thread(name, tuple(f"{prefix}{i}" for i in range(n)), 0, tuple(ts))


def random_domain(D: int) -> tuple[str, ...]:
    return (A0,) + tuple(f"d{i}" for i in range(1, D))


def random_lcr(rng: random.Random, L: int, C: int, D: int, density: float = 1.5, templates: int = 1) -> LcrInstance:
    """Random leader and contributors with about ``density`` transitions per state;
    the last leader state is unsafe."""
    leader = _random_thread(rng, "leader", "q", L, D, max(1, round(density * L)))
    cons = tuple(
        _random_thread(rng, f"c{k}", "p", C, D, max(1, round(density * C))) for k in range(templates)
    )
    return LcrInstance(random_domain(D), leader, cons, frozenset({L - 1}))


def random_bsr(rng: random.Random, t: int, P: int, D: int, s: int, density: float = 1.5) -> BsrInstance:
    threads = tuple(
        _random_thread(rng, f"t{k}", "s", P, D, max(1, round(density * P)), p_eps=0.1) for k in range(t)
    )
    targets = tuple(frozenset({P - 1}) if rng.random() < 0.7 else None for _ in range(t))
    return BsrInstance(Program(random_domain(D), threads, 0), targets, s)


def random_cnf(rng: random.Random, n: int, m: int, width: int = 3) -> CnfFormula:
    clauses = []
    for _ in range(m):
        k = rng.randint(1, width)
        clauses.append(tuple(rng.choice((1, -1)) * rng.randint(1, n) for _ in range(k)))
    return CnfFormula(n, tuple(clauses))


def random_grid(rng: random.Random, k: int, p: float = 0.5) -> GridGraph:
    vs = [(i, j) for i in range(1, k + 1) for j in range(1, k + 1)]
    return GridGraph.from_pairs(
        k, [(u, v) for a, u in enumerate(vs) for v in vs[a + 1 :] if rng.random() < p]
    )
