"""Brute-force deciders used as ground truth for the solvers and generators."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

from .model import BsrInstance, LcrInstance, OpKind, successors
from .verdict import BudgetExceeded


def lcr_explicit_bfs(inst: LcrInstance, t: int, cap: int = 2_000_000) -> bool:
    """Search the configurations of the leader plus ``t`` contributor copies.

    Copies are interchangeable, so their states are kept as a sorted tuple.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    leader, contributor = inst.leader, inst.contributor()
    bound = comb(contributor.size + t - 1, t) * leader.size * len(inst.domain)
    if bound > cap:
        raise BudgetExceeded("explicit configuration", cap)
    start = (leader.initial, (contributor.initial,) * t, inst.init_symbol)
    seen = {start}
    queue = deque([start])
    while queue:
        q, ps, m = queue.popleft()
        if q in inst.unsafe:
            return True
        nxt = []
        for op, d in leader.out[q]:
            if op.kind is OpKind.READ and op.symbol != m:
                continue
            nxt.append((d, ps, op.symbol if op.kind is OpKind.WRITE else m))
        for i, p in enumerate(ps):
            if i and ps[i - 1] == p:
                continue
            for op, d in contributor.out[p]:
                if op.kind is OpKind.READ and op.symbol != m:
                    continue
                ps2 = tuple(sorted(ps[:i] + (d,) + ps[i + 1 :]))
                nxt.append((q, ps2, op.symbol if op.kind is OpKind.WRITE else m))
        for c in nxt:
            if c not in seen:
                seen.add(c)
                queue.append(c)
    return False


def bsr_stage_bfs(inst: BsrInstance, cap: int = 2_000_000) -> bool:
    """Stage-bounded search with explicit stage openings that may pick any writer."""
    prog = inst.program
    start = (prog.initial_config(), None, 0)
    seen = {start}
    queue = deque([start])
    while queue:
        c, writer, used = queue.popleft()
        if inst.is_target(c):
            return True
        nxt = [
            (c2, writer, used)
            for c2, k, op in successors(prog, c)
            if op.kind is not OpKind.WRITE or k == writer
        ]
        if used < inst.stages:
            nxt += [(c, k, used + 1) for k in range(len(prog.threads))]
        for x in nxt:
            if x not in seen:
                seen.add(x)
                if len(seen) > cap:
                    raise BudgetExceeded("stage configuration", cap)
                queue.append(x)
    return False


@dataclass(frozen=True)
class CnfFormula:
    """Clauses are tuples of non-zero ints: ``3`` is x3, ``-3`` is not x3."""

    n: int
    clauses: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "clauses", tuple(tuple(c) for c in self.clauses))
        for c in self.clauses:
            if not c:
                raise ValueError("empty clause")
            for lit in c:
                if lit == 0 or abs(lit) > self.n:
                    raise ValueError(f"literal {lit} outside 1..{self.n}")

    @property
    def m(self) -> int:
        return len(self.clauses)

    def satisfied_by(self, assignment: Sequence[bool]) -> bool:
        """``assignment[i - 1]`` is the value of x_i."""
        return all(self.clause_satisfied(j, assignment) for j in range(self.m))

    def clause_satisfied(self, j: int, assignment: Sequence[bool]) -> bool:
        return any(assignment[abs(l) - 1] == (l > 0) for l in self.clauses[j])

    @classmethod
    def from_dimacs(cls, text: str) -> CnfFormula:
        n = 0
        clauses: list[tuple[int, ...]] = []
        cur: list[int] = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line[0] in "c%":
                continue
            if line.startswith("p"):
                n = int(line.split()[2])
                continue
            for tok in line.split():
                v = int(tok)
                if v == 0:
                    clauses.append(tuple(cur))
                    cur = []
                else:
                    cur.append(v)
        if cur:
            clauses.append(tuple(cur))
        n = max([n] + [abs(l) for c in clauses for l in c])
        return cls(n, tuple(clauses))

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.n} {self.m}"]
        lines += [" ".join(map(str, c)) + " 0" for c in self.clauses]
        return "\n".join(lines) + "\n"


def sat_brute(phi: CnfFormula, cap: int = 20) -> bool:
    if phi.n > cap:
        raise BudgetExceeded("SAT variable", cap)
    return any(
        phi.satisfied_by(bits) for bits in itertools.product((False, True), repeat=phi.n)
    )


@dataclass(frozen=True)
class SetCoverInstance:
    """Universe ``1..n``, a family of subsets and a budget ``r``."""

    n: int
    family: tuple[frozenset[int], ...]
    r: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", tuple(frozenset(s) for s in self.family))
        for s in self.family:
            if not s <= set(range(1, self.n + 1)):
                raise ValueError(f"set {sorted(s)} leaves the universe 1..{self.n}")


def set_cover_brute(inst: SetCoverInstance, cap: int = 12) -> bool:
    """Are there sets ``S1 .. Sr`` in the family (repetition allowed) covering the universe?"""
    if inst.n > cap:
        raise BudgetExceeded("universe size", cap)
    universe = frozenset(range(1, inst.n + 1))
    return any(
        frozenset().union(*pick) == universe
        for pick in itertools.combinations_with_replacement(inst.family, inst.r)
    )


Vertex = tuple[int, int]


@dataclass(frozen=True)
class GridGraph:
    """Graph on vertices ``(i, j)`` with ``i`` the row and ``j`` the column, both in ``1..k``."""

    k: int
    edges: frozenset[frozenset[Vertex]]

    def __post_init__(self) -> None:
        es = frozenset(frozenset(e) for e in self.edges)
        for e in es:
            if len(e) != 2:
                raise ValueError("self-loops are not allowed")
            for i, j in e:
                if not (1 <= i <= self.k and 1 <= j <= self.k):
                    raise ValueError(f"vertex {(i, j)} outside the {self.k}x{self.k} grid")
        object.__setattr__(self, "edges", es)

    @classmethod
    def from_pairs(cls, k: int, pairs: Iterable[tuple[Vertex, Vertex]]) -> GridGraph:
        return cls(k, frozenset(frozenset((tuple(u), tuple(v))) for u, v in pairs))

    @classmethod
    def complete(cls, k: int) -> GridGraph:
        vs = [(i, j) for i in range(1, k + 1) for j in range(1, k + 1)]
        return cls(k, frozenset(frozenset(e) for e in itertools.combinations(vs, 2)))

    def adjacent(self, u: Vertex, v: Vertex) -> bool:
        return frozenset((u, v)) in self.edges


def kxk_clique_brute(g: GridGraph, cap: int = 4) -> bool:
    """Is there one vertex per row, all pairwise adjacent?"""
    if g.k > cap:
        raise BudgetExceeded("grid size", cap)
    rows = range(1, g.k + 1)
    for cols in itertools.product(rows, repeat=g.k):
        vs = list(zip(rows, cols))
        if all(g.adjacent(u, v) for u, v in itertools.combinations(vs, 2)):
            return True
    return False


def clique_brute(n: int, edges: Iterable[tuple[int, int]], k: int) -> bool:
    """Plain k-clique on vertices ``1..n``."""
    es = {frozenset(e) for e in edges}
    return any(
        all(frozenset(p) in es for p in itertools.combinations(vs, 2))
        for vs in itertools.combinations(range(1, n + 1), k)
    )
