"""Bounded-stage reachability by search over an implicit product automaton.

A stage is a stretch of the computation in which only one thread writes;
every thread may read and take eps-moves at any time.  Product states are
``(pc, writer, stages used, memory)``.

A stage is opened lazily, at the first write of a thread that is not the
current writer.  Opening a stage earlier, or opening one in which nobody
writes, never helps: reads are allowed in every stage.  So the verdict is the
same as with free stage openings, and far fewer states are visited.

Two search methods are offered.  ``product`` walks concrete product states.
``subset`` keeps only the writer concrete: every other thread merely reads,
so given the memory history the threads are independent and each one is
represented by the set of states it can be in.  The reachable combinations are
exactly the Cartesian product of those sets.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Union

from .model import BsrInstance, Configuration, MemoryOp, OpKind, successors
from .verdict import BudgetExceeded, Verdict

NO_WRITER = -1


@dataclass(frozen=True)
class TraceStep:
    thread: int
    op: MemoryOp
    config: Configuration


@dataclass(frozen=True)
class StageOpen:
    """Boundary marker: from here on ``writer`` is the only thread that writes."""

    writer: int


TraceItem = Union[TraceStep, StageOpen]


@dataclass
class StageTrace:
    initial: Configuration
    items: list[TraceItem] = field(default_factory=list)

    @property
    def stages(self) -> int:
        return sum(isinstance(x, StageOpen) for x in self.items)

    @property
    def final(self) -> Configuration:
        for x in reversed(self.items):
            if isinstance(x, TraceStep):
                return x.config
        return self.initial

    def to_json_lines(self, inst: BsrInstance) -> list[dict]:
        names = [th.name for th in inst.program.threads]
        dom = inst.domain
        out = []
        stage = 0
        for x in self.items:
            if isinstance(x, StageOpen):
                stage += 1
                out.append({"stage": stage, "open": names[x.writer]})
            else:
                out.append(
                    {
                        "stage": stage,
                        "thread": names[x.thread],
                        "op": x.op.render(dom),
                        "pc": [
                            th.states[q] for th, q in zip(inst.program.threads, x.config.pc)
                        ],
                        "memory": dom[x.config.memory],
                    }
                )
        return out


@dataclass(frozen=True)
class TraceViolation:
    index: int  # item index, or len(items) when the final configuration misses the target
    reason: str


def stage_trace_violation(trace: StageTrace, inst: BsrInstance) -> TraceViolation | None:
    """Replay ``trace`` through the one-step semantics and report the first bad item."""
    prog = inst.program
    cur = trace.initial
    if cur != prog.initial_config():
        return TraceViolation(0, "trace does not start in the initial configuration")
    writer = None
    opened = 0
    for i, x in enumerate(trace.items):
        if isinstance(x, StageOpen):
            opened += 1
            if opened > inst.stages:
                return TraceViolation(i, f"more than {inst.stages} stages")
            if not 0 <= x.writer < len(prog.threads):
                return TraceViolation(i, "stage writer is not a thread")
            writer = x.writer
            continue
        if (x.config, x.thread, x.op) not in successors(prog, cur):
            return TraceViolation(i, "step is not enabled")
        if x.op.kind is OpKind.WRITE and x.thread != writer:
            return TraceViolation(i, "write by a thread other than the stage writer")
        cur = x.config
    if not inst.is_target(cur):
        return TraceViolation(len(trace.items), "final configuration is not a target")
    return None


def check_stage_trace(trace: StageTrace, inst: BsrInstance) -> bool:
    return stage_trace_violation(trace, inst) is None


class _Codec:
    """Packs ``(pc, writer, stages, memory)`` into one int."""

    def __init__(self, inst: BsrInstance):
        self.sizes = [th.size for th in inst.program.threads]
        self.t = len(self.sizes)
        self.D = len(inst.domain)
        self.s = inst.stages

    def encode(self, pc: tuple[int, ...], writer: int, stages: int, mem: int) -> int:
        x = 0
        for q, n in zip(pc, self.sizes):
            x = x * n + q
        x = x * (self.t + 1) + writer + 1
        x = x * (self.s + 1) + stages
        return x * self.D + mem

    def decode(self, x: int) -> tuple[tuple[int, ...], int, int, int]:
        x, mem = divmod(x, self.D)
        x, stages = divmod(x, self.s + 1)
        x, w = divmod(x, self.t + 1)
        pc = []
        for n in reversed(self.sizes):
            x, q = divmod(x, n)
            pc.append(q)
        return tuple(reversed(pc)), w - 1, stages, mem


def product_moves(inst: BsrInstance, pc, writer, stages, mem) -> Iterator[tuple[int, MemoryOp, tuple, int, int, int]]:
    """Product successors as ``(thread, op, pc', writer', stages', memory')``."""
    for k, th in enumerate(inst.program.threads):
        for op, d in th.out[pc[k]]:
            pc2 = pc[:k] + (d,) + pc[k + 1 :]
            if op.kind is OpKind.EPS:
                yield k, op, pc2, writer, stages, mem
            elif op.kind is OpKind.READ:
                if op.symbol == mem:
                    yield k, op, pc2, writer, stages, mem
            elif writer == k:
                yield k, op, pc2, writer, stages, op.symbol
            elif stages < inst.stages:
                yield k, op, pc2, k, stages + 1, op.symbol


def product_bound(inst: BsrInstance) -> int:
    p = inst.params()
    return p["P"] ** p["t"] * (p["t"] + 1) * (p["s"] + 1) * p["D"]


def _target(inst: BsrInstance, pc, mem) -> bool:
    return inst.is_target(Configuration(pc, mem))


def solve_bsr(
    inst: BsrInstance,
    max_states: int = 5_000_000,
    certificate: bool = True,
    method: str = "product",
) -> Verdict:
    """Decide whether a target is reachable within ``inst.stages`` stages."""
    if method == "product":
        return _solve_product(inst, max_states, certificate)
    if method == "subset":
        return _solve_subset(inst, max_states, certificate)
    raise ValueError(f"unknown method {method!r}")


def _solve_product(inst: BsrInstance, max_states: int, certificate: bool) -> Verdict:
    t0 = time.perf_counter()
    codec = _Codec(inst)
    c0 = inst.program.initial_config()
    start = codec.encode(c0.pc, NO_WRITER, 0, c0.memory)
    parent: dict[int, tuple[int, int, MemoryOp] | None] = {start: None}
    queue = deque([start])
    hit = None
    if _target(inst, c0.pc, c0.memory):
        hit = start
    while queue and hit is None:
        x = queue.popleft()
        pc, writer, stages, mem = codec.decode(x)
        for k, op, pc2, w2, s2, m2 in product_moves(inst, pc, writer, stages, mem):
            y = codec.encode(pc2, w2, s2, m2)
            if y in parent:
                continue
            parent[y] = (x, k, op) if certificate else None
            if len(parent) > max_states:
                raise BudgetExceeded("product state", max_states)
            if _target(inst, pc2, m2):
                hit = y
                break
            queue.append(y)
    explored = len(parent)
    assert explored <= product_bound(inst)
    cert = None
    if hit is not None and certificate:
        cert = _trace(codec, parent, hit, c0)
    return Verdict(
        hit is not None,
        cert,
        nodes=explored,
        seconds=time.perf_counter() - t0,
        extra={"method": "product"},
    )


def _trace(codec: _Codec, parent: dict, hit: int, c0: Configuration) -> StageTrace:
    chain = []
    y = hit
    while parent[y] is not None:
        x, k, op = parent[y]
        chain.append((x, k, op, y))
        y = x
    chain.reverse()
    trace = StageTrace(c0)
    for x, k, op, y in chain:
        _, _, s1, _ = codec.decode(x)
        pc, _, s2, mem = codec.decode(y)
        if s2 > s1:
            trace.items.append(StageOpen(k))
        trace.items.append(TraceStep(k, op, Configuration(pc, mem)))
    return trace


def reach_unrestricted(inst: BsrInstance, max_states: int = 5_000_000) -> bool:
    """Plain reachability of a target configuration, ignoring stages."""
    prog = inst.program
    c0 = prog.initial_config()
    seen = {c0}
    queue = deque([c0])
    while queue:
        c = queue.popleft()
        if inst.is_target(c):
            return True
        for c2, _, _ in successors(prog, c):
            if c2 not in seen:
                seen.add(c2)
                if len(seen) > max_states:
                    raise BudgetExceeded("configuration", max_states)
                queue.append(c2)
    return False


# ---------------------------------------------------------------------------
# Subset method


class _Reader:
    """Closure of one thread's state sets under eps and reads of a fixed value."""

    def __init__(self, th):
        n = th.size
        self.eps = [0] * n
        self.reads: list[dict[int, int]] = [dict() for _ in range(n)]
        for s, op, d in th.transitions:
            if op.kind is OpKind.EPS:
                self.eps[s] |= 1 << d
            elif op.kind is OpKind.READ:
                self.reads[s][op.symbol] = self.reads[s].get(op.symbol, 0) | 1 << d
        self.cache: dict[tuple[int, int], int] = {}

    def close(self, S: int, mem: int) -> int:
        key = (S, mem)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        out = S
        todo = S
        while todo:
            low = todo & -todo
            todo ^= low
            p = low.bit_length() - 1
            new = (self.eps[p] | self.reads[p].get(mem, 0)) & ~out
            out |= new
            todo |= new
        self.cache[key] = out
        return out


def _bits(m: int) -> Iterator[int]:
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


def _solve_subset(inst: BsrInstance, max_states: int, certificate: bool) -> Verdict:
    t0 = time.perf_counter()
    threads = inst.program.threads
    t = len(threads)
    readers = [_Reader(th) for th in threads]
    tmask = [None if tg is None else sum(1 << q for q in tg) for tg in inst.targets]
    mem_ok = inst.memory

    def is_goal(writer: int, wpc: int, mem: int, sets: tuple[int, ...]) -> bool:
        if mem_ok is not None and mem not in mem_ok:
            return False
        for k in range(t):
            if tmask[k] is None:
                continue
            if k == writer:
                if not tmask[k] >> wpc & 1:
                    return False
            elif not sets[k] & tmask[k]:
                return False
        return True

    c0 = inst.program.initial_config()
    sets0 = tuple(readers[k].close(1 << threads[k].initial, c0.memory) for k in range(t))
    # (stages, writer, writer pc, memory, reader sets); the writer's own entry is 0.
    start = (0, NO_WRITER, -1, c0.memory, sets0)
    parent: dict[tuple, tuple | None] = {start: None}
    queue = deque([start])
    hit = start if is_goal(NO_WRITER, -1, c0.memory, sets0) else None

    def push(y: tuple, how: tuple) -> bool:
        if y in parent:
            return False
        parent[y] = how
        if len(parent) > max_states:
            raise BudgetExceeded("subset product state", max_states)
        queue.append(y)
        return is_goal(y[1], y[2], y[3], y[4])

    while queue and hit is None:
        x = queue.popleft()
        stages, writer, wpc, mem, sets = x
        if writer != NO_WRITER:
            for op, d in threads[writer].out[wpc]:
                if op.kind is OpKind.EPS or (op.kind is OpKind.READ and op.symbol == mem):
                    y = (stages, writer, d, mem, sets)
                elif op.kind is OpKind.WRITE:
                    a = op.symbol
                    y = (stages, writer, d, a, tuple(
                        0 if k == writer else readers[k].close(sets[k], a) for k in range(t)
                    ))
                else:
                    continue
                if push(y, (x, "step", writer, wpc, op, d)):
                    hit = y
                    break
            if hit is not None:
                break
        if stages >= inst.stages:
            continue
        for k in range(t):
            if k == writer:
                continue
            for p in _bits(sets[k]):
                for op, d in threads[k].out[p]:
                    if op.kind is not OpKind.WRITE:
                        continue
                    a = op.symbol
                    new_sets = []
                    for j in range(t):
                        if j == k:
                            new_sets.append(0)
                        elif j == writer:
                            new_sets.append(readers[j].close(readers[j].close(1 << wpc, mem), a))
                        else:
                            new_sets.append(readers[j].close(sets[j], a))
                    y = (stages + 1, k, d, a, tuple(new_sets))
                    if push(y, (x, "open", k, p, op, d)):
                        hit = y
                        break
                if hit is not None:
                    break
            if hit is not None:
                break
    cert = None
    if hit is not None and certificate:
        cert = _subset_trace(inst, parent, hit, readers, tmask)
    return Verdict(
        hit is not None,
        cert,
        nodes=len(parent),
        seconds=time.perf_counter() - t0,
        extra={"method": "subset"},
    )


def _reader_path(th, mems: list[int], start: tuple[int, int], slot_end: int, goal) -> list[tuple[int, MemoryOp, int]]:
    """Moves ``(slot, op, dst)`` of a read-only thread from ``start`` to a state
    accepted by ``goal`` in slot ``slot_end``; memory is ``mems[slot]`` in each slot."""
    begin = start
    prev: dict[tuple[int, int], tuple | None] = {begin: None}
    queue = deque([begin])
    end = None
    while queue:
        slot, p = queue.popleft()
        if slot == slot_end and goal(p):
            end = (slot, p)
            break
        nxt = []
        if slot < slot_end:
            nxt.append(((slot + 1, p), None))
        for op, d in th.out[p]:
            if op.kind is OpKind.EPS or (op.kind is OpKind.READ and op.symbol == mems[slot]):
                nxt.append(((slot, d), op))
        for y, op in nxt:
            if y not in prev:
                prev[y] = ((slot, p), op)
                queue.append(y)
    assert end is not None, "subset search promised a concrete run"
    moves = []
    y = end
    while prev[y] is not None:
        x, op = prev[y]
        if op is not None:
            moves.append((y[0], op, y[1]))
        y = x
    moves.reverse()
    return moves


def _subset_trace(inst: BsrInstance, parent: dict, hit: tuple, readers, tmask) -> StageTrace:
    threads = inst.program.threads
    t = len(threads)
    events = []
    y = hit
    while parent[y] is not None:
        x, *how = parent[y]
        events.append(tuple(how))
        y = x
    events.reverse()

    c0 = inst.program.initial_config()
    mems = [c0.memory]
    cursor: list[tuple[int, int] | None] = [(0, threads[k].initial) for k in range(t)]
    moves: list[list[tuple[int, MemoryOp, int]]] = [[] for _ in range(t)]
    writes: list[tuple[int, bool]] = []  # per slot boundary: (thread, opens a stage)
    writer = NO_WRITER
    for ev in events:
        slot = len(mems) - 1
        if ev[0] == "step":
            _, k, p, op, d = ev
            moves[k].append((slot, op, d))
            if op.kind is OpKind.WRITE:
                writes.append((k, False))
                mems.append(op.symbol)
        else:
            _, k, p, op, d = ev
            moves[k] += _reader_path(threads[k], mems, cursor[k], slot, lambda q, p=p: q == p)
            cursor[k] = None
            if writer != NO_WRITER:
                cursor[writer] = (slot, _last_state(moves[writer], cursor[writer], threads[writer]))
            moves[k].append((slot, op, d))
            writes.append((k, True))
            mems.append(op.symbol)
            writer = k
    final_slot = len(mems) - 1
    for k in range(t):
        if cursor[k] is None:
            continue
        goal = (lambda q: True) if tmask[k] is None else (lambda q, m=tmask[k]: bool(m >> q & 1))
        moves[k] += _reader_path(threads[k], mems, cursor[k], final_slot, goal)

    trace = StageTrace(c0)
    pc = list(c0.pc)
    mem = c0.memory
    idx = [0] * t
    for slot in range(final_slot + 1):
        for k in range(t):
            while idx[k] < len(moves[k]) and moves[k][idx[k]][0] == slot and moves[k][idx[k]][1].kind is not OpKind.WRITE:
                _, op, d = moves[k][idx[k]]
                pc[k] = d
                trace.items.append(TraceStep(k, op, Configuration(tuple(pc), mem)))
                idx[k] += 1
        if slot < final_slot:
            k, opens = writes[slot]
            _, op, d = moves[k][idx[k]]
            assert op.kind is OpKind.WRITE
            if opens:
                trace.items.append(StageOpen(k))
            pc[k] = d
            mem = op.symbol
            trace.items.append(TraceStep(k, op, Configuration(tuple(pc), mem)))
            idx[k] += 1
    return trace


def _last_state(moves, cursor, th) -> int:
    return moves[-1][2] if moves else (cursor[1] if cursor else th.initial)
