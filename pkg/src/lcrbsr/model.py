"""Program model: threads as NFAs over shared-memory operations.

A program has a finite domain of memory symbols, an initial symbol and a list
of threads.  Each thread is a finite automaton whose transitions are labelled
with a write ``!a``, a read ``?a`` or ``eps``.  Symbols and states are interned
to dense indices; names are kept for serialization and reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence, Union


class OpKind(IntEnum):
    WRITE = 0
    READ = 1
    EPS = 2


class MemoryOp(NamedTuple):
    kind: OpKind
    symbol: int | None = None

    @classmethod
    def write(cls, a: int) -> MemoryOp:
        return cls(OpKind.WRITE, a)

    @classmethod
    def read(cls, a: int) -> MemoryOp:
        return cls(OpKind.READ, a)

    @classmethod
    def eps(cls) -> MemoryOp:
        return cls(OpKind.EPS, None)

    def render(self, domain: Sequence[str]) -> str:
        if self.kind is OpKind.EPS:
            return "eps"
        prefix = "!" if self.kind is OpKind.WRITE else "?"
        return prefix + domain[self.symbol]


EPS = MemoryOp.eps()


class Transition(NamedTuple):
    src: int
    op: MemoryOp
    dst: int


class ModelError(ValueError):
    """An instance violates a structural invariant."""


@dataclass(frozen=True)
class Thread:
    """A thread automaton.  Transitions are deduplicated and sorted on construction."""

    name: str
    states: tuple[str, ...]
    initial: int
    transitions: tuple[Transition, ...] = ()

    def __post_init__(self) -> None:
        states = tuple(self.states)
        if not states:
            raise ModelError(f"thread {self.name!r} has no states")
        if len(set(states)) != len(states):
            raise ModelError(f"thread {self.name!r} has duplicate state names")
        n = len(states)
        if not 0 <= self.initial < n:
            raise ModelError(f"thread {self.name!r}: initial state out of range")
        trans = []
        for t in self.transitions:
            src, op, dst = t
            op = MemoryOp(OpKind(op[0]), op[1])
            if not (0 <= src < n and 0 <= dst < n):
                raise ModelError(f"thread {self.name!r}: transition endpoint out of range")
            if (op.kind is OpKind.EPS) != (op.symbol is None):
                raise ModelError(f"thread {self.name!r}: eps carries no symbol, reads/writes need one")
            trans.append(Transition(src, op, dst))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transitions", tuple(sorted(set(trans))))

    @property
    def size(self) -> int:
        return len(self.states)

    @cached_property
    def out(self) -> tuple[tuple[tuple[MemoryOp, int], ...], ...]:
        """Outgoing ``(op, dst)`` pairs per source state, in storage order."""
        adj: list[list[tuple[MemoryOp, int]]] = [[] for _ in self.states]
        for src, op, dst in self.transitions:
            adj[src].append((op, dst))
        return tuple(tuple(a) for a in adj)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    def index(self, state: str) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise SemanticError(f"unknown state {state!r} in thread {self.name!r}", state) from None

    def max_symbol(self) -> int:
        return max((t.op.symbol for t in self.transitions if t.op.symbol is not None), default=-1)

    def with_transitions(self, extra: Iterable[Transition]) -> Thread:
        return Thread(self.name, self.states, self.initial, self.transitions + tuple(extra))


def _check_domain(domain: tuple[str, ...], init_symbol: int, threads: Iterable[Thread]) -> None:
    if not domain:
        raise ModelError("domain is empty")
    if len(set(domain)) != len(domain):
        raise ModelError("domain has duplicate symbol names")
    if not 0 <= init_symbol < len(domain):
        raise ModelError("initial symbol out of range")
    for th in threads:
        if th.max_symbol() >= len(domain):
            raise ModelError(f"thread {th.name!r} references a symbol outside the domain")


@dataclass(frozen=True)
class Program:
    domain: tuple[str, ...]
    threads: tuple[Thread, ...]
    init_symbol: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "domain", tuple(self.domain))
        object.__setattr__(self, "threads", tuple(self.threads))
        _check_domain(self.domain, self.init_symbol, self.threads)

    def initial_config(self) -> Configuration:
        return Configuration(tuple(t.initial for t in self.threads), self.init_symbol)


@dataclass(frozen=True)
class LcrInstance:
    """Leader, contributor templates and unsafe leader states."""

    domain: tuple[str, ...]
    leader: Thread
    contributors: tuple[Thread, ...]
    unsafe: frozenset[int]
    init_symbol: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "domain", tuple(self.domain))
        object.__setattr__(self, "contributors", tuple(self.contributors))
        object.__setattr__(self, "unsafe", frozenset(self.unsafe))
        if not self.contributors:
            raise ModelError("at least one contributor template is required")
        _check_domain(self.domain, self.init_symbol, (self.leader, *self.contributors))
        if any(not 0 <= q < self.leader.size for q in self.unsafe):
            raise ModelError("unsafe states must be leader states")

    @property
    def kind(self) -> str:
        return "lcr"

    def contributor(self) -> Thread:
        """The single contributor template, merging several if needed."""
        if len(self.contributors) == 1:
            return self.contributors[0]
        return merge_contributors(self.contributors)

    def program(self, copies: int) -> Program:
        """The program with the leader at index 0 and ``copies`` contributors."""
        c = self.contributor()
        return Program(self.domain, (self.leader,) + (c,) * copies, self.init_symbol)

    def params(self) -> dict[str, int]:
        return {"D": len(self.domain), "L": self.leader.size, "C": self.contributor().size}


@dataclass(frozen=True)
class BsrInstance:
    """Threads, per-thread target sets (``None`` = unconstrained) and a stage budget."""

    program: Program
    targets: tuple[frozenset[int] | None, ...]
    stages: int
    memory: frozenset[int] | None = None

    def __post_init__(self) -> None:
        targets = tuple(None if t is None else frozenset(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if self.memory is not None:
            object.__setattr__(self, "memory", frozenset(self.memory))
        if len(targets) != len(self.program.threads):
            raise ModelError("one target entry per thread is required")
        if not self.program.threads:
            raise ModelError("a BSR instance needs at least one thread")
        for th, tgt in zip(self.program.threads, targets):
            if tgt is not None and any(not 0 <= q < th.size for q in tgt):
                raise ModelError(f"target of thread {th.name!r} names a non-state")
        if self.memory is not None and any(not 0 <= a < len(self.program.domain) for a in self.memory):
            raise ModelError("target memory symbol out of range")
        if self.stages < 0:
            raise ModelError("stage budget must be non-negative")

    @property
    def kind(self) -> str:
        return "bsr"

    @property
    def domain(self) -> tuple[str, ...]:
        return self.program.domain

    def is_target(self, c: Configuration) -> bool:
        if self.memory is not None and c.memory not in self.memory:
            return False
        return all(t is None or q in t for q, t in zip(c.pc, self.targets))

    def params(self) -> dict[str, int]:
        return {
            "D": len(self.program.domain),
            "P": max(t.size for t in self.program.threads),
            "t": len(self.program.threads),
            "s": self.stages,
        }


Instance = Union[LcrInstance, BsrInstance]


class Configuration(NamedTuple):
    pc: tuple[int, ...]
    memory: int


def successors(program: Program, c: Configuration) -> set[tuple[Configuration, int, MemoryOp]]:
    """All one-step successors of ``c`` with the moving thread and its operation."""
    if len(c.pc) != len(program.threads):
        raise ModelError("configuration width does not match the program")
    result: set[tuple[Configuration, int, MemoryOp]] = set()
    for i, (th, q) in enumerate(zip(program.threads, c.pc)):
        for op, dst in th.out[q]:
            if op.kind is OpKind.READ and op.symbol != c.memory:
                continue
            mem = op.symbol if op.kind is OpKind.WRITE else c.memory
            pc = c.pc[:i] + (dst,) + c.pc[i + 1 :]
            result.add((Configuration(pc, mem), i, op))
    return result


# ---------------------------------------------------------------------------
# Normalization passes


def merge_contributors(templates: Sequence[Thread]) -> Thread:
    """One thread with a fresh initial state and an eps-edge into each template."""
    if not templates:
        raise ModelError("nothing to merge")
    states = ["init"]
    trans: list[Transition] = []
    for k, th in enumerate(templates):
        base = len(states)
        states.extend(f"{k}:{s}" for s in th.states)
        trans.append(Transition(0, EPS, base + th.initial))
        trans.extend(Transition(base + s, op, base + d) for s, op, d in th.transitions)
    name = "+".join(t.name for t in templates)
    return Thread(name, tuple(states), 0, tuple(trans))


def _closure(th: Thread, start: int, symbol: int) -> set[int]:
    """States reachable from ``start`` via eps and reads of ``symbol``."""
    seen = {start}
    stack = [start]
    while stack:
        q = stack.pop()
        for op, d in th.out[q]:
            if op.kind is OpKind.EPS or (op.kind is OpKind.READ and op.symbol == symbol):
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
    return seen


def write_shortcuts(th: Thread) -> Thread:
    """Add ``q -!a-> q''`` whenever ``q''`` follows ``q -!a-> q'`` by eps and ``?a`` steps.

    After this pass a thread never needs to read a value it has just written
    itself: the write jumps straight to where the self-served reads would lead.
    """
    extra = []
    for src, op, dst in th.transitions:
        if op.kind is OpKind.WRITE:
            for q2 in _closure(th, dst, op.symbol):
                if q2 != dst:
                    extra.append(Transition(src, op, q2))
    return th.with_transitions(extra) if extra else th


def normalize_leader(inst: LcrInstance) -> LcrInstance:
    """Leader with write shortcuts so that it never reads its own writes."""
    leader = write_shortcuts(inst.leader)
    if leader is inst.leader:
        return inst
    return LcrInstance(inst.domain, leader, inst.contributors, inst.unsafe, inst.init_symbol)


def absorb_initial_reads(th: Thread, init_symbol: int) -> Thread:
    """Make the initial eps/``?a0`` prefix of a thread available as plain eps-moves.

    Before the first write of any thread the memory holds the initial symbol, so
    a thread may take eps and ``?a0`` steps from its initial state for free.  The
    pass adds eps-edges from the initial state to that closure.  If the initial
    state has incoming edges, a fresh initial state is added so that later
    visits are not affected.
    """
    reach = _closure(th, th.initial, init_symbol) - {th.initial}
    if not reach or all(
        any(op.kind is OpKind.EPS and d == q for op, d in th.out[th.initial]) for q in reach
    ):
        return th
    has_incoming = any(t.dst == th.initial for t in th.transitions)
    if not has_incoming:
        extra = [Transition(th.initial, EPS, q) for q in sorted(reach)]
        return th.with_transitions(extra)
    fresh = th.size
    name = th.states[th.initial] + "^"
    while name in th.states:
        name += "^"
    extra = [Transition(fresh, EPS, q) for q in sorted(reach | {th.initial})]
    return Thread(th.name, th.states + (name,), fresh, th.transitions + tuple(extra))


@dataclass(frozen=True)
class PreparedLcr:
    """Leader and contributor as the witness-style solvers see them."""

    domain: tuple[str, ...]
    leader: Thread
    contributor: Thread
    unsafe: frozenset[int]
    init_symbol: int = 0
    source: LcrInstance | None = field(default=None, compare=False)


def prepare_for_witness(inst: LcrInstance) -> PreparedLcr:
    """Merge templates, absorb initial reads, then add leader write shortcuts."""
    contributor = absorb_initial_reads(inst.contributor(), inst.init_symbol)
    leader = write_shortcuts(absorb_initial_reads(inst.leader, inst.init_symbol))
    return PreparedLcr(inst.domain, leader, contributor, inst.unsafe, inst.init_symbol, inst)


# ---------------------------------------------------------------------------
# Serialization


class ParseError(ValueError):
    """Syntax error in an instance file."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class SemanticError(ValueError):
    """Well-formed input that names an unknown symbol or state."""

    def __init__(self, message: str, identifier: str | None = None):
        super().__init__(message)
        self.identifier = identifier


def _parse_op(text: str, symbols: dict[str, int]) -> MemoryOp:
    if text == "eps":
        return EPS
    if not isinstance(text, str) or len(text) < 2 or text[0] not in "!?":
        raise SemanticError(f"bad operation {text!r}", str(text))
    name = text[1:]
    if name not in symbols:
        raise SemanticError(f"unknown symbol {name!r}", name)
    return MemoryOp.write(symbols[name]) if text[0] == "!" else MemoryOp.read(symbols[name])


def _parse_thread(obj: dict, symbols: dict[str, int], default_name: str) -> Thread:
    if not isinstance(obj, dict) or "init" not in obj:
        raise SemanticError(f"thread {default_name!r} needs an 'init' state", default_name)
    name = str(obj.get("name", default_name))
    order: list[str] = []
    declared = obj.get("states")
    if declared is not None:
        order.extend(str(s) for s in declared)
    seen = set(order)

    def note(s: str) -> None:
        if declared is not None and s not in seen:
            raise SemanticError(f"unknown state {s!r} in thread {name!r}", s)
        if s not in seen:
            seen.add(s)
            order.append(s)

    init = str(obj["init"])
    note(init)
    raw = obj.get("trans", [])
    for t in raw:
        if not isinstance(t, (list, tuple)) or len(t) != 3:
            raise SemanticError(f"transition {t!r} in thread {name!r} is not a triple", str(t))
        note(str(t[0]))
        note(str(t[2]))
    idx = {s: i for i, s in enumerate(order)}
    trans = [Transition(idx[str(s)], _parse_op(op, symbols), idx[str(d)]) for s, op, d in raw]
    return Thread(name, tuple(order), idx[init], tuple(trans))


def _state_set(th: Thread, names: Iterable) -> frozenset[int]:
    return frozenset(th.index(str(s)) for s in names)


def instance_from_dict(obj: dict) -> Instance:
    if not isinstance(obj, dict):
        raise SemanticError("instance must be a JSON object")
    domain = obj.get("domain")
    if not isinstance(domain, list) or not domain:
        raise SemanticError("missing or empty 'domain'", "domain")
    domain_t = tuple(str(s) for s in domain)
    symbols = {s: i for i, s in enumerate(domain_t)}
    init_name = obj.get("init")
    if init_name is None:
        raise SemanticError("missing initial symbol 'init'", "init")
    if str(init_name) not in symbols:
        raise SemanticError(f"unknown symbol {init_name!r}", str(init_name))
    init_symbol = symbols[str(init_name)]
    kind = obj.get("kind", "bsr" if "threads" in obj else "lcr")
    try:
        if kind == "lcr":
            if "leader" not in obj:
                raise SemanticError("missing 'leader'", "leader")
            leader = _parse_thread(obj["leader"], symbols, "leader")
            contribs = obj.get("contributors") or []
            if not contribs:
                raise SemanticError("missing 'contributors'", "contributors")
            cs = tuple(_parse_thread(c, symbols, f"contributor{k}") for k, c in enumerate(contribs))
            unsafe = _state_set(leader, obj.get("unsafe", []))
            return LcrInstance(domain_t, leader, cs, unsafe, init_symbol)
        if kind == "bsr":
            raw_threads = obj.get("threads") or []
            threads = tuple(_parse_thread(t, symbols, f"P{k}") for k, t in enumerate(raw_threads))
            names = [t.name for t in threads]
            if len(set(names)) != len(names):
                raise SemanticError("thread names must be distinct")
            if "memory" in names:
                raise SemanticError("'memory' is reserved in targets and cannot name a thread", "memory")
            target = dict(obj.get("target", {}))
            memory = target.pop("memory", None)
            by_name = {t.name: k for k, t in enumerate(threads)}
            targets: list[frozenset[int] | None] = [None] * len(threads)
            for tname, states in target.items():
                if tname not in by_name:
                    raise SemanticError(f"unknown thread {tname!r} in target", tname)
                k = by_name[tname]
                targets[k] = _state_set(threads[k], states)
            mem = None
            if memory is not None:
                for m in memory:
                    if str(m) not in symbols:
                        raise SemanticError(f"unknown symbol {m!r}", str(m))
                mem = frozenset(symbols[str(m)] for m in memory)
            stages = int(obj.get("stages", 0))
            return BsrInstance(Program(domain_t, threads, init_symbol), tuple(targets), stages, mem)
    except ModelError as exc:
        raise SemanticError(str(exc)) from exc
    raise SemanticError(f"unknown instance kind {kind!r}", str(kind))


def parse_program(text: str) -> Instance:
    """Parse a JSON instance file into an :class:`LcrInstance` or :class:`BsrInstance`."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return instance_from_dict(obj)


def thread_to_dict(th: Thread, domain: Sequence[str]) -> dict:
    return {
        "name": th.name,
        "init": th.states[th.initial],
        "states": list(th.states),
        "trans": [[th.states[s], op.render(domain), th.states[d]] for s, op, d in th.transitions],
    }


def instance_to_dict(inst: Instance) -> dict:
    domain = inst.domain
    out: dict = {"domain": list(domain), "init": domain[_init_symbol(inst)], "kind": inst.kind}
    if isinstance(inst, LcrInstance):
        out["leader"] = thread_to_dict(inst.leader, domain)
        out["contributors"] = [thread_to_dict(c, domain) for c in inst.contributors]
        out["unsafe"] = [inst.leader.states[q] for q in sorted(inst.unsafe)]
    else:
        out["threads"] = [thread_to_dict(t, domain) for t in inst.program.threads]
        target: dict = {}
        for th, tgt in zip(inst.program.threads, inst.targets):
            if tgt is not None:
                target[th.name] = [th.states[q] for q in sorted(tgt)]
        if inst.memory is not None:
            target["memory"] = [domain[a] for a in sorted(inst.memory)]
        out["target"] = target
        out["stages"] = inst.stages
    return out


def _init_symbol(inst: Instance) -> int:
    return inst.init_symbol if isinstance(inst, LcrInstance) else inst.program.init_symbol


def serialize_program(inst: Instance, indent: int | None = None) -> str:
    return json.dumps(instance_to_dict(inst), indent=indent)
