"""Witness candidates for leader/contributor reachability.

A witness compresses a whole computation into a short word over leader states,
leader-written symbols, ``_`` (an eps or read step of the leader) and barred
symbols ``~a`` marking the first time any contributor writes ``a``.  A word has
the shape ``((q x)^{<=L} ~c)^{<=D} q``: blocks of at most L (state, letter)
pairs with no repeated state, each closed by a first write, then a final state.

Validity has three parts:

1. first writes are pairwise distinct;
2. the word spells a leader run from the initial state, and from the final
   state an unsafe state is reachable with writes and reads of first-written
   symbols;
3. before every ``~c`` some contributor can reach a ``!c`` transition while its
   reads are served, in order, by positions of the prefix.

Part 3 is a reachability question in a product of the contributor with the
prefix positions.  A read ``?b`` can be served at a position holding

* a leader state ``q`` when ``b`` is written on a leader cycle through ``q``
  that only reads already first-written symbols, or ``b`` is first-written;
* any position when ``b`` was first-written at or before it (contributors are
  unbounded, so such a symbol can be re-supplied on demand);
* a leader write of ``b``.  The leader writes it only once, so the reads served
  by it must form one contiguous block with no write in between.  Positions of
  this kind therefore run in three phases: reads of first-written symbols and
  writes, then reads of ``b``, then reads of first-written symbols and writes.

The solvers run on a prepared instance (see :func:`prepare_for_witness`): the
leader gets write shortcuts so it never needs to read its own writes, and both
threads get their initial ``?a0`` prefix as free eps-moves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from .model import LcrInstance, OpKind, PreparedLcr, Thread, prepare_for_witness
from .verdict import BudgetExceeded, Verdict

STATE, SYMBOL, BOTTOM, FIRST = "q", "a", "_", "~"


class Letter(NamedTuple):
    kind: str
    value: int | None = None


BOT = Letter(BOTTOM)

Candidate = tuple[Letter, ...]


class ShapeError(ValueError):
    """A word is not a witness candidate at all."""


def as_prepared(inst: LcrInstance | PreparedLcr) -> PreparedLcr:
    return inst if isinstance(inst, PreparedLcr) else prepare_for_witness(inst)


# ---------------------------------------------------------------------------
# Tokens


def to_tokens(w: Sequence[Letter], prep: PreparedLcr) -> list[str]:
    out = []
    for kind, v in w:
        if kind == STATE:
            out.append(prep.leader.states[v])
        elif kind == SYMBOL:
            out.append(prep.domain[v])
        elif kind == BOTTOM:
            out.append("_")
        else:
            out.append("~" + prep.domain[v])
    return out


def from_tokens(tokens: Iterable[str], prep: PreparedLcr) -> Candidate:
    """Parse tokens; a name that is both a state and a symbol reads as the state
    at even positions of a block and as the symbol otherwise."""
    symbols = {s: i for i, s in enumerate(prep.domain)}
    states = {s: i for i, s in enumerate(prep.leader.states)}
    out: list[Letter] = []
    expect_state = True
    for tok in tokens:
        if tok.startswith("~") and tok[1:] in symbols:
            out.append(Letter(FIRST, symbols[tok[1:]]))
            expect_state = True
        elif tok == "_":
            out.append(BOT)
            expect_state = True
        elif tok in states and (expect_state or tok not in symbols):
            out.append(Letter(STATE, states[tok]))
            expect_state = False
        elif tok in symbols:
            out.append(Letter(SYMBOL, symbols[tok]))
            expect_state = True
        else:
            raise ShapeError(f"unknown witness token {tok!r}")
    return tuple(out)


def first_write_sets(w: Sequence[Letter]) -> list[frozenset[int]]:
    """Cumulative first-write sets after each position (index 0 = before the word)."""
    sets = [frozenset()]
    cur: frozenset[int] = frozenset()
    for kind, v in w:
        if kind == FIRST:
            cur = cur | {v}
        sets.append(cur)
    return sets


def check_shape(w: Sequence[Letter], prep: PreparedLcr) -> None:
    """Raise :class:`ShapeError` unless ``w`` matches ``((q x)^{<=L} ~c)^{<=D} q``."""
    L, D = prep.leader.size, len(prep.domain)
    if not w or w[-1].kind != STATE:
        raise ShapeError("a candidate ends with a leader state")
    bars = 0
    i = 0
    n = len(w) - 1
    while i < n:
        block: set[int] = set()
        while i < n and w[i].kind != FIRST:
            if i + 1 >= n + 1 or w[i].kind != STATE or w[i + 1].kind not in (SYMBOL, BOTTOM):
                raise ShapeError(f"expected a (state, symbol-or-_) pair at position {i}")
            if w[i].value in block:
                raise ShapeError(f"state repeats within a block at position {i}")
            block.add(w[i].value)
            i += 2
        if len(block) > L:
            raise ShapeError("block longer than the leader size")
        if i >= n or w[i].kind != FIRST:
            raise ShapeError("every block is closed by a first write")
        bars += 1
        i += 1
    if bars > D:
        raise ShapeError("more first writes than domain symbols")
    for kind, v in w:
        limit = L if kind == STATE else D
        if kind != BOTTOM and not 0 <= v < limit:
            raise ShapeError(f"letter {kind}{v} out of range")


# ---------------------------------------------------------------------------
# Leader helpers


def loop_letters(leader: Thread, q: int, S: Iterable[int]) -> frozenset[int]:
    """Symbols written on some cycle through ``q`` that reads only symbols in ``S``."""
    allowed = set(S)

    def ok(op) -> bool:
        return op.kind is not OpKind.READ or op.symbol in allowed

    fwd = {q}
    stack = [q]
    while stack:
        p = stack.pop()
        for op, d in leader.out[p]:
            if ok(op) and d not in fwd:
                fwd.add(d)
                stack.append(d)
    back = {q}
    stack = [q]
    pred: dict[int, list[int]] = {}
    for s, op, d in leader.transitions:
        if ok(op):
            pred.setdefault(d, []).append(s)
    while stack:
        p = stack.pop()
        for s in pred.get(p, ()):
            if s not in back:
                back.add(s)
                stack.append(s)
    return frozenset(
        op.symbol
        for s, op, d in leader.transitions
        if op.kind is OpKind.WRITE and s in fwd and d in back
    )


def can_finish(leader: Thread, unsafe: Iterable[int], S: Iterable[int]) -> frozenset[int]:
    """Leader states from which an unsafe state is reachable reading only ``S``."""
    allowed = set(S)
    pred: dict[int, list[int]] = {}
    for s, op, d in leader.transitions:
        if op.kind is not OpKind.READ or op.symbol in allowed:
            pred.setdefault(d, []).append(s)
    seen = set(unsafe)
    stack = list(seen)
    while stack:
        p = stack.pop()
        for s in pred.get(p, ()):
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return frozenset(seen)


def _mask(xs: Iterable[int]) -> int:
    m = 0
    for x in xs:
        m |= 1 << x
    return m


def _bits(m: int) -> Iterator[int]:
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


class Support:
    """Contributor closure machinery over bitmask state sets."""

    def __init__(self, contributor: Thread, ndomain: int):
        self.init = contributor.initial
        n = contributor.size
        self.eps = [0] * n
        self.writes = [0] * n
        self.read_syms = [0] * n
        self.read_to: list[dict[int, int]] = [dict() for _ in range(n)]
        self.writers = [0] * ndomain
        for s, op, d in contributor.transitions:
            if op.kind is OpKind.EPS:
                self.eps[s] |= 1 << d
            elif op.kind is OpKind.WRITE:
                self.writes[s] |= 1 << d
                self.writers[op.symbol] |= 1 << s
            else:
                self.read_syms[s] |= 1 << op.symbol
                self.read_to[s][op.symbol] = self.read_to[s].get(op.symbol, 0) | (1 << d)

    def close(self, R: int, reads: int, writes: bool) -> int:
        """Saturate ``R`` under eps, reads of symbols in ``reads`` and optionally writes."""
        todo = R
        while todo:
            low = todo & -todo
            todo ^= low
            p = low.bit_length() - 1
            nxt = self.eps[p]
            if writes:
                nxt |= self.writes[p]
            m = reads & self.read_syms[p]
            if m:
                rt = self.read_to[p]
                for a in _bits(m):
                    nxt |= rt[a]
            new = nxt & ~R
            if new:
                R |= new
                todo |= new
        return R

    def start(self) -> int:
        return self.close(1 << self.init, 0, True)

    def after_write(self, R: int, a: int, seen: int) -> int:
        """Pass a leader write of ``a`` given first-written symbols ``seen``."""
        if seen >> a & 1:
            return self.close(R, seen, True)
        R = self.close(R, seen, True)
        R = self.close(R, 1 << a, False)
        return self.close(R, seen, True)


class _Leader:
    """Memoized leader facts for one prepared instance."""

    def __init__(self, prep: PreparedLcr):
        self.prep = prep
        self.leader = prep.leader
        self._loops: dict[tuple[int, int], int] = {}
        self._finish: dict[int, frozenset[int]] = {}

    def loop_mask(self, q: int, seen: int) -> int:
        key = (q, seen)
        m = self._loops.get(key)
        if m is None:
            m = _mask(loop_letters(self.leader, q, _bits(seen)))
            self._loops[key] = m
        return m

    def finishes(self, q: int, seen: int) -> bool:
        f = self._finish.get(seen)
        if f is None:
            f = can_finish(self.leader, self.prep.unsafe, _bits(seen))
            self._finish[seen] = f
        return q in f


# ---------------------------------------------------------------------------
# Validity


def validity_failure(w: Sequence[Letter], inst: LcrInstance | PreparedLcr) -> int | None:
    """The number of the first violated requirement, or ``None`` if ``w`` is valid.

    Raises :class:`ShapeError` if ``w`` is not a candidate.
    """
    prep = as_prepared(inst)
    w = tuple(Letter(*x) for x in w)
    check_shape(w, prep)
    bars = [v for k, v in w if k == FIRST]
    if len(set(bars)) != len(bars):
        return 1
    if not _leader_run_ok(w, prep):
        return 2
    if not _contributors_ok(w, prep):
        return 3
    return None


def check_validity(w: Sequence[Letter], inst: LcrInstance | PreparedLcr) -> bool:
    return validity_failure(w, inst) is None


def first_writes_supported(w: Sequence[Letter], inst: LcrInstance | PreparedLcr) -> bool:
    """Part 3 alone.  Works on any prefix, shape-valid or not."""
    return _contributors_ok(tuple(Letter(*x) for x in w), as_prepared(inst))


def _leader_run_ok(w: Candidate, prep: PreparedLcr) -> bool:
    leader = prep.leader
    seen_at = first_write_sets(w)
    proj = [(i, x) for i, x in enumerate(w) if x.kind != FIRST]
    if proj[0][1] != Letter(STATE, leader.initial):
        return False
    for k in range(0, len(proj) - 1, 2):
        (_, q), (pos, x), (_, q2) = proj[k], proj[k + 1], proj[k + 2]
        seen = seen_at[pos + 1]
        ok = False
        for op, d in leader.out[q.value]:
            if d != q2.value:
                continue
            if x.kind == SYMBOL:
                ok = op.kind is OpKind.WRITE and op.symbol == x.value
            else:
                ok = op.kind is OpKind.EPS or (op.kind is OpKind.READ and op.symbol in seen)
            if ok:
                break
        if not ok:
            return False
    final = proj[-1][1].value
    return final in can_finish(leader, prep.unsafe, seen_at[-1])


def _contributors_ok(w: Candidate, prep: PreparedLcr) -> bool:
    """Decide part 3 with one product search per first write."""
    contributor = prep.contributor
    seen_at = first_write_sets(w)
    leader = _Leader(prep)
    for j, (kind, c) in enumerate(w):
        if kind != FIRST:
            continue
        # Product nodes (p, i, phase): i = 0 is the start, i >= 1 is w[i-1].
        start = (contributor.initial, 0, 0)
        seen_nodes = {start}
        stack = [start]
        found = False
        while stack and not found:
            p, i, ph = stack.pop()
            if any(op.kind is OpKind.WRITE and op.symbol == c for op, _ in contributor.out[p]):
                found = True
                break
            succ = []
            fw = seen_at[i]
            letter = w[i - 1] if i > 0 else None
            phases = 1
            block_symbol = None
            if letter is not None and letter.kind == SYMBOL and letter.value not in fw:
                phases = 3
                block_symbol = letter.value
            if letter is None:
                readable: set[int] = set()
            elif letter.kind == STATE:
                readable = set(fw) | set(_bits(leader.loop_mask(letter.value, _mask(fw))))
            elif letter.kind == SYMBOL and block_symbol is None:
                readable = set(fw)
            else:
                readable = set(fw)
            for op, d in contributor.out[p]:
                if op.kind is OpKind.EPS:
                    succ.append((d, i, ph))
                elif op.kind is OpKind.WRITE:
                    if ph != 1:
                        succ.append((d, i, ph))
                elif ph == 1:
                    if op.symbol == block_symbol:
                        succ.append((d, i, ph))
                elif op.symbol in readable:
                    succ.append((d, i, ph))
            if ph + 1 < phases:
                succ.append((p, i, ph + 1))
            elif i + 1 < j + 1:
                succ.append((p, i + 1, 0))
            for node in succ:
                if node not in seen_nodes:
                    seen_nodes.add(node)
                    stack.append(node)
        if not found:
            return False
    return True


# ---------------------------------------------------------------------------
# Enumeration


@dataclass
class _Search:
    prep: PreparedLcr
    max_nodes: int
    memo: bool = True
    nodes: int = 0

    def __post_init__(self) -> None:
        self.leader = _Leader(self.prep)
        self.support = Support(self.prep.contributor, len(self.prep.domain))
        self.failed: set[tuple[int, int, int, int]] = set()
        D = len(self.prep.domain)
        # Pair moves per leader state: (target, letter) in enumeration order.
        self.pairs: list[list[tuple[int, Letter, int | None]]] = []
        for q in range(self.prep.leader.size):
            moves = set()
            for op, d in self.prep.leader.out[q]:
                if op.kind is OpKind.WRITE:
                    moves.add((d, op.symbol, None))
                elif op.kind is OpKind.EPS:
                    moves.add((d, D, None))
                else:
                    moves.add((d, D, op.symbol))
            ordered = sorted(moves, key=lambda m: (m[0], m[1], -1 if m[2] is None else m[2]))
            self.pairs.append(
                [(d, Letter(SYMBOL, x) if x < D else BOT, need) for d, x, need in ordered]
            )

    def tick(self) -> None:
        self.nodes += 1
        if self.nodes > self.max_nodes:
            raise BudgetExceeded("witness search node", self.max_nodes)

    def run(self, q: int, block: int, seen: int, R: int, word: list[Letter]) -> Iterator[Candidate]:
        """Yield valid candidates extending ``word`` with the leader in state ``q``."""
        self.tick()
        key = (q, block, seen, R)
        if self.memo and key in self.failed:
            return
        produced = False
        if block == 0 and self.leader.finishes(q, seen):
            produced = True
            yield tuple(word) + (Letter(STATE, q),)
        if not block >> q & 1:
            sup = self.support
            R_q = sup.close(R, seen | self.leader.loop_mask(q, seen), True)
            prev = None
            for d, x, need in self.pairs[q]:
                if need is not None and not seen >> need & 1:
                    continue
                if (d, x) == prev:
                    continue
                prev = (d, x)
                R2 = sup.after_write(R_q, x.value, seen) if x.kind == SYMBOL else R_q
                word.extend((Letter(STATE, q), x))
                for cand in self.run(d, block | 1 << q, seen, R2, word):
                    produced = True
                    yield cand
                del word[-2:]
        for c in range(len(self.prep.domain)):
            if seen >> c & 1 or not R & self.support.writers[c]:
                continue
            seen2 = seen | 1 << c
            R2 = self.support.close(R, seen2, True)
            word.append(Letter(FIRST, c))
            for cand in self.run(q, 0, seen2, R2, word):
                produced = True
                yield cand
            word.pop()
        if not produced:
            self.failed.add(key)


def enumerate_valid(inst: LcrInstance | PreparedLcr, max_nodes: int = 10**6) -> Iterator[Candidate]:
    """All valid candidates in enumeration order, pruning only invalid prefixes."""
    prep = as_prepared(inst)
    s = _Search(prep, max_nodes, memo=False)
    yield from s.run(prep.leader.initial, 0, 0, s.support.start(), [])


def enumerate_candidates(inst: LcrInstance | PreparedLcr) -> Iterator[Candidate]:
    """Every shape-valid candidate, valid or not.  Exponential; for tiny instances only."""
    prep = as_prepared(inst)
    L, D = prep.leader.size, len(prep.domain)
    xs = [Letter(SYMBOL, a) for a in range(D)] + [BOT]

    def blocks(used: frozenset[int]) -> Iterator[tuple[Letter, ...]]:
        yield ()
        for q in range(L):
            if q in used:
                continue
            for x in xs:
                for rest in blocks(used | {q}):
                    yield (Letter(STATE, q), x) + rest

    block_list = list(blocks(frozenset()))

    def words(nbars: int) -> Iterator[tuple[Letter, ...]]:
        yield ()
        if nbars == D:
            return
        for b in block_list:
            for c in range(D):
                for rest in words(nbars + 1):
                    yield b + (Letter(FIRST, c),) + rest

    for body in words(0):
        for q in range(L):
            yield body + (Letter(STATE, q),)


def solve_lcr_witness(inst: LcrInstance, max_nodes: int = 2_000_000) -> Verdict:
    """Decide reachability by searching for a valid witness candidate."""
    t0 = time.perf_counter()
    prep = prepare_for_witness(inst)
    s = _Search(prep, max_nodes)
    cert = next(s.run(prep.leader.initial, 0, 0, s.support.start(), []), None)
    return Verdict(
        cert is not None,
        None if cert is None else cert,
        nodes=s.nodes,
        seconds=time.perf_counter() - t0,
        extra={"prepared": prep, "tokens": None if cert is None else to_tokens(cert, prep)},
    )
