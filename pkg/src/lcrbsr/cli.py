"""Command-line front end: verify, generate, run the brute-force oracle, benchmark.

Exit codes: 0 unreachable (safe), 1 reachable (unsafe), 2 usage or parse
error, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import generators as gen
from .bsr import solve_bsr
from .dp import explicit_graph_reach, solve_lcr_dp
from .model import BsrInstance, Instance, ParseError, SemanticError, parse_program, serialize_program
from .oracles import CnfFormula, GridGraph, SetCoverInstance, lcr_explicit_bfs
from .scc import solve_lcr_scc
from .verdict import BudgetExceeded, Verdict
from .witness import solve_lcr_witness

EXIT_SAFE, EXIT_UNSAFE, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3

LCR_ALGOS = ("witness", "scc", "dp", "explicit")
BSR_ALGOS = ("product", "subset")
DEFAULT_MAX_NODES = 2_000_000
EXPLICIT_MAX_C = 12


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    kind: str
    path: Path | None = None
    algo: str | None = None
    stages: int | None = None
    max_nodes: int = DEFAULT_MAX_NODES
    certificate: Path | None = None
    dump_table: Path | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("lcr", "bsr"):
            raise UsageError(f"unknown instance kind {self.kind!r}")
        allowed = LCR_ALGOS if self.kind == "lcr" else BSR_ALGOS
        if self.algo is None:
            self.algo = allowed[2] if self.kind == "lcr" else allowed[0]
        if self.algo not in allowed:
            raise UsageError(f"--algo {self.algo} is not valid for {self.kind} (choose from {', '.join(allowed)})")
        if self.kind == "lcr" and self.stages is not None:
            raise UsageError("--stages only applies to bsr instances")
        if self.dump_table is not None and self.algo != "dp":
            raise UsageError("--dump-table needs --algo dp")
        if self.max_nodes <= 0:
            raise UsageError("--max-nodes must be positive")


def load_instance(path: Path, kind: str) -> Instance:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    inst = parse_program(text)
    if inst.kind != kind:
        raise UsageError(f"{path} holds a {inst.kind} instance, not {kind}")
    return inst


def solve(inst: Instance, cfg: RunConfig) -> Verdict:
    if isinstance(inst, BsrInstance):
        if cfg.stages is not None:
            inst = BsrInstance(inst.program, inst.targets, cfg.stages, inst.memory)
        return solve_bsr(inst, max_states=cfg.max_nodes, method=cfg.algo)
    if cfg.algo == "witness":
        return solve_lcr_witness(inst, max_nodes=cfg.max_nodes)
    if cfg.algo == "scc":
        return solve_lcr_scc(inst, max_nodes=cfg.max_nodes)
    if cfg.algo == "dp":
        return solve_lcr_dp(inst, max_sets=cfg.max_nodes)
    p = inst.params()
    total = p["L"] * p["D"] << p["C"]
    if total > cfg.max_nodes:
        raise BudgetExceeded("explicit node", cfg.max_nodes)
    return explicit_graph_reach(inst, cap=EXPLICIT_MAX_C)


def certificate_json(inst: Instance, v: Verdict, algo: str) -> dict:
    out: dict = {"algorithm": algo, "verdict": v.label}
    if algo in ("witness", "scc"):
        out["tokens"] = v.extra["tokens"]
    elif algo == "dp":
        out["steps"] = v.certificate
    elif algo == "explicit":
        out["note"] = "the explicit search records no path; rerun with another algorithm for one"
    else:
        out["trace"] = v.certificate.to_json_lines(inst) if v.certificate is not None else None
    return out


def params_text(inst: Instance, stages: int | None = None) -> str:
    p = dict(inst.params())
    if stages is not None and "s" in p:
        p["s"] = stages
    return " ".join(f"{k}={v}" for k, v in p.items())


def report(inst: Instance, v: Verdict, cfg: RunConfig) -> str:
    if v.reachable:
        meaning = "UNSAFE: an unsafe/target state is reachable"
    else:
        meaning = "SAFE: no unsafe/target state is reachable"
    lines = [
        f"verdict: {v.label} ({meaning})",
        f"algorithm: {cfg.algo}",
        f"params: {params_text(inst, cfg.stages)}",
        f"nodes: {v.nodes}",
        f"seconds: {v.seconds:.4f}",
    ]
    if "tokens" in v.extra and v.extra["tokens"]:
        lines.append("certificate: " + " ".join(v.extra["tokens"]))
    return "\n".join(lines)


def run(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    inst = load_instance(cfg.path, cfg.kind)
    v = solve(inst, cfg)
    print(report(inst, v, cfg), file=out)
    if cfg.dump_table is not None:
        Path(cfg.dump_table).write_text(v.extra["table"].dump() + "\n")
    if cfg.certificate is not None and v.reachable:
        Path(cfg.certificate).write_text(json.dumps(certificate_json(inst, v, cfg.algo), indent=2) + "\n")
    return EXIT_UNSAFE if v.reachable else EXIT_SAFE


# Generator inputs.


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _json(path: str) -> dict:
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc


def _cnf(path: str) -> CnfFormula:
    try:
        return CnfFormula.from_dimacs(_read(path))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _grid(path: str) -> GridGraph:
    obj = _json(path)
    try:
        return GridGraph.from_pairs(int(obj["k"]), [(tuple(u), tuple(v)) for u, v in obj.get("edges", [])])
    except (KeyError, TypeError, ValueError) as exc:
        raise SemanticError(f"{path}: bad grid graph ({exc})") from exc


def _set_cover(path: str) -> SetCoverInstance:
    obj = _json(path)
    try:
        return SetCoverInstance(int(obj["n"]), tuple(frozenset(s) for s in obj["family"]), int(obj["r"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SemanticError(f"{path}: bad set cover instance ({exc})") from exc


def _one(inputs: Sequence[str]) -> str:
    if len(inputs) != 1:
        raise UsageError("this generator takes exactly one input file")
    return inputs[0]


def _clique_l(inputs: Sequence[str]) -> gen.GeneratorReport:
    obj = _json(_one(inputs))
    try:
        edges = [tuple(e) for e in obj["edges"]]
        return gen.gen_lcr_from_clique_L(int(obj["n"]), edges, int(obj["k"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SemanticError(f"bad graph ({exc})") from exc


GENERATORS: dict[str, Callable[[Sequence[str]], gen.GeneratorReport]] = {
    "kxk-lcr": lambda xs: gen.gen_lcr_from_kxk_clique(_grid(_one(xs))),
    "3sat-lcr": lambda xs: gen.gen_lcr_from_3sat(_cnf(_one(xs))),
    "setcover-lcr": lambda xs: gen.gen_lcr_from_set_cover(_set_cover(_one(xs))),
    "crosscomp-lcr-dl": lambda xs: gen.gen_lcr_crosscomp_dl([_cnf(x) for x in xs]),
    "crosscomp-lcr-c": lambda xs: gen.gen_lcr_crosscomp_c([_cnf(x) for x in xs]),
    "clique-lcr-l": _clique_l,
    "kxk-bsr": lambda xs: gen.gen_bsr_from_kxk_clique(_grid(_one(xs))),
    "crosscomp-bsr": lambda xs: gen.gen_bsr_crosscomp([_cnf(x) for x in xs]),
    "3sat-bsr-constd": lambda xs: gen.gen_bsr_constant_domain(_cnf(_one(xs))),
}


def run_gen(kind: str, inputs: Sequence[str], output: str | None, out=None) -> int:
    out = out or sys.stdout
    if kind not in GENERATORS:
        raise UsageError(f"unknown generator {kind!r}")
    if not inputs:
        raise UsageError("no input files given")
    try:
        rep = GENERATORS[kind](inputs)
    except ValueError as exc:
        if isinstance(exc, (ParseError, SemanticError)):
            raise
        raise SemanticError(str(exc)) from exc
    text = serialize_program(rep.instance, indent=1) + "\n"
    if output is None:
        out.write(text)
    else:
        Path(output).write_text(text)
        print(f"wrote {rep.instance.kind} instance to {output}: {params_text(rep.instance)}", file=out)
    return EXIT_SAFE


def run_oracle(path: Path, copies: int, max_nodes: int, out=None) -> int:
    out = out or sys.stdout
    if copies < 0:
        raise UsageError("--copies must be non-negative")
    inst = load_instance(path, "lcr")
    hit = lcr_explicit_bfs(inst, copies, cap=max_nodes)
    label = "reachable (UNSAFE)" if hit else "unreachable (SAFE)"
    print(f"verdict: {label} with {copies} contributor copies\nparams: {params_text(inst)}", file=out)
    return EXIT_UNSAFE if hit else EXIT_SAFE


# Benchmarks.

CSV_FIELDS = ("name", "kind", "algo", "params", "status", "verdict", "seconds", "nodes")


def _bench_instance(row: dict, base: Path, seed: int) -> tuple[str, Instance]:
    if "file" in row:
        p = base / row["file"]
        return row.get("name", str(row["file"])), parse_program(p.read_text())
    spec = row.get("random")
    if not isinstance(spec, dict):
        raise SemanticError("each suite row needs 'file' or 'random'")
    rng = random.Random(seed)
    kind = spec.get("kind", "lcr")
    if kind == "lcr":
        inst: Instance = gen.random_lcr(
            rng, int(spec["L"]), int(spec["C"]), int(spec["D"]), float(spec.get("density", 1.5))
        )
    elif kind == "bsr":
        inst = gen.random_bsr(
            rng, int(spec["t"]), int(spec["P"]), int(spec["D"]), int(spec.get("s", 1)), float(spec.get("density", 1.5))
        )
    else:
        raise SemanticError(f"unknown random kind {kind!r}")
    name = row.get("name") or f"random-{kind}-" + "-".join(f"{k}{spec[k]}" for k in sorted(spec) if k != "kind")
    return name, inst


def bench_row(task: tuple[dict, str, int, int]) -> dict:
    """One isolated suite row; every failure becomes a status instead of an exception."""
    row, base, seed, max_nodes = task
    rec = {k: "" for k in CSV_FIELDS}
    rec.update(name=row.get("name") or row.get("file", ""), algo=row.get("algo") or "")
    try:
        name, inst = _bench_instance(row, Path(base), seed)
        rec.update(name=name, kind=inst.kind, params=params_text(inst))
        cfg = RunConfig(inst.kind, algo=row.get("algo"), stages=row.get("stages"), max_nodes=int(row.get("max_nodes", max_nodes)))
        rec["algo"] = cfg.algo
        v = solve(inst, cfg)
        rec.update(status="ok", verdict=v.label, seconds=f"{v.seconds:.6f}", nodes=v.nodes)
    except BudgetExceeded as exc:
        rec.update(status="budget", verdict=str(exc))
    except (OSError, ValueError, KeyError, TypeError, UsageError) as exc:
        rec.update(status="error", verdict=f"{type(exc).__name__}: {exc}")
    return rec


def load_suite(path: Path) -> list[tuple[int, dict]]:
    """Suite rows as ``(source row index, row)``; an ``algos`` list expands into one row per algorithm."""
    obj = json.loads(_read(str(path)))
    rows = obj.get("rows", []) if isinstance(obj, dict) else obj
    if not isinstance(rows, list):
        raise SemanticError("a suite is a list of rows or an object with 'rows'")
    expanded = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise SemanticError("suite rows must be objects")
        for algo in row.get("algos", [row.get("algo")]):
            expanded.append((i, {**row, "algo": algo}))
    return expanded


def run_bench(suite: Path, seed: int, max_nodes: int, jobs: int, output: str | None, out=None) -> int:
    out = out or sys.stdout
    try:
        rows = load_suite(suite)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    base = str(Path(suite).parent)
    # Seeds follow the source row, so expanded rows share an instance and
    # results do not depend on scheduling.
    tasks = [(row, base, seed + i, max_nodes) for i, row in rows]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            recs = list(ex.map(bench_row, tasks))
    else:
        recs = [bench_row(t) for t in tasks]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(recs)
    if output is None:
        out.write(buf.getvalue())
    else:
        Path(output).write_text(buf.getvalue())
    return EXIT_SAFE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lcrbsr",
        description="Decide safety of leader/contributor and bounded-stage shared-memory programs. "
        "A 'reachable' verdict means the program is UNSAFE.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="decide reachability of an instance file")
    v.add_argument("kind", choices=("lcr", "bsr"))
    v.add_argument("file", type=Path)
    v.add_argument("--algo", help=f"lcr: {'|'.join(LCR_ALGOS)} (default dp); bsr: {'|'.join(BSR_ALGOS)} (default product)")
    v.add_argument("--stages", type=int, help="override the stage budget of a bsr instance")
    v.add_argument("--certificate", type=Path, metavar="OUT", help="write a JSON certificate when reachable")
    v.add_argument("--dump-table", type=Path, metavar="OUT", help="write the DP table (dp only)")
    v.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES, metavar="N")

    g = sub.add_parser("gen", help="build an instance from a reduction")
    g.add_argument("generator", choices=sorted(GENERATORS))
    g.add_argument("inputs", nargs="+", help="DIMACS files, or one JSON graph/set-cover file")
    g.add_argument("-o", "--output", metavar="OUT")

    o = sub.add_parser("oracle", help="brute-force check with a fixed number of contributors")
    o.add_argument("oracle", choices=("lcr-bfs",))
    o.add_argument("file", type=Path)
    o.add_argument("--copies", type=int, required=True, metavar="T")
    o.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES, metavar="N")

    b = sub.add_parser("bench", help="run a suite and emit CSV timings")
    b.add_argument("--suite", type=Path, required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES, metavar="N")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("-o", "--output", metavar="OUT")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            cfg = RunConfig(
                args.kind,
                path=args.file,
                algo=args.algo,
                stages=args.stages,
                max_nodes=args.max_nodes,
                certificate=args.certificate,
                dump_table=args.dump_table,
            )
            return run(cfg)
        if args.command == "gen":
            return run_gen(args.generator, args.inputs, args.output)
        if args.command == "oracle":
            return run_oracle(args.file, args.copies, args.max_nodes)
        return run_bench(args.suite, args.seed, args.max_nodes, args.jobs, args.output)
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, ParseError, SemanticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
