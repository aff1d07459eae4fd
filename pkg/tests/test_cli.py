from __future__ import annotations

import csv
import io
import json
import random
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA, tiny_lcr
from lcrbsr.bsr import check_stage_trace, solve_bsr
from lcrbsr.cli import (
    CSV_FIELDS,
    EXIT_BUDGET,
    EXIT_SAFE,
    EXIT_UNSAFE,
    EXIT_USAGE,
    GENERATORS,
    LCR_ALGOS,
    RunConfig,
    UsageError,
    main,
)
from lcrbsr.model import parse_program, serialize_program
from lcrbsr.oracles import CnfFormula, GridGraph, kxk_clique_brute, lcr_explicit_bfs, sat_brute

WITNESS = str(DATA / "worked_witness.json")
TABLE = str(DATA / "worked_table.json")


def csv_rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


# -- verify ----------------------------------------------------------------


@pytest.mark.parametrize("algo", LCR_ALGOS)
def test_verify_worked_example_is_unsafe(algo, capsys):
    assert main(["verify", "lcr", "--algo", algo, WITNESS]) == EXIT_UNSAFE
    out = capsys.readouterr().out
    assert out.startswith("verdict: reachable (UNSAFE")
    assert f"algorithm: {algo}" in out
    params = next(line for line in out.splitlines() if line.startswith("params: ")).split()[1:]
    assert sorted(p.split("=")[0] for p in params) == ["C", "D", "L"]


def test_default_algorithm_is_dp(capsys):
    assert main(["verify", "lcr", WITNESS]) == EXIT_UNSAFE
    assert "algorithm: dp" in capsys.readouterr().out


def test_missing_file(tmp_path, capsys):
    assert main(["verify", "lcr", "--algo", "witness", str(tmp_path / "missing.json")]) == EXIT_USAGE
    assert "cannot read" in capsys.readouterr().err


def test_parse_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["verify", "lcr", str(bad)]) == EXIT_USAGE


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "lcr", "--algo", "product", WITNESS],
        ["verify", "bsr", WITNESS],
        ["verify", "lcr", "--stages", "2", WITNESS],
        ["verify", "lcr", "--algo", "witness", "--dump-table", "x", WITNESS],
        ["verify", "lcr", "--max-nodes", "0", WITNESS],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "xyz", WITNESS])
    assert exc.value.code == EXIT_USAGE


def test_run_config_rejects_bad_algo():
    with pytest.raises(UsageError):
        RunConfig("lcr", algo="subset")
    assert RunConfig("bsr").algo == "product"


def test_dump_table(tmp_path):
    out = tmp_path / "table.txt"
    assert main(["verify", "lcr", "--algo", "dp", "--dump-table", str(out), TABLE]) == EXIT_UNSAFE
    assert "S={p0,p1} : (q1,a) (q1,c)" in out.read_text().splitlines()


@pytest.mark.parametrize("algo", LCR_ALGOS)
def test_certificate_file(algo, tmp_path):
    out = tmp_path / "cert.json"
    assert main(["verify", "lcr", "--algo", algo, "--certificate", str(out), WITNESS]) == EXIT_UNSAFE
    cert = json.loads(out.read_text())
    assert cert["algorithm"] == algo and cert["verdict"] == "reachable"
    if algo == "witness":
        assert cert["tokens"] == "~a q0 _ q1 b ~c q2".split()
    if algo == "dp":
        assert cert["steps"][-1]["reached"][0] == "q4"


def test_no_certificate_when_safe(tmp_path):
    obj = json.loads((DATA / "worked_witness.json").read_text())
    obj["contributors"][0]["trans"] = []
    safe = tmp_path / "safe.json"
    safe.write_text(json.dumps(obj))
    cert = tmp_path / "cert.json"
    assert main(["verify", "lcr", "--certificate", str(cert), str(safe)]) == EXIT_SAFE
    assert not cert.exists()


def test_budget_exit(capsys):
    assert main(["verify", "lcr", "--algo", "witness", "--max-nodes", "1", WITNESS]) == EXIT_BUDGET
    assert "budget" in capsys.readouterr().err


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_exit_codes_agree_across_algorithms(seed):
    inst = tiny_lcr(seed, 3, 3, 3)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "i.json"
        p.write_text(serialize_program(inst))
        codes = {main(["verify", "lcr", "--algo", a, str(p)]) for a in LCR_ALGOS}
    assert len(codes) == 1 and codes <= {EXIT_SAFE, EXIT_UNSAFE}


# -- oracle ----------------------------------------------------------------


@pytest.mark.parametrize("copies, code", [(0, EXIT_SAFE), (1, EXIT_SAFE), (2, EXIT_UNSAFE)])
def test_oracle_copies(copies, code, capsys):
    inst = parse_program((DATA / "worked_witness.json").read_text())
    assert (code == EXIT_UNSAFE) == lcr_explicit_bfs(inst, copies)
    assert main(["oracle", "lcr-bfs", WITNESS, "--copies", str(copies)]) == code
    assert f"with {copies} contributor copies" in capsys.readouterr().out


def test_oracle_negative_copies():
    assert main(["oracle", "lcr-bfs", WITNESS, "--copies", "-1"]) == EXIT_USAGE


# -- gen -------------------------------------------------------------------


def write_cnf(tmp_path, name: str, phi: CnfFormula) -> str:
    p = tmp_path / name
    p.write_text(phi.to_dimacs())
    return str(p)


def write_json(tmp_path, name: str, obj) -> str:
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


GRID_K2 = {"k": 2, "edges": [[[1, 1], [2, 2]]]}


def gen_inputs(kind: str, tmp_path) -> list[str]:
    a = write_cnf(tmp_path, "a.cnf", CnfFormula(2, ((1, 2), (-1,))))
    b = write_cnf(tmp_path, "b.cnf", CnfFormula(2, ((1,), (-1,))))
    if kind in ("kxk-lcr", "kxk-bsr"):
        return [write_json(tmp_path, "g.json", GRID_K2)]
    if kind == "setcover-lcr":
        return [write_json(tmp_path, "sc.json", {"n": 3, "family": [[1, 2], [3]], "r": 2})]
    if kind == "clique-lcr-l":
        return [write_json(tmp_path, "cl.json", {"n": 3, "edges": [[1, 2], [2, 3]], "k": 2})]
    if kind.startswith("crosscomp"):
        return [a, b]
    return [a]


@pytest.mark.parametrize("kind", sorted(GENERATORS))
def test_gen_kinds_write_parseable_instances(kind, tmp_path, capsys):
    out = tmp_path / "out.json"
    assert main(["gen", kind, *gen_inputs(kind, tmp_path), "-o", str(out)]) == EXIT_SAFE
    inst = parse_program(out.read_text())
    assert inst.kind == ("bsr" if kind.endswith(("bsr", "constd")) else "lcr")
    assert capsys.readouterr().out.startswith(f"wrote {inst.kind} instance to {out}")


def test_gen_then_verify_kxk_bsr(tmp_path):
    out = tmp_path / "gen_kxk_k2.json"
    assert main(["gen", "kxk-bsr", write_json(tmp_path, "g.json", GRID_K2), "-o", str(out)]) == EXIT_SAFE
    expected = kxk_clique_brute(GridGraph.from_pairs(2, [((1, 1), (2, 2))]))
    code = main(["verify", "bsr", "--stages", "1", str(out)])
    assert code == (EXIT_UNSAFE if expected else EXIT_SAFE)


@pytest.mark.parametrize("seed", range(4))
def test_gen_then_verify_kxk_bsr_random_grids(seed, tmp_path):
    rng = random.Random(seed)
    edges = [e for e in [[[1, 1], [2, 1]], [[1, 1], [2, 2]], [[1, 2], [2, 1]], [[1, 2], [2, 2]]] if rng.random() < 0.4]
    g = write_json(tmp_path, "g.json", {"k": 2, "edges": edges})
    out = tmp_path / "i.json"
    main(["gen", "kxk-bsr", g, "-o", str(out)])
    cert = tmp_path / "trace.json"
    code = main(["verify", "bsr", "--stages", "1", "--certificate", str(cert), str(out)])
    expected = kxk_clique_brute(GridGraph.from_pairs(2, [(tuple(u), tuple(v)) for u, v in edges]))
    assert code == (EXIT_UNSAFE if expected else EXIT_SAFE)
    if expected:
        inst = parse_program(out.read_text())
        assert check_stage_trace(solve_bsr(inst).certificate, inst)
        opens = [x["open"] for x in json.loads(cert.read_text())["trace"] if "open" in x]
        assert opens == ["ch"]


def test_gen_3sat_stdout_matches_oracle(tmp_path, capsys):
    phi = CnfFormula(2, ((1, 2), (-1,), (-2,)))
    assert main(["gen", "3sat-lcr", write_cnf(tmp_path, "p.cnf", phi)]) == EXIT_SAFE
    p = tmp_path / "i.json"
    p.write_text(capsys.readouterr().out)
    assert main(["verify", "lcr", str(p)]) == (EXIT_UNSAFE if sat_brute(phi) else EXIT_SAFE)


@pytest.mark.parametrize(
    "kind, obj",
    [
        ("kxk-lcr", {"k": 2, "edges": [[[1, 1], [3, 2]]]}),
        ("kxk-bsr", {"edges": []}),
        ("setcover-lcr", {"n": 2, "family": [[3]], "r": 1}),
        ("clique-lcr-l", {"n": 2}),
    ],
)
def test_gen_bad_inputs(kind, obj, tmp_path):
    assert main(["gen", kind, write_json(tmp_path, "x.json", obj)]) == EXIT_USAGE


def test_gen_arity(tmp_path):
    a = write_cnf(tmp_path, "a.cnf", CnfFormula(1, ((1,),)))
    assert main(["gen", "3sat-lcr", a, a]) == EXIT_USAGE


# -- bench -----------------------------------------------------------------


def bench(tmp_path, rows, *extra) -> list[dict]:
    suite = write_json(tmp_path, "suite.json", rows)
    out = tmp_path / "bench.csv"
    assert main(["bench", "--suite", suite, "-o", str(out), *extra]) == EXIT_SAFE
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(CSV_FIELDS)
    return csv_rows(text)


def test_empty_suite_is_header_only(tmp_path):
    assert bench(tmp_path, []) == []
    assert bench(tmp_path, {"rows": []}) == []


def test_three_generated_rows(tmp_path):
    rows = [{"random": {"kind": "lcr", "L": 3, "C": 3, "D": 2}} for _ in range(2)]
    rows.append({"random": {"kind": "bsr", "t": 2, "P": 2, "D": 2, "s": 1}})
    recs = bench(tmp_path, rows)
    assert len(recs) == 3
    assert all(r["status"] == "ok" for r in recs)
    assert [r["kind"] for r in recs] == ["lcr", "lcr", "bsr"]


def test_bench_records_failures(tmp_path):
    rows = [
        {"file": "nope.json"},
        {"file": str(DATA / "worked_witness.json"), "algo": "witness", "max_nodes": 1},
        {"file": str(DATA / "worked_witness.json"), "algo": "subset"},
        {"file": str(DATA / "worked_witness.json"), "algo": "dp"},
    ]
    recs = bench(tmp_path, rows)
    assert [r["status"] for r in recs] == ["error", "budget", "error", "ok"]
    assert recs[0]["name"] == "nope.json"
    assert recs[-1]["verdict"] == "reachable"


def test_algos_rows_share_an_instance(tmp_path):
    rows = [{"random": {"kind": "lcr", "L": 4, "C": 4, "D": 3}, "algos": list(LCR_ALGOS)}]
    recs = bench(tmp_path, rows, "--seed", "11")
    assert [r["algo"] for r in recs] == list(LCR_ALGOS)
    assert len({r["params"] for r in recs}) == 1
    assert len({r["verdict"] for r in recs}) == 1


def test_parallel_bench_matches_sequential(tmp_path):
    rows = [{"random": {"kind": "lcr", "L": 3, "C": 4, "D": 2}, "algos": ["dp", "witness"]} for _ in range(3)]
    seq = bench(tmp_path, rows, "--seed", "5")
    par = bench(tmp_path, rows, "--seed", "5", "--jobs", "2")
    drop = lambda recs: [{k: v for k, v in r.items() if k != "seconds"} for r in recs]  # noqa: E731
    assert drop(seq) == drop(par)


def test_dp_explores_fewer_nodes_than_explicit(tmp_path):
    rows = [
        {"name": f"C{C}", "random": {"kind": "lcr", "L": 3, "C": C, "D": 3}, "algos": ["dp", "explicit"]}
        for C in (8, 10, 12)
    ]
    recs = bench(tmp_path, rows, "--seed", "3")
    assert all(r["status"] == "ok" for r in recs)
    by = {(r["name"], r["algo"]): r for r in recs}
    for C in (8, 10, 12):
        assert by[(f"C{C}", "dp")]["verdict"] == by[(f"C{C}", "explicit")]["verdict"]
    assert int(by[("C12", "dp")]["nodes"]) < int(by[("C12", "explicit")]["nodes"])
