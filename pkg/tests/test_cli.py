from __future__ import annotations

import json

import pytest

from qsda_analyzer import cli, lang
from qsda_analyzer.cli import RunConfig, main

import support

UNPROVABLE = """
pointer head;
@pre List(head)
1: head := head;
@assert end Sort(head)
"""

BROKEN = """
pointer p;
1: p := ;
"""


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_sorted_insert_is_proved(capsys):
    code, out, _ = _run(capsys, "check", "sorted-insert", "--universals", "2")
    assert code == 0
    assert "Sort(head): Proved" in out and "List(head): Proved" in out


def test_check_json_report(tmp_path):
    out = tmp_path / "r.json"
    assert main(["check", "init", "--universals", "1", "--format", "json", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["version"] == 1 and rep["universals"] == 1
    assert all(r["verdict"] == "Proved" for r in rep["results"])
    assert rep["iterations"] and rep["max_size"] > 0


def test_unknown_assertion_exits_one(tmp_path, capsys):
    f = tmp_path / "weak.hp"
    f.write_text(UNPROVABLE)
    code, out, _ = _run(capsys, "check", str(f), "--universals", "2")
    assert code == 1 and "Unknown" in out


def test_syntax_error_exits_two_with_position(tmp_path, capsys):
    f = tmp_path / "broken.hp"
    f.write_text(BROKEN)
    code, _, err = _run(capsys, "analyze", str(f))
    assert code == 2
    assert "3:" in err and "error" in err


def test_missing_file_exits_two(capsys):
    code, _, err = _run(capsys, "analyze", "no-such-program.hp")
    assert code == 2 and "no such program" in err


def test_analyze_formats(capsys):
    code, text, _ = _run(capsys, "analyze", "add-head")
    assert code == 0 and "pc" in text
    code, js, _ = _run(capsys, "analyze", "add-head", "--format", "json", "--emit-formula")
    assert code == 0 and "exit_formula" in json.loads(js)
    code, dot, _ = _run(capsys, "analyze", "add-head", "--format", "dot")
    assert code == 0 and "digraph" in dot


def test_emit_prints_the_exit_formula(capsys):
    code, out, _ = _run(capsys, "emit", "init")
    assert code == 0 and "∀y1" in out
    code, out, _ = _run(capsys, "emit", "init", "--format", "json")
    assert json.loads(out)["universal_vars"] == ["y1"]
    code, _, err = _run(capsys, "emit", "init", "--pc", "999")
    assert code == 2 and "999" in err


def test_oracle_subcommand(capsys):
    code, out, _ = _run(capsys, "oracle", "add-head", "--max-nodes", "2", "--data-range", "0..1")
    assert code == 0 and "0 violations" in out


def test_bench_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["bench", "init", "add-head", "gslist-reverse", "--format", "json", "--out", str(out)]) == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    assert strip(ra["rows"]) == strip(rb["rows"])
    assert [r["program"] for r in ra["rows"]] == ["init", "add-head", "gslist-reverse"]
    assert ra["rows"][1]["iterations"] == "-"


def test_bench_table_headers(capsys):
    code, out, _ = _run(capsys, "bench", "add-head")
    assert code == 0
    header = out.splitlines()[0]
    for col in ("Program", "#PV", "#Y", "Property checked", "#Iter", "Max. size of QSDA", "Time (s)"):
        assert col in header


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(universals=-1)
    with pytest.raises(ValueError):
        RunConfig(format="xml")
    assert RunConfig().engine().widen_delay == 2


def test_corpus_ships_every_required_program():
    names = cli.corpus_names()
    assert set(cli.REQUIRED) <= set(names)
    assert set(support.BENCHMARKS) == set(cli.REQUIRED)


@pytest.mark.parametrize("name", cli.corpus_names())
def test_corpus_file_parses_and_desugars(name):
    p = cli.load_corpus_program(name)
    d = lang.desugar_data_vars(p)
    assert p.assertions and p.preconditions
    assert not d.data_vars
    lang.build_cfg(d)


def test_fold_split_asserts_gek_and_its_complement():
    specs = {s.render() for _, s in support.program("fold-split").assertion_pcs()}
    assert "Gek(ge, key)" in specs and "Max(lt, key - 1)" in specs
