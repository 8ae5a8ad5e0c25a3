import json
import subprocess
import sys
from pathlib import Path

import pytest

from seqrank.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def chain_dir(tmp_path):
    assert run("synth", "--model", "chain", "--n-items", 8, "--n-actors", 20, "--out", tmp_path / "syn") == 0
    return tmp_path


def test_synth_ingest_rank_eval_round_trip(chain_dir, capsys):
    syn = chain_dir / "syn"
    assert (syn / "events.csv").read_text().startswith("# ")
    assert run("ingest", "--input", syn / "events.csv", "--out", chain_dir / "ing") == 0
    bundle = json.loads((chain_dir / "ing" / "bundle.json").read_text())
    assert bundle["n_s_before"] == bundle["n_s_after"] == 20
    assert len(bundle["catalog"]) == 8

    out = chain_dir / "rank"
    assert run("rank", "--input", chain_dir / "ing" / "bundle.json", "--out", out,
               "--emit", "rankings,gamma_table,comparison_table,heatmap") == 0
    truth = json.loads((syn / "truth.json").read_text())
    for m in ("pagerank", "rankcentrality", "serialrank", "leastsquares", "svd"):
        doc = json.loads((out / "rankings" / f"{m}.json").read_text())
        assert doc["order"] == truth["order"], m
    assert not (out / "rankings" / "syncrank.json").exists()
    report = json.loads((out / "report.json").read_text())
    sync = next(r for r in report["methods"] if r["method_tag"] == "syncrank")
    assert sync["error_type"] == "DegeneracyError"
    assert "error" in (out / "gamma_table.txt").read_text()
    assert (out / "heatmap.csv").exists() and (out / "comparison_table.txt").exists()

    capsys.readouterr()
    assert run("eval", "--input", chain_dir / "ing" / "bundle.json",
               "--ranking", out / "rankings" / "svd.json", "--truth", syn / "truth.json") == 0
    metrics = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert metrics["gamma"] == 1.0 and metrics["kendall_tau"] == 1.0


def test_rank_directly_from_csv(chain_dir):
    out = chain_dir / "direct"
    assert run("rank", "--input", chain_dir / "syn" / "events.csv", "--out", out,
               "--methods", "pagerank,svd", "--emit", "rankings,matrices") == 0
    assert sorted(p.name for p in (out / "rankings").iterdir()) == ["pagerank.json", "svd.json"]
    assert (out / "bundle.json").exists()


@pytest.mark.parametrize("argv", [
    lambda d: ["synth", "--model", "chain", "--n-items", 4, "--out", d / "a"],
    lambda d: ["synth", "--model", "flip", "--n-items", 6, "--n-actors", 30, "--flip-prob", 0.2,
               "--edge-prob", 0.8, "--seed", 4, "--out", d / "a"],
    lambda d: ["synth", "--model", "bt", "--n-items", 5, "--bt-weights", "1,2,3,4,5",
               "--edge-prob", 0.7, "--seed", 2, "--out", d / "a"],
])
def test_synth_is_byte_deterministic(tmp_path, argv):
    first, second = tmp_path / "one", tmp_path / "two"
    assert run(*argv(first)) == 0
    assert run(*argv(second)) == 0
    assert tree(first) == tree(second)


def test_ingest_and_rank_are_byte_deterministic(chain_dir):
    events = chain_dir / "syn" / "events.csv"
    for name in ("x", "y"):
        assert run("ingest", "--input", events, "--out", chain_dir / name / "ing") == 0
        assert run("rank", "--input", events, "--out", chain_dir / name / "rank",
                   "--emit", "rankings,gamma_table,comparison_table,heatmap,matrices",
                   "--workers", 3 if name == "y" else 1) == 0
    assert tree(chain_dir / "x") == tree(chain_dir / "y")


def test_eval_writes_metrics_deterministically(chain_dir):
    run("ingest", "--input", chain_dir / "syn" / "events.csv", "--out", chain_dir / "ing")
    docs = []
    for name in ("m1", "m2"):
        assert run("eval", "--input", chain_dir / "ing" / "bundle.json",
                   "--ranking", chain_dir / "syn" / "truth.json", "--out", chain_dir / name) == 0
        docs.append((chain_dir / name / "metrics.json").read_bytes())
    assert docs[0] == docs[1]


def test_multi_cohort_rank(tmp_path):
    rows = ["actor_id,item_id,period,grade_points,cohort_label"]
    for k in range(12):
        label = "Pure" if k % 2 else "Applied"
        grade = 3.8 if k < 6 else 2.0
        order = ["A", "B", "C", "D"] if label == "Pure" else ["B", "A", "C", "D"]
        rows += [f"s{k},{c},{p},{grade},{label}" for p, c in enumerate(order, start=1)]
    csv_path = tmp_path / "events.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    out = tmp_path / "out"
    assert run("rank", "--input", csv_path, "--out", out, "--cohort", "Pure", "--cohort", "Applied",
               "--methods", "serialrank,leastsquares", "--emit", "rankings,gamma_table,comparison_table",
               "--min-item-frac", 0) == 0
    table = (out / "cohort_table_serialrank.txt").read_text()
    header = [l for l in table.splitlines() if not l.startswith("#")][0]
    assert "Pure/all" in header and "Applied/all" in header
    assert (out / "Pure_all" / "rankings" / "serialrank.json").exists()
    pure = json.loads((out / "Pure_all" / "rankings" / "leastsquares.json").read_text())
    applied = json.loads((out / "Applied_all" / "rankings" / "leastsquares.json").read_text())
    assert pure["order"][:2] == ["A", "B"] and applied["order"][:2] == ["B", "A"]
    gt = [l for l in (out / "gamma_table.csv").read_text().splitlines() if not l.startswith("# ")]
    assert gt[0] == "method,Pure/all,Applied/all"


def test_gpa_band_without_grades_exits_2(chain_dir, capsys):
    code = run("rank", "--input", chain_dir / "syn" / "events.csv", "--out", chain_dir / "r",
               "--gpa-band", "A")
    assert code == 2
    assert "grade" in capsys.readouterr().err


def test_parse_error_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("actor_id,item_id,period\ns1,A,x\n")
    assert run("ingest", "--input", bad, "--out", tmp_path / "o") == 3
    assert "line 2" in capsys.readouterr().err


def test_degenerate_only_exits_4(chain_dir):
    assert run("rank", "--input", chain_dir / "syn" / "events.csv", "--out", chain_dir / "r",
               "--methods", "syncrank") == 4


def test_disconnected_exits_5(tmp_path):
    rows = ["actor_id,item_id,period", "s1,A,1", "s1,B,2", "s2,C,1", "s2,D,2"]
    path = tmp_path / "e.csv"
    path.write_text("\n".join(rows) + "\n")
    assert run("rank", "--input", path, "--out", tmp_path / "o", "--methods", "leastsquares",
               "--min-item-frac", 0) == 5


def test_nonconvergence_exits_6(chain_dir):
    assert run("rank", "--input", chain_dir / "syn" / "events.csv", "--out", chain_dir / "r",
               "--methods", "pagerank", "--max-iter", 1, "--tol", 1e-15) == 6


def test_usage_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("rank", "--input", "x.json", "--out", tmp_path, "--methods", "borda")
    assert exc.value.code == 2
    assert run("synth", "--model", "flip", "--n-items", 5, "--flip-prob", 0.7, "--out", tmp_path) == 2
    assert run("ingest", "--input", tmp_path / "missing.csv", "--out", tmp_path) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "seqrank", "synth", "--model", "chain",
                           "--n-items", "3", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "truth.json").exists()
