import subprocess
import sys

import pytest

from lcdstream.cli import main

GEN = ["generate", "--frames", "500", "--revisit", "300:120:250", "--fps", "1",
       "--global-dim", "32", "--local-dim", "16", "--locals", "80"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    assert main(GEN + ["--out", str(out)]) == 0
    return out


def test_run_and_score(dataset, capsys):
    det = dataset / "det.csv"
    assert main(["run", str(dataset / "descriptors.fild"), "-o", str(det), "--M", "8",
                 "--ef-construction", "40", "--graph-out", str(dataset / "graph.bin")]) == 0
    lines = det.read_text().splitlines()
    assert lines[0] == "query_id,match_id,similarity,inliers"
    assert len(lines) > 50
    assert (dataset / "graph.bin").read_bytes()[:4] == b"HNSW"
    capsys.readouterr()
    assert main(["score", str(det), str(dataset / "ground_truth.txt")]) == 0
    out = capsys.readouterr().out
    assert '"precision": 1.0' in out


def test_sweep_writes_tables(dataset, tmp_path):
    prefix = tmp_path / "out" / "s"
    assert main(["sweep", str(dataset / "descriptors.fild"), str(dataset / "ground_truth.txt"),
                 "--axis", "n", "--values", "1,2", "--M", "8", "--ef-construction", "40",
                 "--out-prefix", str(prefix)]) == 0
    assert (tmp_path / "out" / "s_n_pr.csv").read_text().count("\n") == 3
    assert (tmp_path / "out" / "s_n_timing.csv").read_text().startswith("n,ingest,")


def test_missing_file_is_an_error(capsys):
    assert main(["run", "/nonexistent/file"]) != 0
    assert "error" in capsys.readouterr().err


def test_bad_parameter_is_an_error(dataset, capsys):
    assert main(["run", str(dataset / "descriptors.fild"), "--epsilon", "1.5"]) != 0
    assert "epsilon" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lcdstream", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "generate" in proc.stdout
