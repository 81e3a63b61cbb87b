import csv
import hashlib
import json
import subprocess
import sys

import pytest

from hypeboy.cli import main, parse_float_range, parse_int_range, parse_sizes
from hypeboy.hypergraph import load_hypergraph


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_parsers():
    assert parse_sizes("4x3,2") == (4, 4, 4, 2)
    assert parse_int_range("2..5") == [2, 3, 4, 5]
    assert parse_int_range("3,7") == [3, 7]
    assert parse_float_range("0:0.1:1") == [i / 10 for i in range(11)]
    with pytest.raises(ValueError):
        parse_float_range("1:0.1:0")


def test_generate_example(tmp_path):
    out = tmp_path / "g"
    assert main(["generate", "--N", "100", "--d", "32", "--P", "0.9", "--sizes", "4x100",
                 "--seed", "7", "--out", str(out)]) == 0
    hg, X, y = load_hypergraph(out / "hypergraph.txt")
    assert hg.num_nodes == 200 and hg.num_edges == 100 and set(map(len, hg.hyperedges)) == {4}
    assert X.shape == (200, 32) and len(y) == 200
    manifest = json.loads((out / "generate-manifest.json").read_text())
    assert manifest["config"]["seed"] == 7 and manifest["outputs"] == ["hypergraph.txt"]


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# synthetic\nN = 5\nd=2\nP = 0.5  # half\nsizes = 3x4\nseed = 1\n")
    assert main(["generate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "a")]) == 0
    manifest = json.loads((tmp_path / "a" / "generate-manifest.json").read_text())
    assert manifest["config"]["seed"] == 2 and manifest["config"]["N"] == 5


def test_manifest_rerun_is_identical(tmp_path):
    out = tmp_path / "g"
    main(["generate", "--N", "6", "--d", "3", "--P", "0.8", "--sizes", "3x5", "--out", str(out)])
    before = digest(out / "hypergraph.txt"), digest(out / "generate-manifest.json")
    assert main(["generate", "--config", str(out / "generate-manifest.json")]) == 0
    assert (digest(out / "hypergraph.txt"), digest(out / "generate-manifest.json")) == before


@pytest.mark.parametrize("argv, key", [
    (["generate", "--N", "3", "--d", "2", "--P", "0.5"], "sizes"),
    (["generate", "--N", "x", "--d", "2", "--P", "0.5", "--sizes", "2"], "N"),
    (["train", "--input", "g.txt", "--p-v", "0.1", "--filling-epochs", "1"], "p_e"),
])
def test_config_errors_name_the_key(argv, key, capsys, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    assert key in capsys.readouterr().err


def test_unknown_key_in_file(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("N=3\nd=2\nP=0.5\nsizes=2\nlearning_rate=3\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "learning_rate" in capsys.readouterr().err


def test_unknown_flag_exits_nonzero():
    with pytest.raises(SystemExit) as info:
        main(["generate", "--bogus", "1"])
    assert info.value.code != 0


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["generate", "--N", "3", "--d", "2", "--P", "0.5", "--sizes", "2",
                 "--out", str(blocker / "sub")]) == 2
    assert "out" in capsys.readouterr().err


def test_manifest_for_other_command_rejected(tmp_path):
    out = tmp_path / "g"
    main(["generate", "--N", "6", "--d", "3", "--P", "0.8", "--sizes", "3x5", "--out", str(out)])
    assert main(["swap", "--config", str(out / "generate-manifest.json")]) == 2


def test_full_pipeline(tmp_path):
    g = tmp_path / "g"
    assert main(["generate", "--N", "15", "--d", "4", "--P", "0.9", "--sizes", "3x20", "--out", str(g)]) == 0
    data = str(g / "hypergraph.txt")
    assert main(["swap", "--input", data, "--T", "10", "--out", str(tmp_path / "s")]) == 0
    t = tmp_path / "t"
    assert main(["train", "--input", data, "--p-v", "0.2", "--p-e", "0.3", "--filling-epochs", "3",
                 "--warmup-epochs", "3", "--hidden", "8", "--embed-dim", "4", "--out", str(t)]) == 0
    with open(t / "history.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "stage", "loss"] and len(rows) == 7
    e = tmp_path / "e"
    assert main(["embed", "--input", data, "--checkpoint", str(t / "checkpoint.json"), "--out", str(e)]) == 0
    emb = str(e / "embeddings.csv")
    for argv in (["eval-node", "--embeddings", emb], ["eval-node"],
                 ["eval-node", "--protocol", "finetune", "--checkpoint", str(t / "checkpoint.json")],
                 ["eval-edge", "--embeddings", emb]):
        out = tmp_path / "_".join(a.strip("-") for a in argv[:2])
        assert main(argv + ["--input", data, "--repeats", "2", "--epochs", "10", "--split",
                            "0.2,0.2,0.6" if argv[0] == "eval-node" else "0.6,0.2,0.2",
                            "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary[0]["n"] == 2
    d = tmp_path / "d"
    assert main(["diagnose", "--embeddings", emb, "--input", data, "--out", str(d)]) == 0
    report = json.loads((d / "diagnostics.json").read_text())
    assert set(report) == {"alignment", "uniformity", "effective_rank", "zero_norm_rows"}


def test_theory_grid_command(tmp_path):
    out = tmp_path / "th"
    assert main(["theory-grid", "--S", "2..3", "--d", "2", "--P", "0:0.5:1", "--trials", "500",
                 "--out", str(out)]) == 0
    with open(out / "theory_grid.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["S", "d", "P", "closed_form", "mc_estimate", "mc_stderr"]
    assert len(rows) == 6
    first = digest(out / "theory_grid.csv")
    assert main(["theory-grid", "--config", str(out / "theory-grid-manifest.json"), "--workers", "2"]) == 0
    assert digest(out / "theory_grid.csv") == first


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hypeboy", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "hypeboy" in res.stdout
