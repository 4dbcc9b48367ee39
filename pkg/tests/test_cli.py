import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from blotforensics.cli import main, read_feature_csv
from blotforensics.dataset import load_manifest
from blotforensics.experiment import ConfigError, RunConfig


def _three_record_manifest(smoke_dir, tmp_path):
    lines = (smoke_dir / "manifest.jsonl").read_text().splitlines()
    keep = [json.loads(lines[0]), json.loads(lines[1]), json.loads(lines[20])]
    for row in keep:
        row["path"] = str(smoke_dir / row["path"])
    p = tmp_path / "three.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in keep))
    return p


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_extract_writes_one_row_per_record(smoke_dir, tmp_path):
    m = _three_record_manifest(smoke_dir, tmp_path)
    assert main(["extract", str(m), str(tmp_path / "f.csv")]) == 0
    with open(tmp_path / "f.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 4 and all(len(r) == 43 for r in rows)
    assert rows[0][:4] == ["id", "label", "generator", "f_c_d4_H"]


def test_train_score_roundtrip(smoke_dir, tmp_path):
    feats = tmp_path / "f.csv"
    assert main(["extract", str(smoke_dir / "manifest.jsonl"), str(feats), "--jobs", "2"]) == 0
    for det, extra in [("iforest", ["--n-trees", "30"]), ("ocsvm", ["--nu", "0.2"])]:
        model = tmp_path / f"{det}.json"
        assert main(["train", str(feats), str(model), "--detector", det,
                     "--feature", "f_e_d4_H,f_h_d4_H", *extra]) == 0
        out = tmp_path / f"{det}.csv"
        assert main(["score", str(model), str(feats), str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 100
        for r in rows:
            assert r["predicted_label"] == ("real" if float(r["score"]) > 0 else "synthetic")


def test_extract_with_post_processing_differs(smoke_dir, tmp_path):
    m = _three_record_manifest(smoke_dir, tmp_path)
    main(["extract", str(m), str(tmp_path / "a.csv")])
    main(["extract", str(m), str(tmp_path / "b.csv"), "--post-process", "jpeg:80"])
    _, _, a = read_feature_csv(tmp_path / "a.csv")
    _, _, b = read_feature_csv(tmp_path / "b.csv")
    assert not np.array_equal(a, b)


def test_augment_writes_manifest_with_provenance(smoke_dir, tmp_path):
    m = _three_record_manifest(smoke_dir, tmp_path)
    out = tmp_path / "aug"
    assert main(["augment", str(m), "jpeg:90", str(out)]) == 0
    aug = load_manifest(out / "manifest.jsonl")
    assert len(aug) == 3
    assert aug.records[0].original_id == "real_000_00"
    assert aug.records[0].post_process == "jpeg:90#seed=0"
    assert aug.records[0].path.suffix == ".jpg"


def test_patches_and_pca(smoke_dir, tmp_path, capsys):
    m = _three_record_manifest(smoke_dir, tmp_path)
    out = tmp_path / "p"
    assert main(["patches", str(m), str(out), "--n", "2", "--size", "64"]) == 0
    assert len(load_manifest(out / "manifest.jsonl")) == 6
    assert main(["pca", str(smoke_dir / "manifest.jsonl"), "--k", "3", "--generator", "ddpm",
                 "--per-class", "5", "--out-csv", str(tmp_path / "pca.csv"),
                 "--out-png", str(tmp_path / "pca.png")]) == 0
    with open(tmp_path / "pca.csv") as fh:
        assert len(list(csv.reader(fh))) == 11
    assert (tmp_path / "pca.png").is_file()


def test_ingest(smoke_dir, tmp_path, capsys):
    rows = ["id,score", "real_000_00,-1.0", "ddpm_000,2.0"]
    (tmp_path / "s.csv").write_text("\n".join(rows) + "\n")
    assert main(["ingest", str(tmp_path / "s.csv"), str(smoke_dir / "manifest.jsonl")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ddpm"]["auc"] == 1.0


def test_evaluate_from_yaml(smoke_dir, tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"manifest: {smoke_dir / 'manifest.jsonl'}\noutput_dir: out\n"
                   "features: [f_e_d4_H, f_h_d4_H]\npost_process: [jpeg:100]\n"
                   "regimes: [clean]\ndetector: {name: iforest, params: {n_trees: 20}}\n")
    assert main(["evaluate", str(cfg), "--seed", "3"]) == 0
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["seed"] == 3
    assert set(report["best_single"]) == {"pix2pix", "cyclegan", "sg2ada", "ddpm"}
    assert (out / "robustness_clean.csv").is_file()
    assert (out / "ranking.csv").is_file() and (out / "single_feature.csv").is_file()
    assert list(out.glob("roc_ddpm_*.csv"))
    assert "best single feature" in capsys.readouterr().out


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="bogus"):
        RunConfig.from_dict({"manifest": "m", "output_dir": "o", "bogus": 1})
    with pytest.raises(ConfigError, match="params"):
        RunConfig.from_dict({"manifest": "m", "output_dir": "o",
                             "detector": {"name": "iforest", "params": {"nu": 0.1}}})
    with pytest.raises(ConfigError, match="post_process"):
        RunConfig.from_dict({"manifest": "m", "output_dir": "o", "post_process": ["jpeg:85"]})
    cfg = RunConfig.from_dict({"manifest": "m", "output_dir": "o", "post_process": "grid"})
    assert len(cfg.post_process) == 9


@pytest.mark.parametrize("argv, code, kind", [
    (["extract", "/nonexistent/m.jsonl", "/tmp/x.csv"], 4, "missing_file"),
    (["score", "/nonexistent/model.json", "f.csv", "o.csv"], 4, "missing_file"),
])
def test_missing_inputs(argv, code, kind, capsys):
    assert main(argv) == code
    assert _err(capsys)["error"] == kind


def test_error_codes(smoke_dir, tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x"}\n')
    assert main(["extract", str(bad), str(tmp_path / "o.csv")]) == 5
    err = _err(capsys)
    assert err["exit_code"] == 5 and "line 1" in err["message"]

    junk = tmp_path / "model.json"
    junk.write_text('{"magic": "nope"}')
    (tmp_path / "f.csv").write_text("id,label,generator,f_c_d4_H\na,real,none,1.0\n")
    assert main(["score", str(junk), str(tmp_path / "f.csv"), str(tmp_path / "o.csv")]) == 6

    cfg = tmp_path / "c.json"
    cfg.write_text('{"manifest": "m"}')
    assert main(["evaluate", str(cfg)]) == 3

    (tmp_path / "one.csv").write_text("id,label,generator,f_c_d4_H\na,real,none,1.0\n")
    assert main(["train", str(tmp_path / "one.csv"), str(tmp_path / "m.json"),
                 "--feature", "f_c_d4_H"]) == 5


def test_convergence_exit_code(tmp_path, monkeypatch):
    from blotforensics.detectors import ocsvm
    rows = ["id,label,generator,f_c_d4_H"] + [f"r{i},real,none,{i * 0.37 % 1}" for i in range(30)]
    (tmp_path / "f.csv").write_text("\n".join(rows) + "\n")
    # a solver that stops with a large KKT gap
    monkeypatch.setattr(ocsvm, "solve_dual", lambda *a, **k: (np.full(30, 1 / 30), 0.0, 1.0, 1))
    assert main(["train", str(tmp_path / "f.csv"), str(tmp_path / "m.json"),
                 "--detector", "ocsvm", "--feature", "f_c_d4_H"]) == 7


def test_usage_error_and_version():
    proc = subprocess.run([sys.executable, "-m", "blotforensics", "frobnicate"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "blotforensics", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "model format 1" in proc.stdout


def test_smoke_command(tmp_path, capsys):
    assert main(["smoke", str(tmp_path / "s"), "--sources", "4", "--fakes", "2",
                 "--generators", "ddpm"]) == 0
    assert len(load_manifest(tmp_path / "s" / "manifest.jsonl")) == 6
