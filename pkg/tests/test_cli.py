import csv
import json

import pytest

from sleepdbn.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--out", str(d), "--seed", "4"]) == 0
    return d


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_preprocess_compresses(workdir):
    main(["preprocess", "--input", str(workdir / "cohort.csv"), "--out", str(workdir)])
    n_bouts = len(rows(workdir / "bouts.csv"))
    n_epochs = len(rows(workdir / "cohort.csv"))
    assert n_bouts < n_epochs / 4
    assert json.loads((workdir / "discretization.json").read_text())["tsso_edges"] == [90.0, 180.0, 270.0, 360.0]


def test_all_wake_subject_skipped(tmp_path):
    p = tmp_path / "c.csv"
    lines = ["subject_id,health_status,epoch_index,stage"]
    lines += [f"a,H,{i},W" for i in range(5)]
    cycle = ["N1", "N2", "N3", "N2", "R", "W"]
    stages = ["W"] + [cycle[k % 6] for k in range(30) for _ in range(1 + k % 7)]
    lines += [f"b,H,{i},{s}" for i, s in enumerate(stages)]
    p.write_text("\n".join(lines) + "\n")
    main(["preprocess", "--input", str(p), "--out", str(tmp_path)])
    log = json.loads((tmp_path / "run_log_preprocess.json").read_text())
    assert any("skipped a" in n for n in log["notes"])
    assert {r["subject_id"] for r in rows(tmp_path / "bouts.csv")} == {"b"}


def test_fit_predict_classify(workdir):
    c = str(workdir / "cohort.csv")
    main(["fit", "--input", c, "--out", str(workdir)])
    main(["predict", "--input", c, "--out", str(workdir)])
    first = (workdir / "predictions.csv").read_bytes()
    main(["predict", "--input", c, "--out", str(workdir)])
    assert (workdir / "predictions.csv").read_bytes() == first
    main(["classify", "--input", c, "--out", str(workdir)])
    report = {r["metric"]: r["value"] for r in rows(workdir / "classify_report.csv")}
    assert float(report["mean_ovr_auroc_pct"]) > 50
    post = rows(workdir / "posteriors.csv")
    assert len(post) == 52
    log = json.loads((workdir / "run_log_classify.json").read_text())
    assert log["seed"] == 0 and len(log["config_hash"]) == 16 and "model" in log["schemas"]


def test_deterministic_data_gives_perfect_accuracy(tmp_path):
    p = tmp_path / "c.csv"
    pattern = ["N1", "N2", "N3", "R"]
    lines = ["subject_id,health_status,epoch_index,stage"]
    for h in ("H", "CFS", "CFSFM"):
        for i in range(3):
            stages = [pattern[k % 4] for k in range(80) for _ in range(1 + (k * 3 + i) % 4)]
            lines += [f"{h}{i},{h},{j},{s}" for j, s in enumerate(stages)]
    p.write_text("\n".join(lines) + "\n")
    main(["fit", "--input", str(p), "--out", str(tmp_path), "--lag", "1", "--no-duration"])
    main(["predict", "--input", str(p), "--out", str(tmp_path)])
    summary = rows(tmp_path / "prediction_summary.csv")
    assert summary[-1]["accuracy_pct"] == "100.0 (0.0)"


def test_intervene_outputs(workdir):
    main(["fit", "--input", str(workdir / "cohort.csv"), "--out", str(workdir)])
    main(["intervene", "--out", str(workdir), "--replicates", "20", "--samples", "300"])
    est = rows(workdir / "estimates.csv")
    contrasts = {(r["condition"], r["reference"]) for r in est if r["analysis"] == "contrast"}
    assert contrasts == {("CFS", "H"), ("CFSFM", "H")}
    graphs = sorted(p.name for p in (workdir / "graphs").iterdir())
    assert len(graphs) == 3 * (1 + 5)


def test_intervene_lag1_skips_lag2(tmp_path, workdir):
    main(["fit", "--input", str(workdir / "cohort.csv"), "--out", str(tmp_path), "--lag", "1"])
    main(["intervene", "--out", str(tmp_path), "--replicates", "5", "--samples", "100"])
    log = json.loads((tmp_path / "run_log_intervene.json").read_text())
    assert any("lag-2 outputs skipped" in n for n in log["notes"])
    assert not any("lag2" in p.name for p in (tmp_path / "graphs").iterdir())


def test_config_file_and_report(tmp_path, workdir):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"input": str(workdir / "cohort.csv"), "out": str(tmp_path / "o")}))
    main(["report", "--config", str(cfg)])
    table = rows(tmp_path / "o" / "bout_stats.csv")
    assert [r["stage"] for r in table if r["stage"]] == ["W", "N1", "N2", "N3", "R"]


def test_model_schema_mismatch(tmp_path, workdir):
    (tmp_path / "model.json").write_text('{"schema": "sleepdbn.model/0"}')
    with pytest.raises(ValueError, match="schema"):
        main(["predict", "--input", str(workdir / "cohort.csv"), "--out", str(tmp_path)])
