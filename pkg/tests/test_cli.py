import json
import math
import subprocess
import sys

import pytest
from fastapi.testclient import TestClient

from grasp_refinery import cli
from grasp_refinery.geometry import GraspPose
from grasp_refinery.service import ServiceState, create_app
from grasp_refinery.triage import STATS_HEADER

from conftest import SCENES, build_scene_dir, grasp_line


def run_cli(*argv):
    return cli.main(list(argv))


def pred_line(image_id, x, y, theta_deg, opening, jaw, confidence, prediction_id):
    return json.dumps(
        {
            "image_id": image_id,
            "x": x,
            "y": y,
            "theta_deg": theta_deg,
            "opening": opening,
            "jaw_size": jaw,
            "confidence": confidence,
            "prediction_id": prediction_id,
        }
    )


def write_predictions(path, hit_ids, miss_ids):
    """Hits copy a ground-truth pose; misses point far away from all labels."""
    lines = []
    for image_id in hit_ids:
        pose = SCENES[image_id][2][0]
        lines.append(
            pred_line(
                image_id,
                pose.center_x,
                pose.center_y,
                math.degrees(pose.angle),
                pose.opening,
                pose.jaw_size,
                0.9,
                f"hit-{image_id}",
            )
        )
    for image_id in miss_ids:
        width, height, _ = SCENES[image_id]
        lines.append(
            pred_line(image_id, width - 2, height - 2, 0, 4, 2, 0.8, f"miss-{image_id}")
        )
    path.write_text("".join(line + "\n" for line in lines))
    return path


@pytest.fixture
def workdir(tmp_path):
    build_scene_dir(tmp_path / "dataset")
    wd = tmp_path / "wd"
    wd.mkdir()
    return wd


def decide_queue(wd, verdicts=None):
    """Drain the CLI-produced queue through the HTTP service layer."""
    state = ServiceState.from_workdir(wd)
    client = TestClient(create_app(state))
    decided = []
    token = 0
    while True:
        response = client.get("/api/queue/next", params={"operator": "op"})
        if response.status_code == 204:
            break
        item = response.json()["item"]
        verdict = "true_negative"
        if verdicts:
            verdict = verdicts.get(item["item_id"], "true_negative")
        body = {
            "item_id": item["item_id"],
            "verdict": verdict,
            "operator": "op",
            "token": f"cli-tok-{token}",
        }
        assert client.post("/api/decisions", json=body).status_code == 200
        decided.append((item["item_id"], verdict))
        token += 1
    return decided


def test_usage_errors_exit_64(capsys):
    assert run_cli() == 64
    assert run_cli("import") == 64  # --dataset is required
    assert run_cli("simulate", "--scenes", "5", "--iterations", "2") == 64  # no --seed
    assert run_cli("--no-such-flag") == 64
    err = capsys.readouterr().err
    assert "error" in err


def test_help_exits_zero(capsys):
    assert run_cli("--help") == 0
    assert "refinery" in capsys.readouterr().out


def test_import_writes_version_zero(workdir, tmp_path, capsys):
    assert run_cli("import", "--workdir", str(workdir), "--dataset", str(tmp_path / "dataset")) == 0
    out = capsys.readouterr().out
    assert "images: 3" in out
    assert "digest: " in out
    manifest = json.loads((workdir / "versions" / "v000" / "manifest.json").read_text())
    assert manifest["version_id"] == 0
    assert len(manifest["entries"]) == 3


def test_import_missing_dataset_exits_2(workdir, tmp_path, capsys):
    assert run_cli("import", "--workdir", str(workdir), "--dataset", str(tmp_path / "nope")) == 2
    assert "io error" in capsys.readouterr().err


def test_import_does_not_touch_the_source(workdir, tmp_path):
    dataset = tmp_path / "dataset"
    before = sorted((p.name, p.stat().st_size) for p in dataset.iterdir())
    run_cli("import", "--workdir", str(workdir), "--dataset", str(dataset))
    after = sorted((p.name, p.stat().st_size) for p in dataset.iterdir())
    assert before == after


def full_flow(workdir, tmp_path, monkeypatch=None):
    dataset = tmp_path / "dataset"
    assert run_cli("import", "--workdir", str(workdir), "--dataset", str(dataset)) == 0
    predictions = write_predictions(
        tmp_path / "preds.ndjson", hit_ids=["scene_0002"], miss_ids=["scene_0001", "scene_0003"]
    )
    assert (
        run_cli("triage", "--workdir", str(workdir), "--predictions", str(predictions)) == 0
    )
    return predictions


def test_triage_builds_queue_and_report(workdir, tmp_path, capsys):
    full_flow(workdir, tmp_path)
    out = capsys.readouterr().out
    assert "iteration: 1" in out
    assert "flagged: 2" in out
    queue = json.loads((workdir / "queue.json").read_text())
    assert queue["iteration"] == 1
    assert [item["image_id"] for item in queue["items"]] == ["scene_0001", "scene_0003"]
    report = json.loads((workdir / "reports" / "triage_it001.json").read_text())
    assert report["evaluated"] == 3
    assert report["flagged"] == 2


def test_triage_refuses_duplicate_iteration(workdir, tmp_path, capsys):
    predictions = full_flow(workdir, tmp_path)
    assert (
        run_cli(
            "triage",
            "--workdir",
            str(workdir),
            "--predictions",
            str(predictions),
            "--iteration",
            "1",
        )
        == 1
    )
    assert "already started" in capsys.readouterr().err


def test_apply_and_export_materialize_ledger_state(workdir, tmp_path, capsys):
    full_flow(workdir, tmp_path)
    decide_queue(
        workdir,
        verdicts={"scene_0001": "fn_missing_label", "scene_0003": "fn_annotation_error"},
    )
    assert run_cli("apply", "--workdir", str(workdir)) == 0
    out = capsys.readouterr().out
    assert "version: 1" in out
    assert "annotations_pseudo: 1" in out
    v1 = json.loads((workdir / "versions" / "v001" / "manifest.json").read_text())
    ids = [e["image_id"] for e in v1["entries"]]
    assert "scene_0003" not in ids
    assert "scene_0001" in ids

    out_dir = tmp_path / "exported"
    assert run_cli("export", "--workdir", str(workdir), "--out", str(out_dir)) == 0
    exported = json.loads((out_dir / "manifest.json").read_text())
    assert exported["digest"] == v1["digest"]
    # pseudo labels survive the round trip through scene files
    assert any(e["grasps_pseudo"] == 1 for e in exported["entries"])


def test_stats_writes_series_and_figures(workdir, tmp_path, capsys):
    full_flow(workdir, tmp_path)
    decide_queue(workdir)
    capsys.readouterr()
    assert run_cli("stats", "--workdir", str(workdir)) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == STATS_HEADER
    stats_dir = workdir / "stats"
    assert (stats_dir / "stats.csv").read_text().startswith(STATS_HEADER)
    rows = json.loads((stats_dir / "stats.json").read_text())
    assert rows[0]["iteration"] == 1
    assert rows[0]["false_count"] == 2
    for figure in ("false_counts.png", "fn_tn_proportion.png"):
        data = (stats_dir / figure).read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1024


def test_evaluate_reports_accuracy(workdir, tmp_path, capsys):
    dataset = tmp_path / "dataset"
    run_cli("import", "--workdir", str(workdir), "--dataset", str(dataset))
    capsys.readouterr()
    predictions = write_predictions(
        tmp_path / "eval.ndjson", hit_ids=["scene_0001", "scene_0002"], miss_ids=["scene_0003"]
    )
    assert run_cli("evaluate", "--workdir", str(workdir), "--predictions", str(predictions)) == 0
    out = capsys.readouterr().out
    assert "evaluated: 3" in out
    assert "successes: 2" in out
    assert "accuracy: 0.666667" in out


def test_evaluate_without_coverage_exits_1(workdir, tmp_path, capsys):
    dataset = tmp_path / "dataset"
    run_cli("import", "--workdir", str(workdir), "--dataset", str(dataset))
    predictions = tmp_path / "eval.ndjson"
    predictions.write_text(pred_line("mystery", 5, 5, 0, 4, 2, 0.5, "p1") + "\n")
    assert run_cli("evaluate", "--workdir", str(workdir), "--predictions", str(predictions)) == 1


def test_threshold_precedence(workdir, tmp_path, monkeypatch):
    dataset = tmp_path / "dataset"
    run_cli("import", "--workdir", str(workdir), "--dataset", str(dataset))
    predictions = write_predictions(tmp_path / "p.ndjson", ["scene_0002"], ["scene_0001"])
    config = tmp_path / "refinery.cfg"
    config.write_text("threshold = 0.31\n# comment line\n")

    def report_threshold(iteration, *extra):
        assert (
            run_cli(
                "triage",
                "--workdir",
                str(workdir),
                "--predictions",
                str(predictions),
                "--iteration",
                str(iteration),
                *extra,
            )
            == 0
        )
        report = json.loads(
            (workdir / "reports" / f"triage_it{iteration:03d}.json").read_text()
        )
        return report["threshold"]

    # config file beats the built-in default
    assert report_threshold(1, "--config", str(config)) == 0.31
    # environment beats the config file
    monkeypatch.setenv("REFINERY_THRESHOLD", "0.42")
    assert report_threshold(2, "--config", str(config)) == 0.42
    # a flag beats everything
    assert report_threshold(3, "--config", str(config), "--threshold", "0.05") == 0.05
    # and the default applies when nothing else is set
    monkeypatch.delenv("REFINERY_THRESHOLD")
    assert report_threshold(4) == 0.2


def test_bad_env_value_exits_1(workdir, tmp_path, monkeypatch, capsys):
    dataset = tmp_path / "dataset"
    run_cli("import", "--workdir", str(workdir), "--dataset", str(dataset))
    predictions = write_predictions(tmp_path / "p.ndjson", ["scene_0002"], [])
    monkeypatch.setenv("REFINERY_THRESHOLD", "lots")
    assert (
        run_cli("triage", "--workdir", str(workdir), "--predictions", str(predictions)) == 1
    )
    assert "bad value for threshold" in capsys.readouterr().err
    monkeypatch.setenv("REFINERY_THRESHOLD", "7.5")
    assert (
        run_cli("triage", "--workdir", str(workdir), "--predictions", str(predictions)) == 1
    )


def test_simulate_full_run_and_reproducibility(tmp_path, capsys):
    args = [
        "simulate",
        "--scenes",
        "24",
        "--drop",
        "0.25",
        "--corrupt",
        "0.1",
        "--iterations",
        "3",
        "--seed",
        "11",
        "--noise",
        "0",
    ]
    wd1, wd2 = tmp_path / "run1", tmp_path / "run2"
    assert run_cli(*args, "--workdir", str(wd1)) == 0
    first_out = capsys.readouterr().out
    assert STATS_HEADER in first_out
    assert "final_digest: " in first_out
    assert run_cli(*args, "--workdir", str(wd2)) == 0

    # byte-identical primary outputs across reruns
    assert (wd1 / "ledger.ndjson").read_bytes() == (wd2 / "ledger.ndjson").read_bytes()
    assert (wd1 / "run_report.json").read_text() == (wd2 / "run_report.json").read_text()
    assert (wd1 / "stats" / "stats.csv").read_text() == (wd2 / "stats" / "stats.csv").read_text()
    m1 = json.loads((wd1 / "versions" / "v003" / "manifest.json").read_text())
    m2 = json.loads((wd2 / "versions" / "v003" / "manifest.json").read_text())
    assert m1["digest"] == m2["digest"]

    report = json.loads((wd1 / "run_report.json").read_text())
    assert report["seeds"] == {"corpus": 11, "loop": 11}
    assert report["corrupted"]["removed"] == report["corrupted"]["total"]
    assert (wd1 / "stats" / "false_counts.png").exists()
    assert (wd1 / "versions" / "v000" / "manifest.json").exists()


def test_simulate_refuses_existing_ledger(tmp_path, capsys):
    wd = tmp_path / "wd"
    args = ["simulate", "--scenes", "6", "--iterations", "1", "--seed", "3", "--workdir", str(wd)]
    assert run_cli(*args) == 0
    capsys.readouterr()
    assert run_cli(*args) == 1
    assert "already exists" in capsys.readouterr().err


def test_simulate_without_workdir_prints_only(tmp_path, capsys):
    assert run_cli("simulate", "--scenes", "6", "--iterations", "2", "--seed", "5") == 0
    out = capsys.readouterr().out
    assert out.startswith(STATS_HEADER.split(",")[0])
    assert "final_digest: " in out


def test_console_entry_point_runs():
    result = subprocess.run(
        [sys.executable, "-m", "grasp_refinery.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert "refinery" in result.stdout
