import json
import threading

import numpy as np
import pytest

from glovecal import cli, so3
from glovecal.calibration import CalibrationResult
from glovecal.glove_sim import SensorExtrinsics

ZERO_NOISE = ["--noise", "sigma_static_deg=0", "--noise", "sigma_dynamic_deg=0",
              "--noise", "drift_rate_deg_per_sqrt_min=0", "--noise", "dorsal_sigma_pos_mm=0"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    doc = json.loads(out) if out.strip() else None
    return code, doc, err


@pytest.fixture(scope="module")
def clean_session(tmp_path_factory):
    d = tmp_path_factory.mktemp("clean")
    rec = d / "clean.fsgr"
    assert cli.main(["simulate", "--seed", "0", "-o", str(rec), *ZERO_NOISE]) == 0
    calib = d / "cal.json"
    assert cli.main(["calibrate", "-i", str(rec), "-o", str(calib)]) == 0
    return rec, calib


def test_usage_errors(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "simulate", "--seed", "abc")[0] == 1
    assert run(capsys, "evaluate", "nonsense")[0] == 1


def test_missing_model_file_is_config_error(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "-o", tmp_path / "x.fsgr", "--model", tmp_path / "nope.json")
    assert code == 2
    assert "nope.json" in err


def test_bad_config_files(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"bogus": 1}')
    assert run(capsys, "simulate", "--config", cfg, "-o", tmp_path / "x")[0] == 2
    cfg.write_text("{not json")
    assert run(capsys, "simulate", "--config", cfg, "-o", tmp_path / "x")[0] == 2
    assert run(capsys, "simulate", "--config", tmp_path / "missing.json")[0] == 2
    assert run(capsys, "simulate", "-o", tmp_path / "x", "--noise", "sigma_static_deg")[0] == 2
    assert run(capsys, "simulate", "-o", tmp_path / "x", "--scenario", "nowhere")[0] == 2


def test_missing_recording_and_corrupt_recording(capsys, tmp_path):
    assert run(capsys, "calibrate", "-i", tmp_path / "none.fsgr")[0] == 2
    bad = tmp_path / "bad.fsgr"
    bad.write_bytes(b"garbage" * 10)
    assert run(capsys, "calibrate", "-i", bad)[0] == 3


def test_config_merge_flags_win(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "noise": {"sigma_static_deg": 0.1, "sigma_dynamic_deg": 0.2},
                               "scenario": {"segments": [{"kind": "rest", "duration_s": 0.5}]}}))
    code, doc, _ = run(capsys, "simulate", "--config", cfg, "--seed", "7", "--noise", "sigma_static_deg=0.3",
                       "-o", tmp_path / "m.fsgr")
    assert code == 0
    key = json.loads((tmp_path / "m.fsgr.truth.json").read_text())
    assert key["scenario"]["seed"] == 7
    assert key["noise"]["sigma_static_deg"] == 0.3
    assert key["noise"]["sigma_dynamic_deg"] == 0.2
    assert doc["segments"] == ["rest"]


def test_simulate_is_reproducible(capsys, tmp_path):
    a = run(capsys, "simulate", "--seed", "3", "-o", tmp_path / "a.fsgr")[1]
    b = run(capsys, "simulate", "--seed", "3", "-o", tmp_path / "b.fsgr")[1]
    assert a["recording_sha256"] == b["recording_sha256"]
    assert (tmp_path / "a.fsgr").read_bytes() == (tmp_path / "b.fsgr").read_bytes()
    assert a["segments"] == ["rest", "x_rot", "y_rot",
                             "pinch_index", "pinch_middle", "pinch_ring", "pinch_little"]
    assert a["schema_version"] == cli.SCHEMA_VERSION


def test_calibrate_recovers_answer_key(clean_session):
    rec, calib = clean_session
    key = json.loads((rec.parent / (rec.name + ".truth.json")).read_text())
    truth = SensorExtrinsics.from_dict(key["extrinsics"])
    doc = json.loads(calib.read_text())
    got = CalibrationResult.from_dict(doc["pose"])
    assert so3.geodesic_angle(got.A, truth.A) < 1e-6
    assert np.max(so3.geodesic_angle(got.C, truth.C)) < 1e-6
    assert doc["shape"] is not None


def test_calibrate_report(capsys, clean_session):
    rec, _ = clean_session
    code, doc, err = run(capsys, "calibrate", "-i", rec)
    assert code == 0
    assert len(doc["residual_deg_per_sensor"]) == 16
    assert doc["max_residual_deg"] < 1e-4
    assert "sensor 15" in err
    assert doc["notes"] == []


def test_noisy_calibration_residuals(capsys, tmp_path):
    rec = tmp_path / "n.fsgr"
    assert run(capsys, "simulate", "--seed", "0", "-o", rec)[0] == 0
    code, doc, _ = run(capsys, "calibrate", "-i", rec)
    assert code == 0 and doc["max_residual_deg"] <= 2.7


def test_pose_only_calibration_notice(capsys, tmp_path):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"segments": [{"kind": k, "duration_s": 1.0} for k in ("rest", "x_rot", "y_rot")]}))
    rec = tmp_path / "p.fsgr"
    assert run(capsys, "simulate", "--scenario", sc, "-o", rec)[0] == 0
    code, doc, err = run(capsys, "calibrate", "-i", rec)
    assert code == 0
    assert doc["shape"] is None
    assert any("shape skipped" in n for n in doc["notes"])
    assert "shape skipped" in err


def test_reconstruct_zero_noise_matches_truth(capsys, clean_session, tmp_path):
    rec, calib = clean_session
    out = tmp_path / "poses.json"
    meshes = tmp_path / "meshes"
    code, doc, _ = run(capsys, "reconstruct", "-i", rec, "--calibration", calib, "-o", out,
                       "--mesh-dir", meshes, "--every", "500")
    assert code == 0
    poses = json.loads(out.read_text())["poses"]
    assert doc["frames"] == len(poses)
    with np.load(rec.parent / (rec.name + ".truth.npz")) as z:
        ts, joints = z["timestamps"], z["joint_rotations"]
    index = {int(t): k for k, t in enumerate(ts)}
    got = np.array([so3.quat_to_matrix(np.array(p["joint_rotations"])) for p in poses])
    want = joints[[index[p["timestamp_ns"]] for p in poses]]
    assert np.max(so3.geodesic_angle(got, want)) < 1e-6
    assert doc["meshes"] == len(list(meshes.glob("frame_*.obj"))) > 0


def test_reconstruct_requires_calibration(capsys, clean_session):
    rec, _ = clean_session
    assert run(capsys, "reconstruct", "-i", rec)[0] == 2


def test_model_hash_mismatch(capsys, clean_session, tmp_path):
    rec, calib = clean_session
    model = tmp_path / "m.json"
    assert run(capsys, "export-model", "-o", model)[0] == 0
    doc = json.loads(model.read_text())
    doc["name"] = "other hand"
    model.write_text(json.dumps(doc))
    code, _, err = run(capsys, "reconstruct", "-i", rec, "--calibration", calib, "--model", model)
    assert code == 2
    assert "model" in err


def test_export_model_round_trip(capsys, tmp_path):
    out, obj = tmp_path / "m.json", tmp_path / "m.obj"
    code, doc, _ = run(capsys, "export-model", "-o", out, "--obj", obj)
    assert code == 0
    assert obj.read_text().startswith(("v ", "#", "o "))
    code2, doc2, _ = run(capsys, "export-model", "--model", out, "-o", tmp_path / "again.json")
    assert doc2["model_hash"] == doc["model_hash"]


def test_replay_summary(capsys, clean_session):
    rec, _ = clean_session
    code, doc, _ = run(capsys, "replay", "-i", rec, "--speed", "max")
    assert code == 0
    assert doc["by_type"]["ImuSample"] == 16 * doc["by_type"]["DorsalSample"]
    assert doc["first_timestamp_ns"] < doc["last_timestamp_ns"]
    assert run(capsys, "replay", "-i", rec, "--speed", "fast")[0] == 2


def test_evaluate_joint(capsys):
    code, doc, _ = run(capsys, "evaluate", "joint", "--seed", "1")
    assert code == 0
    text = json.dumps(doc)
    assert all(k in text for k in ("bias_deg", "std_deg", "non_linearity_pct"))


def test_evaluate_pinch(capsys, clean_session, tmp_path):
    rec, calib = clean_session
    code, _, err = run(capsys, "evaluate", "pinch", "-i", rec, "--calibration", calib)
    assert code == 3 and "pinch" in err
    pinch = tmp_path / "pinch.fsgr"
    assert run(capsys, "simulate", "--scenario", "pinch", "-o", pinch)[0] == 0
    code, doc, _ = run(capsys, "evaluate", "pinch", "-i", pinch, "-o", tmp_path / "r.json")
    assert code == 0
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert json.loads((tmp_path / "r.json").read_text()) == doc


def test_evaluate_missing_truth(capsys, clean_session, tmp_path):
    rec, _ = clean_session
    assert run(capsys, "evaluate", "shape", "-i", rec, "--truth", tmp_path / "none.json")[0] == 2


def test_serve_and_record(capsys, tmp_path):
    from glovecal.acquisition.transport import record_stream

    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"segments": [{"kind": "rest", "duration_s": 1.0}]}))
    result = {}

    def serve():
        result["code"] = cli.main(["serve", "--scenario", str(sc), "--seed", "4", "--port", "0",
                                   "--speed", "max", "--timeout", "10"])

    import glovecal.cli as mod

    ports = []
    orig = mod._listening
    mod._listening = lambda p: (ports.append(p), orig(p))
    try:
        t = threading.Thread(target=serve)
        t.start()
        import time
        for _ in range(200):
            if ports:
                break
            time.sleep(0.01)
        live = tmp_path / "live.fsgr"
        res = record_stream("127.0.0.1", ports[0], live)
        t.join(20)
    finally:
        mod._listening = orig
    capsys.readouterr()
    assert result["code"] == 0 and not res.truncated
    offline = tmp_path / "off.fsgr"
    assert run(capsys, "simulate", "--scenario", sc, "--seed", "4", "-o", offline)[0] == 0
    assert live.read_bytes() == offline.read_bytes()


def test_record_without_server(capsys, tmp_path):
    from glovecal.acquisition.transport import Broadcaster

    b = Broadcaster()
    port = b.port
    b.close()
    code, _, _ = run(capsys, "record", "--port", port, "-o", tmp_path / "r.fsgr", "--timeout", "0.3")
    assert code == 2
