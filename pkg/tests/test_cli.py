import base64
import json
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from iseg3d.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from iseg3d.grids import read_grid
from iseg3d.model import build_model, save_checkpoint
from iseg3d.synthdata import CaseManifest

from conftest import tiny_model_config


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    code = main(
        [
            "gen-data", "--n", "12", "--out", str(data), "--seed", "3", "--grid-size", "16",
            "--config", str(_gen_cfg(root)),
        ]
    )
    assert code == EXIT_OK
    ckpt_dir = root / "ckpts"
    ckpt_dir.mkdir()
    model = build_model(tiny_model_config(), seed=1)
    save_checkpoint(model, ckpt_dir / "tiny.pt")
    return {"root": root, "data": data, "ckpt": ckpt_dir / "tiny.pt", "ckpt_dir": ckpt_dir}


def _gen_cfg(root):
    path = root / "gen.json"
    path.write_text(json.dumps({"radius_range": [2.0, 4.0], "deformation_amplitude": 1.0}))
    return path


def test_unknown_flag_exits_usage():
    with pytest.raises(SystemExit) as err:
        main(["gen-data", "--n", "10", "--out", "x", "--frobnicate"])
    assert err.value.code == EXIT_USAGE


def test_unknown_command_exits_usage():
    with pytest.raises(SystemExit) as err:
        main(["transmogrify"])
    assert err.value.code == EXIT_USAGE


def test_gen_data_wrote_dataset(workspace):
    manifest = CaseManifest.load(workspace["data"] / "manifest.json")
    assert len(manifest.cases) == 12
    first = manifest.cases[0]
    assert read_grid(first.image_path).shape == (16, 16, 16)


def test_gen_data_bad_config_is_data_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["gen-data", "--n", "10", "--out", str(tmp_path / "d"), "--config", str(bad)]) == EXIT_DATA


def test_train_and_eval_roundtrip(workspace, tmp_path):
    cfg = tmp_path / "train.json"
    cfg.write_text(
        json.dumps(
            {
                "iterations": 2,
                "epochs": 1,
                "batch_size": 2,
                "augment": False,
                "model": {
                    "patch_size": [16, 16, 16],
                    "base_channels": 4,
                    "depth": 2,
                    "embed_dim": 32,
                    "attention_heads": 2,
                    "transformer_blocks": 1,
                    "interaction_blocks": 1,
                },
            }
        )
    )
    out = tmp_path / "run"
    code = main(
        ["train", "--data", str(workspace["data"] / "manifest.json"), "--out", str(out), "--config", str(cfg), "--seed", "4"]
    )
    assert code == EXIT_OK
    assert (out / "best.pt").exists() and (out / "train_log.jsonl").exists()

    report = tmp_path / "report.json"
    code = main(
        [
            "eval", "--checkpoint", str(out / "best.pt"), "--data", str(workspace["data"] / "manifest.json"),
            "--points", "1", "--box", "tight", "--scribbles", "off", "--iterations", "2",
            "--out", str(report), "--seed", "1",
        ]
    )
    assert code == EXIT_OK
    doc = json.loads(report.read_text())
    assert doc["schema_version"] == 1
    assert len(doc["dice_mean"]) == 2


def test_eval_missing_checkpoint_is_data_error(workspace, tmp_path):
    code = main(
        ["eval", "--checkpoint", str(tmp_path / "nope.pt"), "--data", str(workspace["data"] / "manifest.json")]
    )
    assert code == EXIT_DATA


def test_simulate_under_60s(workspace, tmp_path):
    out = tmp_path / "curves.json"
    t0 = time.time()
    code = main(
        [
            "simulate", "--checkpoint", str(workspace["ckpt"]), "--data", str(workspace["data"] / "manifest.json"),
            "--cases", "2", "--out", str(out), "--seed", "2",
        ]
    )
    elapsed = time.time() - t0
    assert code == EXIT_OK
    assert elapsed < 60.0
    doc = json.loads(out.read_text())
    assert doc["n_cases"] == 2


def test_export_replays_archive(workspace, tmp_path):
    from fastapi.testclient import TestClient

    from iseg3d.model import load_checkpoint
    from iseg3d.server import create_app

    model, _ = load_checkpoint(workspace["ckpt"])
    model.eval()
    app = create_app({"tiny": model})
    client = TestClient(app)
    sid = client.post(
        "/sessions",
        json={
            "version": 1, "checkpoint": "tiny",
            "synthetic": {"grid_size": [16, 16, 16], "radius_range": [2.0, 4.0], "deformation_amplitude": 1.0, "seed": 5, "case_seed": 0},
        },
    ).json()["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"version": 1, "points": [{"coord": [8, 8, 8], "label": 1}]})
    archive = client.get(f"/sessions/{sid}/export").json()
    arch_path = tmp_path / "session.json"
    arch_path.write_text(json.dumps(archive))

    out_mask = tmp_path / "replayed.vgrid"
    code = main(["export", "--archive", str(arch_path), "--checkpoint", str(workspace["ckpt"]), "--out", str(out_mask)])
    assert code == EXIT_OK
    replayed = read_grid(out_mask)
    import base64 as b64
    from iseg3d.grids import grid_from_bytes

    recorded = grid_from_bytes(b64.b64decode(archive["final_mask_b64"]))
    assert np.array_equal(replayed.data, recorded.data)


def test_export_bad_archive_is_data_error(workspace, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "other"}))
    code = main(["export", "--archive", str(bad), "--checkpoint", str(workspace["ckpt"]), "--out", str(tmp_path / "m.vgrid")])
    assert code == EXIT_DATA


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_binds_and_answers_health(workspace):
    import httpx

    port = _free_port()
    proc = subprocess.Popen(
        [
            sys.executable, "-m", "iseg3d.cli", "serve",
            "--checkpoint-dir", str(workspace["ckpt_dir"]), "--port", str(port),
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        deadline = time.time() + 30
        last_err = None
        while time.time() < deadline:
            try:
                r = httpx.get(f"http://127.0.0.1:{port}/healthz", timeout=1.0)
                assert r.status_code == 200
                assert r.json()["models"] == ["tiny"]
                break
            except (httpx.ConnectError, httpx.ReadTimeout) as e:
                last_err = e
                time.sleep(0.3)
        else:
            raise AssertionError(f"server never came up: {last_err}")
    finally:
        proc.terminate()
        proc.wait(timeout=10)
