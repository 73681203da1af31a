import json
import socket
import threading
import time

import pytest
from fastapi.testclient import TestClient
from pydantic import ValidationError

from ptdgnn import pipeline
from ptdgnn.cli import main
from ptdgnn.config import RunConfig, derive_seed
from ptdgnn.nn import ParamStore
from ptdgnn.service import app

TINY = {
    "dataset": {"synthetic": {"n": 120, "m_per_node": 2, "seed": 1}},
    "features": {"attr_dim": 6},
    "sampler": {"depth": 2, "width": 12},
    "encoder": {"layers": 2, "hidden": 8},
    "pretrain": {"epochs": 2, "subgraphs_per_epoch": 2},
    "finetune": {"epochs": 2, "walks_per_node": 2},
    "repetitions": 2,
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY | {"output_dir": str(tmp_path / "run")}))
    return p


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        RunConfig.model_validate(TINY | {"extra": 1})
    with pytest.raises(ValidationError):
        RunConfig.model_validate(TINY | {"sampler": {"depth": 2, "wdith": 3}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"dataset": {}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate(TINY | {"split": {"ratios": [0.5, 0.5, 0.5, 0.5]}})


def test_hash_ignores_output_dir():
    a = RunConfig.model_validate(TINY | {"output_dir": "a"})
    b = RunConfig.model_validate(TINY | {"output_dir": "b"})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != RunConfig.model_validate(TINY | {"seed": 1}).config_hash()
    assert derive_seed(0, 0) != derive_seed(0, 1) and derive_seed(3, 2) == derive_seed(3, 2)


def _csvs(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_pretrain_finetune_eval_cycle(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["pretrain", "--config", str(cfg_path)]) == 0
    ckpt = out / "checkpoint.json"
    assert ckpt.exists() and (out / "checkpoint_epoch001.json").exists()
    ParamStore.load(ckpt)
    lines = (out / "pretrain_loss.csv").read_text().splitlines()
    assert lines[0] == "step,L_E,L_A,total,config_hash,seed" and len(lines) == 5
    assert main(["finetune", "--config", str(cfg_path), "--checkpoint", str(ckpt)]) == 0
    doc = json.loads((out / "eval_report.json").read_text())
    assert doc["variant"] == "PT-DGNN" and doc["summary"]["runs"] == 2
    assert main(["finetune", "--config", str(cfg_path), "--out", str(tmp_path / "npt")]) == 0
    assert json.loads((tmp_path / "npt" / "eval_report.json").read_text())["variant"] == "DGNN_npt"
    assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(ckpt)]) == 0
    assert (out / "eval_only.csv").exists()
    capsys.readouterr()
    assert main(["inspect", str(ckpt)]) == 0
    assert json.loads(capsys.readouterr().out)["encoder_config"]["hidden"] == 8


def test_edge_only_variant(tmp_path):
    cfg = RunConfig.model_validate(TINY | {"pretrain": TINY["pretrain"] | {"lambda_attr": 0.0}, "repetitions": 1})
    pre = pipeline.run_pretrain(cfg, tmp_path)
    assert pipeline.run_finetune_eval(cfg, pre["checkpoint"], tmp_path)["variant"] == "PT-DGNN_Edge"


def test_determinism(cfg_path, tmp_path):
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["pretrain", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert main(["finetune", "--config", str(cfg_path), "--out", str(out), "--checkpoint", str(out / "checkpoint.json")]) == 0
    a, b = _csvs(tmp_path / "a"), _csvs(tmp_path / "b")
    assert a and a == b


def test_seed_override_changes_hash(cfg_path, tmp_path):
    assert main(["pretrain", "--config", str(cfg_path), "--seed", "7", "--out", str(tmp_path / "s7")]) == 0
    first = (tmp_path / "s7" / "pretrain_loss.csv").read_text().splitlines()[1]
    assert first.endswith(",7")


def test_errors_are_json(cfg_path, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dataset": {"path": "x"}, "bogus": 1}))
    assert main(["pretrain", "--config", str(bad)]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config"
    assert main(["eval", "--config", str(cfg_path)]) != 0
    assert "checkpoint" in json.loads(capsys.readouterr().err)["message"]
    assert main(["finetune", "--config", str(cfg_path), "--checkpoint", str(tmp_path / "none.json")]) != 0
    assert json.loads(capsys.readouterr().err)["type"] == "FileNotFoundError"
    with pytest.raises(SystemExit):
        main(["sweep", "--config", str(cfg_path), "--axis", "colour"])
    with pytest.raises(pipeline.ConfigError):
        pipeline.run_sweep(RunConfig.load(cfg_path), "colour")


def test_sweep(cfg_path, tmp_path):
    out = tmp_path / "sw"
    args = ["sweep", "--config", str(cfg_path), "--out", str(out), "--axis", "base_model", "--values", '["gcn", "sgc"]']
    assert main(args) == 0
    rows = (out / "sweep_base_model.csv").read_text().splitlines()
    assert len(rows) == 5  # header + (pt, npt) per value
    assert {r.split(",")[2] for r in rows[1:]} == {"PT-DGNN", "DGNN_npt"}


def test_sweep_parallel_matches_serial(cfg_path, tmp_path):
    cfg = RunConfig.load(cfg_path)
    a = pipeline.run_sweep(cfg, "mask_ratio", [0.3, 0.5], jobs=1, out=tmp_path / "s1")
    b = pipeline.run_sweep(cfg, "mask_ratio", [0.3, 0.5], jobs=2, out=tmp_path / "s2")
    assert a["rows"] == b["rows"]


def test_gen_synthetic_and_inspect(tmp_path, capsys):
    path = tmp_path / "g.txt"
    assert main(["gen-synthetic", "--n", "50", "--m", "2", "--seed", "3", "--out", str(path)]) == 0
    capsys.readouterr()
    assert main(["inspect", str(path), "--undirected"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["nodes"] == 50 and sum(info["split_sizes"]) == info["edges"] == 97


def test_service_endpoints(tmp_path):
    client = TestClient(app)
    assert client.get("/health").json() == {"status": "ok"}
    cfg = TINY | {"output_dir": str(tmp_path / "svc"), "repetitions": 1}
    pre = client.post("/pretrain", json={"config": cfg})
    assert pre.status_code == 200 and pre.json()["steps"] == 4
    fin = client.post("/finetune", json={"config": cfg, "checkpoint": pre.json()["checkpoint"]})
    assert fin.status_code == 200 and fin.json()["variant"] == "PT-DGNN"
    assert client.post("/eval", json={"config": cfg}).status_code == 422
    assert client.post("/pretrain", json={"config": cfg | {"nope": 1}}).status_code == 422
    path = tmp_path / "g.txt"
    path.write_text("1 2 10\n2 3 20\n")
    assert client.post("/inspect", json={"path": str(path)}).json()["nodes"] == 3


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_thin_client_mode(cfg_path, tmp_path, capsys):
    import uvicorn

    port = _free_port()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        for _ in range(100):
            if server.started:
                break
            time.sleep(0.05)
        out = tmp_path / "remote"
        url = f"http://127.0.0.1:{port}"
        assert main(["pretrain", "--config", str(cfg_path), "--out", str(out), "--server", url]) == 0
        assert (out / "checkpoint.json").exists()
        assert json.loads(capsys.readouterr().out)["steps"] == 4
    finally:
        server.should_exit = True
        thread.join(timeout=5)
