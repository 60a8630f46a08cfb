"""HTTP routers over the command layer."""

import pytest
from fastapi.testclient import TestClient

from main import app
from tests.helpers import tiny_raw_config, write_toml


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_landing_page(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "EEG latent diffusion toolkit" in response.text


def test_openapi_lists_operations(client):
    operations = {
        op["operationId"]
        for path in client.get("/openapi.json").json()["paths"].values()
        for op in path.values()
    }
    assert {"pretrain_eeg_diffusion", "generate_eeg_signals", "evaluate_classifier", "list_runs"} <= operations


def test_pretrain_then_list(client, tmp_path):
    config = write_toml(tiny_raw_config(train={"steps": 2}), tmp_path / "tiny.toml")
    response = client.post("/pretrain", json={"config": str(config), "out": str(tmp_path / "out"), "seed": 0})
    assert response.status_code == 200
    body = response.json()
    assert body["command"] == "pretrain"
    assert body["result"]["steps"] == 2

    runs = client.get("/runs", params={"command": "pretrain", "limit": 1})
    assert runs.status_code == 200
    assert runs.json()[0]["status"] == "ok"
    assert runs.json()[0]["output_dir"] == str((tmp_path / "out").resolve())


@pytest.mark.parametrize("route,extra", [
    ("/pretrain", {}),
    ("/generate", {"checkpoint": "/nonexistent/checkpoint.pt"}),
    ("/finetune", {"checkpoint": "/nonexistent/checkpoint.pt"}),
    ("/loso", {"checkpoint": "/nonexistent/checkpoint.pt"}),
])
def test_bad_config_is_client_error(client, tmp_path, route, extra):
    response = client.post(route, json={"config": str(tmp_path / "absent.toml"), **extra})
    assert response.status_code == 400
    assert "not found" in response.json()["detail"]


def test_missing_checkpoint_is_client_error(client, tmp_path):
    config = write_toml(tiny_raw_config(), tmp_path / "tiny.toml")
    response = client.post("/evaluate", json={"config": str(config), "checkpoint": str(tmp_path / "none.pt")})
    assert response.status_code == 400


def test_request_validation(client):
    assert client.post("/generate", json={"config": "x.toml"}).status_code == 422
    assert client.get("/runs", params={"limit": 0}).status_code == 422
