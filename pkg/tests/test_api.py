"""HTTP surface"""
import numpy as np
import pytest
from fastapi.testclient import TestClient

import api.app as api_app


@pytest.fixture
def client(encoder):
    api_app._encoder["model"] = encoder
    yield TestClient(api_app.app)
    api_app._encoder.clear()


def test_root(client):
    body = client.get("/").json()
    assert body["docs"] == "/docs"


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "healthy"
    assert body["registry_size"] == 32
    assert body["encoder_loaded"] is True


def test_run_episode(client):
    response = client.post("/episodes", json={
        "scenario": "benchmark:10", "blue_policy": "passive", "red_policy": "red-chain",
        "seed": 1, "horizon": 20,
    })
    assert response.status_code == 200
    body = response.json()
    assert body["scenario"] == "benchmark-10"
    assert body["final_tick"] == pytest.approx(20.0)


def test_unknown_policy_is_a_client_error(client):
    response = client.post("/episodes", json={"scenario": "benchmark:10", "blue_policy": "nope",
                                              "horizon": 5})
    assert response.status_code == 422
    assert response.json()["error"] == "PolicyError"


def test_unknown_scenario_is_a_client_error(client):
    response = client.post("/episodes", json={"scenario": "no-such-scenario", "horizon": 5})
    assert response.status_code == 422


def test_encode(client):
    response = client.post("/encode", json={
        "text": "<Event><System><EventID>4624</EventID></System><EventData>"
                "<Data Name=\"LogonType\">3</Data></EventData></Event>",
    })
    assert response.status_code == 200
    body = response.json()
    assert body["dimension"] == 128
    assert body["norm"] == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.norm(body["embedding"]) == pytest.approx(1.0, abs=1e-6)
    assert body["out_of_vocabulary"] is False


def test_encode_rejects_empty_text(client):
    assert client.post("/encode", json={"text": ""}).status_code == 422
