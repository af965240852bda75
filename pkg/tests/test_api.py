"""
API-tester for FastAPI-endepunktene.

Bruker FastAPI TestClient med et midlertidig register, slik at testene
kjører isolert uten å påvirke registrerte kjøringer.
"""

from dataclasses import replace
from unittest.mock import patch

import pytest
from fastapi.testclient import TestClient

from tem.database import init_database, register_run
from tem.harness import RunResult


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def test_db(tmp_path, baseline_run_dir):
    """Midlertidig register med referansekjøringen og en kjøring ved −5 °C."""
    db_path = tmp_path / "test_api.db"
    init_database(db_path)
    result = RunResult.load(baseline_run_dir)
    register_run(baseline_run_dir, "test", "baseline", -10.0, 0, 5, 10.0, result.metrics, db_path)

    warmer = replace(result, scenario=replace(result.scenario, ambient=268.15))
    warmer_dir = warmer.save(tmp_path / "warmer")
    register_run(warmer_dir, "test", "baseline", -5.0, 0, 5, 10.0, warmer.metrics, db_path)
    return db_path


@pytest.fixture
def client(test_db):
    """
    FastAPI TestClient med testregisteret.

    Patcher DEFAULT_DB_PATH slik at lifespan-funksjonen bruker testregisteret.
    """
    import web.app as web_app_module

    with patch("tem.database.DEFAULT_DB_PATH", test_db):
        with TestClient(web_app_module.app, raise_server_exceptions=False) as c:
            yield c


# ---------------------------------------------------------------------------
# Hjelpefunksjoner
# ---------------------------------------------------------------------------

def assert_json_ok(response, expected_status=200):
    """Verifiser at respons er gyldig JSON med riktig statuskode."""
    assert response.status_code == expected_status, (
        f"Forventet {expected_status}, fikk {response.status_code}: {response.text[:200]}"
    )
    return response.json()


# ===========================================================================
# KJØRINGER
# ===========================================================================

class TestRuns:
    """Tester for /api/runs/* endepunkter."""

    def test_list(self, client):
        data = assert_json_ok(client.get("/api/runs"))
        assert len(data) == 2
        assert {r["ambient_c"] for r in data} == {-10.0, -5.0}

    def test_list_filtered(self, client):
        assert assert_json_ok(client.get("/api/runs?controller=nmpc")) == []
        assert len(assert_json_ok(client.get("/api/runs?controller=baseline"))) == 2

    def test_detail(self, client):
        data = assert_json_ok(client.get("/api/runs/1"))
        assert data["run"]["controller"] == "baseline"
        assert data["scenario"]["ambient_c"] == pytest.approx(-10.0)
        assert data["metrics"]["steps"] == 10
        assert data["metrics"]["energy_wh"] > 0

    def test_detail_missing(self, client):
        assert client.get("/api/runs/999").status_code == 404

    def test_timeseries_columns(self, client):
        data = assert_json_ok(client.get("/api/runs/1/timeseries?columns=T_cair,P_TEM_W"))
        assert list(data) == ["t_s", "T_cair", "P_TEM_W"]
        assert len(data["t_s"]) == 10

    def test_timeseries_every(self, client):
        data = assert_json_ok(client.get("/api/runs/1/timeseries?columns=T_cair&every=5"))
        assert data["t_s"] == [0.0, 5.0]

    def test_timeseries_unknown_column(self, client):
        assert client.get("/api/runs/1/timeseries?columns=finnes_ikke").status_code == 400

    def test_report_pdf(self, client):
        response = client.get("/api/runs/1/report.pdf")
        assert response.status_code == 200
        assert response.headers["content-type"] == "application/pdf"
        assert response.content[:4] == b"%PDF"


# ===========================================================================
# SAMMENLIGNING
# ===========================================================================

class TestCompare:
    """Tester for /api/compare."""

    def test_same_run(self, client):
        data = assert_json_ok(client.get("/api/compare?a=1&b=1"))
        energy = next(r for r in data["rows"] if r["metric"] == "energy_wh")
        assert energy["reduction_pct"] == pytest.approx(0.0)
        assert data["metadata"]["controller_a"] == "baseline"

    def test_mismatch(self, client):
        assert client.get("/api/compare?a=1&b=2").status_code == 409

    def test_missing_parameter(self, client):
        assert client.get("/api/compare?a=1").status_code == 422


# ===========================================================================
# FORSIDE
# ===========================================================================

def test_index(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "Kjøringer" in response.text
    assert "/api/runs/1/report.pdf" in response.text
