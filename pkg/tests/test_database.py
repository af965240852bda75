"""Tester for tem.database: kjøringsregisteret."""

import pytest

from tem.database import get_connection, get_run, init_database, list_runs, register_run, reset_database


METRICS = {"energy_wh": 812.5, "time_to_setpoint_s": 640.0, "comfort_fraction": 0.97, "fallback_count": 2}


def _register(db_path, run_dir, controller="nmpc", metrics=METRICS, ambient_c=-10.0):
    return register_run(run_dir, "cold10", controller, ambient_c, 0, 30, 3600.0, metrics, db_path)


class TestInitDatabase:
    """Tester for init_database()."""

    def test_creates_db_file(self, tmp_path):
        db_path = tmp_path / "test.db"
        assert not db_path.exists()
        init_database(db_path)
        assert db_path.exists()

    def test_creates_runs_table(self, tmp_path):
        db_path = tmp_path / "test.db"
        init_database(db_path)
        conn = get_connection(db_path)
        cursor = conn.cursor()
        cursor.execute("SELECT name FROM sqlite_master WHERE type='table' AND name='runs'")
        assert cursor.fetchone() is not None
        conn.close()

    def test_idempotent(self, tmp_path):
        db_path = tmp_path / "test.db"
        init_database(db_path)
        init_database(db_path)
        assert list_runs(db_path) == []


class TestRegisterRun:
    """Tester for register_run()."""

    def test_insert(self, tmp_path):
        db_path = tmp_path / "test.db"
        run_id = _register(db_path, tmp_path / "a")
        row = get_run(run_id, db_path)
        assert row["controller"] == "nmpc"
        assert row["energy_wh"] == pytest.approx(812.5)
        assert row["fallback_count"] == 2
        assert row["run_dir"] == str((tmp_path / "a").resolve())

    def test_same_directory_updates(self, tmp_path):
        db_path = tmp_path / "test.db"
        first = _register(db_path, tmp_path / "a")
        second = _register(db_path, tmp_path / "a", metrics=dict(METRICS, energy_wh=700.0))
        assert first == second
        runs = list_runs(db_path)
        assert len(runs) == 1
        assert runs[0]["energy_wh"] == pytest.approx(700.0)

    def test_nan_stored_as_null(self, tmp_path):
        db_path = tmp_path / "test.db"
        run_id = _register(db_path, tmp_path / "a", metrics=dict(METRICS, time_to_setpoint_s=float("nan")))
        assert get_run(run_id, db_path)["time_to_setpoint_s"] is None


class TestQueries:
    """Tester for list_runs() og get_run()."""

    def test_filter_on_controller(self, tmp_path):
        db_path = tmp_path / "test.db"
        _register(db_path, tmp_path / "a", "nmpc")
        _register(db_path, tmp_path / "b", "baseline")
        _register(db_path, tmp_path / "c", "baseline")
        assert len(list_runs(db_path)) == 3
        assert [r["controller"] for r in list_runs(db_path, "baseline")] == ["baseline", "baseline"]

    def test_missing_run(self, tmp_path):
        db_path = tmp_path / "test.db"
        init_database(db_path)
        assert get_run(42, db_path) is None


class TestResetDatabase:
    """Tester for reset_database()."""

    def test_removes_rows(self, tmp_path):
        db_path = tmp_path / "test.db"
        _register(db_path, tmp_path / "a")
        reset_database(db_path)
        assert list_runs(db_path) == []

    def test_creates_missing(self, tmp_path):
        db_path = tmp_path / "ny.db"
        reset_database(db_path)
        assert db_path.exists()
