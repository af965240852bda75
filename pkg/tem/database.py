"""
Kjøringsregister i SQLite.

Hver fullførte kjøring får én rad med katalog, kontroller, omgivelses-
temperatur, energi og komfort, slik at web-laget kan liste og hente dem.
"""

import logging
import os
import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

# Standard plassering, kan overstyres med TEM_DB_PATH miljøvariabel (web-drift)
_env_db_path = os.environ.get("TEM_DB_PATH")
DEFAULT_DB_PATH = Path(_env_db_path) if _env_db_path else Path(__file__).parent.parent / "data" / "runs.db"


def get_connection(db_path: Optional[Path] = None) -> sqlite3.Connection:
    """Opprett tilkobling til registeret."""
    if db_path is None:
        db_path = DEFAULT_DB_PATH
    db_path = Path(db_path)
    db_path.parent.mkdir(parents=True, exist_ok=True)

    conn = sqlite3.connect(str(db_path))
    conn.row_factory = sqlite3.Row  # Gir dict-lignende rader
    return conn


def init_database(db_path: Optional[Path] = None) -> None:
    """Opprett skjema hvis det ikke eksisterer."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("""
    CREATE TABLE IF NOT EXISTS runs (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        run_dir TEXT NOT NULL UNIQUE,
        name TEXT,
        controller TEXT NOT NULL,
        ambient_c REAL,
        seed INTEGER,
        horizon INTEGER,
        duration_s REAL,
        energy_wh REAL,
        time_to_setpoint_s REAL,
        comfort_fraction REAL,
        fallback_count INTEGER,
        created TEXT NOT NULL
    )
    """)
    conn.commit()
    conn.close()
    logger.debug("Register initialisert: %s", db_path or DEFAULT_DB_PATH)


def register_run(run_dir, name: str, controller: str, ambient_c: float, seed: int, horizon: int,
                 duration_s: float, metrics: dict, db_path: Optional[Path] = None) -> int:
    """Registrer (eller oppdater) en kjøring og returner id-en."""
    init_database(db_path)
    conn = get_connection(db_path)
    cursor = conn.cursor()
    run_dir = str(Path(run_dir).resolve())
    values = (
        name, controller, float(ambient_c), int(seed), int(horizon), float(duration_s),
        _real(metrics.get("energy_wh")), _real(metrics.get("time_to_setpoint_s")),
        _real(metrics.get("comfort_fraction")), int(metrics.get("fallback_count", 0)),
        datetime.now().isoformat(timespec="seconds"),
    )
    cursor.execute("SELECT id FROM runs WHERE run_dir = ?", (run_dir,))
    row = cursor.fetchone()
    if row is None:
        cursor.execute("""
            INSERT INTO runs (name, controller, ambient_c, seed, horizon, duration_s, energy_wh,
                              time_to_setpoint_s, comfort_fraction, fallback_count, created, run_dir)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        """, values + (run_dir,))
        run_id = cursor.lastrowid
    else:
        run_id = row["id"]
        cursor.execute("""
            UPDATE runs SET name = ?, controller = ?, ambient_c = ?, seed = ?, horizon = ?, duration_s = ?,
                            energy_wh = ?, time_to_setpoint_s = ?, comfort_fraction = ?,
                            fallback_count = ?, created = ?
            WHERE id = ?
        """, values + (run_id,))
    conn.commit()
    conn.close()
    return int(run_id)


def _real(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return None if value != value else value  # NaN -> NULL


def list_runs(db_path: Optional[Path] = None, controller: Optional[str] = None) -> list[dict]:
    init_database(db_path)
    conn = get_connection(db_path)
    if controller:
        rows = conn.execute("SELECT * FROM runs WHERE controller = ? ORDER BY id", (controller,)).fetchall()
    else:
        rows = conn.execute("SELECT * FROM runs ORDER BY id").fetchall()
    conn.close()
    return [dict(r) for r in rows]


def get_run(run_id: int, db_path: Optional[Path] = None) -> Optional[dict]:
    init_database(db_path)
    conn = get_connection(db_path)
    row = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
    conn.close()
    return dict(row) if row else None


def reset_database(db_path: Optional[Path] = None) -> None:
    """Slett og opprett registeret på nytt. ADVARSEL: Sletter alle rader!"""
    if db_path is None:
        db_path = DEFAULT_DB_PATH
    db_path = Path(db_path)
    if db_path.exists():
        os.remove(db_path)
        logger.info("Slettet eksisterende register: %s", db_path)
    init_database(db_path)
