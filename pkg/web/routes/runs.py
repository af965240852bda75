"""
API-ruter for registrerte kjøringer.
"""

from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import APIRouter, HTTPException, Query
from fastapi.responses import FileResponse

from tem.database import get_run, list_runs
from tem.errors import TemError
from tem.harness import RunResult
from tem.report_generator import generate_report
from web.app import get_db_path

router = APIRouter()


def load_run(run_id: int) -> RunResult:
    """Hent en registrert kjøring fra disk, eller 404."""
    row = get_run(run_id, get_db_path())
    if row is None:
        raise HTTPException(status_code=404, detail=f"Kjøring {run_id} finnes ikke")
    try:
        return RunResult.load(row["run_dir"])
    except (TemError, OSError) as exc:
        raise HTTPException(status_code=404, detail=str(exc))


def _clean(value):
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    if isinstance(value, np.generic):
        return value.item()
    return value


@router.get("/runs")
async def runs(controller: Optional[str] = Query(None, description="nmpc eller baseline")):
    """Alle registrerte kjøringer."""
    return list_runs(get_db_path(), controller)


@router.get("/runs/{run_id}")
async def run_detail(run_id: int):
    """Registerrad, scenario-metadata og alle metrikker for én kjøring."""
    result = load_run(run_id)
    return {
        "run": get_run(run_id, get_db_path()),
        "scenario": result.scenario.metadata(),
        "metrics": {k: _clean(v) for k, v in result.metrics.items()},
        "violations": len(result.violations),
    }


@router.get("/runs/{run_id}/timeseries")
async def run_timeseries(
    run_id: int,
    columns: Optional[str] = Query(None, description="Kommaseparerte kolonner"),
    every: int = Query(1, ge=1, description="Ta med hvert n-te sample"),
):
    """Tidsserien som kolonnelister."""
    df = load_run(run_id).timeseries
    if columns:
        wanted = ["t_s"] + [c for c in columns.split(",") if c and c != "t_s"]
        missing = [c for c in wanted if c not in df.columns]
        if missing:
            raise HTTPException(status_code=400, detail=f"Ukjente kolonner: {', '.join(missing)}")
        df = df[wanted]
    df = df.iloc[::every]
    return {col: [_clean(v) for v in df[col].tolist()] for col in df.columns}


@router.get("/runs/{run_id}/report.pdf")
async def run_report(run_id: int):
    """Generer (ved behov) og last ned PDF-rapport for kjøringen."""
    result = load_run(run_id)
    path = Path(result.run_dir) / "report.pdf"
    if not path.exists():
        generate_report([result], str(path))
    return FileResponse(path=str(path), media_type="application/pdf", filename=f"run_{run_id}.pdf")
