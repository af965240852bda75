"""
API-rute for parret sammenligning av to kjøringer.
"""

import numpy as np
from fastapi import APIRouter, HTTPException, Query

from tem.errors import ScenarioMismatchError
from tem.harness import compare
from web.routes.runs import load_run

router = APIRouter()


@router.get("/compare")
async def compare_runs(
    a: int = Query(..., description="Referansekjøring (A)"),
    b: int = Query(..., description="Kjøring som sammenlignes (B)"),
):
    """Metrikk for metrikk: A, B, differanse og energireduksjon i prosent."""
    try:
        report = compare(load_run(a), load_run(b))
    except ScenarioMismatchError as exc:
        raise HTTPException(status_code=409, detail=str(exc))
    rows = [{k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in row.items()}
            for row in report.rows.to_dict(orient="records")]
    return {"metadata": report.metadata, "rows": rows}
