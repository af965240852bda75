"""
FastAPI-applikasjon for TEM-kjøringer.
Tynt API-lag over kjøringsregisteret og artefaktene i tem-pakken.
"""

import os
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.requests import Request
from fastapi.templating import Jinja2Templates

from tem import database

# Konfigurer stier
WEB_DIR = Path(__file__).parent
TEMPLATES_DIR = WEB_DIR / "templates"

# Registerets sti (settes ved oppstart)
db_path: Optional[Path] = None


def get_db_path() -> Path:
    """Hent registerets sti. Brukes av ruter."""
    return db_path or database.DEFAULT_DB_PATH


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Initialiser registeret ved oppstart."""
    global db_path
    db_path = database.DEFAULT_DB_PATH
    database.init_database(db_path)
    yield


app = FastAPI(
    title="TEM",
    description="Kjøringer, sammenligninger og rapporter for termisk energistyring",
    version="1.0.0",
    lifespan=lifespan,
)

# CORS: tillat alt for lokal utvikling
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)

templates = Jinja2Templates(directory=str(TEMPLATES_DIR))

# Importer og registrer ruter
from web.routes.runs import router as runs_router
from web.routes.compare import router as compare_router

app.include_router(runs_router, prefix="/api")
app.include_router(compare_router, prefix="/api")


@app.get("/")
async def index(request: Request):
    """Server hovedsiden med kjøringslisten."""
    runs = database.list_runs(get_db_path())
    return templates.TemplateResponse(request, "index.html", {"runs": runs})


if __name__ == "__main__":
    import uvicorn
    host = os.environ.get("HOST", "0.0.0.0")
    port = int(os.environ.get("PORT", "8080"))
    uvicorn.run("web.app:app", host=host, port=port, reload=True)
