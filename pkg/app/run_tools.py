from typing import List, Optional

from fastapi import APIRouter, HTTPException, Query
from sqlalchemy.exc import SQLAlchemyError

from tools.run_registry import RunSummary, list_runs

router = APIRouter()


# --- Endpoint ---
@router.get(
    "/runs",
    operation_id="list_runs",
    summary="List recorded runs",
    description="Most recent runs first, with status and the scalar metrics each run recorded.",
    response_model=List[RunSummary],
    tags=["Runs"]
)
def get_runs(
    command: Optional[str] = Query(None, description="Filter by command, e.g. pretrain"),
    limit: int = Query(50, ge=1, le=500, description="Maximum number of runs to return")
) -> List[RunSummary]:
    try:
        return list_runs(command=command, limit=limit)
    except SQLAlchemyError as e:
        raise HTTPException(status_code=500, detail=f"DB query failed: {e}")
