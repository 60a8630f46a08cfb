"""
common.py — Shared request/response models and error mapping for the routers
"""

from typing import Any, Dict, Optional

from fastapi import HTTPException
from pydantic import BaseModel, Field

from tools.errors import EEGDMError, NumericalError


# --- Request/Response Models ---
class CommandRequest(BaseModel):
    config: str = Field(..., description="Path to a TOML run configuration on the server")
    out: Optional[str] = Field(None, description="Output directory; defaults to <output.directory>/<command>")
    seed: Optional[int] = Field(None, description="Single seed overriding train.seeds")


class CheckpointRequest(CommandRequest):
    checkpoint: str = Field(..., description="Path to a model archive on the server")


class CommandResponse(BaseModel):
    command: str
    result: Dict[str, Any]


# --- Error mapping ---
def to_http(e: EEGDMError) -> HTTPException:
    """Validation failures become 400, numerical failures 500."""
    if isinstance(e, NumericalError):
        return HTTPException(status_code=500, detail=f"Numerical failure: {e}")
    return HTTPException(status_code=400, detail=str(e))
