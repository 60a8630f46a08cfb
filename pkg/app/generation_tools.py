from typing import Optional

from fastapi import APIRouter
from pydantic import Field

from app.common import CheckpointRequest, CommandResponse, to_http
from tools.commands import cmd_generate
from tools.errors import EEGDMError

router = APIRouter()


# --- Request Models ---
class GenerateRequest(CheckpointRequest):
    n: int = Field(8, gt=0, description="Number of signals to generate")
    scale: Optional[float] = Field(None, ge=0, description="Guidance scale; defaults to diffusion.guidance_scale")


# --- Endpoint ---
@router.post(
    "/generate",
    operation_id="generate_eeg_signals",
    summary="Generate EEG signals conditioned on evaluation samples",
    description="Runs the guided ancestral sampler, writes EEGB files and reports time/frequency Pearson correlation.",
    response_model=CommandResponse,
    tags=["Generation"]
)
def generate(request: GenerateRequest) -> CommandResponse:
    try:
        result = cmd_generate(request.config, request.checkpoint, request.n, request.scale, request.seed, request.out)
    except EEGDMError as e:
        raise to_http(e)
    return CommandResponse(command="generate", result=result)
