from fastapi import APIRouter

from app.common import CommandRequest, CommandResponse, to_http
from tools.commands import cmd_pretrain
from tools.errors import EEGDMError

router = APIRouter()


# --- Endpoint ---
@router.post(
    "/pretrain",
    operation_id="pretrain_eeg_diffusion",
    summary="Pre-train the EEG encoder and latent diffusion denoiser",
    description="Fits the PCA basis, trains encoder and DiT jointly and writes a checkpoint plus training curve.",
    response_model=CommandResponse,
    tags=["Pretraining"]
)
def pretrain(request: CommandRequest) -> CommandResponse:
    try:
        result = cmd_pretrain(request.config, request.out, request.seed)
    except EEGDMError as e:
        raise to_http(e)
    return CommandResponse(command="pretrain", result=result)
