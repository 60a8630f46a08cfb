from fastapi import APIRouter

from app.common import CheckpointRequest, CommandResponse, to_http
from tools.commands import cmd_evaluate, cmd_export_embeddings, cmd_finetune, cmd_loso
from tools.errors import EEGDMError
from tools.metrics import MetricsReport

router = APIRouter(tags=["Downstream"])


# --- Endpoints ---
@router.post(
    "/finetune",
    operation_id="finetune_encoder",
    summary="Fine-tune the pre-trained encoder with a linear head",
    description="Fixed or fraction split, one run per seed; returns per-seed reports and their mean/std.",
    response_model=CommandResponse,
)
def finetune(request: CheckpointRequest) -> CommandResponse:
    try:
        result = cmd_finetune(request.config, request.checkpoint, request.out, request.seed)
    except EEGDMError as e:
        raise to_http(e)
    return CommandResponse(command="finetune", result=result)


@router.post(
    "/evaluate",
    operation_id="evaluate_classifier",
    summary="Evaluate a fine-tuned classifier",
    description="Balanced accuracy, AUROC, weighted F1, Cohen's kappa and confusion matrix on the evaluation subjects.",
    response_model=MetricsReport,
)
def evaluate(request: CheckpointRequest) -> MetricsReport:
    try:
        result = cmd_evaluate(request.config, request.checkpoint, request.out)
    except EEGDMError as e:
        raise to_http(e)
    return MetricsReport.model_validate(result)


@router.post(
    "/loso",
    operation_id="leave_one_subject_out",
    summary="Leave-one-subject-out fine-tuning and evaluation",
    response_model=CommandResponse,
)
def loso(request: CheckpointRequest) -> CommandResponse:
    try:
        result = cmd_loso(request.config, request.checkpoint, request.out, request.seed)
    except EEGDMError as e:
        raise to_http(e)
    return CommandResponse(command="loso", result=result)


@router.post(
    "/export-embeddings",
    operation_id="export_embeddings",
    summary="Export encoder representations to CSV",
    response_model=CommandResponse,
)
def export_embeddings(request: CheckpointRequest) -> CommandResponse:
    try:
        result = cmd_export_embeddings(request.config, request.checkpoint, request.out, request.seed)
    except EEGDMError as e:
        raise to_http(e)
    return CommandResponse(command="export-embeddings", result=result)
