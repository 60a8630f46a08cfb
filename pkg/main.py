# main.py
from fastapi import FastAPI
from fastapi.responses import HTMLResponse
from fastapi_mcp import FastApiMCP

from app.downstream_tools import router as downstream_router
from app.generation_tools import router as generation_router
from app.pretrain_tools import router as pretrain_router
from app.run_tools import router as run_router


# Create a combined FastAPI app
app = FastAPI(
    title="EEGDM API",
    docs_url=None,
    redoc_url="/docs"
)

# Landing Page
@app.get("/", response_class=HTMLResponse, include_in_schema=False)
async def landing_page():
    return """
    <html>
        <head>
            <title>EEGDM API</title>
            <style>
                body { font-family: sans-serif; max-width: 900px; margin: 4rem auto; line-height: 1.6; }
                code { background: #f2f2f2; padding: 2px 4px; border-radius: 4px; }
            </style>
        </head>
        <body>
            <h1>EEG latent diffusion toolkit</h1>
            <p>Self-supervised EEG representation learning: a diffusion transformer denoises PCA latents
            of EEG windows, conditioned on an encoder's representation of augmented views. The encoder is
            then fine-tuned with a linear head.</p>

            <h2>API Endpoints</h2>
            <ul>
                <li><code>POST /pretrain</code> – Pre-train encoder + denoiser from a run config</li>
                <li><code>POST /generate</code> – Guided generation with quality report</li>
                <li><code>POST /finetune</code> – Linear-head fine-tuning (fixed or fraction split)</li>
                <li><code>POST /evaluate</code> – Metrics for a fine-tuned classifier</li>
                <li><code>POST /loso</code> – Leave-one-subject-out protocol</li>
                <li><code>POST /export-embeddings</code> – Representation CSV export</li>
                <li><code>GET /runs</code> – Run registry</li>
            </ul>

            <h2>Developer Resources</h2>
            <ul>
                <li><a href="/docs">Interactive Redoc</a></li>
                <li><a href="/openapi.json">OpenAPI Spec</a></li>
            </ul>
        </body>
    </html>
    """


# Register all routers at the root
app.include_router(pretrain_router)
app.include_router(generation_router)
app.include_router(downstream_router)
app.include_router(run_router)


# Register with FastApiMCP
mcp = FastApiMCP(
    app,
    name="EEGDM MCP",
    description=(
        "EEG latent diffusion pre-training, generation and downstream evaluation, "
        "exposed as tools over the same commands as the CLI."
    ),
    describe_full_response_schema=True,
    describe_all_responses=True,
    include_operations=[
        "pretrain_eeg_diffusion",
        "generate_eeg_signals",
        "finetune_encoder",
        "evaluate_classifier",
        "leave_one_subject_out",
        "export_embeddings",
        "list_runs",
    ]
)


# Mount MCP HTTP interface
mcp.mount_http()
mcp.setup_server()

# Run server
if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
