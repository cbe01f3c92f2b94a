from fastapi import FastAPI, status
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import numpy as np
import uvicorn

from api.models import EncodeRequest, EncodeResponse, EpisodeRequest, HealthResponse
from src.actions import default_registry
from src.embeddings import LogEncoder, load_or_fit_encoder
from src.exceptions import (
    ActionSpaceError, NetForgeException, PolicyError, ScenarioError,
)
from src.harness import run_episode
from src.logger import setup_logger
from src.scenarios import load_scenario
from src.schemas import EpisodeMetrics
import config

logger = setup_logger(__name__)

VERSION = "1.0.0"

app = FastAPI(
    title="NetForge Simulator API",
    description="Continuous-time cyber-defense episodes and log encoding",
    version=VERSION,
    docs_url="/docs",
    redoc_url="/redoc"
)

# CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

_encoder: dict = {}


def get_encoder() -> LogEncoder:
    """Frozen encoder, loaded (or fitted) on first use"""
    if "model" not in _encoder:
        _encoder["model"] = load_or_fit_encoder(config.ENCODER_MODEL_PATH)
    return _encoder["model"]


@app.get("/", tags=["Root"])
async def root():
    """Root endpoint"""
    return {
        "message": "NetForge Simulator API",
        "docs": "/docs",
        "health": "/health"
    }


@app.get("/health", response_model=HealthResponse, tags=["Health"])
async def health_check():
    """Health check endpoint"""
    try:
        registry_size = len(default_registry())
    except NetForgeException as e:
        logger.error(f"Health check failed: {str(e)}")
        registry_size = 0

    return HealthResponse(
        status="healthy" if registry_size == config.NUM_ACTION_TYPES else "degraded",
        version=VERSION,
        registry_size=registry_size,
        encoder_loaded="model" in _encoder
    )


@app.post("/episodes", response_model=EpisodeMetrics, tags=["Simulation"])
def run_episode_endpoint(request: EpisodeRequest):
    """Run one episode and return its metrics"""
    scenario = request.inline_scenario or load_scenario(request.scenario or "benchmark")
    if request.horizon is not None:
        scenario = scenario.model_copy(update={"horizon": request.horizon})
    logger.info(
        f"Episode request: {scenario.name}, {request.blue_policy} vs {request.red_policy}, "
        f"seed={request.seed}"
    )
    return run_episode(scenario, request.blue_policy, request.red_policy, request.seed,
                       preset=request.preset, encoder=_encoder.get("model"))


@app.post("/encode", response_model=EncodeResponse, tags=["Telemetry"])
def encode_text(request: EncodeRequest):
    """Embed raw log text with the frozen encoder"""
    encoder = get_encoder()
    vector = encoder.encode(request.text)
    norm = float(np.linalg.norm(vector))
    return EncodeResponse(
        dimension=encoder.dimension,
        norm=norm,
        out_of_vocabulary=norm == 0.0,
        embedding=vector.tolist()
    )


@app.exception_handler(NetForgeException)
async def netforge_exception_handler(request, exc):
    """Client mistakes map to 4xx, everything else to 500"""
    if isinstance(exc, (ScenarioError, PolicyError, ActionSpaceError)):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    else:
        code = status.HTTP_500_INTERNAL_SERVER_ERROR
    logger.error(f"{type(exc).__name__}: {str(exc)}")
    return JSONResponse(
        status_code=code,
        content={"detail": str(exc), "error": type(exc).__name__}
    )


if __name__ == "__main__":
    uvicorn.run(
        "api.app:app",
        host="0.0.0.0",
        port=8000,
        reload=True,
        log_level="info"
    )
