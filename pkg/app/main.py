"""
Emotion Mixer Service
FastAPI service for run-time emotion-attribute control.

Endpoints:
- /mix and /sweep build manual attribute vectors from percentages
- /predict scores a feature vector with the trained pair rankers
- /classify runs the emotion probe
- /reload (API key) swaps in freshly trained models
"""

import logging
import os
from contextlib import asynccontextmanager
from typing import Optional

from dotenv import load_dotenv
from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import ValidationError

from . import __version__
from .config import LOG_FORMAT, LOG_LEVEL, PipelineConfig, load_config
from .errors import EmoMixError, ParseError
from .mixer import build_manual_vector, mixed_effect, percentages_from_vector, sweep
from .models import (
    ClassifyResponse,
    FeaturesRequest,
    HealthResponse,
    MixRequest,
    MixResponse,
    MixSpec,
    PredictResponse,
    SweepRequest,
    SweepResponse,
    SweepStep,
    normalize_label,
)
from .ranking import predict_attribute_vector
from .serprobe import classify
from .store import ModelStore

load_dotenv()

# ═══════════════════════════════════════════════════════════
# Configuration
# ═══════════════════════════════════════════════════════════

MODEL_DIR = os.getenv("EMOMIX_MODEL_DIR", "./out/models")
CONFIG_PATH = os.getenv("EMOMIX_CONFIG", "")
API_KEY = os.getenv("EMOMIX_API_KEY", "")  # Required for /reload
ENVIRONMENT = os.getenv("ENVIRONMENT", "development")

ALLOWED_ORIGINS = [
    origin.strip()
    for origin in os.getenv(
        "EMOMIX_ALLOWED_ORIGINS",
        "http://localhost:3000,http://localhost:5173,http://127.0.0.1:3000",
    ).split(",")
    if origin.strip()
]

logging.basicConfig(level=LOG_LEVEL.upper(), format=LOG_FORMAT)
logger = logging.getLogger(__name__)

# ═══════════════════════════════════════════════════════════
# Initialize Services
# ═══════════════════════════════════════════════════════════

pipeline_config: PipelineConfig = load_config(CONFIG_PATH or None)
store = ModelStore(model_dir=MODEL_DIR)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Startup and shutdown events"""
    logger.info(f"Starting emotion-mixer (env: {ENVIRONMENT})")
    logger.info(f"Model directory: {MODEL_DIR}")
    try:
        store.load()
        info = store.get_info()
        logger.info(
            f"✓ Models loaded: {len(info['pair_models'])} pair rankers, "
            f"probe {'loaded' if info['probe_loaded'] else 'absent'}"
        )
    except FileNotFoundError as e:
        logger.warning(f"{e} - /predict and /classify unavailable until POST /reload")
    except EmoMixError as e:
        logger.error(f"Failed to load models: {e.message}")

    yield

    logger.info("Shutting down emotion-mixer")


app = FastAPI(
    title="Emotion Mixer",
    description="Builds and predicts mixed-emotion attribute vectors",
    version=__version__,
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=ALLOWED_ORIGINS,
    allow_credentials=True,
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)


# ═══════════════════════════════════════════════════════════
# Security Dependencies
# ═══════════════════════════════════════════════════════════

async def verify_api_key(x_api_key: Optional[str] = Header(None)):
    """Verify API key for protected endpoints"""
    if not API_KEY:
        if ENVIRONMENT == "development":
            return True
        raise HTTPException(status_code=500, detail="EMOMIX_API_KEY not configured")

    if not x_api_key or x_api_key != API_KEY:
        raise HTTPException(status_code=401, detail="Invalid or missing API key")
    return True


def _http_error(error: EmoMixError) -> HTTPException:
    status = 400 if isinstance(error, ParseError) else 422
    return HTTPException(status_code=status, detail={"error": error.code, "message": error.message})


def _mix_spec(request: MixRequest) -> MixSpec:
    try:
        return MixSpec(
            primary_emotion=request.primary_emotion,
            reference_percentages=request.reference_percentages,
            mode=request.mode,
            primary_percentage=request.primary_percentage,
        )
    except EmoMixError as e:
        raise _http_error(e)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail={"error": "ConfigError", "message": e.errors()[0]["msg"]})


def _require_models():
    if not store.loaded:
        raise HTTPException(status_code=503, detail="Models not loaded. POST /reload after training.")


# ═══════════════════════════════════════════════════════════
# Endpoints
# ═══════════════════════════════════════════════════════════

@app.get("/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint - public"""
    info = store.get_info()
    return HealthResponse(
        status="healthy" if info["loaded"] else "degraded",
        models_loaded=info["loaded"],
        pair_models=info["pair_models"],
        probe_loaded=info["probe_loaded"],
        version=__version__,
        environment=ENVIRONMENT,
    )


@app.get("/version")
async def get_version():
    """Service version, feature layout and configured emotions - public"""
    return {
        "version": __version__,
        "layout_version": pipeline_config.layout_version,
        "emotion_set": pipeline_config.emotion_set,
        "primary_emotion": pipeline_config.primary_emotion,
        "models": store.get_info(),
    }


@app.post("/mix", response_model=MixResponse)
async def mix(request: MixRequest):
    """
    Manual attribute vector from percentages.

    Every configured reference emotion gets an entry; unlisted ones count as 0%.
    """
    spec = _mix_spec(request)
    try:
        vector = build_manual_vector(spec, pipeline_config.emotion_set)
    except EmoMixError as e:
        raise _http_error(e)

    return MixResponse(
        primary=vector.primary,
        source=vector.source,
        entries=vector.entries,
        percentages=percentages_from_vector(vector),
        mixed_effect=mixed_effect(spec),
    )


@app.post("/sweep", response_model=SweepResponse)
async def sweep_mix(request: SweepRequest):
    """One vector per step percentage of `emotion`"""
    spec = _mix_spec(request)
    try:
        vectors = sweep(spec, request.emotion, request.steps, pipeline_config.emotion_set)
    except EmoMixError as e:
        raise _http_error(e)

    return SweepResponse(
        primary=spec.primary_emotion,
        emotion=normalize_label(request.emotion),
        steps=[SweepStep(step=s, entries=v.entries) for s, v in zip(request.steps, vectors)],
    )


@app.post("/predict", response_model=PredictResponse)
async def predict(request: FeaturesRequest):
    """Predicted attribute vector for one 384-dim feature vector"""
    _require_models()
    primary = normalize_label(request.primary_emotion or pipeline_config.primary_emotion)
    references = [e for e in pipeline_config.emotion_set if e != primary]
    try:
        vector = predict_attribute_vector(store.models.values(), request.features, primary, references)
    except EmoMixError as e:
        raise _http_error(e)
    return PredictResponse(primary=vector.primary, source=vector.source, entries=vector.entries)


@app.post("/classify", response_model=ClassifyResponse)
async def classify_features(request: FeaturesRequest):
    """Probe probabilities for one feature vector"""
    _require_models()
    if store.probe is None:
        raise HTTPException(status_code=503, detail="Probe not loaded. Run probe-train, then POST /reload.")
    try:
        probabilities = classify(store.probe, request.features)
    except EmoMixError as e:
        raise _http_error(e)

    labels = store.probe.emotion_labels
    return ClassifyResponse(
        label=labels[int(probabilities.argmax())],
        probabilities={label: float(p) for label, p in zip(labels, probabilities)},
    )


@app.post("/reload", dependencies=[Depends(verify_api_key)])
async def reload_models():
    """
    Reload models from EMOMIX_MODEL_DIR.

    PROTECTED: Requires X-API-Key header outside development.
    """
    logger.info("Reload requested")
    try:
        store.reload()
    except FileNotFoundError as e:
        raise HTTPException(status_code=503, detail=str(e))
    except EmoMixError as e:
        raise _http_error(e)
    return {"success": True, **store.get_info()}
