"""HTTP inference service over a loaded checkpoint.

The model and vocabulary are loaded once, before the port is bound, and are
never mutated by a request, so concurrent handling is safe.
"""

from __future__ import annotations

import base64
import binascii
import time

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from ..images import preprocess_image_bytes
from ..models.fusion import ModelBundle, load_bundle, predict
from .schemas import (
    MAX_IMAGE_BYTES,
    HealthResponse,
    PredictRequest,
    PredictResponse,
    TopKEntry,
    VocabResponse,
)


def handle_predict(req: PredictRequest, bundle: ModelBundle) -> PredictResponse:
    """Decode, preprocess, and answer one request."""
    started = time.perf_counter()
    try:
        raw = base64.b64decode(req.image, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail="image is not valid base64")
    if len(raw) > MAX_IMAGE_BYTES:
        raise HTTPException(
            status_code=413,
            detail=f"decoded image is {len(raw)} bytes; limit is {MAX_IMAGE_BYTES}",
        )
    try:
        arr = preprocess_image_bytes(raw, bundle.config.side, bundle.config.in_channels)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    k = min(req.top_k, len(bundle.answer_vocab))
    pred = predict(arr, req.question, bundle, k=k)
    latency_ms = (time.perf_counter() - started) * 1000.0
    return PredictResponse(
        answer=pred.answer,
        confidence=pred.confidence,
        top_k=[TopKEntry(answer=a, prob=p) for a, p in pred.top_k],
        model_id=bundle.model_id,
        latency_ms=latency_ms,
    )


def create_app(bundle: ModelBundle) -> FastAPI:
    app = FastAPI(title="medvqa inference service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request, exc):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.exception_handler(Exception)
    async def on_internal_error(request, exc):
        return JSONResponse(status_code=500, content={"error": f"internal error: {exc}"})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", model=bundle.model_id)

    @app.get("/vocab", response_model=VocabResponse)
    def vocab() -> VocabResponse:
        return VocabResponse(answers=list(bundle.answer_vocab.answers))

    @app.post("/predict", response_model=PredictResponse)
    def predict_route(req: PredictRequest) -> PredictResponse:
        return handle_predict(req, bundle)

    return app


def serve(checkpoint_path, vocab_path=None, port: int = 8000, host: str = "127.0.0.1") -> None:
    """Load the model, then bind and run the service until interrupted."""
    import uvicorn

    bundle = load_bundle(checkpoint_path, vocab_path).eval()
    app = create_app(bundle)
    uvicorn.run(app, host=host, port=port, log_level="warning")
