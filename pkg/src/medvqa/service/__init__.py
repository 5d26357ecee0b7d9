"""HTTP inference service."""

from .app import create_app, handle_predict, serve
from .schemas import (
    MAX_IMAGE_BYTES,
    ErrorResponse,
    HealthResponse,
    PredictRequest,
    PredictResponse,
    TopKEntry,
    VocabResponse,
)

__all__ = [
    "MAX_IMAGE_BYTES",
    "ErrorResponse",
    "HealthResponse",
    "PredictRequest",
    "PredictResponse",
    "TopKEntry",
    "VocabResponse",
    "create_app",
    "handle_predict",
    "serve",
]
