"""Request/response bodies for the inference service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

MAX_IMAGE_BYTES = 8 * 1024 * 1024  # decoded size cap


class PredictRequest(BaseModel):
    image: str = Field(description="base64-encoded PNG or JPEG bytes")
    question: str
    top_k: int = Field(default=5, ge=1)


class TopKEntry(BaseModel):
    answer: str
    prob: float


class PredictResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    answer: str
    confidence: float = Field(ge=0.0, le=1.0)
    top_k: list[TopKEntry]
    model_id: str
    latency_ms: float


class HealthResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    status: str
    model: str


class VocabResponse(BaseModel):
    answers: list[str]


class ErrorResponse(BaseModel):
    error: str
