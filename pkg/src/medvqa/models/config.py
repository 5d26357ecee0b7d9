"""Model hyperparameter configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from ..errors import ConfigError


class ImageEncoderKind(str, Enum):
    SMALL_CNN = "small_cnn"
    PRETRAINED = "pretrained_checkpoint"


class TextEncoderKind(str, Enum):
    BILSTM = "bilstm"
    POOLED_STUB = "pooled_transformer_stub"
    PRETRAINED = "pretrained_checkpoint"


class FusionKind(str, Enum):
    PRODUCT = "product"
    CONCAT = "concat"


# Four pooling stages each halve the spatial side.
MIN_SIDE = 16


@dataclass(frozen=True)
class ModelConfig:
    image_encoder: ImageEncoderKind = ImageEncoderKind.SMALL_CNN
    text_encoder: TextEncoderKind = TextEncoderKind.BILSTM
    d: int = 256
    text_vocab_size: int = 2
    embed_dim: int = 128
    hidden_dim: int = 128
    side: int = 64
    in_channels: int = 1
    cnn_channels: tuple[int, int, int, int] = (8, 16, 32, 64)
    fusion: FusionKind = FusionKind.PRODUCT
    head_hidden: int | None = None
    freeze_image: bool = False
    freeze_text: bool = False
    seed: int = 0
    image_checkpoint: str | None = None
    text_checkpoint: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "image_encoder", ImageEncoderKind(self.image_encoder))
        object.__setattr__(self, "text_encoder", TextEncoderKind(self.text_encoder))
        object.__setattr__(self, "fusion", FusionKind(self.fusion))
        object.__setattr__(self, "cnn_channels", tuple(self.cnn_channels))

    def validate(self) -> "ModelConfig":
        if self.d <= 0:
            raise ConfigError("embedding dimension d must be positive")
        if self.side < MIN_SIDE:
            raise ConfigError(f"image side must be >= {MIN_SIDE}, got {self.side}")
        if self.in_channels not in (1, 3):
            raise ConfigError("in_channels must be 1 or 3")
        if len(self.cnn_channels) != 4 or any(c <= 0 for c in self.cnn_channels):
            raise ConfigError("cnn_channels must be four positive integers")
        if self.text_vocab_size < 2:
            raise ConfigError("text_vocab_size must cover pad and unk ids")
        if self.embed_dim <= 0 or self.hidden_dim <= 0:
            raise ConfigError("embed_dim and hidden_dim must be positive")
        if self.head_hidden is not None and self.head_hidden <= 0:
            raise ConfigError("head_hidden must be positive when set")
        if self.freeze_image and self.image_encoder is not ImageEncoderKind.PRETRAINED:
            raise ConfigError("freeze_image requires image_encoder=pretrained_checkpoint")
        if self.freeze_text and self.text_encoder is not TextEncoderKind.PRETRAINED:
            raise ConfigError("freeze_text requires text_encoder=pretrained_checkpoint")
        return self

    def with_(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {
            "image_encoder": self.image_encoder.value,
            "text_encoder": self.text_encoder.value,
            "d": self.d,
            "text_vocab_size": self.text_vocab_size,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "side": self.side,
            "in_channels": self.in_channels,
            "cnn_channels": list(self.cnn_channels),
            "fusion": self.fusion.value,
            "head_hidden": self.head_hidden,
            "freeze_image": self.freeze_image,
            "freeze_text": self.freeze_text,
            "seed": self.seed,
            "image_checkpoint": self.image_checkpoint,
            "text_checkpoint": self.text_checkpoint,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})
