"""Encoders, fusion, classification, and checkpoint handling."""

from .config import FusionKind, ImageEncoderKind, ModelConfig, TextEncoderKind
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoders import (
    BiLstmTextEncoder,
    MeanPoolTextEncoder,
    SmallCnnEncoder,
    build_image_encoder,
    build_text_encoder,
    encode_image,
    encode_text,
    image_to_tensor,
    tokens_to_tensors,
)
from .fusion import (
    ClassifierHead,
    ModelBundle,
    Prediction,
    VqaModel,
    build_model,
    bundle_from_checkpoint,
    bundle_to_checkpoint,
    classify,
    fuse,
    fuse_tensors,
    fused_dim,
    load_bundle,
    load_model_tensors,
    model_to_tensors,
    nll_loss,
    predict,
    softmax_f64,
)
from .contrastive import PretrainConfig, contrastive_loss, pretrain

__all__ = [
    "BiLstmTextEncoder",
    "Checkpoint",
    "ClassifierHead",
    "FusionKind",
    "ImageEncoderKind",
    "MeanPoolTextEncoder",
    "ModelBundle",
    "ModelConfig",
    "Prediction",
    "PretrainConfig",
    "SmallCnnEncoder",
    "TextEncoderKind",
    "VqaModel",
    "build_image_encoder",
    "build_model",
    "build_text_encoder",
    "bundle_from_checkpoint",
    "bundle_to_checkpoint",
    "classify",
    "contrastive_loss",
    "encode_image",
    "encode_text",
    "fuse",
    "fuse_tensors",
    "fused_dim",
    "image_to_tensor",
    "load_bundle",
    "load_checkpoint",
    "load_model_tensors",
    "model_to_tensors",
    "nll_loss",
    "predict",
    "pretrain",
    "save_checkpoint",
    "softmax_f64",
    "tokens_to_tensors",
]
