"""Embedding fusion, answer classification, and the end-to-end predict path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..corpus import AnswerVocabulary, TextVocab, TokenSequence, tokenize
from ..errors import ConfigError, ShapeError
from .checkpoint import Checkpoint, load_checkpoint
from .config import FusionKind, ImageEncoderKind, ModelConfig, TextEncoderKind
from .encoders import (
    BiLstmTextEncoder,
    MeanPoolTextEncoder,
    SmallCnnEncoder,
    build_image_encoder,
    build_text_encoder,
    image_to_tensor,
    tokens_to_tensors,
)


def fuse_tensors(img: torch.Tensor, txt: torch.Tensor, kind: FusionKind) -> torch.Tensor:
    if img.shape[-1] != txt.shape[-1]:
        raise ShapeError(
            f"fusion needs equal embedding dims, got {img.shape[-1]} and {txt.shape[-1]}"
        )
    if kind is FusionKind.PRODUCT:
        return img * txt
    return torch.cat([img, txt], dim=-1)


def fuse(img, txt, kind: FusionKind | str = FusionKind.PRODUCT):
    """Combine two embeddings: elementwise product or concatenation.

    Accepts torch tensors (returned as tensors, batching preserved) or any
    array-likes (returned as float32 numpy arrays).
    """
    kind = FusionKind(kind)
    if isinstance(img, torch.Tensor) and isinstance(txt, torch.Tensor):
        return fuse_tensors(img, txt, kind)
    a = np.asarray(img, dtype=np.float32)
    b = np.asarray(txt, dtype=np.float32)
    if a.shape != b.shape:
        raise ShapeError(f"fusion needs equal shapes, got {a.shape} and {b.shape}")
    if kind is FusionKind.PRODUCT:
        return a * b
    return np.concatenate([a, b], axis=-1)


def fused_dim(d: int, kind: FusionKind) -> int:
    return d if kind is FusionKind.PRODUCT else 2 * d


class ClassifierHead(nn.Module):
    """Linear map to answer logits, optionally through one tanh hidden layer."""

    def __init__(self, in_dim: int, n_answers: int, hidden: int | None = None):
        super().__init__()
        self.in_dim = in_dim
        self.n_answers = n_answers
        self.hidden_dim = hidden
        if hidden is None:
            self.hidden = None
            self.out = nn.Linear(in_dim, n_answers)
        else:
            self.hidden = nn.Linear(in_dim, hidden)
            self.out = nn.Linear(hidden, n_answers)

    def reset_parameters(self, gen: torch.Generator) -> None:
        from .encoders import _uniform_, _zero_

        if self.hidden is not None:
            _uniform_(self.hidden.weight, self.in_dim, gen)
            _zero_(self.hidden.bias)
            _uniform_(self.out.weight, self.hidden_dim, gen)
        else:
            _uniform_(self.out.weight, self.in_dim, gen)
        _zero_(self.out.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"head expects input dim {self.in_dim}, got {x.shape[-1]}")
        if self.hidden is not None:
            x = torch.tanh(self.hidden(x))
        return self.out(x)


def softmax_f64(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax in float64; sums to 1 within 1e-9."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classify(fused, head: ClassifierHead, vocab: AnswerVocabulary | None = None) -> np.ndarray:
    """Run the head on a fused vector and return the answer distribution."""
    x = torch.as_tensor(np.asarray(fused, dtype=np.float32))
    single = x.dim() == 1
    if single:
        x = x.unsqueeze(0)
    if vocab is not None and head.n_answers != len(vocab):
        raise ShapeError(
            f"head emits {head.n_answers} classes but vocabulary has {len(vocab)}"
        )
    with torch.no_grad():
        logits = head(x).numpy()
    probs = softmax_f64(logits)
    return probs[0] if single else probs


def nll_loss(probabilities, target_index: int) -> float:
    """Negative log-likelihood of the target class under a distribution."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError(f"expected a probability vector, got shape {p.shape}")
    if not 0 <= target_index < p.shape[0]:
        raise ValueError(f"target index {target_index} out of range [0, {p.shape[0]})")
    return float(-np.log(p[target_index]))


class VqaModel(nn.Module):
    """Image encoder + question encoder + fusion + classifier head."""

    def __init__(
        self,
        config: ModelConfig,
        image_encoder: SmallCnnEncoder,
        text_encoder: nn.Module,
        head: ClassifierHead,
    ):
        super().__init__()
        self.config = config
        self.image_encoder = image_encoder
        self.text_encoder = text_encoder
        self.head = head

    @property
    def n_answers(self) -> int:
        return self.head.n_answers

    def forward(self, images: torch.Tensor, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        img = self.image_encoder(images)
        txt = self.text_encoder(ids, lengths)
        return self.head(fuse_tensors(img, txt, self.config.fusion))


def build_model(config: ModelConfig, n_answers: int) -> VqaModel:
    """Build a model with seeded initialization (or pretrained encoder weights)."""
    config.validate()
    if n_answers < 1:
        raise ConfigError("model needs at least one answer class")
    gen = torch.Generator().manual_seed(config.seed)
    image_encoder = build_image_encoder(config, gen)
    text_encoder = build_text_encoder(config, gen)
    head = ClassifierHead(fused_dim(config.d, config.fusion), n_answers, config.head_hidden)
    head.reset_parameters(gen)
    return VqaModel(config, image_encoder, text_encoder, head)


def model_to_tensors(model: VqaModel) -> dict[str, np.ndarray]:
    """Flatten model weights into checkpoint tensors with stable prefixes."""
    out: dict[str, np.ndarray] = {}
    for prefix, module in (
        ("image.", model.image_encoder),
        ("text.", model.text_encoder),
        ("head.", model.head),
    ):
        for name, tensor in module.state_dict().items():
            out[prefix + name] = tensor.detach().numpy().astype(np.float32)
    return out


def load_model_tensors(model: VqaModel, tensors: dict[str, np.ndarray]) -> None:
    for prefix, module in (
        ("image.", model.image_encoder),
        ("text.", model.text_encoder),
        ("head.", model.head),
    ):
        state = {}
        for name, arr in tensors.items():
            if name.startswith(prefix):
                state[name[len(prefix) :]] = torch.from_numpy(np.array(arr, dtype=np.float32))
        try:
            module.load_state_dict(state)
        except RuntimeError as exc:
            raise ShapeError(f"checkpoint tensors do not fit model: {exc}") from None


@dataclass(frozen=True)
class Prediction:
    answer: str
    confidence: float
    top_k: tuple[tuple[str, float], ...]


@dataclass
class ModelBundle:
    """Everything needed to answer a question: weights plus both vocabularies."""

    model: VqaModel
    config: ModelConfig
    answer_vocab: AnswerVocabulary
    text_vocab: TextVocab
    max_question_len: int
    model_id: str

    def eval(self) -> "ModelBundle":
        self.model.eval()
        return self


def bundle_meta(bundle: ModelBundle, extra: dict | None = None) -> dict:
    meta = {
        "kind": "vqa_model",
        "model_config": bundle.config.to_dict(),
        "answer_vocab": bundle.answer_vocab.to_dict(),
        "text_vocab": bundle.text_vocab.to_dict(),
        "max_question_len": bundle.max_question_len,
    }
    if extra:
        meta.update(extra)
    return meta


def bundle_to_checkpoint(bundle: ModelBundle, extra_meta: dict | None = None) -> Checkpoint:
    return Checkpoint(tensors=model_to_tensors(bundle.model), meta=bundle_meta(bundle, extra_meta))


def _text_encoder_from_config(config: ModelConfig) -> nn.Module:
    if config.text_encoder is TextEncoderKind.POOLED_STUB:
        return MeanPoolTextEncoder(config.text_vocab_size, config.embed_dim, config.d)
    return BiLstmTextEncoder(config.text_vocab_size, config.embed_dim, config.hidden_dim, config.d)


def bundle_from_checkpoint(
    ckpt: Checkpoint, answer_vocab: AnswerVocabulary | None = None
) -> ModelBundle:
    """Reconstruct a ready-to-serve bundle from a full-model checkpoint."""
    meta = ckpt.meta
    if meta.get("kind") != "vqa_model":
        raise ConfigError(f"checkpoint is not a full model (kind={meta.get('kind')!r})")
    config = ModelConfig.from_dict(meta["model_config"]).validate()
    if answer_vocab is None:
        if "answer_vocab" not in meta:
            raise ConfigError("checkpoint meta lacks an answer vocabulary; pass one explicitly")
        answer_vocab = AnswerVocabulary.from_dict(meta["answer_vocab"])
    text_vocab = TextVocab.from_dict(meta["text_vocab"])
    max_len = int(meta.get("max_question_len", 20))
    image_encoder = SmallCnnEncoder(config.side, config.in_channels, config.cnn_channels, config.d)
    text_encoder = _text_encoder_from_config(config)
    head = ClassifierHead(fused_dim(config.d, config.fusion), len(answer_vocab), config.head_hidden)
    model = VqaModel(config, image_encoder, text_encoder, head)
    load_model_tensors(model, ckpt.tensors)
    model.eval()
    return ModelBundle(
        model=model,
        config=config,
        answer_vocab=answer_vocab,
        text_vocab=text_vocab,
        max_question_len=max_len,
        model_id=ckpt.digest(),
    )


def load_bundle(checkpoint_path, vocab_path=None) -> ModelBundle:
    ckpt = load_checkpoint(checkpoint_path)
    vocab = AnswerVocabulary.load(vocab_path) if vocab_path else None
    return bundle_from_checkpoint(ckpt, vocab)


def predict(
    image: np.ndarray, question: str, bundle: ModelBundle, k: int = 5
) -> Prediction:
    """Encode, fuse, classify, and rank the top-k answers for one question.

    k is clamped to the vocabulary size; probabilities are reported from a
    float64 softmax over the model logits. Ties in probability break toward
    the lower class index.
    """
    if k < 1:
        raise ValueError(f"top-k must be >= 1, got {k}")
    config = bundle.config
    tokens: TokenSequence = tokenize(question, bundle.text_vocab, bundle.max_question_len)
    x = image_to_tensor(image, config.side, config.in_channels).unsqueeze(0)
    ids, lengths = tokens_to_tensors(tokens, config.text_vocab_size)
    with torch.no_grad():
        logits = bundle.model(x, ids, lengths).squeeze(0).numpy()
    probs = softmax_f64(logits)
    n = probs.shape[0]
    k = min(k, n)
    order = sorted(range(n), key=lambda i: (-probs[i], i))[:k]
    top_k = tuple((bundle.answer_vocab.decode(i), float(probs[i])) for i in order)
    return Prediction(answer=top_k[0][0], confidence=top_k[0][1], top_k=top_k)
