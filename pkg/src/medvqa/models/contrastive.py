"""Symmetric InfoNCE objective and cross-modal encoder pretraining."""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..corpus import PAD_ID, TokenSequence
from ..errors import ConfigError, ShapeError
from .checkpoint import Checkpoint
from .config import ModelConfig, TextEncoderKind
from .encoders import BiLstmTextEncoder, MeanPoolTextEncoder, SmallCnnEncoder

_NORM_EPS = 1e-12


def contrastive_loss(image_embs, text_embs, temperature: float = 0.07) -> torch.Tensor:
    """Symmetric InfoNCE over a batch of aligned image/text embeddings.

    Rows are L2-normalized, pairwise similarities scaled by 1/temperature,
    and the loss is the mean of the row-wise and column-wise cross-entropies
    with matching indices as targets. Similarities are computed by an
    elementwise product-and-sum rather than a matmul so that swapping the
    two arguments transposes the logits bit-exactly, making the loss value
    symmetric down to the last bit.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    img = torch.as_tensor(image_embs)
    txt = torch.as_tensor(text_embs)
    if not img.is_floating_point():
        img = img.double()
    if not txt.is_floating_point():
        txt = txt.double()
    if img.dim() != 2 or txt.dim() != 2:
        raise ShapeError(f"expected N×d matrices, got {tuple(img.shape)} and {tuple(txt.shape)}")
    if img.shape != txt.shape:
        raise ShapeError(f"embedding shapes differ: {tuple(img.shape)} vs {tuple(txt.shape)}")
    n = img.shape[0]
    if n < 2:
        raise ValueError(f"contrastive loss needs a batch of at least 2, got {n}")
    img_n = img / img.norm(dim=1, keepdim=True).clamp_min(_NORM_EPS)
    txt_n = txt / txt.norm(dim=1, keepdim=True).clamp_min(_NORM_EPS)
    logits = (img_n.unsqueeze(1) * txt_n.unsqueeze(0)).sum(dim=2) / temperature
    targets = torch.arange(n, device=logits.device)
    loss_rows = F.cross_entropy(logits, targets)
    loss_cols = F.cross_entropy(logits.t().contiguous(), targets)
    return 0.5 * (loss_rows + loss_cols)


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 30
    batch_size: int = 16
    temperature: float = 0.07
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0
    seed: int = 0
    num_threads: int = 1

    def validate(self) -> "PretrainConfig":
        if self.epochs < 1:
            raise ConfigError("pretraining needs at least one epoch")
        if self.batch_size < 2:
            raise ConfigError("contrastive batches need at least 2 pairs")
        if not 0 <= self.rho < 1:
            raise ConfigError(f"rho must be in [0, 1), got {self.rho}")
        if self.eps <= 0 or self.temperature <= 0:
            raise ConfigError("eps and temperature must be positive")
        return self


def _stack_pairs(
    pairs, side: int, channels: int, vocab_size: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    from .encoders import image_to_tensor, tokens_to_tensors

    images, all_ids, lengths = [], [], []
    for image, tokens in pairs:
        images.append(image_to_tensor(image, side, channels))
        ids, length = tokens_to_tensors(tokens, vocab_size)
        all_ids.append(ids.squeeze(0))
        lengths.append(length.squeeze(0))
    t_max = max((ids.shape[0] for ids in all_ids), default=0)
    padded = torch.full((len(all_ids), t_max), PAD_ID, dtype=torch.int64)
    for i, ids in enumerate(all_ids):
        padded[i, : ids.shape[0]] = ids
    return torch.stack(images), padded, torch.stack(lengths)


def pretrain(
    pairs: list[tuple[np.ndarray, TokenSequence]],
    model_config: ModelConfig,
    config: PretrainConfig = PretrainConfig(),
) -> Checkpoint:
    """Train both encoders on aligned image/question pairs; emit a checkpoint.

    The checkpoint stores image-encoder tensors under ``image.`` and text
    under ``text.`` so either side can be loaded (and optionally frozen) by
    the supervised model builder.
    """
    model_config.validate()
    config.validate()
    if len(pairs) < 2:
        raise ConfigError(f"pretraining needs at least 2 pairs, got {len(pairs)}")
    # deferred: training package imports model modules at its top level
    from ..training.adadelta import AdaDelta

    torch.set_num_threads(config.num_threads)
    gen = torch.Generator().manual_seed(model_config.seed)
    image_encoder = SmallCnnEncoder(
        model_config.side, model_config.in_channels, model_config.cnn_channels, model_config.d
    )
    image_encoder.reset_parameters(gen)
    if model_config.text_encoder is TextEncoderKind.POOLED_STUB:
        text_encoder: torch.nn.Module = MeanPoolTextEncoder(
            model_config.text_vocab_size, model_config.embed_dim, model_config.d
        )
    else:
        text_encoder = BiLstmTextEncoder(
            model_config.text_vocab_size,
            model_config.embed_dim,
            model_config.hidden_dim,
            model_config.d,
        )
    text_encoder.reset_parameters(gen)

    images, ids, lengths = _stack_pairs(
        pairs, model_config.side, model_config.in_channels, model_config.text_vocab_size
    )
    named = {}
    for prefix, module in (("image.", image_encoder), ("text.", text_encoder)):
        for name, param in module.named_parameters():
            named[prefix + name] = param
    opt = AdaDelta(named, rho=config.rho, eps=config.eps, lr=config.lr)

    n = len(pairs)
    losses: list[float] = []
    steps = 0
    for epoch in range(1, config.epochs + 1):
        order = list(range(n))
        random.Random(f"{config.seed}:{epoch}").shuffle(order)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            sel = torch.tensor(idx, dtype=torch.int64)
            opt.zero_grad()
            img_emb = image_encoder(images[sel])
            txt_emb = text_encoder(ids[sel], lengths[sel])
            loss = contrastive_loss(img_emb, txt_emb, config.temperature)
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
            steps += 1
        if epoch_losses:
            losses.append(sum(epoch_losses) / len(epoch_losses))

    tensors: dict[str, np.ndarray] = {}
    for prefix, module in (("image.", image_encoder), ("text.", text_encoder)):
        for name, tensor in module.state_dict().items():
            tensors[prefix + name] = tensor.detach().numpy().astype(np.float32)
    meta = {
        "kind": "encoder_pair",
        "model_config": model_config.to_dict(),
        "temperature": config.temperature,
        "epochs": config.epochs,
        "steps": steps,
        "initial_loss": losses[0] if losses else None,
        "final_loss": losses[-1] if losses else None,
    }
    return Checkpoint(tensors=tensors, meta=meta)
