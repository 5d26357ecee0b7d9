"""Image and question encoders.

Both encoders map their input to a length-d embedding. The CNN uses tanh
nonlinearities and average pooling so the whole network is smooth, which
keeps finite-difference gradient checks clean. The BiLSTM runs explicit
per-timestep cell updates with mask-select state carry, so padding positions
leave the final states bit-identical to the unpadded sequence.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..corpus import PAD_ID, TokenSequence
from ..errors import ConfigError, ShapeError, VocabularyError
from ..images import validate_image_array
from .checkpoint import Checkpoint, load_checkpoint
from .config import ImageEncoderKind, ModelConfig, TextEncoderKind


def _uniform_(param: torch.Tensor, fan_in: int, gen: torch.Generator) -> None:
    bound = 1.0 / (fan_in**0.5)
    with torch.no_grad():
        param.uniform_(-bound, bound, generator=gen)


def _zero_(param: torch.Tensor) -> None:
    with torch.no_grad():
        param.zero_()


class SmallCnnEncoder(nn.Module):
    """Four conv-tanh-avgpool stages, global average pooling, linear head."""

    def __init__(self, side: int, in_channels: int, channels: tuple[int, int, int, int], d: int):
        super().__init__()
        self.side = side
        self.in_channels = in_channels
        self.channels = tuple(channels)
        self.d = d
        convs = []
        prev = in_channels
        for c in self.channels:
            convs.append(nn.Conv2d(prev, c, kernel_size=3, padding=1))
            prev = c
        self.convs = nn.ModuleList(convs)
        self.pool = nn.AvgPool2d(2)
        self.proj = nn.Linear(self.channels[-1], d)

    def reset_parameters(self, gen: torch.Generator) -> None:
        for conv in self.convs:
            _uniform_(conv.weight, conv.in_channels * 9, gen)
            _zero_(conv.bias)
        _uniform_(self.proj.weight, self.channels[-1], gen)
        _zero_(self.proj.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (N, C, S, S) in [0, 1]
        for conv in self.convs:
            x = self.pool(torch.tanh(conv(x)))
        x = x.mean(dim=(2, 3))
        return self.proj(x)


class BiLstmTextEncoder(nn.Module):
    """Token embeddings, forward and backward LSTM passes, linear head.

    The recurrences are unrolled with LSTMCell and the carry state is
    advanced through ``torch.where`` on the per-position validity mask, so a
    padded batch reproduces each sequence's unpadded states exactly. An
    empty sequence yields the projection of the all-zero state.
    """

    def __init__(self, vocab_size: int, embed_dim: int, hidden_dim: int, d: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.d = d
        self.embedding = nn.Embedding(vocab_size, embed_dim, padding_idx=PAD_ID)
        self.fwd_cell = nn.LSTMCell(embed_dim, hidden_dim)
        self.bwd_cell = nn.LSTMCell(embed_dim, hidden_dim)
        self.proj = nn.Linear(2 * hidden_dim, d)

    def reset_parameters(self, gen: torch.Generator) -> None:
        _uniform_(self.embedding.weight, self.embed_dim, gen)
        with torch.no_grad():
            self.embedding.weight[PAD_ID].zero_()
        for cell in (self.fwd_cell, self.bwd_cell):
            _uniform_(cell.weight_ih, self.embed_dim, gen)
            _uniform_(cell.weight_hh, self.hidden_dim, gen)
            _zero_(cell.bias_ih)
            _zero_(cell.bias_hh)
        _uniform_(self.proj.weight, 2 * self.hidden_dim, gen)
        _zero_(self.proj.bias)

    def _run(self, emb: torch.Tensor, lengths: torch.Tensor, cell: nn.LSTMCell, steps) -> torch.Tensor:
        n = emb.shape[0]
        h = emb.new_zeros((n, self.hidden_dim))
        c = emb.new_zeros((n, self.hidden_dim))
        for t in steps:
            h_new, c_new = cell(emb[:, t], (h, c))
            mask = (lengths > t).unsqueeze(1)
            h = torch.where(mask, h_new, h)
            c = torch.where(mask, c_new, c)
        return h

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        # ids: (N, T) int64; lengths: (N,) int64, zero allowed
        n, t_max = ids.shape
        if t_max == 0:
            zeros = self.proj.weight.new_zeros((n, 2 * self.hidden_dim))
            return self.proj(zeros)
        emb = self.embedding(ids)
        h_fwd = self._run(emb, lengths, self.fwd_cell, range(t_max))
        h_bwd = self._run(emb, lengths, self.bwd_cell, reversed(range(t_max)))
        return self.proj(torch.cat([h_fwd, h_bwd], dim=1))


class MeanPoolTextEncoder(nn.Module):
    """Interface stub: masked mean of token embeddings, then a linear head."""

    def __init__(self, vocab_size: int, embed_dim: int, d: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.d = d
        self.embedding = nn.Embedding(vocab_size, embed_dim, padding_idx=PAD_ID)
        self.proj = nn.Linear(embed_dim, d)

    def reset_parameters(self, gen: torch.Generator) -> None:
        _uniform_(self.embedding.weight, self.embed_dim, gen)
        with torch.no_grad():
            self.embedding.weight[PAD_ID].zero_()
        _uniform_(self.proj.weight, self.embed_dim, gen)
        _zero_(self.proj.bias)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        n, t_max = ids.shape
        if t_max == 0:
            return self.proj(self.proj.weight.new_zeros((n, self.embed_dim)))
        emb = self.embedding(ids)
        pos = torch.arange(t_max, device=ids.device).unsqueeze(0)
        mask = (pos < lengths.unsqueeze(1)).unsqueeze(2).to(emb.dtype)
        total = (emb * mask).sum(dim=1)
        denom = lengths.clamp(min=1).unsqueeze(1).to(emb.dtype)
        return self.proj(total / denom)


def _load_encoder_checkpoint(path: str | None, what: str) -> Checkpoint:
    if not path:
        raise ConfigError(f"{what} encoder kind 'pretrained_checkpoint' needs a checkpoint path")
    return load_checkpoint(path)


def _encoder_state(ckpt: Checkpoint, prefix: str) -> dict[str, torch.Tensor]:
    state = {}
    for name, arr in ckpt.tensors.items():
        if name.startswith(prefix):
            state[name[len(prefix) :]] = torch.from_numpy(np.array(arr, dtype=np.float32))
    if not state:
        raise ConfigError(f"checkpoint has no tensors under prefix {prefix!r}")
    return state


def build_image_encoder(config: ModelConfig, gen: torch.Generator) -> SmallCnnEncoder:
    """Construct (and initialize or load) the image encoder for a config."""
    encoder = SmallCnnEncoder(config.side, config.in_channels, config.cnn_channels, config.d)
    if config.image_encoder is ImageEncoderKind.PRETRAINED:
        ckpt = _load_encoder_checkpoint(config.image_checkpoint, "image")
        encoder.load_state_dict(_encoder_state(ckpt, "image."))
        if config.freeze_image:
            encoder.requires_grad_(False)
    else:
        encoder.reset_parameters(gen)
    return encoder


def build_text_encoder(config: ModelConfig, gen: torch.Generator) -> nn.Module:
    """Construct (and initialize or load) the question encoder for a config."""
    if config.text_encoder is TextEncoderKind.POOLED_STUB:
        encoder: nn.Module = MeanPoolTextEncoder(config.text_vocab_size, config.embed_dim, config.d)
        encoder.reset_parameters(gen)
        return encoder
    encoder = BiLstmTextEncoder(
        config.text_vocab_size, config.embed_dim, config.hidden_dim, config.d
    )
    if config.text_encoder is TextEncoderKind.PRETRAINED:
        ckpt = _load_encoder_checkpoint(config.text_checkpoint, "text")
        encoder.load_state_dict(_encoder_state(ckpt, "text."))
        if config.freeze_text:
            encoder.requires_grad_(False)
    else:
        encoder.reset_parameters(gen)
    return encoder


def image_to_tensor(image: np.ndarray, side: int, channels: int) -> torch.Tensor:
    """Validate an H×W×C (or H×W) array and convert to a (C, S, S) tensor."""
    arr = validate_image_array(image, side=side, channels=channels)
    return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32)).permute(2, 0, 1)


def tokens_to_tensors(tokens: TokenSequence, vocab_size: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Validate token ids and convert to (1, T) ids and (1,) length tensors."""
    for tid in tokens.ids:
        if not 0 <= tid < vocab_size:
            raise VocabularyError(f"token id {tid} outside vocabulary of size {vocab_size}")
    if tokens.length > len(tokens.ids):
        raise VocabularyError(
            f"token length {tokens.length} exceeds id count {len(tokens.ids)}"
        )
    ids = torch.tensor([list(tokens.ids)], dtype=torch.int64)
    lengths = torch.tensor([tokens.length], dtype=torch.int64)
    return ids, lengths


def encode_image(image: np.ndarray, encoder: SmallCnnEncoder) -> np.ndarray:
    """Embed one image array into a length-d float32 vector."""
    x = image_to_tensor(image, encoder.side, encoder.in_channels).unsqueeze(0)
    with torch.no_grad():
        out = encoder(x)
    vec = out.squeeze(0).numpy().astype(np.float32)
    if not np.all(np.isfinite(vec)):
        raise ShapeError("image embedding contains non-finite values")
    return vec


def encode_text(tokens: TokenSequence, encoder: nn.Module) -> np.ndarray:
    """Embed one token sequence into a length-d float32 vector."""
    ids, lengths = tokens_to_tensors(tokens, encoder.vocab_size)
    with torch.no_grad():
        out = encoder(ids, lengths)
    vec = out.squeeze(0).numpy().astype(np.float32)
    if not np.all(np.isfinite(vec)):
        raise ShapeError("text embedding contains non-finite values")
    return vec
