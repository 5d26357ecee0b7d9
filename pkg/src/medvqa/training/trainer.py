"""Deterministic supervised training and evaluation.

The loop precomputes every tensor it will touch (images, token ids,
targets), so an epoch is pure arithmetic over a fixed bank plus the
(seed, epoch)-keyed shuffle. Two runs with the same corpus, split, and
config produce byte-identical curves and checkpoints on one machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..corpus import (
    AnswerVocabulary,
    DatasetSplit,
    ImageRecord,
    QAPair,
    TextVocab,
    build_text_vocab,
    iter_batches,
    normalize_answer,
    pairs_in,
    tokenize,
)
from ..errors import ConfigError
from ..images import load_image_file, validate_image_array
from ..models.checkpoint import Checkpoint, save_checkpoint
from ..models.config import ModelConfig
from ..models.fusion import ModelBundle, build_model, bundle_to_checkpoint
from .adadelta import AdaDelta
from .report import CurveRow, EvalReport, ReportRow, write_curves


@dataclass(frozen=True)
class OptimizerConfig:
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0

    def validate(self) -> "OptimizerConfig":
        if not 0 <= self.rho < 1:
            raise ConfigError(f"rho must be in [0, 1), got {self.rho}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        return self


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 32
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    max_question_len: int = 20
    min_answer_freq: int = 1
    min_word_freq: int = 1
    eval_batch_size: int = 64
    num_threads: int = 1

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.max_question_len < 1:
            raise ConfigError("max_question_len must be >= 1")
        if self.num_threads < 1:
            raise ConfigError("num_threads must be >= 1")
        self.optimizer.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "optimizer": {
                "rho": self.optimizer.rho,
                "eps": self.optimizer.eps,
                "lr": self.optimizer.lr,
            },
            "max_question_len": self.max_question_len,
            "min_answer_freq": self.min_answer_freq,
            "min_word_freq": self.min_word_freq,
            "eval_batch_size": self.eval_batch_size,
            "num_threads": self.num_threads,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        opt = obj.pop("optimizer", {})
        known = {f for f in cls.__dataclass_fields__ if f != "optimizer"}
        return cls(
            optimizer=OptimizerConfig(**opt),
            **{k: v for k, v in obj.items() if k in known},
        )


class ImageStore(Protocol):
    def get(self, record: ImageRecord) -> np.ndarray: ...


class FileImageStore:
    """Loads, preprocesses, and caches image files under a corpus root."""

    def __init__(self, root, side: int, channels: int):
        self.root = Path(root)
        self.side = side
        self.channels = channels
        self._cache: dict[str, np.ndarray] = {}

    def get(self, record: ImageRecord) -> np.ndarray:
        arr = self._cache.get(record.image_id)
        if arr is None:
            arr = load_image_file(self.root / record.path, self.side, self.channels)
            self._cache[record.image_id] = arr
        return arr


class ArrayImageStore:
    """Serves preprocessed arrays from memory, keyed by image id."""

    def __init__(self, arrays: Mapping[str, np.ndarray], side: int, channels: int):
        self.side = side
        self.channels = channels
        self._arrays = {
            image_id: validate_image_array(arr, side=side, channels=channels)
            for image_id, arr in arrays.items()
        }

    def get(self, record: ImageRecord) -> np.ndarray:
        try:
            return self._arrays[record.image_id]
        except KeyError:
            raise ConfigError(f"no image array for image_id {record.image_id!r}") from None


@dataclass
class _PairTensors:
    image_row: int
    ids: tuple[int, ...]
    length: int
    target: int  # -1 when the gold answer is outside the vocabulary


class _Bank:
    """Fixed tensors for one corpus: image bank plus per-pair encodings."""

    def __init__(
        self,
        images: Sequence[ImageRecord],
        pairs: Sequence[QAPair],
        store: ImageStore,
        text_vocab: TextVocab,
        answer_vocab: AnswerVocabulary,
        max_question_len: int,
    ):
        self.records = {r.image_id: r for r in images}
        used_ids = sorted({p.image_id for p in pairs})
        rows = []
        self.image_row = {}
        for i, image_id in enumerate(used_ids):
            record = self.records[image_id]
            arr = store.get(record)
            rows.append(torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32)).permute(2, 0, 1))
            self.image_row[image_id] = i
        self.images = torch.stack(rows) if rows else torch.zeros((0, 1, 1, 1))
        self.prepared: dict[str, _PairTensors] = {}
        for pair in pairs:
            tokens = tokenize(pair.question, text_vocab, max_question_len)
            key = normalize_answer(pair.answer)
            target = answer_vocab.encode(key) if key in answer_vocab else -1
            self.prepared[pair.pair_id] = _PairTensors(
                image_row=self.image_row[pair.image_id],
                ids=tokens.ids,
                length=tokens.length,
                target=target,
            )

    def batch(self, pairs: Sequence[QAPair]):
        prep = [self.prepared[p.pair_id] for p in pairs]
        sel = torch.tensor([p.image_row for p in prep], dtype=torch.int64)
        ids = torch.tensor([p.ids for p in prep], dtype=torch.int64)
        lengths = torch.tensor([p.length for p in prep], dtype=torch.int64)
        targets = torch.tensor([p.target for p in prep], dtype=torch.int64)
        return self.images[sel], ids, lengths, targets


@dataclass(frozen=True)
class GroupStats:
    n: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.n

    def to_dict(self) -> dict:
        return {"n": self.n, "correct": self.correct, "accuracy": self.accuracy}


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    n_pairs: int
    n_correct: int
    oov_gold: int
    by_answer_type: dict[str, GroupStats]
    by_stratum: dict[str, GroupStats]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_pairs": self.n_pairs,
            "n_correct": self.n_correct,
            "oov_gold": self.oov_gold,
            "by_answer_type": {k: v.to_dict() for k, v in self.by_answer_type.items()},
            "by_stratum": {k: v.to_dict() for k, v in self.by_stratum.items()},
        }


@dataclass
class TrainResult:
    bundle: ModelBundle
    checkpoint: Checkpoint
    checkpoint_path: Path | None
    curves: tuple[CurveRow, ...]
    report: EvalReport
    best_epoch: int
    best_val_accuracy: float
    dropped_train_pairs: int
    out_dir: Path | None


def _predicted_rows(model, bank: _Bank, pairs: Sequence[QAPair], batch_size: int):
    """Yield (pair, predicted_index, loss_or_None) without touching gradients."""
    model.eval()
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            images, ids, lengths, targets = bank.batch(chunk)
            logits = model(images, ids, lengths)
            pred = logits.argmax(dim=1)
            losses = F.cross_entropy(logits, targets.clamp(min=0), reduction="none")
            for i, pair in enumerate(chunk):
                target = int(targets[i])
                loss = float(losses[i]) if target >= 0 else None
                yield pair, int(pred[i]), loss


def _val_metrics(model, bank: _Bank, pairs: Sequence[QAPair], vocab, batch_size: int):
    if not pairs:
        return float("nan"), float("nan")
    correct = 0
    losses = []
    for pair, pred_idx, loss in _predicted_rows(model, bank, pairs, batch_size):
        if normalize_answer(vocab.decode(pred_idx)) == normalize_answer(pair.answer):
            correct += 1
        if loss is not None:
            losses.append(loss)
    val_acc = correct / len(pairs)
    val_loss = sum(losses) / len(losses) if losses else float("nan")
    return val_loss, val_acc


def train(
    images: Sequence[ImageRecord],
    pairs: Sequence[QAPair],
    split: DatasetSplit,
    model_config: ModelConfig,
    train_config: TrainConfig,
    image_store: ImageStore,
    out_dir=None,
) -> TrainResult:
    """Train a model on the split's train part, selecting on val accuracy.

    Builds both vocabularies from the training pairs only. Training pairs
    whose gold answer falls outside the vocabulary are dropped (and counted);
    validation pairs keep counting as misses. Artifacts written under
    ``out_dir``: checkpoint.mvqa, curves.csv, vocab.json, split.json.
    """
    train_config.validate()
    torch.set_num_threads(train_config.num_threads)

    train_pairs = pairs_in(pairs, split.train)
    val_pairs = pairs_in(pairs, split.val)
    test_pairs = pairs_in(pairs, split.test)
    if not train_pairs:
        raise ConfigError("training split has no question-answer pairs")

    answer_vocab = AnswerVocabulary.build(train_pairs, min_freq=train_config.min_answer_freq)
    text_vocab = build_text_vocab(
        (p.question for p in train_pairs), min_freq=train_config.min_word_freq
    )
    model_config = model_config.with_(text_vocab_size=text_vocab.size).validate()
    model = build_model(model_config, len(answer_vocab))

    bank = _Bank(
        images,
        train_pairs + val_pairs + test_pairs,
        image_store,
        text_vocab,
        answer_vocab,
        train_config.max_question_len,
    )
    eligible = [p for p in train_pairs if bank.prepared[p.pair_id].target >= 0]
    dropped = len(train_pairs) - len(eligible)
    if not eligible:
        raise ConfigError("no training pair has an in-vocabulary answer")

    trainable = {name: p for name, p in model.named_parameters() if p.requires_grad}
    if not trainable:
        raise ConfigError("model has no trainable parameters")
    opt = AdaDelta(
        trainable,
        rho=train_config.optimizer.rho,
        eps=train_config.optimizer.eps,
        lr=train_config.optimizer.lr,
    )

    curves: list[CurveRow] = []
    best_val = float("-inf")
    best_epoch = 0
    best_state: dict[str, torch.Tensor] = {}
    has_val = bool(val_pairs)

    for epoch in range(1, train_config.epochs + 1):
        model.train()
        total_loss = 0.0
        total_correct = 0
        n_seen = 0
        for batch in iter_batches(
            eligible, split.train, train_config.batch_size, train_config.seed, epoch
        ):
            batch_images, ids, lengths, targets = bank.batch(batch)
            opt.zero_grad()
            logits = model(batch_images, ids, lengths)
            loss = F.cross_entropy(logits, targets)
            loss.backward()
            opt.step()
            with torch.no_grad():
                total_correct += int((logits.argmax(dim=1) == targets).sum())
            total_loss += float(loss.detach()) * len(batch)
            n_seen += len(batch)
        train_loss = total_loss / n_seen
        train_acc = total_correct / n_seen

        val_loss, val_acc = _val_metrics(
            model, bank, val_pairs, answer_vocab, train_config.eval_batch_size
        )
        curves.append(CurveRow(epoch, train_loss, train_acc, val_loss, val_acc))

        take_snapshot = (val_acc > best_val) if has_val else True
        if take_snapshot:
            best_val = val_acc if has_val else float("nan")
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    model.eval()

    best_val_accuracy = best_val if has_val else float("nan")
    bundle = ModelBundle(
        model=model,
        config=model_config,
        answer_vocab=answer_vocab,
        text_vocab=text_vocab,
        max_question_len=train_config.max_question_len,
        model_id="",
    )
    extra_meta = {
        "train_config": train_config.to_dict(),
        "split": split.to_dict(),
        "best_epoch": best_epoch,
        "val_accuracy": None if not has_val else best_val_accuracy,
        "dropped_train_pairs": dropped,
    }
    ckpt = bundle_to_checkpoint(bundle, extra_meta)
    bundle.model_id = ckpt.digest()

    test_accuracy = None
    if test_pairs:
        test_accuracy = _val_metrics(
            model, bank, test_pairs, answer_vocab, train_config.eval_batch_size
        )[1]
    report = EvalReport(
        rows=(
            ReportRow(
                image_encoder=model_config.image_encoder.value,
                text_encoder=model_config.text_encoder.value,
                val_accuracy=None if not has_val else best_val_accuracy,
                test_accuracy=test_accuracy if test_accuracy is not None else float("nan"),
            ),
        ),
        curves=tuple(curves),
    )

    checkpoint_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_dir / "checkpoint.mvqa"
        save_checkpoint(ckpt, checkpoint_path)
        write_curves(curves, out_dir / "curves.csv")
        answer_vocab.save(out_dir / "vocab.json")
        split.save(out_dir / "split.json")

    return TrainResult(
        bundle=bundle,
        checkpoint=ckpt,
        checkpoint_path=checkpoint_path,
        curves=tuple(curves),
        report=report,
        best_epoch=best_epoch,
        best_val_accuracy=best_val_accuracy,
        dropped_train_pairs=dropped,
        out_dir=out_dir,
    )


def evaluate(
    bundle: ModelBundle,
    pairs: Sequence[QAPair],
    images: Sequence[ImageRecord] | Mapping[str, ImageRecord],
    image_store: ImageStore,
    batch_size: int = 64,
) -> EvalResult:
    """Top-1 accuracy with per-answer-type and per-stratum breakdowns.

    A pair whose normalized gold answer is outside the vocabulary can never
    be matched; it counts as a miss and is tallied in ``oov_gold``.
    """
    if not pairs:
        raise ValueError("evaluate needs at least one pair")
    if isinstance(images, Mapping):
        records = list(images.values())
    else:
        records = list(images)
    by_id = {r.image_id: r for r in records}
    missing = {p.image_id for p in pairs} - set(by_id)
    if missing:
        raise ConfigError(f"pairs reference images absent from the corpus: {sorted(missing)[:5]}")

    bank = _Bank(
        records,
        pairs,
        image_store,
        bundle.text_vocab,
        bundle.answer_vocab,
        bundle.max_question_len,
    )
    n_correct = 0
    oov_gold = 0
    type_counts: dict[str, list[int]] = {}
    stratum_counts: dict[str, list[int]] = {}
    for pair, pred_idx, _loss in _predicted_rows(bundle.model, bank, list(pairs), batch_size):
        gold = normalize_answer(pair.answer)
        if gold not in bundle.answer_vocab:
            oov_gold += 1
        hit = normalize_answer(bundle.answer_vocab.decode(pred_idx)) == gold
        n_correct += hit
        record = by_id[pair.image_id]
        for counts, key in (
            (type_counts, pair.answer_type.value),
            (stratum_counts, f"{record.modality.value}/{record.body_part.value}"),
        ):
            slot = counts.setdefault(key, [0, 0])
            slot[0] += 1
            slot[1] += hit

    def stats(counts: dict[str, list[int]]) -> dict[str, GroupStats]:
        return {k: GroupStats(n=v[0], correct=v[1]) for k, v in sorted(counts.items())}

    return EvalResult(
        accuracy=n_correct / len(pairs),
        n_pairs=len(pairs),
        n_correct=n_correct,
        oov_gold=oov_gold,
        by_answer_type=stats(type_counts),
        by_stratum=stats(stratum_counts),
    )
