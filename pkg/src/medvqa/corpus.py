"""Corpus loading, validation, splitting, tokenization, and batching.

A corpus lives in a directory containing ``images.jsonl`` (one image record
per line), ``qa.jsonl`` (one question-answer pair per line), and an
``images/`` subtree with the pixel data referenced by the records.
"""

from __future__ import annotations

import json
import random
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    CorpusNotFoundError,
    CorpusParseError,
    EmptyVocabularyError,
    IntegrityError,
    SmallStratumWarning,
    VocabularyError,
)

DEFAULT_RATIOS = (0.70, 0.15, 0.15)

PAD_ID = 0
UNK_ID = 1
_RESERVED_TEXT_IDS = 2

UNK_ANSWER = "<unk>"


class Modality(str, Enum):
    CT = "CT"
    MRI = "MRI"
    XRAY = "XRay"

    @property
    def display(self) -> str:
        """Answer-string form, e.g. ``X-Ray`` for the XRay member."""
        return _MODALITY_DISPLAY[self]

    @classmethod
    def parse(cls, value: str) -> "Modality":
        key = value.strip().lower().replace("-", "").replace("_", "")
        try:
            return _MODALITY_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown modality {value!r}") from None


_MODALITY_DISPLAY = {Modality.CT: "CT", Modality.MRI: "MRI", Modality.XRAY: "X-Ray"}
_MODALITY_ALIASES = {"ct": Modality.CT, "mri": Modality.MRI, "xray": Modality.XRAY}


class BodyPart(str, Enum):
    HEAD = "head"
    NECK = "neck"
    CHEST = "chest"
    ABDOMEN = "abdomen"
    PELVIS = "pelvis"
    OTHER = "other"


class QLang(str, Enum):
    EN = "en"
    ZH = "zh"


class AnswerType(str, Enum):
    OPEN = "OPEN"
    CLOSED = "CLOSED"


class ProvenanceSource(str, Enum):
    ORIGINAL = "original"
    SYNTHESIZED = "synthesized"


@dataclass(frozen=True)
class Provenance:
    source: ProvenanceSource = ProvenanceSource.ORIGINAL
    template_id: str | None = None


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    path: str
    modality: Modality
    body_part: BodyPart
    orientation: str | None = None
    source: str = ""

    @property
    def stratum(self) -> tuple[str, str]:
        return (self.body_part.value, self.modality.value)


@dataclass(frozen=True)
class QAPair:
    pair_id: str
    image_id: str
    question: str
    answer: str
    q_lang: QLang = QLang.EN
    answer_type: AnswerType = AnswerType.OPEN
    provenance: Provenance = field(default_factory=Provenance)


def normalize_answer(answer: str) -> str:
    """Whitespace-collapsed, lowercased form used for all answer matching."""
    return " ".join(answer.split()).lower()


# ---------------------------------------------------------------------------
# JSONL corpus files
# ---------------------------------------------------------------------------


def _parse_image_record(obj: dict) -> ImageRecord:
    image_id = obj.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ValueError("image_id must be a nonempty string")
    path = obj.get("path")
    if not isinstance(path, str) or not path:
        raise ValueError("path must be a nonempty string")
    if Path(path).is_absolute() or ".." in Path(path).parts:
        raise ValueError(f"path {path!r} does not resolve under the corpus root")
    modality = Modality.parse(str(obj.get("modality", "")))
    try:
        body_part = BodyPart(str(obj.get("body_part", "")))
    except ValueError:
        raise ValueError(f"unknown body_part {obj.get('body_part')!r}") from None
    orientation = obj.get("orientation")
    if orientation is not None and not isinstance(orientation, str):
        raise ValueError("orientation must be a string or null")
    return ImageRecord(
        image_id=image_id,
        path=path,
        modality=modality,
        body_part=body_part,
        orientation=orientation,
        source=str(obj.get("source", "")),
    )


def _parse_qa_pair(obj: dict) -> QAPair:
    for key in ("pair_id", "image_id", "question", "answer"):
        value = obj.get(key)
        if not isinstance(value, str) or not value.strip():
            raise ValueError(f"{key} must be a nonempty string")
    try:
        q_lang = QLang(str(obj.get("q_lang", "en")))
    except ValueError:
        raise ValueError(f"unknown q_lang {obj.get('q_lang')!r}") from None
    try:
        answer_type = AnswerType(str(obj.get("answer_type", "OPEN")))
    except ValueError:
        raise ValueError(f"unknown answer_type {obj.get('answer_type')!r}") from None
    prov_obj = obj.get("provenance") or {}
    if not isinstance(prov_obj, dict):
        raise ValueError("provenance must be an object")
    try:
        prov_source = ProvenanceSource(str(prov_obj.get("source", "original")))
    except ValueError:
        raise ValueError(f"unknown provenance source {prov_obj.get('source')!r}") from None
    template_id = prov_obj.get("template_id")
    if template_id is not None and not isinstance(template_id, str):
        raise ValueError("template_id must be a string or null")
    if prov_source is ProvenanceSource.SYNTHESIZED and not template_id:
        raise ValueError("synthesized pairs must carry a template_id")
    answer = obj["answer"]
    if answer_type is AnswerType.CLOSED and normalize_answer(answer) not in ("yes", "no"):
        raise ValueError(f"CLOSED answer must be Yes or No, got {answer!r}")
    return QAPair(
        pair_id=obj["pair_id"],
        image_id=obj["image_id"],
        question=obj["question"],
        answer=answer,
        q_lang=q_lang,
        answer_type=answer_type,
        provenance=Provenance(source=prov_source, template_id=template_id),
    )


def _read_jsonl(path: Path, parse) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("record must be a JSON object")
                records.append(parse(obj))
            except (ValueError, TypeError) as exc:
                raise CorpusParseError(path, lineno, str(exc)) from None
    return records


def image_record_to_dict(record: ImageRecord) -> dict:
    return {
        "image_id": record.image_id,
        "path": record.path,
        "modality": record.modality.value,
        "body_part": record.body_part.value,
        "orientation": record.orientation,
        "source": record.source,
    }


def qa_pair_to_dict(pair: QAPair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "image_id": pair.image_id,
        "question": pair.question,
        "answer": pair.answer,
        "q_lang": pair.q_lang.value,
        "answer_type": pair.answer_type.value,
        "provenance": {
            "source": pair.provenance.source.value,
            "template_id": pair.provenance.template_id,
        },
    }


def write_jsonl(path, dicts: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in dicts:
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def write_corpus(root, images: Sequence[ImageRecord], pairs: Sequence[QAPair]) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_jsonl(root / "images.jsonl", (image_record_to_dict(r) for r in images))
    write_jsonl(root / "qa.jsonl", (qa_pair_to_dict(p) for p in pairs))


def load_corpus(
    root, language_filter: QLang | str | None = None
) -> tuple[list[ImageRecord], list[QAPair]]:
    """Load and validate a corpus directory.

    Raises CorpusNotFoundError if the directory or a required file is
    missing, CorpusParseError (with the line number) on malformed lines, and
    IntegrityError on duplicate or dangling ids.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusNotFoundError(f"corpus root {root} does not exist")
    qa_path = root / "qa.jsonl"
    images_path = root / "images.jsonl"
    for required in (qa_path, images_path):
        if not required.is_file():
            raise CorpusNotFoundError(f"missing corpus file {required}")

    images = _read_jsonl(images_path, _parse_image_record)
    seen: set[str] = set()
    for record in images:
        if record.image_id in seen:
            raise IntegrityError(f"duplicate image_id {record.image_id!r}")
        seen.add(record.image_id)

    pairs = _read_jsonl(qa_path, _parse_qa_pair)
    for pair in pairs:
        if pair.image_id not in seen:
            raise IntegrityError(
                f"pair {pair.pair_id!r} references unknown image_id {pair.image_id!r}"
            )

    if language_filter is not None:
        lang = QLang(language_filter)
        pairs = [p for p in pairs if p.q_lang is lang]
    return images, pairs


# ---------------------------------------------------------------------------
# Image-level stratified split
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    train: frozenset[str]
    val: frozenset[str]
    test: frozenset[str]
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    def part(self, name: str) -> frozenset[str]:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split part {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": sorted(self.train),
            "val": sorted(self.val),
            "test": sorted(self.test),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetSplit":
        return cls(
            train=frozenset(obj["train"]),
            val=frozenset(obj["val"]),
            test=frozenset(obj["test"]),
            ratios=tuple(obj.get("ratios", DEFAULT_RATIOS)),
            seed=int(obj.get("seed", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def largest_remainder_counts(n: int, ratios: Sequence[float]) -> tuple[int, ...]:
    """Integer quotas for ``n`` items under the largest-remainder method.

    Equal remainders are resolved in declaration order, so with
    (train, val, test) ratios the leftover goes to train first, then val,
    then test.
    """
    quotas = [n * r for r in ratios]
    counts = [int(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return tuple(counts)


def split_corpus(
    images: Sequence[ImageRecord],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """Seed-deterministic stratified split at the image level.

    Images are grouped per (body_part, modality) stratum; within each
    stratum membership is a deterministic shuffle and sizes follow the
    largest-remainder quotas. Strata with fewer than 3 images cannot be
    partitioned and are assigned entirely to train with a warning.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be three nonnegative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1.0, got {sum(ratios)!r}")

    strata: dict[tuple[str, str], list[str]] = {}
    for record in images:
        strata.setdefault(record.stratum, []).append(record.image_id)

    train: set[str] = set()
    val: set[str] = set()
    test: set[str] = set()
    for key in sorted(strata):
        ids = sorted(strata[key])
        rng = random.Random(f"{seed}:{key[0]}:{key[1]}")
        rng.shuffle(ids)
        if len(ids) < 3:
            warnings.warn(
                f"stratum {key} has only {len(ids)} image(s); assigning all to train",
                SmallStratumWarning,
                stacklevel=2,
            )
            train.update(ids)
            continue
        n_train, n_val, n_test = largest_remainder_counts(len(ids), ratios)
        train.update(ids[:n_train])
        val.update(ids[n_train : n_train + n_val])
        test.update(ids[n_train + n_val :])
    return DatasetSplit(
        train=frozenset(train),
        val=frozenset(val),
        test=frozenset(test),
        ratios=ratios,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Answer vocabulary
# ---------------------------------------------------------------------------


class UnkPolicy(str, Enum):
    REJECT = "reject"
    MAP_TO_RESERVED = "map_to_reserved"


class AnswerVocabulary:
    """Bijective mapping between answer strings and class indices.

    Matching is case-insensitive and whitespace-normalized; each entry keeps
    a display form (the most frequent original spelling). Entries are ordered
    by descending training frequency, ties broken lexicographically.
    """

    def __init__(self, answers: Sequence[str], unk_policy: UnkPolicy = UnkPolicy.REJECT):
        self.unk_policy = UnkPolicy(unk_policy)
        entries = list(answers)
        if self.unk_policy is UnkPolicy.MAP_TO_RESERVED:
            entries.append(UNK_ANSWER)
        self.answers: tuple[str, ...] = tuple(entries)
        self._index: dict[str, int] = {}
        for i, answer in enumerate(self.answers):
            key = normalize_answer(answer)
            if key in self._index:
                raise ValueError(f"duplicate answer {answer!r} after normalization")
            self._index[key] = i

    @classmethod
    def build(
        cls,
        train_pairs: Sequence[QAPair | str],
        min_freq: int = 1,
        unk_policy: UnkPolicy = UnkPolicy.REJECT,
    ) -> "AnswerVocabulary":
        """Build from the training pairs (or raw answer strings) only."""
        raw = [p.answer if isinstance(p, QAPair) else p for p in train_pairs]
        freq: Counter[str] = Counter()
        surfaces: dict[str, Counter[str]] = {}
        for answer in raw:
            key = normalize_answer(answer)
            freq[key] += 1
            surfaces.setdefault(key, Counter())[answer] += 1
        kept = [k for k, c in freq.items() if c >= min_freq]
        if not kept:
            raise EmptyVocabularyError(
                f"no answer reached min_freq={min_freq} over {len(raw)} training answers"
            )
        kept.sort(key=lambda k: (-freq[k], k))
        display = [min(surfaces[k].items(), key=lambda kv: (-kv[1], kv[0]))[0] for k in kept]
        return cls(display, unk_policy=unk_policy)

    def __len__(self) -> int:
        return len(self.answers)

    def __contains__(self, answer: str) -> bool:
        return normalize_answer(answer) in self._index

    def encode(self, answer: str) -> int:
        key = normalize_answer(answer)
        idx = self._index.get(key)
        if idx is None:
            if self.unk_policy is UnkPolicy.MAP_TO_RESERVED:
                return self._index[normalize_answer(UNK_ANSWER)]
            raise VocabularyError(f"answer {answer!r} is not in the vocabulary")
        return idx

    def decode(self, index: int) -> str:
        if not 0 <= index < len(self.answers):
            raise VocabularyError(f"class index {index} out of range [0, {len(self.answers)})")
        return self.answers[index]

    def to_dict(self) -> dict:
        real = self.answers
        if self.unk_policy is UnkPolicy.MAP_TO_RESERVED:
            real = real[:-1]
        return {"answers": list(real), "unk_policy": self.unk_policy.value}

    @classmethod
    def from_dict(cls, obj: dict) -> "AnswerVocabulary":
        return cls(obj["answers"], unk_policy=UnkPolicy(obj.get("unk_policy", "reject")))

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path) -> "AnswerVocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Question tokenization
# ---------------------------------------------------------------------------

_PUNCT = re.compile(r"[^\w\s]")


def question_words(question: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _PUNCT.sub(" ", question.lower()).split()


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    length: int
    pad_id: int = PAD_ID
    unk_id: int = UNK_ID


@dataclass(frozen=True)
class TextVocab:
    """Word-to-id mapping for questions; ids 0 and 1 are pad and unk."""

    word_to_id: Mapping[str, int]
    pad_id: int = PAD_ID
    unk_id: int = UNK_ID

    @property
    def size(self) -> int:
        return _RESERVED_TEXT_IDS + len(self.word_to_id)

    def to_dict(self) -> dict:
        return dict(self.word_to_id)

    @classmethod
    def from_dict(cls, obj: Mapping[str, int]) -> "TextVocab":
        return cls(word_to_id=dict(obj))


def build_text_vocab(
    questions: Iterable[str], min_freq: int = 1, max_size: int | None = None
) -> TextVocab:
    freq: Counter[str] = Counter()
    for question in questions:
        freq.update(question_words(question))
    words = [w for w, c in freq.items() if c >= min_freq]
    words.sort(key=lambda w: (-freq[w], w))
    if max_size is not None:
        words = words[:max_size]
    return TextVocab({w: _RESERVED_TEXT_IDS + i for i, w in enumerate(words)})


def tokenize(question: str, text_vocab: TextVocab | Mapping[str, int], max_len: int) -> TokenSequence:
    """Map a question to a fixed-length padded id sequence."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    mapping = text_vocab.word_to_id if isinstance(text_vocab, TextVocab) else text_vocab
    words = question_words(question)[:max_len]
    ids = [mapping.get(w, UNK_ID) for w in words]
    length = len(ids)
    ids.extend([PAD_ID] * (max_len - length))
    return TokenSequence(ids=tuple(ids), length=length)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def pairs_in(pairs: Sequence[QAPair], image_ids: Iterable[str]) -> list[QAPair]:
    members = set(image_ids)
    return [p for p in pairs if p.image_id in members]


def iter_batches(
    pairs: Sequence[QAPair],
    image_ids: Iterable[str],
    batch_size: int,
    seed: int,
    epoch: int,
) -> Iterator[list[QAPair]]:
    """Yield the selected split's pairs in (seed, epoch)-deterministic order.

    Covers each selected pair exactly once; the final partial batch is
    retained.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    selected = pairs_in(pairs, image_ids)
    rng = random.Random(f"{seed}:{epoch}")
    rng.shuffle(selected)
    for start in range(0, len(selected), batch_size):
        yield selected[start : start + batch_size]
