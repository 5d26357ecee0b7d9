"""Deterministic synthetic corpus for tests and demos.

Each generated image encodes its own attributes as block intensities
(modality top-left, body part top-right, disease bottom-left, orientation
bottom-right), so a small model can actually learn the question-answer
mapping from pixels. Five questions are emitted per image over a ten-answer
vocabulary: modality (3 answers, asked two ways), body part (2), visible
disease (3), and a yes/no pneumonia check.

Run ``python -m medvqa.synthetic --out <dir>`` to materialize a corpus on
disk, optionally with a trained demo checkpoint.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import (
    AnswerType,
    BodyPart,
    ImageRecord,
    Modality,
    QAPair,
    split_corpus,
    write_corpus,
)

_MODALITIES = (Modality.XRAY, Modality.CT, Modality.MRI)
_BODY_PARTS = (BodyPart.CHEST, BodyPart.HEAD)
_DISEASES = ("pneumonia", "pleural effusion", "cardiomegaly")
_ORIENTATIONS = ("axial", "coronal")

QUESTIONS = {
    "modality": "What modality is used to take this image?",
    "technique": "Which imaging technique produced this picture?",
    "body_part": "Which part of the body does this image belong to?",
    "disease": "What disease is visible in this image?",
    "presence": "Does the picture contain pneumonia?",
}


def _attributes(i: int):
    return {
        "modality": _MODALITIES[i % 3],
        "body_part": _BODY_PARTS[(i // 3) % 2],
        "disease": _DISEASES[(i // 2) % 3],
        "orientation": _ORIENTATIONS[(i // 4) % 2],
    }


def _render(i: int, side: int, seed: int) -> np.ndarray:
    attrs = _attributes(i)
    rng = np.random.RandomState(seed * 100003 + i)
    arr = np.full((side, side), 0.05 + 0.02 * (i % 7), dtype=np.float32)
    arr += rng.uniform(-0.01, 0.01, size=arr.shape).astype(np.float32)
    b = max(side // 3, 2)
    arr[:b, :b] = (0.2, 0.5, 0.8)[_MODALITIES.index(attrs["modality"])]
    arr[:b, -b:] = (0.25, 0.75)[_BODY_PARTS.index(attrs["body_part"])]
    arr[-b:, :b] = (0.2, 0.5, 0.8)[_DISEASES.index(attrs["disease"])]
    arr[-b:, -b:] = (0.3, 0.7)[_ORIENTATIONS.index(attrs["orientation"])]
    return np.clip(arr, 0.0, 1.0)[:, :, None]


def _answers(attrs: dict) -> dict[str, str]:
    return {
        "modality": attrs["modality"].display,
        "technique": attrs["modality"].display,
        "body_part": attrs["body_part"].value,
        "disease": attrs["disease"],
        "presence": "Yes" if attrs["disease"] == "pneumonia" else "No",
    }


def synthetic_corpus(
    n_images: int = 20, side: int = 32, seed: int = 0
) -> tuple[list[ImageRecord], list[QAPair], dict[str, np.ndarray]]:
    """Build records, pairs, and in-memory image arrays."""
    images: list[ImageRecord] = []
    pairs: list[QAPair] = []
    arrays: dict[str, np.ndarray] = {}
    for i in range(n_images):
        attrs = _attributes(i)
        image_id = f"syn{i:04d}"
        images.append(
            ImageRecord(
                image_id=image_id,
                path=f"images/{image_id}.png",
                modality=attrs["modality"],
                body_part=attrs["body_part"],
                orientation=attrs["orientation"],
                source="synthetic",
            )
        )
        arrays[image_id] = _render(i, side, seed)
        answers = _answers(attrs)
        for key, question in QUESTIONS.items():
            closed = key == "presence"
            pairs.append(
                QAPair(
                    pair_id=f"{image_id}:{key}",
                    image_id=image_id,
                    question=question,
                    answer=answers[key],
                    answer_type=AnswerType.CLOSED if closed else AnswerType.OPEN,
                )
            )
    return images, pairs, arrays


def write_synthetic_corpus(root, n_images: int = 20, side: int = 32, seed: int = 0):
    """Materialize the corpus (PNG files plus JSONL records) under ``root``."""
    root = Path(root)
    images, pairs, arrays = synthetic_corpus(n_images, side, seed)
    (root / "images").mkdir(parents=True, exist_ok=True)
    for record in images:
        arr = arrays[record.image_id][:, :, 0]
        img = Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="L")
        img.save(root / record.path)
    write_corpus(root, images, pairs)
    return images, pairs, arrays


def build_demo_checkpoint(
    out_dir,
    n_images: int = 20,
    side: int = 32,
    seed: int = 0,
    epochs: int = 200,
    ratios=(0.70, 0.15, 0.15),
):
    """Write a corpus and train a small model on it; returns the TrainResult.

    The defaults (200 epochs, batch 5) take the model to high training
    accuracy on the 20-image corpus in under a minute.
    """
    from .models.config import ModelConfig
    from .training.trainer import FileImageStore, TrainConfig, train

    out_dir = Path(out_dir)
    data_dir = out_dir / "data"
    images, pairs, _arrays = write_synthetic_corpus(data_dir, n_images, side, seed)
    split = split_corpus(images, ratios=ratios, seed=seed)
    model_config = ModelConfig(
        d=32, side=side, embed_dim=32, hidden_dim=32, cnn_channels=(8, 16, 32, 32), seed=seed
    )
    train_config = TrainConfig(epochs=epochs, batch_size=5, seed=seed)
    store = FileImageStore(data_dir, side, model_config.in_channels)
    return train(images, pairs, split, model_config, train_config, store, out_dir / "run")


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description="Generate a synthetic demo corpus.")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--images", type=int, default=20)
    parser.add_argument("--side", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train", action="store_true", help="also train a demo checkpoint")
    parser.add_argument("--epochs", type=int, default=200)
    args = parser.parse_args(argv)
    if args.train:
        result = build_demo_checkpoint(
            args.out, n_images=args.images, side=args.side, seed=args.seed, epochs=args.epochs
        )
        print(
            json.dumps(
                {
                    "checkpoint": str(result.checkpoint_path),
                    "best_epoch": result.best_epoch,
                    "val_accuracy": result.best_val_accuracy,
                }
            )
        )
    else:
        write_synthetic_corpus(Path(args.out) / "data", args.images, args.side, args.seed)
        print(json.dumps({"data_dir": str(Path(args.out) / "data")}))


if __name__ == "__main__":
    main()
