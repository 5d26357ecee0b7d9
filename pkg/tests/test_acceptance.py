"""Release acceptance checks.

Each test carries an ``acceptance`` marker and prints one PASS/FAIL line
(via the hook in conftest.py). Expected values come from independent
hand-derived oracles, never from the code under test.
"""

import base64
import io
import math
import warnings

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from fd_utils import max_fd_rel_err, random_e2e_instance
from test_checkpoint import random_checkpoint
from test_synth import HAND_TRACED

from medvqa.corpus import (
    AnswerType,
    BodyPart,
    DatasetSplit,
    ImageRecord,
    Modality,
    SmallStratumWarning,
    build_text_vocab,
    split_corpus,
    tokenize,
)
from medvqa.errors import CheckpointFormatError, CheckpointIntegrityError
from medvqa.images import preprocess_image_bytes
from medvqa.models.checkpoint import load_checkpoint, save_checkpoint
from medvqa.models.config import FusionKind, ImageEncoderKind, ModelConfig, TextEncoderKind
from medvqa.models.contrastive import PretrainConfig, contrastive_loss, pretrain
from medvqa.models.fusion import predict
from medvqa.service.app import create_app
from medvqa.synth.labeler import ReportRecord, extract_labels
from medvqa.synth.lexicon import default_lexicon
from medvqa.synth.pipeline import load_reports, synthesize_corpus
from medvqa.synth.templates import default_templates
from medvqa.synthetic import synthetic_corpus
from medvqa.training.adadelta import AdaDelta
from medvqa.training.trainer import ArrayImageStore, TrainConfig, train
from medvqa.corpus import write_corpus


# ---------------------------------------------------------------------------
# 1. Overfit sanity: the default model memorizes the bundled 20-image corpus
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="01 overfit-sanity")
def test_overfit_reaches_high_train_accuracy_within_budget(overfit_run):
    result, images, pairs, arrays, store, elapsed = overfit_run
    assert len(images) == 20
    assert len(pairs) == 100
    assert len(result.bundle.answer_vocab) == 10

    opt = result.checkpoint.meta["train_config"]["optimizer"]
    assert opt == {"rho": 0.95, "eps": 1e-6, "lr": 1.0}
    assert result.checkpoint.meta["train_config"]["epochs"] == 200
    assert result.checkpoint.meta["dropped_train_pairs"] == 0
    assert result.bundle.config.fusion is FusionKind.PRODUCT
    assert result.bundle.config.image_encoder is ImageEncoderKind.SMALL_CNN
    assert result.bundle.config.text_encoder is TextEncoderKind.BILSTM

    final = result.curves[-1]
    assert final.train_acc >= 0.99, f"train accuracy stalled at {final.train_acc}"
    assert elapsed <= 120.0, f"run took {elapsed:.1f}s on one core"


# ---------------------------------------------------------------------------
# 2. Gradient suite: analytic gradients vs central finite differences
# ---------------------------------------------------------------------------


def _contrastive_instance(seed):
    rng = np.random.RandomState(7000 + seed)
    n = int(rng.randint(2, 9))
    d = int(rng.randint(3, 17))
    img = torch.tensor(rng.randn(n, d), dtype=torch.float64, requires_grad=True)
    txt = torch.tensor(rng.randn(n, d), dtype=torch.float64, requires_grad=True)
    return (lambda: contrastive_loss(img, txt, temperature=0.5)), [img, txt], rng


@pytest.mark.acceptance(criterion="02 gradient-check")
def test_analytic_gradients_match_finite_differences():
    """100 random float64 instances: 60 full models (both fusions, both head
    depths, both encoders in the path) plus 40 contrastive losses."""
    worst = 0.0
    for seed in range(60):
        fusion = FusionKind.PRODUCT if seed % 2 == 0 else FusionKind.CONCAT
        head_hidden = 8 if seed % 3 == 0 else None
        loss_fn, params, rng = random_e2e_instance(seed, fusion=fusion, head_hidden=head_hidden)
        worst = max(worst, max_fd_rel_err(loss_fn, params, rng, coords_per_tensor=3))
    for seed in range(40):
        loss_fn, params, rng = _contrastive_instance(seed)
        worst = max(worst, max_fd_rel_err(loss_fn, params, rng, coords_per_tensor=4))
    assert worst <= 1e-4, f"max relative gradient error {worst:.3e}"


# ---------------------------------------------------------------------------
# 3. Split fidelity: exact quota sizes plus partition properties
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="03 split-fidelity")
def test_split_sizes_partition_and_determinism():
    single = [
        ImageRecord(f"i{k}", f"images/i{k}.png", Modality.XRAY, BodyPart.CHEST)
        for k in range(642)
    ]
    split = split_corpus(single, ratios=(0.70, 0.15, 0.15), seed=0)
    assert (len(split.train), len(split.val), len(split.test)) == (450, 96, 96)

    modalities = list(Modality)
    bodies = list(BodyPart)
    ratio_choices = [(0.70, 0.15, 0.15), (0.5, 0.25, 0.25), (0.6, 0.2, 0.2), (0.8, 0.1, 0.1)]
    rng = np.random.RandomState(0)
    for trial in range(1000):
        n = int(rng.randint(1, 61))
        images = [
            ImageRecord(
                f"t{trial}i{k}",
                f"images/{k}.png",
                modalities[rng.randint(len(modalities))],
                bodies[rng.randint(len(bodies))],
            )
            for k in range(n)
        ]
        ratios = ratio_choices[rng.randint(len(ratio_choices))]
        seed = int(rng.randint(10000))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SmallStratumWarning)
            first = split_corpus(images, ratios=ratios, seed=seed)
            again = split_corpus(images, ratios=ratios, seed=seed)
        ids = {r.image_id for r in images}
        assert set(first.train) | set(first.val) | set(first.test) == ids
        assert len(first.train) + len(first.val) + len(first.test) == n
        assert (first.train, first.val, first.test) == (again.train, again.val, again.test)


# ---------------------------------------------------------------------------
# 4. Synthesis determinism and hand-counted expansion totals
# ---------------------------------------------------------------------------

# Ten report texts with hand-derived finding counts against the packaged
# lexicon: p = positive findings, n = negated findings. Uncertain and
# unmentioned findings produce no pairs. Each report then emits
# 2p + n + (1 if orientation metadata) + 2 pairs: presence (p + n),
# open disease (p), plus one modality and one body-part question.
BASE_ROWS = [
    # pneumonia positive; "no" ends 1 token before "pleural effusion"
    ("There is pneumonia. No pleural effusion.", 1, 1),
    # mentions no lexicon finding at all
    ("The lungs are clear.", 0, 0),
    # effusion uncertain (cannot rule out); enlarged heart positive
    ("Cannot rule out pleural effusion. Enlarged heart.", 1, 0),
    # one negation scopes all three findings (distances 1, 2, 4)
    ("No evidence of pneumothorax, effusion, or consolidation.", 0, 3),
    # hyperinflated -> emphysema positive; airspace disease negated by "without"
    ("Hyperinflated lungs without focal airspace disease.", 1, 1),
    # pneumonia uncertain; fracture negated in its own sentence
    ("Possible pneumonia; no fracture.", 0, 1),
    # cardiomegaly and effusions both positive
    ("Stable cardiomegaly and small effusions.", 2, 0),
    # covid negated; opacity uncertain
    ("Negative for covid. Questionable opacity.", 0, 1),
    # fibrosis and calcified granuloma both positive
    ("Interstitial scarring and calcified granulomas are present.", 2, 0),
    # masses+nodules are one finding, negated; edema negated
    ("No masses or nodules. Denies edema.", 0, 2),
]


def golden_rows():
    """50 reports cycling the base texts, with per-report expected pair counts."""
    rows = []
    for i in range(50):
        text, p, n = BASE_ROWS[i % 10]
        metadata = {}
        if i % 4 == 0:
            metadata["orientation"] = "axial" if i % 8 == 0 else "coronal"
        if i == 13:  # base row 3 leaves pneumonia unmentioned; flag adds a positive
            metadata["pneumonia"] = True
            p += 1
        if i == 27:  # base row 7 leaves opacity uncertain; flag promotes it
            metadata["opacity"] = True
            p += 1
        report = {
            "report_id": f"r{i:03d}",
            "image_id": f"img{i:03d}",
            "text": text,
            "metadata": metadata,
            "source": "srcA" if i < 30 else "srcB",
        }
        rows.append((report, 2 * p + n + (1 if "orientation" in metadata else 0) + 2))
    return rows


@pytest.mark.acceptance(criterion="04 synthesis-determinism-and-counts")
def test_synthesis_is_deterministic_with_hand_counted_totals(tmp_path):
    import json

    rows = golden_rows()
    expected_total = sum(count for _, count in rows)
    reports_path = tmp_path / "reports.jsonl"
    with open(reports_path, "w", encoding="utf-8") as f:
        for report, _ in rows:
            f.write(json.dumps(report) + "\n")

    outputs = []
    for run in ("first", "second"):
        lexicon = default_lexicon()
        templates = default_templates(lexicon)
        reports = load_reports(reports_path)
        images, pairs, stats = synthesize_corpus(reports, lexicon, templates)
        out = tmp_path / run
        write_corpus(out, images, pairs)
        outputs.append((images, pairs, stats, out))

    images, pairs, stats, _ = outputs[0]
    assert len(pairs) == expected_total
    assert stats.total_pairs == expected_total
    assert stats.duplicates_removed == 0
    assert len(images) == 50

    closed_answers = {p.answer for p in pairs if p.answer_type is AnswerType.CLOSED}
    assert closed_answers == {"Yes", "No"}
    for pair in pairs:
        if pair.answer_type is AnswerType.CLOSED:
            assert pair.answer in {"Yes", "No"}

    first_dir, second_dir = outputs[0][3], outputs[1][3]
    for name in ("qa.jsonl", "images.jsonl"):
        assert (first_dir / name).read_bytes() == (second_dir / name).read_bytes(), name


# ---------------------------------------------------------------------------
# 5. Labeler oracle: thirty hand-traced sentences
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="05 labeler-oracle")
def test_labeler_agrees_with_thirty_hand_traced_sentences():
    lexicon = default_lexicon()
    assert len(HAND_TRACED) == 30
    failures = []
    for text, expected in HAND_TRACED:
        labels = extract_labels(
            ReportRecord(report_id="r", image_id="img", text=text), lexicon
        )
        for finding_id in lexicon.finding_ids:
            want = expected.get(finding_id)
            got = labels.states[finding_id]
            if want is None:
                if got.value != "Unmentioned":
                    failures.append((text, finding_id, got))
            elif got is not want:
                failures.append((text, finding_id, got))
    assert not failures, f"{len(failures)} label mismatches: {failures[:3]}"


# ---------------------------------------------------------------------------
# 6. AdaDelta oracle: hand-unrolled recurrence
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="06 adadelta-oracle")
def test_adadelta_matches_hand_unrolled_recurrence():
    rho, eps = 0.95, 1e-6
    g1, g2 = 0.1, -0.05

    # step 1 by hand
    eg1 = (1.0 - rho) * g1 * g1
    d1 = -(math.sqrt(0.0 + eps) / math.sqrt(eg1 + eps)) * g1
    ed1 = (1.0 - rho) * d1 * d1
    t1 = 0.7 + d1
    # step 2 by hand
    eg2 = rho * eg1 + (1.0 - rho) * g2 * g2
    d2 = -(math.sqrt(ed1 + eps) / math.sqrt(eg2 + eps)) * g2
    t2 = t1 + d2

    w = torch.tensor([0.7], dtype=torch.float64)
    opt = AdaDelta({"w": w}, rho=rho, eps=eps, lr=1.0)
    w.grad = torch.tensor([g1], dtype=torch.float64)
    opt.step()
    assert abs(float(w) - t1) <= 1e-12
    w.grad = torch.tensor([g2], dtype=torch.float64)
    opt.step()
    assert abs(float(w) - t2) <= 1e-12

    # a zero gradient must leave the parameter bit-identical
    before = w.detach().numpy().tobytes()
    w.grad = torch.zeros_like(w)
    opt.step()
    assert w.detach().numpy().tobytes() == before


# ---------------------------------------------------------------------------
# 7. Contrastive closed forms and swap symmetry
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="07 contrastive-closed-form")
def test_contrastive_closed_forms_and_swap_symmetry():
    for n in (3, 7):
        rng = np.random.RandomState(n)
        row = torch.tensor(rng.randn(1, 6), dtype=torch.float64)
        x = row.repeat(n, 1)
        assert abs(float(contrastive_loss(x, x.clone(), temperature=1.0)) - math.log(n)) <= 1e-9

    e = torch.eye(2, dtype=torch.float64)
    expected = math.log(1.0 + math.exp(-1.0))
    assert abs(float(contrastive_loss(e, e.clone(), temperature=1.0)) - expected) <= 1e-9

    rng = np.random.RandomState(77)
    for _ in range(20):
        n = int(rng.randint(2, 9))
        img = torch.tensor(rng.randn(n, 5), dtype=torch.float64)
        txt = torch.tensor(rng.randn(n, 5), dtype=torch.float64)
        assert float(contrastive_loss(img, txt)) == float(contrastive_loss(txt, img))


# ---------------------------------------------------------------------------
# 8. Freeze contract: frozen encoder weights survive training bit-for-bit
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="08 freeze-contract")
def test_frozen_encoders_are_bit_identical_after_training(synthetic_fixture, tmp_path):
    images, pairs, arrays = synthetic_fixture
    store = ArrayImageStore(arrays, 32, 1)
    split = DatasetSplit(
        train=frozenset(r.image_id for r in images), val=frozenset(), test=frozenset()
    )
    text_vocab = build_text_vocab((p.question for p in pairs), min_freq=1)
    base_config = ModelConfig(
        d=32,
        side=32,
        embed_dim=32,
        hidden_dim=32,
        cnn_channels=(8, 16, 32, 32),
        text_vocab_size=text_vocab.size,
        seed=0,
    )
    contrastive_pairs = [
        (arrays[p.image_id], tokenize(p.question, text_vocab, 20)) for p in pairs[:32]
    ]
    enc_ckpt = pretrain(
        contrastive_pairs, base_config, PretrainConfig(epochs=2, batch_size=16, seed=0)
    )
    enc_path = tmp_path / "encoders.mvqa"
    save_checkpoint(enc_ckpt, enc_path)

    for frozen_side in ("image", "text"):
        config = base_config.with_(
            image_encoder=ImageEncoderKind.PRETRAINED,
            text_encoder=TextEncoderKind.PRETRAINED,
            image_checkpoint=str(enc_path),
            text_checkpoint=str(enc_path),
            freeze_image=frozen_side == "image",
            freeze_text=frozen_side == "text",
        )
        result = train(
            images, pairs, split, config, TrainConfig(epochs=3, batch_size=5, seed=0), store
        )
        for name, arr in result.checkpoint.tensors.items():
            if not name.startswith(("image.", "text.")):
                continue
            same = arr.tobytes() == enc_ckpt.tensors[name].tobytes()
            if name.startswith(f"{frozen_side}."):
                assert same, f"{name} changed despite freeze_{frozen_side}"
            else:
                assert not same, f"{name} never updated while unfrozen"


# ---------------------------------------------------------------------------
# 9. Checkpoint container: bit-exact round-trips, corrupt files rejected
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="09 checkpoint-round-trip")
def test_checkpoint_round_trips_and_rejects_corruption(tmp_path):
    rng = np.random.RandomState(42)
    for case in range(100):
        ckpt = random_checkpoint(rng)
        path = tmp_path / f"case{case}.mvqa"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.meta == ckpt.meta
        assert set(loaded.tensors) == set(ckpt.tensors)
        for name, arr in ckpt.tensors.items():
            got = loaded.tensors[name]
            assert got.shape == arr.shape
            assert got.dtype == np.float32
            assert got.tobytes() == arr.tobytes(), f"case {case}: {name} not bit-exact"

    good = (tmp_path / "case0.mvqa").read_bytes()
    bad_magic = tmp_path / "bad_magic.mvqa"
    bad_magic.write_bytes(b"WRONG" + good[5:])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(bad_magic)

    bad_header = tmp_path / "bad_header.mvqa"
    length = int.from_bytes(good[5:13], "little")
    bad_header.write_bytes(good[:13] + b"{" * length + good[13 + length :])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(bad_header)

    truncated = tmp_path / "truncated.mvqa"
    truncated.write_bytes(good[:-6])
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(truncated)


# ---------------------------------------------------------------------------
# 10. Service equivalence: HTTP answers match in-process inference
# ---------------------------------------------------------------------------


@pytest.mark.acceptance(criterion="10 service-equivalence")
def test_service_matches_in_process_predictions(overfit_run):
    result, images, pairs, arrays, store, _ = overfit_run
    bundle = result.bundle
    client = TestClient(create_app(bundle), raise_server_exceptions=False)
    questions = sorted({p.question for p in pairs})

    for idx in range(50):
        record = images[idx % len(images)]
        question = questions[idx % len(questions)]
        plane = arrays[record.image_id][:, :, 0]
        buf = io.BytesIO()
        Image.fromarray((plane * 255.0 + 0.5).astype(np.uint8), mode="L").save(
            buf, format="PNG"
        )
        raw = buf.getvalue()

        resp = client.post(
            "/predict",
            json={
                "image": base64.b64encode(raw).decode("ascii"),
                "question": question,
                "top_k": 5,
            },
        )
        assert resp.status_code == 200, resp.text
        body = resp.json()

        arr = preprocess_image_bytes(raw, bundle.config.side, bundle.config.in_channels)
        expected = predict(arr, question, bundle, k=5)
        assert body["answer"] == expected.answer, f"request {idx}"
        assert body["model_id"] == bundle.model_id
        assert abs(body["confidence"] - expected.confidence) <= 1e-6
        assert [e["answer"] for e in body["top_k"]] == [a for a, _ in expected.top_k]
        for entry, (_, prob) in zip(body["top_k"], expected.top_k):
            assert abs(entry["prob"] - prob) <= 1e-6
