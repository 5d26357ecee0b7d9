"""Report-to-corpus synthesis and multi-source corpus merging."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, NamedTuple, Sequence

from ..corpus import BodyPart, ImageRecord, Modality, QAPair
from ..errors import CorpusParseError, IntegrityError
from .labeler import FindingState, LabelSet, ReportRecord, extract_labels
from .lexicon import FindingLexicon
from .templates import QATemplate, generate_qa


class SourceCorpus(NamedTuple):
    tag: str
    images: list[ImageRecord]
    pairs: list[QAPair]


@dataclass
class SynthesisStats:
    total_images: int = 0
    total_pairs: int = 0
    duplicates_removed: int = 0
    per_source: dict = None
    per_answer: dict = None
    per_template: dict = None

    def to_dict(self) -> dict:
        return {
            "total_images": self.total_images,
            "total_pairs": self.total_pairs,
            "duplicates_removed": self.duplicates_removed,
            "per_source": dict(self.per_source),
            "per_answer": dict(self.per_answer),
            "per_template": dict(self.per_template),
        }


def load_reports(path) -> list[ReportRecord]:
    """Read a JSONL report file; malformed lines raise with their number."""
    path = Path(path)
    reports = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("record must be a JSON object")
                report_id = obj.get("report_id")
                image_id = obj.get("image_id")
                if not isinstance(report_id, str) or not report_id:
                    raise ValueError("report_id must be a nonempty string")
                if not isinstance(image_id, str) or not image_id:
                    raise ValueError("image_id must be a nonempty string")
                metadata = obj.get("metadata") or {}
                if not isinstance(metadata, dict):
                    raise ValueError("metadata must be an object")
                reports.append(
                    ReportRecord(
                        report_id=report_id,
                        image_id=image_id,
                        text=str(obj.get("text", "")),
                        metadata=metadata,
                        source=str(obj.get("source", "")),
                    )
                )
            except (ValueError, TypeError) as exc:
                raise CorpusParseError(path, lineno, str(exc)) from None
    ids = Counter(r.report_id for r in reports)
    dupes = [rid for rid, n in ids.items() if n > 1]
    if dupes:
        raise IntegrityError(f"duplicate report_id(s): {sorted(dupes)[:5]}")
    return reports


def image_record_from_report(report: ReportRecord) -> ImageRecord:
    """Build the image record from report metadata.

    Chest X-ray defaults apply when the metadata does not say otherwise,
    matching the report datasets this pipeline targets.
    """
    meta = report.metadata
    modality = Modality.parse(str(meta.get("modality", "XRay")))
    body_part = BodyPart(str(meta.get("body_part", "chest")))
    orientation = meta.get("orientation")
    return ImageRecord(
        image_id=report.image_id,
        path=str(meta.get("path", f"images/{report.image_id}.png")),
        modality=modality,
        body_part=body_part,
        orientation=str(orientation) if orientation is not None else None,
        source=report.source,
    )


def apply_metadata_overrides(
    labels: LabelSet, metadata: dict[str, Any], lexicon: FindingLexicon
) -> LabelSet:
    """Explicit dataset flags (e.g. a pneumonia boolean) beat text rules."""
    states = dict(labels.states)
    for finding_id in lexicon.finding_ids:
        flag = metadata.get(finding_id)
        if isinstance(flag, bool):
            states[finding_id] = FindingState.POSITIVE if flag else FindingState.NEGATIVE
    return LabelSet(image_id=labels.image_id, states=states)


def synthesize(
    reports: Sequence[ReportRecord],
    lexicon: FindingLexicon,
    templates: Sequence[QATemplate],
) -> list[SourceCorpus]:
    """Label each report and expand templates, grouped by source tag."""
    by_source: dict[str, SourceCorpus] = {}
    for report in reports:
        corpus = by_source.get(report.source)
        if corpus is None:
            corpus = SourceCorpus(report.source, [], [])
            by_source[report.source] = corpus
        image = image_record_from_report(report)
        labels = extract_labels(report, lexicon)
        labels = apply_metadata_overrides(labels, dict(report.metadata), lexicon)
        if all(r.image_id != image.image_id for r in corpus.images):
            corpus.images.append(image)
        corpus.pairs.extend(generate_qa(image, labels, templates))
    return list(by_source.values())


def merge_corpora(
    sources: Sequence[SourceCorpus],
) -> tuple[list[ImageRecord], list[QAPair], SynthesisStats]:
    """Namespace ids per source, drop exact-duplicate triples, tally stats."""
    tags = [s.tag for s in sources]
    if len(set(tags)) != len(tags):
        raise IntegrityError(f"source tags must be distinct, got {tags}")

    images: list[ImageRecord] = []
    pairs: list[QAPair] = []
    seen_pair_ids: set[str] = set()
    seen_triples: set[tuple[str, str, str]] = set()
    per_source: Counter[str] = Counter()
    per_answer: Counter[str] = Counter()
    per_template: Counter[str] = Counter()
    duplicates = 0

    for source in sources:
        for record in source.images:
            images.append(replace(record, image_id=f"{source.tag}:{record.image_id}"))
        for pair in source.pairs:
            namespaced = replace(
                pair,
                pair_id=f"{source.tag}:{pair.pair_id}",
                image_id=f"{source.tag}:{pair.image_id}",
            )
            triple = (namespaced.image_id, namespaced.question, namespaced.answer)
            if triple in seen_triples:
                duplicates += 1
                continue
            if namespaced.pair_id in seen_pair_ids:
                raise IntegrityError(f"colliding pair_id {namespaced.pair_id!r}")
            seen_triples.add(triple)
            seen_pair_ids.add(namespaced.pair_id)
            pairs.append(namespaced)
            per_source[source.tag] += 1
            per_answer[namespaced.answer] += 1
            per_template[namespaced.provenance.template_id or "original"] += 1

    image_ids = Counter(r.image_id for r in images)
    colliding = [iid for iid, n in image_ids.items() if n > 1]
    if colliding:
        raise IntegrityError(f"colliding image_id(s) after namespacing: {colliding[:5]}")

    stats = SynthesisStats(
        total_images=len(images),
        total_pairs=len(pairs),
        duplicates_removed=duplicates,
        per_source=dict(per_source),
        per_answer=dict(per_answer),
        per_template=dict(per_template),
    )
    return images, pairs, stats


def synthesize_corpus(
    reports: Sequence[ReportRecord],
    lexicon: FindingLexicon,
    templates: Sequence[QATemplate],
) -> tuple[list[ImageRecord], list[QAPair], SynthesisStats]:
    """Full pipeline: label, expand, and merge all report sources."""
    return merge_corpora(synthesize(reports, lexicon, templates))
