"""Question templates and their expansion against labeled images."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from ..corpus import AnswerType, ImageRecord, Provenance, ProvenanceSource, QAPair, QLang
from ..errors import ConfigError
from .labeler import FindingState, LabelSet
from .lexicon import Finding, FindingLexicon


class TemplateKind(str, Enum):
    FINDING_PRESENCE = "finding_presence"
    FINDING_OPEN = "finding_open"
    MODALITY = "modality"
    BODY_PART = "body_part"
    ORIENTATION = "orientation"


_FINDING_KINDS = (TemplateKind.FINDING_PRESENCE, TemplateKind.FINDING_OPEN)


@dataclass(frozen=True)
class QATemplate:
    template_id: str
    kind: TemplateKind
    question_pattern: str
    answer_type: AnswerType
    findings: tuple[Finding, ...] = ()

    def __post_init__(self):
        if self.kind in _FINDING_KINDS and not self.findings:
            raise ConfigError(f"template {self.template_id!r} needs a bound lexicon")
        if self.kind is TemplateKind.FINDING_PRESENCE and self.answer_type is not AnswerType.CLOSED:
            raise ConfigError(f"presence template {self.template_id!r} must be CLOSED")
        probe = {"finding": "x", "modality": "x", "body_part": "x", "orientation": "x"}
        try:
            self.question_pattern.format(**probe)
        except (KeyError, IndexError, ValueError) as exc:
            raise ConfigError(
                f"template {self.template_id!r} has an unresolvable pattern: {exc}"
            ) from None

    def _question(self, image: ImageRecord, finding: Finding | None = None) -> str:
        return self.question_pattern.format(
            finding=finding.canonical_name if finding else "",
            modality=image.modality.display,
            body_part=image.body_part.value,
            orientation=image.orientation or "",
        )

    def expand(
        self, image: ImageRecord, labels: LabelSet
    ) -> list[tuple[str, str, str | None]]:
        """(question, answer, finding_id) triples this template emits."""
        out: list[tuple[str, str, str | None]] = []
        if self.kind is TemplateKind.FINDING_PRESENCE:
            for finding in self.findings:
                state = labels.states.get(finding.finding_id, FindingState.UNMENTIONED)
                if state is FindingState.POSITIVE:
                    out.append((self._question(image, finding), "Yes", finding.finding_id))
                elif state is FindingState.NEGATIVE:
                    out.append((self._question(image, finding), "No", finding.finding_id))
        elif self.kind is TemplateKind.FINDING_OPEN:
            for finding in self.findings:
                if labels.states.get(finding.finding_id) is FindingState.POSITIVE:
                    out.append(
                        (self._question(image, finding), finding.canonical_name, finding.finding_id)
                    )
        elif self.kind is TemplateKind.MODALITY:
            out.append((self._question(image), image.modality.display, None))
        elif self.kind is TemplateKind.BODY_PART:
            out.append((self._question(image), image.body_part.value, None))
        elif self.kind is TemplateKind.ORIENTATION:
            if image.orientation:
                out.append((self._question(image), image.orientation, None))
        return out


def _templates_from_list(raw: Sequence[dict], lexicon: FindingLexicon) -> list[QATemplate]:
    templates = []
    for obj in raw:
        kind = TemplateKind(obj["kind"])
        templates.append(
            QATemplate(
                template_id=obj["template_id"],
                kind=kind,
                question_pattern=obj["question_pattern"],
                answer_type=AnswerType(obj["answer_type"]),
                findings=lexicon.findings if kind in _FINDING_KINDS else (),
            )
        )
    ids = [t.template_id for t in templates]
    if len(set(ids)) != len(ids):
        raise ConfigError("template ids must be unique")
    return templates


def load_templates(path, lexicon: FindingLexicon) -> list[QATemplate]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return _templates_from_list(raw, lexicon)


def default_templates(lexicon: FindingLexicon) -> list[QATemplate]:
    from importlib import resources

    text = resources.files("medvqa.data").joinpath("templates.json").read_text(encoding="utf-8")
    return _templates_from_list(json.loads(text), lexicon)


def generate_qa(
    image: ImageRecord, labels: LabelSet, templates: Sequence[QATemplate]
) -> list[QAPair]:
    """Expand every applicable template into synthesized QA pairs."""
    if labels.image_id != image.image_id:
        raise ValueError(
            f"label set is for image {labels.image_id!r}, not {image.image_id!r}"
        )
    pairs: list[QAPair] = []
    for template in templates:
        for question, answer, finding_id in template.expand(image, labels):
            suffix = f":{finding_id}" if finding_id else ""
            pairs.append(
                QAPair(
                    pair_id=f"{image.image_id}:{template.template_id}{suffix}",
                    image_id=image.image_id,
                    question=question,
                    answer=answer,
                    q_lang=QLang.EN,
                    answer_type=template.answer_type,
                    provenance=Provenance(
                        source=ProvenanceSource.SYNTHESIZED, template_id=template.template_id
                    ),
                )
            )
    return pairs
