"""Scoped rule-based finding extraction from radiology report text.

The matcher works per sentence (segmented on ``.``, ``;``, and newlines).
A finding phrase match is Positive unless a negation or uncertainty trigger
ends within ``scope_window`` token positions before the phrase start; the
nearest such trigger decides between Negative and Uncertain (negation wins
a distance tie). States from multiple matches combine with priority
Positive > Uncertain > Negative; findings never matched stay Unmentioned.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

from .lexicon import FindingLexicon

_SENTENCE_SEP = re.compile(r"[.;\n]")
_TOKEN = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


class FindingState(str, Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    UNCERTAIN = "Uncertain"
    UNMENTIONED = "Unmentioned"


_PRIORITY = {
    FindingState.POSITIVE: 3,
    FindingState.UNCERTAIN: 2,
    FindingState.NEGATIVE: 1,
    FindingState.UNMENTIONED: 0,
}


@dataclass(frozen=True)
class ReportRecord:
    report_id: str
    image_id: str
    text: str
    metadata: Mapping[str, Any] = field(default_factory=dict)
    source: str = ""


@dataclass(frozen=True)
class LabelSet:
    image_id: str
    states: Mapping[str, FindingState]

    def positives(self) -> list[str]:
        return [f for f, s in self.states.items() if s is FindingState.POSITIVE]


def sentence_tokens(sentence: str) -> list[str]:
    return _TOKEN.findall(sentence.lower())


def _phrase_occurrences(tokens: Sequence[str], phrase_tokens: Sequence[str]) -> list[int]:
    """Start indices where the phrase token sequence occurs."""
    n, m = len(tokens), len(phrase_tokens)
    if m == 0 or m > n:
        return []
    return [i for i in range(n - m + 1) if list(tokens[i : i + m]) == list(phrase_tokens)]


def _trigger_ends(tokens: Sequence[str], triggers: Sequence[str]) -> list[int]:
    """Indices of the last token of every trigger occurrence."""
    ends = []
    for trigger in triggers:
        tt = sentence_tokens(trigger)
        for start in _phrase_occurrences(tokens, tt):
            ends.append(start + len(tt) - 1)
    return ends


def _match_state(
    phrase_start: int,
    neg_ends: Sequence[int],
    unc_ends: Sequence[int],
    window: int,
) -> FindingState:
    def nearest(ends: Sequence[int]) -> int:
        in_scope = [e for e in ends if 0 < phrase_start - e <= window]
        return max(in_scope) if in_scope else -1

    neg, unc = nearest(neg_ends), nearest(unc_ends)
    if neg < 0 and unc < 0:
        return FindingState.POSITIVE
    return FindingState.NEGATIVE if neg >= unc else FindingState.UNCERTAIN


def extract_labels(report: ReportRecord, lexicon: FindingLexicon) -> LabelSet:
    """Assign one state per lexicon finding from the report text."""
    best: dict[str, FindingState] = {
        f.finding_id: FindingState.UNMENTIONED for f in lexicon.findings
    }
    for sentence in _SENTENCE_SEP.split(report.text):
        tokens = sentence_tokens(sentence)
        if not tokens:
            continue
        neg_ends = _trigger_ends(tokens, lexicon.negation_triggers)
        unc_ends = _trigger_ends(tokens, lexicon.uncertainty_triggers)
        for finding in lexicon.findings:
            for phrase in finding.phrases:
                for start in _phrase_occurrences(tokens, sentence_tokens(phrase)):
                    state = _match_state(start, neg_ends, unc_ends, lexicon.scope_window)
                    if _PRIORITY[state] > _PRIORITY[best[finding.finding_id]]:
                        best[finding.finding_id] = state
    return LabelSet(image_id=report.image_id, states=best)
