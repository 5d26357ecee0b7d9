"""Rule-based QA-pair synthesis from radiology report datasets."""

from .labeler import FindingState, LabelSet, ReportRecord, extract_labels
from .lexicon import Finding, FindingLexicon, default_lexicon, load_lexicon
from .pipeline import (
    SourceCorpus,
    SynthesisStats,
    load_reports,
    merge_corpora,
    synthesize,
    synthesize_corpus,
)
from .templates import QATemplate, TemplateKind, default_templates, generate_qa, load_templates

__all__ = [
    "Finding",
    "FindingLexicon",
    "FindingState",
    "LabelSet",
    "QATemplate",
    "ReportRecord",
    "SourceCorpus",
    "SynthesisStats",
    "TemplateKind",
    "default_lexicon",
    "default_templates",
    "extract_labels",
    "generate_qa",
    "load_lexicon",
    "load_reports",
    "load_templates",
    "merge_corpora",
    "synthesize",
    "synthesize_corpus",
]
