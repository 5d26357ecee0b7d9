"""Finding lexicon: phrases per finding plus negation/uncertainty triggers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..errors import ConfigError


@dataclass(frozen=True)
class Finding:
    finding_id: str
    canonical_name: str
    phrases: tuple[str, ...]


@dataclass(frozen=True)
class FindingLexicon:
    findings: tuple[Finding, ...]
    negation_triggers: tuple[str, ...]
    uncertainty_triggers: tuple[str, ...]
    scope_window: int = 6
    _by_id: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.scope_window < 1:
            raise ConfigError("scope_window must be >= 1")
        seen_phrases: dict[str, str] = {}
        for finding in self.findings:
            if not finding.phrases:
                raise ConfigError(f"finding {finding.finding_id!r} has no phrases")
            for phrase in finding.phrases:
                if phrase != phrase.lower():
                    raise ConfigError(f"phrase {phrase!r} must be lowercase")
                if phrase in seen_phrases:
                    raise ConfigError(
                        f"phrase {phrase!r} appears in both "
                        f"{seen_phrases[phrase]!r} and {finding.finding_id!r}"
                    )
                seen_phrases[phrase] = finding.finding_id
        ids = [f.finding_id for f in self.findings]
        if len(set(ids)) != len(ids):
            raise ConfigError("finding ids must be unique")
        overlap = set(self.negation_triggers) & set(self.uncertainty_triggers)
        if overlap:
            raise ConfigError(f"triggers {sorted(overlap)} are both negation and uncertainty")
        object.__setattr__(self, "_by_id", {f.finding_id: f for f in self.findings})

    @property
    def finding_ids(self) -> tuple[str, ...]:
        return tuple(f.finding_id for f in self.findings)

    def finding(self, finding_id: str) -> Finding:
        return self._by_id[finding_id]

    @classmethod
    def from_dict(cls, obj: dict) -> "FindingLexicon":
        findings = tuple(
            Finding(
                finding_id=f["finding_id"],
                canonical_name=f["canonical_name"],
                phrases=tuple(f["phrases"]),
            )
            for f in obj["findings"]
        )
        return cls(
            findings=findings,
            negation_triggers=tuple(obj.get("negation_triggers", ())),
            uncertainty_triggers=tuple(obj.get("uncertainty_triggers", ())),
            scope_window=int(obj.get("scope_window", 6)),
        )


def load_lexicon(path) -> FindingLexicon:
    return FindingLexicon.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_lexicon() -> FindingLexicon:
    """The lexicon shipped with the package (14 chest findings)."""
    text = resources.files("medvqa.data").joinpath("lexicon.json").read_text(encoding="utf-8")
    return FindingLexicon.from_dict(json.loads(text))
