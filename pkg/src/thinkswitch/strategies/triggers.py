"""Keyword trigger for speculative escalation."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

LEXICON_DIR = Path(__file__).parent / "lexicons"
_CATEGORY = re.compile(r"^#\s*\[([\w-]+)\]\s*$")


@dataclass(frozen=True)
class TriggerLexicon:
    id: str
    keywords: tuple[str, ...]
    categories: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self) -> None:
        for kw in self.keywords:
            if kw != kw.lower() or not kw:
                raise ValueError(f"lexicon entries must be non-empty lowercase strings, got {kw!r}")
        if len(set(self.keywords)) != len(self.keywords):
            raise ValueError(f"lexicon {self.id!r} has duplicate entries")

    def extended(self, extra: tuple[str, ...] | list[str]) -> TriggerLexicon:
        add = tuple(k.lower() for k in extra if k.lower() not in self.keywords)
        if not add:
            return self
        return TriggerLexicon(f"{self.id}+ext", self.keywords + add, self.categories + (("extra", add),))

    @classmethod
    def from_file(cls, path: str | Path, lexicon_id: str | None = None) -> TriggerLexicon:
        path = Path(path)
        keywords: list[str] = []
        categories: dict[str, list[str]] = {}
        current = "uncategorized"
        for line in path.read_text(encoding="utf-8").splitlines():
            m = _CATEGORY.match(line)
            if m:
                current = m.group(1)
                continue
            if not line.strip() or line.startswith("#"):
                continue
            # only the line break is stripped: entries may carry punctuation
            keywords.append(line.rstrip("\r"))
            categories.setdefault(current, []).append(keywords[-1])
        return cls(lexicon_id or path.stem, tuple(keywords), tuple((k, tuple(v)) for k, v in categories.items()))


@lru_cache(maxsize=None)
def load_lexicon(lexicon_id: str = "core") -> TriggerLexicon:
    path = LEXICON_DIR / f"{lexicon_id}.txt"
    if not path.exists():
        raise KeyError(f"no shipped trigger lexicon {lexicon_id!r}")
    return TriggerLexicon.from_file(path, lexicon_id)


def scan_triggers(text: str, lexicon: TriggerLexicon) -> list[str]:
    """Lexicon entries found in ``text`` (case-insensitive substring), in lexicon order."""
    haystack = text.lower()
    return [kw for kw in lexicon.keywords if kw in haystack]
