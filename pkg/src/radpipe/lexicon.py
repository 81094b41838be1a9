"""Domain lexicon: word list, synonym groups, forward maximum matching."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import LexiconError


class SegTag(enum.Enum):
    B = "B"
    I = "I"  # noqa: E741
    E = "E"
    S = "S"
    NONE = "None"

    @property
    def index(self) -> int:
        return _SEGTAG_INDEX[self]

    def __str__(self) -> str:
        return self.value


SEGTAGS: tuple[SegTag, ...] = (SegTag.B, SegTag.I, SegTag.E, SegTag.S, SegTag.NONE)
_SEGTAG_INDEX = {t: i for i, t in enumerate(SEGTAGS)}


@dataclass(frozen=True)
class Lexicon:
    words: frozenset[str]
    synonym_groups: tuple[tuple[str, frozenset[str]], ...] = ()
    max_word_len: int = field(init=False)
    _canonical_of: Mapping[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if any(not w for w in self.words):
            raise LexiconError("empty word in lexicon")
        canonical_of: dict[str, str] = {}
        groups = []
        for canonical, variants in self.synonym_groups:
            if not canonical or any(not v for v in variants):
                raise LexiconError("empty string in synonym group")
            variants = frozenset(variants) | {canonical}
            for v in variants:
                if v in canonical_of:
                    raise LexiconError(f"variant {v!r} appears in more than one synonym group")
                canonical_of[v] = canonical
            groups.append((canonical, variants))
        for w in set(self.words) | set(canonical_of.values()):
            if "/" in w:
                raise LexiconError(f"word {w!r} contains '/', which is reserved as the feature key separator")
        object.__setattr__(self, "synonym_groups", tuple(sorted(groups, key=lambda g: g[0])))
        object.__setattr__(self, "max_word_len", max((len(w) for w in self.words), default=0))
        object.__setattr__(self, "_canonical_of", canonical_of)

    @classmethod
    def build(cls, words: Iterable[str], synonym_groups: Iterable[tuple[str, Iterable[str]]] = ()) -> "Lexicon":
        return cls(frozenset(words), tuple((c, frozenset(v)) for c, v in synonym_groups))

    def normalize(self, surface: str) -> str:
        return self._canonical_of.get(surface, surface)

    def segment(self, text: str) -> list[SegTag]:
        return segment_fmm(self, text)


def segment_fmm(lex: Lexicon, text: str) -> list[SegTag]:
    """Tag each character by greedy left-to-right longest dictionary match.

    A match of length 1 is tagged S, longer matches B I.. E, and characters
    not covered by any match get NONE.
    """
    tags: list[SegTag] = []
    n = len(text)
    pos = 0
    while pos < n:
        match = 0
        for k in range(min(lex.max_word_len, n - pos), 0, -1):
            if text[pos:pos + k] in lex.words:
                match = k
                break
        if match == 0:
            tags.append(SegTag.NONE)
            pos += 1
        elif match == 1:
            tags.append(SegTag.S)
            pos += 1
        else:
            tags.append(SegTag.B)
            tags.extend([SegTag.I] * (match - 2))
            tags.append(SegTag.E)
            pos += match
    return tags


def normalize(lex: Lexicon, surface: str) -> str:
    return lex.normalize(surface)


def _content_lines(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise LexiconError(f"{path}: not valid UTF-8 ({exc})") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def load_lexicon(words_path: str | Path, synonyms_path: str | Path) -> Lexicon:
    words_path, synonyms_path = Path(words_path), Path(synonyms_path)
    words = set()
    for lineno, line in _content_lines(words_path):
        if "\t" in line:
            raise LexiconError(f"{words_path}:{lineno}: word line contains a TAB")
        words.add(line)

    groups: list[tuple[str, frozenset[str]]] = []
    seen: dict[str, int] = {}
    for lineno, line in _content_lines(synonyms_path):
        fields = line.split("\t")
        if any(not f for f in fields):
            raise LexiconError(f"{synonyms_path}:{lineno}: empty field in synonym line")
        canonical, variants = fields[0], set(fields)
        for v in variants:
            if v in seen:
                raise LexiconError(
                    f"{synonyms_path}:{lineno}: variant {v!r} already listed in the group on line {seen[v]}"
                )
            seen[v] = lineno
        groups.append((canonical, frozenset(variants)))
    return Lexicon(frozenset(words), tuple(groups))


def save_lexicon(lex: Lexicon, words_path: str | Path, synonyms_path: str | Path) -> None:
    Path(words_path).write_text("".join(w + "\n" for w in sorted(lex.words)), encoding="utf-8")
    lines = []
    for canonical, variants in sorted(lex.synonym_groups):
        rest = sorted(variants - {canonical})
        lines.append("\t".join([canonical, *rest]) + "\n")
    Path(synonyms_path).write_text("".join(lines), encoding="utf-8")
