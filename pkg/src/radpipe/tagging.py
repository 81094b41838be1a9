"""Entity types, the BIEOS tag set, span codec, entity metrics and the CoNLL corpus format."""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import CorpusError


class EntityType(enum.Enum):
    Location = "Location"
    Morphology = "Morphology"
    Density = "Density"
    Enhancement = "Enhancement"
    Modifier = "Modifier"


ENTITY_TYPES: tuple[EntityType, ...] = tuple(EntityType)
SHORT_CODES = {EntityType.Location: "L", EntityType.Morphology: "M", EntityType.Density: "D",
               EntityType.Enhancement: "En", EntityType.Modifier: "Mod"}
PREFIXES = ("B", "I", "E", "S")


@dataclass(frozen=True, order=True)
class BieosTag:
    """Either O (``prefix == "O"``, ``etype is None``) or prefix-etype."""

    id: int
    prefix: str = field(compare=False)
    etype: EntityType | None = field(compare=False)

    def __str__(self) -> str:
        return "O" if self.etype is None else f"{self.prefix}-{self.etype.value}"

    @property
    def is_outside(self) -> bool:
        return self.etype is None

    @property
    def short(self) -> str:
        return "O" if self.etype is None else f"{self.prefix}-{SHORT_CODES[self.etype]}"


def _build_tags() -> tuple[BieosTag, ...]:
    tags = [BieosTag(0, "O", None)]
    for etype in ENTITY_TYPES:
        for prefix in PREFIXES:
            tags.append(BieosTag(len(tags), prefix, etype))
    return tuple(tags)


TAGS: tuple[BieosTag, ...] = _build_tags()
NUM_TAGS = len(TAGS)
O = TAGS[0]
_BY_NAME = {**{t.short: t for t in TAGS}, **{str(t): t for t in TAGS}}


def tag(name: str) -> BieosTag:
    """Look up a tag by its spelling, e.g. ``"B-Location"``, ``"B-L"`` or ``"O"``."""
    try:
        return _BY_NAME[name]
    except KeyError:
        raise CorpusError(f"unknown tag {name!r}") from None


def make_tag(prefix: str, etype: EntityType) -> BieosTag:
    return TAGS[1 + ENTITY_TYPES.index(etype) * 4 + PREFIXES.index(prefix)]


def is_valid_transition(a: BieosTag, b: BieosTag) -> bool:
    if a.prefix in ("B", "I"):
        return b.etype is a.etype and b.prefix in ("I", "E")
    return b.prefix in ("O", "B", "S")


def is_valid_start(t: BieosTag) -> bool:
    return t.prefix in ("O", "B", "S")


def is_valid_end(t: BieosTag) -> bool:
    return t.prefix in ("O", "E", "S")


def is_valid_sequence(tags: Sequence[BieosTag]) -> bool:
    if not tags:
        return True
    if not (is_valid_start(tags[0]) and is_valid_end(tags[-1])):
        return False
    return all(is_valid_transition(a, b) for a, b in zip(tags, tags[1:]))


def transition_mask() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean (allowed) matrices for transitions, start tags and end tags."""
    trans = np.array([[is_valid_transition(a, b) for b in TAGS] for a in TAGS])
    start = np.array([is_valid_start(t) for t in TAGS])
    end = np.array([is_valid_end(t) for t in TAGS])
    return trans, start, end


@dataclass(frozen=True)
class Entity:
    """Half-open character span ``[start, end)``; sorts by position."""

    start: int
    end: int
    etype: EntityType
    surface: str

    def __lt__(self, other: "Entity") -> bool:
        return (self.start, self.end) < (other.start, other.end)

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad entity span [{self.start}, {self.end})")
        if len(self.surface) != self.end - self.start:
            raise ValueError("entity surface length does not match its span")

    @property
    def key(self) -> tuple[EntityType, int, int]:
        return (self.etype, self.start, self.end)


@dataclass
class AnnotatedSentence:
    chars: str
    gold_tags: list[BieosTag]

    def __post_init__(self) -> None:
        if len(self.chars) != len(self.gold_tags):
            raise CorpusError(f"sentence has {len(self.chars)} chars but {len(self.gold_tags)} tags")

    @property
    def entities(self) -> list[Entity]:
        return decode_entities(self.chars, self.gold_tags)


def decode_entities(chars: str, tags: Sequence[BieosTag]) -> list[Entity]:
    """Turn a tag sequence into entities.

    Invalid sequences are repaired conservatively: a B/I run not closed by a
    matching E is dropped, and an I or E with no open run starts nothing.
    """
    if len(chars) != len(tags):
        raise ValueError(f"{len(chars)} chars but {len(tags)} tags")
    out: list[Entity] = []
    open_start: int | None = None
    open_type: EntityType | None = None
    for i, t in enumerate(tags):
        if t.prefix == "B":
            open_start, open_type = i, t.etype
        elif t.prefix == "I":
            if open_type is not t.etype:
                open_start = open_type = None
        elif t.prefix == "E":
            if open_start is not None and open_type is t.etype:
                out.append(Entity(open_start, i + 1, t.etype, chars[open_start:i + 1]))
            open_start = open_type = None
        elif t.prefix == "S":
            out.append(Entity(i, i + 1, t.etype, chars[i]))
            open_start = open_type = None
        else:
            open_start = open_type = None
    return out


def encode_tags(chars: str, entities: Iterable[Entity]) -> list[BieosTag]:
    tags = [O] * len(chars)
    for ent in sorted(entities):
        if ent.end > len(chars):
            raise ValueError(f"entity {ent} out of range for {len(chars)} chars")
        if any(t is not O for t in tags[ent.start:ent.end]):
            raise ValueError(f"entity {ent} overlaps another entity")
        if ent.end - ent.start == 1:
            tags[ent.start] = make_tag("S", ent.etype)
        else:
            tags[ent.start] = make_tag("B", ent.etype)
            for i in range(ent.start + 1, ent.end - 1):
                tags[i] = make_tag("I", ent.etype)
            tags[ent.end - 1] = make_tag("E", ent.etype)
    return tags


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def prf_from_counts(tp: int, fp: int, fn: int) -> PRF:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f)


def _entity_counts(gold, pred):
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    counts: dict[EntityType, list[int]] = defaultdict(lambda: [0, 0, 0])
    for g_sent, p_sent in zip(gold, pred):
        g = {e.key for e in g_sent}
        p = {e.key for e in p_sent}
        for k in g & p:
            counts[k[0]][0] += 1
        for k in p - g:
            counts[k[0]][1] += 1
        for k in g - p:
            counts[k[0]][2] += 1
    return counts


def entity_prf(gold: Sequence[Sequence[Entity]], pred: Sequence[Sequence[Entity]]) -> PRF:
    """Micro-averaged exact-match (type, start, end) precision/recall/F1."""
    counts = _entity_counts(gold, pred)
    tp, fp, fn = (sum(c[i] for c in counts.values()) for i in range(3))
    return prf_from_counts(tp, fp, fn)


def entity_prf_by_type(gold, pred) -> dict[EntityType, PRF]:
    counts = _entity_counts(gold, pred)
    return {et: prf_from_counts(*counts[et]) if et in counts else PRF(0.0, 0.0, 0.0) for et in ENTITY_TYPES}


# -- corpus files --------------------------------------------------------

@dataclass
class CorpusDoc:
    report_id: str | None
    label: int | None
    sentences: list[AnnotatedSentence] = field(default_factory=list)


DOC_MARKER = "-DOC-"


def read_corpus(path: str | Path) -> list[CorpusDoc]:
    """Read a CoNLL-style character corpus.

    Sentences before the first ``-DOC-`` line are collected into a document
    with ``report_id=None``.
    """
    path = Path(path)
    docs: list[CorpusDoc] = []
    chars: list[str] = []
    tags: list[BieosTag] = []

    def flush(lineno: int) -> None:
        if chars:
            if not docs:
                docs.append(CorpusDoc(None, None))
            sent = AnnotatedSentence("".join(chars), list(tags))
            if not is_valid_sequence(sent.gold_tags):
                raise CorpusError(f"{path}:{lineno}: sentence ending here has an invalid BIEOS sequence")
            docs[-1].sentences.append(sent)
            chars.clear()
            tags.clear()

    with open(path, encoding="utf-8", newline="\n") as fh:
        lineno = 0
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line == "":
                flush(lineno)
                continue
            if line.startswith(DOC_MARKER + " "):
                flush(lineno)
                parts = line.split(" ")
                if len(parts) != 3 or parts[2] not in ("0", "1"):
                    raise CorpusError(f"{path}:{lineno}: malformed document line {line!r}")
                docs.append(CorpusDoc(parts[1], int(parts[2])))
                continue
            fields = line.split("\t")
            if len(fields) != 2 or len(fields[0]) != 1:
                raise CorpusError(f"{path}:{lineno}: expected '<char>\\t<tag>', got {line!r}")
            try:
                tags.append(tag(fields[1]))
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            chars.append(fields[0])
        flush(lineno + 1)
    return docs


def write_corpus(path: str | Path, docs: Iterable[CorpusDoc]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            if doc.report_id is not None:
                fh.write(f"{DOC_MARKER} {doc.report_id} {doc.label if doc.label is not None else 0}\n")
            for sent in doc.sentences:
                for ch, t in zip(sent.chars, sent.gold_tags):
                    fh.write(f"{ch}\t{t}\n")
                fh.write("\n")


def corpus_sentences(docs: Iterable[CorpusDoc]) -> list[AnnotatedSentence]:
    return [s for d in docs for s in d.sentences]
