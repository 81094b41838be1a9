"""Rule-based relation extraction: sentences, Location-anchored parts, pattern features."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .lexicon import Lexicon
from .ner import NerModel, tag_sentence
from .tagging import Entity, EntityType

KEY_SEP = "/"
_SENTENCE_END = re.compile("[。.]")


@dataclass(frozen=True)
class RadFeature:
    words: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.words) < 2:
            raise ValueError("a feature needs a location and at least one more word")
        if any(KEY_SEP in w for w in self.words):
            raise ValueError(f"feature word contains {KEY_SEP!r}: {self.words}")

    @property
    def key(self) -> str:
        return KEY_SEP.join(self.words)

    @classmethod
    def from_key(cls, key: str) -> "RadFeature":
        return cls(tuple(key.split(KEY_SEP)))


@dataclass
class Part:
    location: Entity
    trailing: list[Entity] = field(default_factory=list)


@dataclass
class Tally:
    """Counts of entities that no pattern could consume."""

    dropped_pre_location: int = 0
    dropped_modifiers: int = 0


def split_sentences(findings_text: str) -> list[str]:
    return [s for s in _SENTENCE_END.split(findings_text) if s]


def split_parts(entities: Sequence[Entity], tally: Tally | None = None) -> list[Part]:
    parts: list[Part] = []
    for ent in entities:
        if ent.etype is EntityType.Location:
            parts.append(Part(ent))
        elif parts:
            parts[-1].trailing.append(ent)
        elif tally is not None:
            tally.dropped_pre_location += 1
    return parts


def extract_features(lex: Lexicon, parts: Iterable[Part], tally: Tally | None = None) -> list[RadFeature]:
    """Apply the pattern rules to each part.

    Morphology pairs directly with the location. Each Enhancement or Density
    heads its own feature and collects the Modifiers that follow it up to the
    next head; Modifiers before any head are dropped.
    """
    out: list[RadFeature] = []
    for part in parts:
        if part.location.etype is not EntityType.Location:
            raise ValueError(f"part anchored on a {part.location.etype.value} entity")
        loc = lex.normalize(part.location.surface)
        morph: list[RadFeature] = []
        heads: list[list[str]] = []
        for ent in part.trailing:
            word = lex.normalize(ent.surface)
            if ent.etype is EntityType.Morphology:
                morph.append(RadFeature((loc, word)))
            elif ent.etype in (EntityType.Enhancement, EntityType.Density):
                heads.append([loc, word])
            elif ent.etype is EntityType.Modifier:
                if heads:
                    heads[-1].append(word)
                elif tally is not None:
                    tally.dropped_modifiers += 1
            else:
                raise ValueError("Location entity inside a part's trailing list")
        out.extend(morph)
        out.extend(RadFeature(tuple(h)) for h in heads)
    return out


def features_from_entities(lex: Lexicon, sentences: Iterable[Sequence[Entity]],
                           tally: Tally | None = None) -> list[RadFeature]:
    """Features for a report given per-sentence entities, deduplicated by key in first-seen order."""
    seen: dict[str, RadFeature] = {}
    for ents in sentences:
        for feat in extract_features(lex, split_parts(ents, tally), tally):
            seen.setdefault(feat.key, feat)
    return list(seen.values())


def extract_report(lex: Lexicon, model: NerModel, findings_text: str,
                   tally: Tally | None = None) -> list[RadFeature]:
    return features_from_entities(
        lex, (tag_sentence(model, lex, s) for s in split_sentences(findings_text)), tally
    )
