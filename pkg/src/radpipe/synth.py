"""Synthetic report corpus with full ground truth.

Reports are built from clause templates that instantiate the extraction
patterns (Location + Morphology, Location + Density/Enhancement [+ Modifier],
and the combined Density + Enhancement form). Labels come from a planted
logistic rule over K designated feature keys, so every stage downstream has
an oracle: gold entities, gold feature keys, and the Bayes-optimal classifier.
"""
from __future__ import annotations

import json
import math
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import RadpipeError
from .evaluate import binary_prf
from .extract import KEY_SEP, features_from_entities
from .lexicon import Lexicon, save_lexicon
from .tagging import (
    AnnotatedSentence,
    CorpusDoc,
    Entity,
    EntityType,
    PRF,
    decode_entities,
    encode_tags,
    write_corpus,
)

L, M, D, E, MOD = (EntityType.Location, EntityType.Morphology, EntityType.Density,
                   EntityType.Enhancement, EntityType.Modifier)

_WORD_LENGTHS = {L: (2, 3), M: (3, 6), D: (3, 5), E: (3, 5), MOD: (2, 4)}


@dataclass
class SynthConfig:
    seed: int = 7
    n_reports: int = 600
    positive_rate: float = 0.45
    n_locations: int = 12
    n_morphologies: int = 25
    n_densities: int = 10
    n_enhancements: int = 8
    n_modifiers: int = 10
    max_variants: int = 2
    n_planted: int = 4
    beta: float = 3.0
    planted_rate: float = 0.35
    label_noise: float = 0.02
    stochastic_labels: bool = True
    background_templates: int = 150
    clauses_per_report: tuple[int, int] = (3, 7)
    distractor_rate: float = 0.10
    ascii: bool = False

    def __post_init__(self) -> None:
        self.clauses_per_report = tuple(self.clauses_per_report)
        for name in ("positive_rate", "planted_rate", "label_noise", "distractor_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise RadpipeError(f"{name} must lie in [0, 1], got {v}")
        if self.n_reports < 1:
            raise RadpipeError("n_reports must be >= 1")
        if self.n_planted < 1:
            raise RadpipeError("n_planted must be >= 1")
        if self.label_noise >= 0.5:
            raise RadpipeError("label_noise must be below 0.5")


@dataclass
class SynthReport:
    report_id: str
    findings_text: str
    sentences: list[AnnotatedSentence]
    gold_keys: list[str]
    label: int
    z: tuple[int, ...]
    prob: float

    @property
    def gold_entities(self) -> list[list[Entity]]:
        return [s.entities for s in self.sentences]


@dataclass
class SynthMeta:
    config: SynthConfig
    planted_keys: list[str]
    intercept: float
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _Template:
    """A clause: one location, then groups of trailing entity words.

    Each group is (type, word, modifiers); morphology groups carry no modifiers.
    """

    location: str
    groups: tuple[tuple[EntityType, str, tuple[str, ...]], ...]

    def keys(self) -> list[str]:
        morph = [KEY_SEP.join((self.location, w)) for t, w, _ in self.groups if t is M]
        heads = [KEY_SEP.join((self.location, w, *mods)) for t, w, mods in self.groups if t is not M]
        return morph + heads


class _Vocab:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.rng = rng
        if cfg.ascii:
            self.entity_pool = list(string.ascii_letters)
            self.filler_pool = list(string.digits)
            self.comma = ","
            self.full_stop = "."
        else:
            cjk = rng.choice(np.arange(0x4E00, 0x9FA6), size=420, replace=False)
            chars = [chr(int(c)) for c in cjk]
            self.entity_pool = chars[:400]
            self.filler_pool = chars[400:]
            self.comma = "，"
            self.full_stop = "。"
        self.all_words: set[str] = set()
        self.canon: dict[EntityType, list[str]] = {}
        self.variants: dict[str, list[str]] = {}
        sizes = {L: cfg.n_locations, M: cfg.n_morphologies, D: cfg.n_densities,
                 E: cfg.n_enhancements, MOD: cfg.n_modifiers}
        for etype in (L, M, D, E, MOD):
            words = [self._fresh(etype) for _ in range(sizes[etype])]
            self.canon[etype] = words
            for w in words:
                k = int(rng.integers(0, cfg.max_variants + 1))
                vs = []
                for j in range(k):
                    vs.append(self._fresh(etype, single=(etype is L and j == 0 and rng.random() < 0.3)))
                self.variants[w] = vs

    def _fresh(self, etype: EntityType, single: bool = False) -> str:
        lo, hi = (1, 1) if single else _WORD_LENGTHS[etype]
        for _ in range(10_000):
            n = int(self.rng.integers(lo, hi + 1))
            w = "".join(self.rng.choice(self.entity_pool, size=n))
            # No lexicon word may be a prefix of another so that greedy matching
            # recovers every entity boundary.
            if w in self.all_words or any(u.startswith(w) or w.startswith(u) for u in self.all_words):
                continue
            self.all_words.add(w)
            return w
        raise RadpipeError("could not generate enough distinct words; enlarge the character pool")

    def lexicon(self) -> Lexicon:
        groups = [(w, vs) for w, vs in self.variants.items() if vs]
        return Lexicon.build(self.all_words, groups)

    def surface(self, word: str) -> str:
        forms = [word, *self.variants[word]]
        return forms[int(self.rng.integers(0, len(forms)))]

    def filler(self, lo: int = 1, hi: int = 3) -> str:
        return "".join(self.rng.choice(self.filler_pool, size=int(self.rng.integers(lo, hi + 1))))


def _pick(rng: np.random.Generator, seq: Sequence[str]) -> str:
    return seq[int(rng.integers(0, len(seq)))]


def _random_template(v: _Vocab, rng: np.random.Generator, shape: str | None = None) -> _Template:
    shape = shape or _pick(rng, ["M", "MM", "D", "D+", "E", "E+", "DE"])
    loc = _pick(rng, v.canon[L])

    def mods(p: float) -> tuple[str, ...]:
        return (_pick(rng, v.canon[MOD]),) if rng.random() < p else ()

    if shape == "M":
        groups = ((M, _pick(rng, v.canon[M]), ()),)
    elif shape == "MM":
        m1, m2 = rng.choice(v.canon[M], size=2, replace=False)
        groups = ((M, str(m1), ()), (M, str(m2), ()))
    elif shape in ("D", "D+"):
        groups = ((D, _pick(rng, v.canon[D]), mods(1.0 if shape == "D+" else 0.0)),)
    elif shape in ("E", "E+"):
        groups = ((E, _pick(rng, v.canon[E]), mods(1.0 if shape == "E+" else 0.0)),)
    else:
        groups = ((D, _pick(rng, v.canon[D]), mods(0.5)), (E, _pick(rng, v.canon[E]), mods(0.5)))
    return _Template(loc, groups)


def _render_clause(v: _Vocab, rng: np.random.Generator, tpl: _Template, chunks: list) -> None:
    """Append (text, etype | None) chunks for one clause."""
    chunks.append((v.surface(tpl.location), L))
    if rng.random() < 0.3:
        chunks.append((v.filler(), None))
    for gi, (etype, word, modifiers) in enumerate(tpl.groups):
        if gi > 0:
            chunks.append((v.comma, None))
        chunks.append((v.surface(word), etype))
        for mod in modifiers:
            if rng.random() < 0.5:
                chunks.append((v.comma, None))
            chunks.append((v.surface(mod), MOD))


def _distractor(v: _Vocab, rng: np.random.Generator, chunks: list) -> None:
    chunks.append((v.filler(), None))
    etype = M if rng.random() < 0.5 else MOD
    chunks.append((v.surface(_pick(rng, v.canon[etype])), etype))


def _sentence(chunks: list) -> AnnotatedSentence:
    text, ents, pos = [], [], 0
    for piece, etype in chunks:
        if etype is not None:
            ents.append(Entity(pos, pos + len(piece), etype, piece))
        text.append(piece)
        pos += len(piece)
    chars = "".join(text)
    tags = encode_tags(chars, ents)
    if decode_entities(chars, tags) != ents:
        raise RuntimeError("generated annotation does not round-trip")
    return AnnotatedSentence(chars, tags)


def label_probability(cfg: SynthConfig, s: int, intercept: float) -> float:
    logit = cfg.beta * s + intercept
    if not cfg.stochastic_labels:
        return 1.0 if logit > 0 else 0.0
    return 0.5 * (1.0 + math.tanh(0.5 * logit))


def _positive_rate(cfg: SynthConfig, intercept: float) -> float:
    K, q, eps = cfg.n_planted, cfg.planted_rate, cfg.label_noise
    total = 0.0
    for s in range(K + 1):
        w = math.comb(K, s) * q ** s * (1 - q) ** (K - s)
        total += w * ((1 - 2 * eps) * label_probability(cfg, s, intercept) + eps)
    return total


def solve_intercept(cfg: SynthConfig) -> float:
    """Intercept whose expected positive rate matches ``cfg.positive_rate``."""
    target = cfg.positive_rate
    lo_rate, hi_rate = _positive_rate(cfg, -1e3), _positive_rate(cfg, 1e3)
    if cfg.stochastic_labels:
        if not lo_rate < target < hi_rate:
            raise RadpipeError(
                f"positive rate {target} is unreachable (achievable range ({lo_rate:.4f}, {hi_rate:.4f}))"
            )
        lo, hi = -1e3, 1e3
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _positive_rate(cfg, mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    # Step labels: put the threshold halfway between planted counts.
    cands = [-cfg.beta * (s - 0.5) for s in range(cfg.n_planted + 2)]
    best = min(cands, key=lambda b: abs(_positive_rate(cfg, b) - target))
    if not 0.0 < _positive_rate(cfg, best) < 1.0:
        raise RadpipeError(f"positive rate {target} is unreachable with deterministic labels")
    return best


def generate(cfg: SynthConfig) -> tuple[Lexicon, list[SynthReport], SynthMeta]:
    rng = np.random.default_rng(cfg.seed)
    vocab = _Vocab(cfg, rng)
    lex = vocab.lexicon()
    intercept = solve_intercept(cfg)

    planted_shapes = ["D+", "E", "M", "E+", "D"]
    planted: list[_Template] = []
    planted_keys: list[str] = []
    while len(planted) < cfg.n_planted:
        tpl = _random_template(vocab, rng, planted_shapes[len(planted) % len(planted_shapes)])
        if tpl.keys()[0] not in planted_keys:
            planted.append(tpl)
            planted_keys.append(tpl.keys()[0])
    planted_set = set(planted_keys)

    background: list[_Template] = []
    for _ in range(100 * cfg.background_templates):
        if len(background) == cfg.background_templates:
            break
        tpl = _random_template(vocab, rng)
        if tpl not in background and not planted_set & set(tpl.keys()):
            background.append(tpl)
    weights = 1.0 / np.arange(1, len(background) + 1) ** 0.8
    weights /= weights.sum()

    reports = []
    lo, hi = cfg.clauses_per_report
    for idx in range(cfg.n_reports):
        z = tuple(int(rng.random() < cfg.planted_rate) for _ in range(cfg.n_planted))
        n_bg = min(int(rng.integers(lo, hi + 1)), len(background))
        chosen = [background[int(i)] for i in rng.choice(len(background), size=n_bg, replace=False, p=weights)]
        clauses = chosen + [planted[k] for k in range(cfg.n_planted) if z[k]]
        order = rng.permutation(len(clauses))
        clauses = [clauses[int(i)] for i in order]

        sentences: list[AnnotatedSentence] = []
        i = 0
        while i < len(clauses):
            if rng.random() < cfg.distractor_rate:
                chunks: list = []
                _distractor(vocab, rng, chunks)
                sentences.append(_sentence(chunks))
            take = int(rng.integers(1, 4))
            chunks = []
            for j, tpl in enumerate(clauses[i:i + take]):
                if j:
                    chunks.append((vocab.comma, None))
                _render_clause(vocab, rng, tpl, chunks)
            sentences.append(_sentence(chunks))
            i += take

        intended = {k for tpl in clauses for k in tpl.keys()}
        extracted = [f.key for f in features_from_entities(lex, (s.entities for s in sentences))]
        if set(extracted) != intended or len(extracted) != len(intended):
            raise RuntimeError(f"report {idx}: extraction disagrees with the generator's intended features")
        if {k for k in extracted if k in planted_set} != {planted_keys[k] for k in range(cfg.n_planted) if z[k]}:
            raise RuntimeError(f"report {idx}: planted indicators do not match the features")

        prob = label_probability(cfg, sum(z), intercept)
        label = int(rng.random() < prob)
        if rng.random() < cfg.label_noise:
            label = 1 - label
        text = "".join(s.chars + vocab.full_stop for s in sentences)
        reports.append(SynthReport(f"R{idx:04d}", text, sentences, extracted, label, z, prob))

    meta = SynthMeta(cfg, planted_keys, intercept)
    return lex, reports, meta


# -- oracle --------------------------------------------------------------

@dataclass
class BayesGap:
    bayes: PRF
    model: PRF
    f1_gap: float


def bayes_predictions(reports: Sequence[SynthReport]) -> list[int]:
    return [int(r.prob > 0.5) for r in reports]


def oracle_eval(reports: Sequence[SynthReport], predicted_labels: Sequence[int]) -> BayesGap:
    gold = [r.label for r in reports]
    bayes = binary_prf(gold, bayes_predictions(reports))
    model = binary_prf(gold, predicted_labels)
    return BayesGap(bayes, model, bayes.f1 - model.f1)


# -- files ---------------------------------------------------------------

def write_reports_tsv(path: str | Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for report_id, label, text in rows:
            fh.write(f"{report_id}\t{label}\t{text}\n")


def read_reports_tsv(path: str | Path) -> list[tuple[str, int, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 2)
            if len(parts) != 3 or parts[1] not in ("0", "1"):
                raise RadpipeError(f"{path}:{lineno}: expected 'report_id<TAB>label<TAB>text'")
            rows.append((parts[0], int(parts[1]), parts[2]))
    return rows


def write_synth(out_dir: str | Path, lex: Lexicon, reports: Sequence[SynthReport], meta: SynthMeta) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "words": out / "words.txt",
        "synonyms": out / "synonyms.txt",
        "corpus": out / "corpus.conll",
        "reports": out / "reports.tsv",
        "gold": out / "gold_features.jsonl",
        "meta": out / "synth_meta.json",
    }
    save_lexicon(lex, paths["words"], paths["synonyms"])
    write_corpus(paths["corpus"], [CorpusDoc(r.report_id, r.label, r.sentences) for r in reports])
    write_reports_tsv(paths["reports"], [(r.report_id, r.label, r.findings_text) for r in reports])
    with open(paths["gold"], "w", encoding="utf-8", newline="\n") as fh:
        for r in reports:
            rec = {"report_id": r.report_id, "label": r.label, "feature_keys": r.gold_keys,
                   "z": list(r.z), "prob": r.prob}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    meta_doc = {"config": asdict(meta.config), "planted_keys": meta.planted_keys, "intercept": meta.intercept}
    paths["meta"].write_text(json.dumps(meta_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return paths


def read_gold_features(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
