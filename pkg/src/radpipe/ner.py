"""Character + lexicon-feature BiLSTM-CRF entity tagger."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import serial
from .errors import CorpusError, ModelFormatError
from .lexicon import SEGTAGS, Lexicon, SegTag, segment_fmm
from .neural import (
    CrfParams,
    LstmCellParams,
    Param,
    adam_step,
    bilstm_backward,
    bilstm_forward,
    crf_nll,
    crf_viterbi,
    glorot,
)
from .tagging import NUM_TAGS, TAGS, AnnotatedSentence, Entity, decode_entities, entity_prf, is_valid_sequence, transition_mask

log = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
_NONE_SEG = SegTag.NONE.index


@dataclass
class NerConfig:
    char_emb_dim: int = 64
    segtag_emb_dim: int = 8
    hidden: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 8
    patience: int = 5
    seed: int = 0
    # Fixed identity table of width 5 for the lexicon feature instead of a learned one.
    segtag_onehot: bool = False

    def __post_init__(self) -> None:
        if self.segtag_onehot:
            self.segtag_emb_dim = len(SEGTAGS)
        if self.char_emb_dim < 1 or self.hidden < 1 or self.segtag_emb_dim < 0:
            raise ValueError("embedding and hidden sizes must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be >= 1")

    @property
    def input_size(self) -> int:
        return self.char_emb_dim + self.segtag_emb_dim


@dataclass(eq=False)
class NerModel:
    config: NerConfig
    chars: list[str]  # id -> char; ids 0 and 1 are PAD and UNK placeholders
    char_embeddings: Param
    segtag_embeddings: Param
    fwd: LstmCellParams
    bwd: LstmCellParams
    proj_W: Param  # (2H, T)
    proj_b: Param
    crf: CrfParams
    char_vocab: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        self.char_vocab = {c: i for i, c in enumerate(self.chars) if i > UNK_ID}
        self.segtag_embeddings.trainable = not self.config.segtag_onehot
        self._mask = transition_mask()

    @classmethod
    def init(cls, chars: Sequence[str], config: NerConfig, rng: np.random.Generator) -> "NerModel":
        vocab = ["<pad>", "<unk>", *chars]
        D, H = config.input_size, config.hidden
        char_emb = glorot(rng, (len(vocab), config.char_emb_dim))
        if config.segtag_onehot:
            seg_emb = np.eye(len(SEGTAGS))
        else:
            seg_emb = glorot(rng, (len(SEGTAGS), config.segtag_emb_dim))
        fwd = LstmCellParams.init("lstm_fwd", D, H, rng)
        bwd = LstmCellParams.init("lstm_bwd", D, H, rng)
        proj = glorot(rng, (2 * H, NUM_TAGS))
        return cls(
            config, vocab,
            Param("char_embeddings", char_emb), Param("segtag_embeddings", seg_emb),
            fwd, bwd, Param("proj.W", proj), Param("proj.b", np.zeros(NUM_TAGS)),
            CrfParams.zeros(NUM_TAGS),
        )

    def params(self) -> list[Param]:
        return [self.char_embeddings, self.segtag_embeddings, *self.fwd.params(), *self.bwd.params(),
                self.proj_W, self.proj_b, *self.crf.params()]

    def trainable_params(self) -> list[Param]:
        return [p for p in self.params() if p.trainable]

    def char_ids(self, chars: str) -> np.ndarray:
        return np.array([self.char_vocab.get(c, UNK_ID) for c in chars], dtype=np.int64)

    def embed(self, chars: str, segtags: Sequence[SegTag]) -> np.ndarray:
        if len(chars) != len(segtags):
            raise ValueError(f"{len(chars)} chars but {len(segtags)} lexicon tags")
        seg_ids = np.array([t.index for t in segtags], dtype=np.int64)
        return np.concatenate(
            [self.char_embeddings.values[self.char_ids(chars)], self.segtag_embeddings.values[seg_ids]], axis=1
        )

    def _batch_arrays(self, items: Sequence[tuple[str, Sequence[SegTag]]]):
        lengths = np.array([len(c) for c, _ in items])
        n = int(lengths.max())
        ids = np.full((len(items), n), PAD_ID, dtype=np.int64)
        segs = np.full((len(items), n), _NONE_SEG, dtype=np.int64)
        for b, (chars, segtags) in enumerate(items):
            ids[b, :len(chars)] = self.char_ids(chars)
            segs[b, :len(chars)] = [t.index for t in segtags]
        return ids, segs, lengths

    def _forward(self, ids, segs, lengths):
        x = np.concatenate([self.char_embeddings.values[ids], self.segtag_embeddings.values[segs]], axis=2)
        h, cache = bilstm_forward(self.fwd, self.bwd, x, lengths)
        emissions = h @ self.proj_W.values + self.proj_b.values
        return emissions, h, cache

    def emissions(self, chars: str, segtags: Sequence[SegTag]) -> np.ndarray:
        ids, segs, lengths = self._batch_arrays([(chars, segtags)])
        return self._forward(ids, segs, lengths)[0][0]

    def batch_loss(self, items: Sequence[tuple[str, Sequence[SegTag], Sequence[int]]]) -> float:
        """Mean CRF negative log-likelihood over ``items``; accumulates gradients."""
        ids, segs, lengths = self._batch_arrays([(c, s) for c, s, _ in items])
        emissions, h, cache = self._forward(ids, segs, lengths)
        d_em = np.zeros_like(emissions)
        scale = 1.0 / len(items)
        total = 0.0
        for b, (_, _, gold) in enumerate(items):
            L = lengths[b]
            loss, d = crf_nll(self.crf, emissions[b, :L], gold, scale=scale)
            total += loss
            d_em[b, :L] = d
        H2 = h.shape[2]
        self.proj_W.grad += h.reshape(-1, H2).T @ d_em.reshape(-1, NUM_TAGS)
        self.proj_b.grad += d_em.sum(axis=(0, 1))
        dx = bilstm_backward(self.fwd, self.bwd, cache, d_em @ self.proj_W.values.T)
        Dc = self.config.char_emb_dim
        np.add.at(self.char_embeddings.grad, ids, dx[:, :, :Dc])
        if self.segtag_embeddings.trainable:
            np.add.at(self.segtag_embeddings.grad, segs, dx[:, :, Dc:])
        return total * scale

    def predict_tags(self, chars: str, segtags: Sequence[SegTag]) -> list[int]:
        return crf_viterbi(self.crf, self.emissions(chars, segtags), self._mask)


@dataclass
class NerTrainReport:
    train_loss: list[float] = field(default_factory=list)
    dev_f1: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""


def tag_sentence(model: NerModel, lex: Lexicon, chars: str) -> list[Entity]:
    if not chars:
        return []
    path = model.predict_tags(chars, segment_fmm(lex, chars))
    return decode_entities(chars, [TAGS[i] for i in path])


def evaluate_ner(model: NerModel, lex: Lexicon, sentences: Sequence[AnnotatedSentence]):
    gold = [s.entities for s in sentences]
    pred = [tag_sentence(model, lex, s.chars) for s in sentences]
    return entity_prf(gold, pred)


def _snapshot(model: NerModel) -> list[np.ndarray]:
    return [p.values.copy() for p in model.params()]


def _restore(model: NerModel, snap: list[np.ndarray]) -> None:
    for p, v in zip(model.params(), snap):
        p.values[...] = v


def corpus_chars(corpus: Sequence[AnnotatedSentence]) -> list[str]:
    return sorted({c for s in corpus for c in s.chars})


def train_ner(corpus: Sequence[AnnotatedSentence], lex: Lexicon, cfg: NerConfig,
              dev: Sequence[AnnotatedSentence] | None = None,
              pretrained: dict[str, np.ndarray] | None = None) -> tuple[NerModel, NerTrainReport]:
    """Train with Adam, evaluating dev entity F1 after every epoch.

    The parameters of the best dev epoch are kept (ties go to the earlier
    epoch). Training stops after ``cfg.patience`` epochs without improvement.
    With no dev set the training corpus itself is scored.
    """
    if not corpus:
        raise CorpusError("training corpus is empty")
    for i, sent in enumerate(corpus):
        if not sent.chars:
            raise CorpusError(f"training sentence {i} is empty")
        if not is_valid_sequence(sent.gold_tags):
            raise CorpusError(f"training sentence {i} has an invalid BIEOS tag sequence")
    dev = list(dev) if dev else list(corpus)

    rng = np.random.default_rng(cfg.seed)
    model = NerModel.init(corpus_chars(corpus), cfg, rng)
    if pretrained:
        apply_pretrained(model, pretrained)
    items = [(s.chars, segment_fmm(lex, s.chars), [t.id for t in s.gold_tags]) for s in corpus]

    report = NerTrainReport()
    best_f1, best_snap, since_best = -1.0, _snapshot(model), 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(items))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [items[k] for k in order[start:start + cfg.batch_size]]
            epoch_loss += model.batch_loss(batch) * len(batch)
            adam_step(model.trainable_params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        report.train_loss.append(epoch_loss / len(items))
        f1 = evaluate_ner(model, lex, dev).f1
        report.dev_f1.append(f1)
        log.info("epoch %d loss %.4f dev F1 %.4f", epoch, report.train_loss[-1], f1)
        if f1 > best_f1:
            best_f1, best_snap, since_best = f1, _snapshot(model), 0
            report.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.patience:
                report.stop_reason = "patience"
                break
    else:
        report.stop_reason = "max_epochs"
    _restore(model, best_snap)
    return model, report


# -- pretrained embeddings -------------------------------------------------

def load_pretrained_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    """Read word2vec text format (optional ``count dim`` header); keeps single-character tokens."""
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) < 2:
                continue
            try:
                vec = np.array([float(v) for v in parts[1:] if v], dtype=np.float64)
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: malformed embedding line") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise CorpusError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            if len(parts[0]) == 1:
                out[parts[0]] = vec
    return out


def apply_pretrained(model: NerModel, vectors: dict[str, np.ndarray]) -> int:
    table = model.char_embeddings.values
    hits = 0
    for ch, i in model.char_vocab.items():
        vec = vectors.get(ch)
        if vec is None:
            continue
        if vec.shape != (table.shape[1],):
            raise ValueError(f"pretrained vectors have size {vec.shape[0]}, model expects {table.shape[1]}")
        table[i] = vec
        hits += 1
    return hits


# -- serialization -----------------------------------------------------------

def ner_model_doc(model: NerModel) -> dict:
    return {
        "config": asdict(model.config),
        "chars": model.chars,
        "params": {p.name: serial.array_doc(p.values) for p in model.params()},
    }


def save_ner_model(model: NerModel, path: str | Path) -> None:
    serial.save_document(path, "ner", ner_model_doc(model))


def load_ner_model(path: str | Path) -> NerModel:
    doc = serial.load_document(path, "ner")
    try:
        known = {f.name for f in fields(NerConfig)}
        cfg = NerConfig(**{k: v for k, v in doc["config"].items() if k in known})
        model = NerModel.init(doc["chars"][2:], cfg, np.random.default_rng(0))
        stored = doc["params"]
        for p in model.params():
            arr = serial.doc_array(stored[p.name])
            if arr.shape != p.shape:
                raise ModelFormatError(f"{path}: parameter {p.name} has shape {arr.shape}, expected {p.shape}")
            p.values[...] = arr
    except KeyError as exc:
        raise ModelFormatError(f"{path}: missing field {exc}") from None
    return model
