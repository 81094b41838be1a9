"""File-in, file-out stages shared by the CLI subcommands and the end-to-end run."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusError, RadpipeError
from .evaluate import (
    EvalReport,
    Hyperparams,
    binary_prf,
    fit_classifier,
    render_table,
    run_cv,
    save_report,
    select,
    stratified_kfold,
)
from .extract import Tally, extract_report, features_from_entities
from .features import FeatureMatrix, build_vocab, save_matrix, vectorize
from .learn import save_model
from .lexicon import Lexicon, load_lexicon
from .ner import NerConfig, NerModel, NerTrainReport, save_ner_model, train_ner
from .serial import dumps
from .synth import SynthConfig, generate, read_gold_features, read_reports_tsv, write_synth
from .tagging import AnnotatedSentence, corpus_sentences, read_corpus

log = logging.getLogger(__name__)

WORDS_FILE = "words.txt"
SYNONYMS_FILE = "synonyms.txt"


def load_lexicon_dir(path: str | Path) -> Lexicon:
    d = Path(path)
    return load_lexicon(d / WORDS_FILE, d / SYNONYMS_FILE)


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


# -- NER -------------------------------------------------------------------

def split_ner_corpus(sentences: Sequence[AnnotatedSentence], n_train: int | None,
                     n_dev: int) -> tuple[list[AnnotatedSentence], list[AnnotatedSentence]]:
    """First ``n_train`` sentences train, the following ``n_dev`` are held out."""
    sentences = [s for s in sentences if s.chars]
    n_train = len(sentences) - n_dev if n_train is None else n_train
    if n_train < 1 or n_train + n_dev > len(sentences):
        raise CorpusError(f"corpus has {len(sentences)} sentences; cannot take {n_train} + {n_dev}")
    return sentences[:n_train], sentences[n_train:n_train + n_dev]


def train_ner_stage(corpus_path: str | Path, lex: Lexicon, cfg: NerConfig, model_out: str | Path,
                    n_train: int | None = None, n_dev: int = 0,
                    pretrained: dict | None = None) -> tuple[NerModel, NerTrainReport]:
    sents = corpus_sentences(read_corpus(corpus_path))
    train, dev = split_ner_corpus(sents, n_train, n_dev)
    model, report = train_ner(train, lex, cfg, dev=dev or None, pretrained=pretrained)
    save_ner_model(model, model_out)
    return model, report


# -- extraction and vectors --------------------------------------------------

def feature_records(rows: Iterable[tuple[str, int, Sequence[str]]]) -> list[dict]:
    return [{"report_id": rid, "label": int(label), "feature_keys": list(keys)} for rid, label, keys in rows]


def write_feature_records(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def extract_stage(lex: Lexicon, model: NerModel, reports_path: str | Path,
                  out_path: str | Path) -> tuple[list[dict], Tally]:
    total = Tally()
    records = []
    for rid, label, text in read_reports_tsv(reports_path):
        tally = Tally()
        feats = extract_report(lex, model, text, tally)
        total.dropped_pre_location += tally.dropped_pre_location
        total.dropped_modifiers += tally.dropped_modifiers
        records.append({"report_id": rid, "label": label, "feature_keys": [f.key for f in feats],
                        "dropped_modifiers": tally.dropped_modifiers,
                        "dropped_pre_location": tally.dropped_pre_location})
    write_feature_records(out_path, records)
    return records, total


def extract_gold_stage(lex: Lexicon, corpus_path: str | Path, out_path: str | Path) -> list[dict]:
    """Features from the corpus' gold entities instead of tagger output."""
    rows = []
    for doc in read_corpus(corpus_path):
        if doc.report_id is None:
            raise CorpusError(f"{corpus_path}: sentences outside any -DOC- block")
        feats = features_from_entities(lex, (s.entities for s in doc.sentences))
        rows.append((doc.report_id, doc.label, [f.key for f in feats]))
    records = feature_records(rows)
    write_feature_records(out_path, records)
    return records


def vectorize_stage(features_path: str | Path, out_path: str | Path, min_count: int) -> FeatureMatrix:
    records = read_gold_features(features_path)
    try:
        pairs = [(r["report_id"], r["feature_keys"]) for r in records]
        labels = [int(r["label"]) for r in records]
    except (KeyError, TypeError, ValueError) as exc:
        raise RadpipeError(f"{features_path}: malformed feature record ({exc})") from None
    matrix = vectorize(build_vocab(pairs, min_count), pairs, labels)
    save_matrix(matrix, out_path)
    return matrix


# -- models ---------------------------------------------------------------

def fit_stage(matrix: FeatureMatrix, kind: str, use_lasso: bool, hp: Hyperparams, seed: int,
              out_path: str | Path) -> dict:
    """Fit one model on the whole matrix; ``kind == "lasso"`` saves the selector itself."""
    X = matrix.X.astype(np.float64)
    y = matrix.labels
    cols = np.flatnonzero(X.sum(axis=0) >= hp.min_count)
    info: dict = {"model": kind, "use_lasso": use_lasso or kind == "lasso"}
    if kind == "lasso" or use_lasso:
        sel = select(X[:, cols], y, hp, seed)
        info["lambda"] = sel.lam
        if kind == "lasso":
            save_model(out_path, sel.model, [matrix.keys[j] for j in cols])
            info["support"] = [matrix.keys[cols[j]] for j in sel.columns]
            return info
        cols = cols[sel.columns]
    model = fit_classifier(kind, X[:, cols], y, hp, seed)
    save_model(out_path, model, [matrix.keys[j] for j in cols])
    info["n_features"] = int(len(cols))
    return info


def eval_stage(matrix: FeatureMatrix, hp: Hyperparams, k: int, seed: int, models: Sequence[str],
               report_path: str | Path, table_path: str | Path | None = None,
               lasso_arms: Sequence[bool] = (False, True)) -> EvalReport:
    plan = stratified_kfold(matrix.labels, k, seed)
    report = run_cv(matrix, plan, models, lasso_arms, hp, seed)
    save_report(report, report_path)
    if table_path is not None:
        Path(table_path).write_text(render_table(report), encoding="utf-8")
    return report


# -- oracle comparison on synthetic data -----------------------------------

def oracle_summary(report: EvalReport, gold_path: str | Path, meta_path: str | Path | None) -> dict:
    gold = {r["report_id"]: r for r in read_gold_features(gold_path)}
    missing = [rid for rid in report.report_ids if rid not in gold]
    if missing:
        raise RadpipeError(f"{gold_path}: no gold record for report {missing[0]!r}")
    labels = [int(gold[rid]["label"]) for rid in report.report_ids]
    bayes = binary_prf(labels, [int(gold[rid]["prob"] > 0.5) for rid in report.report_ids])
    out: dict = {"bayes": {"precision": bayes.precision, "recall": bayes.recall, "f1": bayes.f1}, "models": []}
    for m in report.models:
        p = binary_prf(labels, m.predictions)
        out["models"].append({"model": m.model, "use_lasso": m.use_lasso, "pooled_f1": p.f1,
                              "bayes_gap": bayes.f1 - p.f1})
    if meta_path is not None and Path(meta_path).exists():
        planted = json.loads(Path(meta_path).read_text(encoding="utf-8"))["planted_keys"]
        support = set(report.full_lasso_support)
        out["planted_keys"] = planted
        out["planted_in_lasso_support"] = [k in support for k in planted]
    return out


# -- end to end -------------------------------------------------------------

@dataclass
class PipelineConfig:
    out_dir: Path
    seed: int = 7
    data_dir: Path | None = None  # synthetic data is generated when None
    synth: SynthConfig = field(default_factory=SynthConfig)
    ner: NerConfig = field(default_factory=NerConfig)
    ner_train: int = 400
    ner_dev: int = 100
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    k: int = 5
    models: tuple[str, ...] = ("lr", "dt", "rf", "svm")


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Raw text to the model comparison table, writing every intermediate under ``out_dir``.

    All seeds (generator, tagger, folds, learners) are the master seed.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = Path(cfg.data_dir) if cfg.data_dir is not None else out / "data"
    if cfg.data_dir is None:
        synth_cfg = SynthConfig(**{**asdict(cfg.synth), "seed": cfg.seed})
        write_synth(data, *generate(synth_cfg))
    lex = load_lexicon_dir(data)
    ner_cfg = NerConfig(**{**asdict(cfg.ner), "seed": cfg.seed})

    log.info("training the tagger")
    model, ner_report = train_ner_stage(data / "corpus.conll", lex, ner_cfg, out / "ner_model.json",
                                        cfg.ner_train, cfg.ner_dev)
    write_json(out / "ner_train.json", {"train_loss": ner_report.train_loss, "dev_f1": ner_report.dev_f1,
                                        "best_epoch": ner_report.best_epoch,
                                        "stop_reason": ner_report.stop_reason})
    log.info("extracting features")
    _, tally = extract_stage(lex, model, data / "reports.tsv", out / "features.jsonl")
    # A per-fold vocabulary needs every key in the matrix; the threshold is applied inside each fold.
    hp = cfg.hyperparams
    vec_min = 1 if hp.vocab_scope == "fold" else hp.min_count
    matrix = vectorize_stage(out / "features.jsonl", out / "matrix.csv", vec_min)
    log.info("cross-validating on a %d x %d matrix", *matrix.shape)
    report = eval_stage(matrix, hp, cfg.k, cfg.seed, cfg.models, out / "eval_report.json", out / "eval_table.txt")
    summary = {"ner_best_dev_f1": max(ner_report.dev_f1) if ner_report.dev_f1 else None,
               "dropped_pre_location": tally.dropped_pre_location,
               "dropped_modifiers": tally.dropped_modifiers,
               "matrix_shape": list(matrix.shape)}
    gold = data / "gold_features.jsonl"
    if gold.exists():
        summary["oracle"] = oracle_summary(report, gold, data / "synth_meta.json")
    write_json(out / "summary.json", summary)
    return summary


__all__ = [
    "PipelineConfig", "eval_stage", "extract_gold_stage", "extract_stage", "fit_stage", "load_lexicon_dir",
    "oracle_summary", "run_pipeline", "split_ner_corpus", "train_ner_stage", "vectorize_stage",
    "write_feature_records", "write_json",
]
