"""Command-line entry point: ``radpipe <command> [options]``.

Exit status is 0 on success, 1 on a usage error and 2 when input data is
missing or malformed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import RadpipeError
from .evaluate import MODEL_KINDS, VOCAB_SCOPES, Hyperparams, render_table
from .extract import split_sentences
from .features import DEFAULT_MIN_COUNT, load_matrix
from .lexicon import load_lexicon, segment_fmm
from .ner import NerConfig, load_ner_model, load_pretrained_embeddings, tag_sentence
from .pipeline import (
    PipelineConfig,
    eval_stage,
    extract_gold_stage,
    extract_stage,
    fit_stage,
    load_lexicon_dir,
    oracle_summary,
    run_pipeline,
    train_ner_stage,
    vectorize_stage,
    write_json,
)
from .synth import SynthConfig, generate, write_synth
from .tagging import (
    AnnotatedSentence,
    CorpusDoc,
    corpus_sentences,
    encode_tags,
    entity_prf,
    entity_prf_by_type,
    read_corpus,
    write_corpus,
)

USAGE_ERROR = 1
DATA_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _opt_int(s: str) -> int | None:
    return None if s.lower() == "none" else int(s)


def _opt_float(s: str) -> float | None:
    return None if s.lower() == "none" else float(s)


# -- shared option groups ---------------------------------------------------

def _add_lexicon(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--lexicon", type=Path, required=required, metavar="DIR",
                   help="directory holding words.txt and synonyms.txt")


def _add_seed(p: argparse.ArgumentParser, default: int = 0) -> None:
    p.add_argument("--seed", type=int, default=default, help="master seed (default: %(default)s)")


def _add_ner_options(p: argparse.ArgumentParser) -> None:
    d = NerConfig()
    g = p.add_argument_group("tagger")
    g.add_argument("--hidden", type=int, default=d.hidden, help="LSTM hidden units per direction (default: %(default)s)")
    g.add_argument("--char-dim", type=int, default=d.char_emb_dim, help="character embedding size (default: %(default)s)")
    g.add_argument("--segtag-dim", type=int, default=d.segtag_emb_dim,
                   help="lexicon-feature embedding size, 0 disables it (default: %(default)s)")
    g.add_argument("--segtag-onehot", action="store_true", help="fixed one-hot lexicon feature instead of a learned table")
    g.add_argument("--lr", type=float, default=d.lr, help="Adam learning rate (default: %(default)s)")
    g.add_argument("--epochs", type=int, default=d.epochs, help="maximum epochs (default: %(default)s)")
    g.add_argument("--batch-size", type=int, default=d.batch_size, help="sentences per update (default: %(default)s)")
    g.add_argument("--patience", type=int, default=d.patience,
                   help="epochs without dev improvement before stopping (default: %(default)s)")


def _ner_config(a: argparse.Namespace) -> NerConfig:
    return NerConfig(char_emb_dim=a.char_dim, segtag_emb_dim=a.segtag_dim, hidden=a.hidden, lr=a.lr,
                     epochs=a.epochs, batch_size=a.batch_size, patience=a.patience, seed=a.seed,
                     segtag_onehot=a.segtag_onehot)


def _add_hp_options(p: argparse.ArgumentParser) -> None:
    d = Hyperparams()
    g = p.add_argument_group("learners")
    g.add_argument("--lasso-lambda", type=_opt_float, default=d.lasso_lambda,
                   help="fixed L1 weight; 'none' tunes it by inner CV (default: %(default)s)")
    g.add_argument("--lasso-grid", type=int, default=d.lasso_grid, help="grid points for tuning (default: %(default)s)")
    g.add_argument("--lasso-ratio", type=float, default=d.lasso_ratio,
                   help="smallest grid value as a fraction of lambda_max (default: %(default)s)")
    g.add_argument("--inner-k", type=int, default=d.inner_k, help="folds for tuning lambda (default: %(default)s)")
    g.add_argument("--lr-l2", type=float, default=d.lr_l2, help="logistic regression L2 weight (default: %(default)s)")
    g.add_argument("--dt-max-depth", type=_opt_int, default=d.dt_max_depth, help="tree depth cap (default: %(default)s)")
    g.add_argument("--rf-trees", type=int, default=d.rf_trees, help="forest size (default: %(default)s)")
    g.add_argument("--rf-mtry", type=_opt_int, default=d.rf_mtry,
                   help="features tried per split; 'none' means ceil(sqrt(p)) (default: %(default)s)")
    g.add_argument("--rf-max-depth", type=_opt_int, default=d.rf_max_depth, help="forest tree depth cap (default: %(default)s)")
    g.add_argument("--svm-lambda", type=float, default=d.svm_lambda, help="SVM L2 weight (default: %(default)s)")
    g.add_argument("--svm-epochs", type=int, default=d.svm_epochs, help="SVM passes over the data (default: %(default)s)")
    g.add_argument("--vocab-scope", choices=VOCAB_SCOPES, default=d.vocab_scope,
                   help="build the feature vocabulary per training fold or once globally (default: %(default)s)")
    g.add_argument("--min-count", type=int, default=d.min_count,
                   help="minimum number of reports containing a feature (default: %(default)s)")
    g.add_argument("--jobs", type=int, default=d.n_jobs, help="threads for growing forest trees (default: %(default)s)")


def _hyperparams(a: argparse.Namespace) -> Hyperparams:
    return Hyperparams(lasso_lambda=a.lasso_lambda, lasso_grid=a.lasso_grid, lasso_ratio=a.lasso_ratio,
                       inner_k=a.inner_k, lr_l2=a.lr_l2, dt_max_depth=a.dt_max_depth, rf_trees=a.rf_trees,
                       rf_mtry=a.rf_mtry, rf_max_depth=a.rf_max_depth, svm_lambda=a.svm_lambda,
                       svm_epochs=a.svm_epochs, vocab_scope=a.vocab_scope, min_count=a.min_count,
                       n_jobs=a.jobs)


def _add_synth_options(p: argparse.ArgumentParser) -> None:
    d = SynthConfig()
    g = p.add_argument_group("generator")
    g.add_argument("--n-reports", type=int, default=d.n_reports, help="(default: %(default)s)")
    g.add_argument("--positive-rate", type=float, default=d.positive_rate, help="(default: %(default)s)")
    g.add_argument("--n-planted", type=int, default=d.n_planted, help="planted feature keys (default: %(default)s)")
    g.add_argument("--beta", type=float, default=d.beta, help="logit weight per planted key (default: %(default)s)")
    g.add_argument("--label-noise", type=float, default=d.label_noise, help="label flip rate (default: %(default)s)")
    g.add_argument("--deterministic-labels", action="store_true",
                   help="threshold the planted logit instead of sampling labels")
    g.add_argument("--ascii", action="store_true", help="ASCII letters instead of CJK characters")


def _synth_config(a: argparse.Namespace) -> SynthConfig:
    return SynthConfig(seed=a.seed, n_reports=a.n_reports, positive_rate=a.positive_rate, n_planted=a.n_planted,
                       beta=a.beta, label_noise=a.label_noise, stochastic_labels=not a.deterministic_labels,
                       ascii=a.ascii)


def _read_texts(texts: Sequence[str]) -> list[str]:
    if texts:
        return list(texts)
    return [line.rstrip("\n") for line in sys.stdin if line.strip()]


# -- commands -----------------------------------------------------------------

def cmd_synth_gen(a) -> int:
    paths = write_synth(a.out, *generate(_synth_config(a)))
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return 0


def cmd_lexicon_check(a) -> int:
    if a.lexicon is not None:
        lex = load_lexicon_dir(a.lexicon)
    elif a.words is not None and a.synonyms is not None:
        lex = load_lexicon(a.words, a.synonyms)
    else:
        raise UsageError("lexicon check: give --lexicon DIR or both --words and --synonyms")
    print(f"words\t{len(lex.words)}")
    print(f"synonym_groups\t{len(lex.synonym_groups)}")
    print(f"max_word_len\t{lex.max_word_len}")
    return 0


def cmd_segment(a) -> int:
    lex = load_lexicon_dir(a.lexicon)
    for text in _read_texts(a.text):
        tags = [str(t) for t in segment_fmm(lex, text)]
        if a.table:
            print("\t".join(["Character Sequence", *text]))
            print("\t".join(["Lexicon Feature Sequence", *tags]))
        else:
            print(" ".join(tags))
    return 0


def cmd_ner_train(a) -> int:
    lex = load_lexicon_dir(a.lexicon)
    pretrained = load_pretrained_embeddings(a.pretrained) if a.pretrained else None
    _, report = train_ner_stage(a.corpus, lex, _ner_config(a), a.out, a.train, a.dev, pretrained)
    doc = {"train_loss": report.train_loss, "dev_f1": report.dev_f1, "best_epoch": report.best_epoch,
           "stop_reason": report.stop_reason}
    if a.report:
        write_json(a.report, doc)
    print(f"best epoch {report.best_epoch} F1 {max(report.dev_f1):.4f} ({report.stop_reason})")
    return 0


def cmd_ner_tag(a) -> int:
    lex = load_lexicon_dir(a.lexicon)
    model = load_ner_model(a.model)
    sents = []
    for text in _read_texts(a.text):
        for s in split_sentences(text):
            sents.append(AnnotatedSentence(s, encode_tags(s, tag_sentence(model, lex, s))))
    if a.out:
        write_corpus(a.out, [CorpusDoc(None, None, sents)])
    else:
        for s in sents:
            for ch, t in zip(s.chars, s.gold_tags):
                print(f"{ch}\t{t}")
            print()
    return 0


def cmd_ner_eval(a) -> int:
    gold_sents = corpus_sentences(read_corpus(a.gold))
    gold = [s.entities for s in gold_sents]
    if a.pred is not None:
        pred_sents = corpus_sentences(read_corpus(a.pred))
        if [s.chars for s in pred_sents] != [s.chars for s in gold_sents]:
            raise RadpipeError("predicted and gold corpora do not contain the same sentences")
        pred = [s.entities for s in pred_sents]
    else:
        if a.model is None or a.lexicon is None:
            raise UsageError("ner eval: give --pred CORPUS, or --model and --lexicon")
        lex = load_lexicon_dir(a.lexicon)
        model = load_ner_model(a.model)
        pred = [tag_sentence(model, lex, s.chars) for s in gold_sents]
    overall = entity_prf(gold, pred)
    print(f"all\tP {overall.precision:.4f}\tR {overall.recall:.4f}\tF1 {overall.f1:.4f}")
    for etype, prf in entity_prf_by_type(gold, pred).items():
        print(f"{etype.value}\tP {prf.precision:.4f}\tR {prf.recall:.4f}\tF1 {prf.f1:.4f}")
    return 0


def cmd_extract(a) -> int:
    lex = load_lexicon_dir(a.lexicon)
    if a.gold_corpus is not None:
        records = extract_gold_stage(lex, a.gold_corpus, a.out)
    else:
        if a.model is None or a.reports is None:
            raise UsageError("extract: give --model and --reports, or --gold-corpus")
        records, tally = extract_stage(lex, load_ner_model(a.model), a.reports, a.out)
        print(f"dropped\tpre_location {tally.dropped_pre_location}\tmodifiers {tally.dropped_modifiers}")
    print(f"reports\t{len(records)}")
    return 0


def cmd_vectorize(a) -> int:
    m = vectorize_stage(a.features, a.out, a.min_count)
    print(f"matrix\t{m.shape[0]} x {m.shape[1]}")
    return 0


def cmd_fit(a) -> int:
    info = fit_stage(load_matrix(a.matrix), a.model, a.lasso, _hyperparams(a), a.seed, a.out)
    print(json.dumps(info, ensure_ascii=False))
    return 0


def cmd_eval(a) -> int:
    models = [m for m in a.models.split(",") if m]
    bad = [m for m in models if m not in MODEL_KINDS]
    if bad or not models:
        raise UsageError(f"eval: --models takes a comma list of {','.join(MODEL_KINDS)}")
    arms = {"both": (False, True), "with": (True,), "without": (False,)}[a.lasso]
    report = eval_stage(load_matrix(a.matrix), _hyperparams(a), a.k, a.seed, models, a.out, a.table, arms)
    if a.gold is not None:
        write_json(Path(a.out).with_suffix(".oracle.json"), oracle_summary(report, a.gold, a.meta))
    if a.table is None:
        sys.stdout.write(render_table(report))
    return 0


def cmd_pipeline_run(a) -> int:
    cfg = PipelineConfig(out_dir=a.out, seed=a.seed, data_dir=a.data, synth=_synth_config(a),
                         ner=_ner_config(a), ner_train=a.ner_train, ner_dev=a.ner_dev,
                         hyperparams=_hyperparams(a), k=a.k)
    summary = run_pipeline(cfg)
    sys.stdout.write(Path(a.out, "eval_table.txt").read_text(encoding="utf-8"))
    if "oracle" in summary:
        o = summary["oracle"]
        print(f"\nBayes-optimal F1 {100 * o['bayes']['f1']:.2f}")
        for m in o["models"]:
            arm = "with" if m["use_lasso"] else "without"
            print(f"  {m['model']:<4}{arm:<8} pooled F1 {100 * m['pooled_f1']:.2f}  gap {100 * m['bayes_gap']:+.2f}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="radpipe", description="Radiology report feature extraction and classification pipeline.")
    p.add_argument("--version", action="version", version=f"radpipe {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", help="synthetic corpus").add_subparsers(dest="action", required=True,
                                                                          parser_class=_Parser)
    s = synth.add_parser("gen", help="write a synthetic corpus with ground truth")
    s.add_argument("--out", type=Path, required=True, metavar="DIR")
    _add_seed(s, 7)
    _add_synth_options(s)
    s.set_defaults(func=cmd_synth_gen)

    lexp = sub.add_parser("lexicon", help="lexicon files").add_subparsers(dest="action", required=True,
                                                                         parser_class=_Parser)
    s = lexp.add_parser("check", help="validate lexicon files and print their size")
    _add_lexicon(s, required=False)
    s.add_argument("--words", type=Path)
    s.add_argument("--synonyms", type=Path)
    s.set_defaults(func=cmd_lexicon_check)

    s = sub.add_parser("segment", help="print the lexicon feature row of each text (stdin if none given)")
    _add_lexicon(s)
    s.add_argument("--table", action="store_true", help="also print the character row, tab separated")
    s.add_argument("text", nargs="*")
    s.set_defaults(func=cmd_segment)

    ner = sub.add_parser("ner", help="entity tagger").add_subparsers(dest="action", required=True,
                                                                    parser_class=_Parser)
    s = ner.add_parser("train", help="train the tagger on a CoNLL corpus")
    _add_lexicon(s)
    s.add_argument("--corpus", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True, help="model file")
    s.add_argument("--train", type=_opt_int, default=None, help="sentences to train on (default: all but --dev)")
    s.add_argument("--dev", type=int, default=0, help="following sentences held out for early stopping (default: 0)")
    s.add_argument("--pretrained", type=Path, help="word2vec text file with character vectors")
    s.add_argument("--report", type=Path, help="write the per-epoch training report here")
    _add_seed(s)
    _add_ner_options(s)
    s.set_defaults(func=cmd_ner_train)

    s = ner.add_parser("tag", help="tag raw text lines (stdin if none given) as a CoNLL corpus")
    _add_lexicon(s)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--out", type=Path)
    s.add_argument("text", nargs="*")
    s.set_defaults(func=cmd_ner_tag)

    s = ner.add_parser("eval", help="entity-level P/R/F1 against a gold corpus")
    s.add_argument("--gold", type=Path, required=True)
    s.add_argument("--pred", type=Path, help="predicted corpus; otherwise --model tags the gold text")
    s.add_argument("--model", type=Path)
    _add_lexicon(s, required=False)
    s.set_defaults(func=cmd_ner_eval)

    s = sub.add_parser("extract", help="radiological features per report (JSON lines)")
    _add_lexicon(s)
    s.add_argument("--model", type=Path, help="tagger model")
    s.add_argument("--reports", "--in", dest="reports", type=Path, help="TSV of report_id, label, findings text")
    s.add_argument("--gold-corpus", type=Path, help="use the gold entities of a CoNLL corpus instead")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("vectorize", help="binary report matrix (CSV) from extracted features")
    s.add_argument("--features", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT,
                   help="minimum number of reports containing a feature (default: %(default)s)")
    s.set_defaults(func=cmd_vectorize)

    s = sub.add_parser("fit", help="fit one model on a whole matrix")
    s.add_argument("--matrix", type=Path, required=True)
    s.add_argument("--model", choices=("lasso", *MODEL_KINDS), required=True)
    s.add_argument("--lasso", action="store_true", help="select features with the Lasso first")
    s.add_argument("--out", type=Path, required=True)
    _add_seed(s)
    _add_hp_options(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("eval", help="stratified cross-validation report")
    s.add_argument("--matrix", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True, help="structured report (JSON)")
    s.add_argument("--table", type=Path, help="plain-text table; printed to stdout when omitted")
    s.add_argument("--models", default=",".join(MODEL_KINDS), help="(default: %(default)s)")
    s.add_argument("--lasso", choices=("both", "with", "without"), default="both", help="(default: %(default)s)")
    s.add_argument("--k", type=int, default=5, help="folds (default: %(default)s)")
    s.add_argument("--gold", type=Path, help="synthetic gold_features.jsonl for a Bayes-optimal comparison")
    s.add_argument("--meta", type=Path, help="synthetic synth_meta.json (planted keys)")
    _add_seed(s)
    _add_hp_options(s)
    s.set_defaults(func=cmd_eval)

    pipe = sub.add_parser("pipeline", help="end-to-end run").add_subparsers(dest="action", required=True,
                                                                           parser_class=_Parser)
    s = pipe.add_parser("run", help="raw text to the model comparison table")
    s.add_argument("--out", type=Path, required=True, metavar="DIR")
    s.add_argument("--data", type=Path, metavar="DIR",
                   help="directory with words.txt, synonyms.txt, corpus.conll, reports.tsv; generated when omitted")
    s.add_argument("--ner-train", type=int, default=400, help="annotated sentences for training (default: %(default)s)")
    s.add_argument("--ner-dev", type=int, default=100, help="annotated sentences held out (default: %(default)s)")
    s.add_argument("--k", type=int, default=5, help="folds (default: %(default)s)")
    _add_seed(s, 7)
    _add_synth_options(s)
    _add_ner_options(s)
    _add_hp_options(s)
    s.set_defaults(func=cmd_pipeline_run)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help and --version
            return int(exc.code or 0)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE_ERROR
    except (RadpipeError, ValueError, OSError) as exc:
        print(f"radpipe: error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
