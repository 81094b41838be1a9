"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed in the summary."""
import itertools
import math
import time

import numpy as np
import pytest

from radpipe.cli import main
from radpipe.evaluate import Hyperparams, load_report, run_cv, save_report, stratified_kfold
from radpipe.extract import features_from_entities
from radpipe.features import FeatureMatrix, load_matrix, save_matrix
from radpipe.learn import (
    fit_forest,
    fit_lasso,
    fit_logistic,
    fit_svm,
    fit_tree,
    kkt_residual,
    lambda_max,
    load_model,
    logistic_loss,
    predict_tree,
    save_model,
)
from radpipe.lexicon import Lexicon, SegTag, load_lexicon, save_lexicon, segment_fmm
from radpipe.ner import NerConfig, NerModel, load_ner_model, save_ner_model, train_ner
from radpipe.neural import CrfParams, crf_log_partition, crf_viterbi, grad_check, path_score
from radpipe.pipeline import split_ner_corpus
from radpipe.synth import SynthConfig, generate, oracle_eval
from radpipe.tagging import (
    TAGS,
    CorpusDoc,
    Entity,
    EntityType,
    decode_entities,
    encode_tags,
    read_corpus,
    tag,
    write_corpus,
)

L, M, D = EntityType.Location, EntityType.Morphology, EntityType.Density


def budget(start, seconds):
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.1f} s, budget {seconds} s"


@pytest.mark.criterion(1, "lexicon feature row and tag row of the two-clause liver sentence")
def test_criterion_1_segmentation_and_tags():
    t0 = time.perf_counter()
    text = "肝脏形态大小正常，轮廓规整"
    segs = segment_fmm(Lexicon.build(["肝脏", "轮廓规整"]), text)
    assert [str(s) for s in segs] == ["B", "E", "None", "None", "None", "None", "None", "None", "None",
                                      "B", "I", "I", "E"]
    row = "B-L E-L B-M I-M I-M I-M I-M E-M O B-M I-M I-M E-M".split()
    tags = [tag(t) for t in row]
    ents = decode_entities(text, tags)
    assert [(e.etype, e.surface) for e in ents] == [(L, "肝脏"), (M, "形态大小正常"), (M, "轮廓规整")]
    assert [t.short for t in encode_tags(text, ents)] == row
    budget(t0, 1)


@pytest.mark.criterion(2, "features of the four-clause liver sentence with the lobe synonym group")
def test_criterion_2_feature_extraction(liver_lexicon):
    t0 = time.perf_counter()
    s = "肝脏形态大小正常，轮廓规整，肝实质密度不均匀，肝右叶可见巨大低密度灶"

    def ent(surface, etype):
        i = s.index(surface)
        return Entity(i, i + len(surface), etype, surface)

    ents = [ent("肝脏", L), ent("形态大小正常", M), ent("轮廓规整", M), ent("肝实质", L),
            ent("密度不均匀", D), ent("肝右叶", L), ent("低密度灶", D)]
    keys = [f.key for f in features_from_entities(liver_lexicon, [ents])]
    assert keys == ["肝脏/形态大小正常", "肝脏/轮廓规整", "肝实质/密度不均匀", "肝叶/低密度灶"]
    budget(t0, 1)


@pytest.mark.criterion(3, "CRF log-partition and Viterbi against path enumeration (200 instances)")
def test_criterion_3_crf_enumeration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        T, n = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        crf = CrfParams.from_arrays(rng.normal(size=(T, T)), rng.normal(size=T), rng.normal(size=T))
        e = rng.normal(size=(n, T)) * 2
        paths = list(itertools.product(range(T), repeat=n))
        scores = np.array([path_score(crf, e, p) for p in paths])
        top = scores.max()
        brute = top + math.log(np.exp(scores - top).sum())
        worst = max(worst, abs(crf_log_partition(crf, e) - brute))
        # first path in lexicographic order among the maximizers
        best = paths[int(np.argmax(scores))]
        assert tuple(crf_viterbi(crf, e)) == best
    assert worst <= 1e-9
    budget(t0, 10)


@pytest.mark.criterion(4, "full tagger loss gradient against central differences (10 sentences)")
def test_criterion_4_gradient_check(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    alphabet = list("abcdefghij")
    cfg = NerConfig(char_emb_dim=4, segtag_emb_dim=3, hidden=8)
    model = NerModel.init(alphabet, cfg, rng)
    for p in model.params():
        p.values[...] = rng.normal(scale=0.5, size=p.values.shape)
    items = []
    for _ in range(10):
        n = int(rng.integers(1, 9))
        chars = "".join(rng.choice(alphabet, size=n))
        segs = [SegTag(v) for v in rng.choice(["B", "I", "E", "S", "None"], size=n)]
        items.append((chars, segs, [int(t) for t in rng.integers(0, len(TAGS), size=n)]))
    report = grad_check(lambda: model.batch_loss(items), model.trainable_params(), tol=1e-4,
                        coords_per_param=10**6)
    record_property("note", f"max relative error {report.worst:.2e} over {len(report.max_rel_error)} tensors")
    assert report.passed, report.failures
    budget(t0, 60)


@pytest.mark.criterion(5, "tagger on the seed-7 synthetic corpus, 400 train / 100 held out, hidden 32")
def test_criterion_5_synthetic_ner(record_property):
    t0 = time.perf_counter()
    lex, reports, _ = generate(SynthConfig(seed=7))
    sents = [s for r in reports for s in r.sentences]
    train, dev = split_ner_corpus(sents, 400, 100)
    f1 = {}
    for seg_dim in (8, 0):
        cfg = NerConfig(hidden=32, epochs=30, segtag_emb_dim=seg_dim, seed=7)
        _, rep = train_ner(train, lex, cfg, dev=dev)
        f1[seg_dim] = max(rep.dev_f1)
        record_property("note", f"segtag_emb_dim={seg_dim}: held-out F1 {f1[seg_dim]:.4f} "
                                f"(best epoch {rep.best_epoch}, {rep.stop_reason})")
    assert f1[8] >= 0.90
    budget(t0, 600)


@pytest.mark.criterion(6, "Lasso KKT residual, zero solution at lambda_max, unpenalized limit")
def test_criterion_6_lasso(record_property):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n, p = int(rng.integers(30, 120)), int(rng.integers(3, 15))
        X = (rng.random((n, p)) < 0.3).astype(float)
        w = rng.normal(size=p) * 2
        y = (rng.random(n) < 1 / (1 + np.exp(-(X @ w - 0.5)))).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        lm = lambda_max(X, y)
        lam = lm * rng.uniform(0.01, 1.0)
        worst = max(worst, kkt_residual(fit_lasso(X, y, lam), X, y, lam))
        for big in (lm, 3 * lm):
            assert np.all(fit_lasso(X, y, big).w == 0.0)
    assert worst <= 1e-5
    rng = np.random.default_rng(5)
    X = (rng.random((200, 6)) < 0.5).astype(float)
    y = (rng.random(200) < 1 / (1 + np.exp(-(X @ rng.normal(size=6))))).astype(float)
    a, b = fit_lasso(X, y, 0.0), fit_logistic(X, y, l2=0.0)
    gap = abs(logistic_loss(X, y, a.w, a.b) - logistic_loss(X, y, b.w, b.b))
    record_property("note", f"worst KKT residual {worst:.2e}; lambda=0 loss gap {gap:.1e}")
    assert gap <= 1e-4
    budget(t0, 30)


@pytest.mark.criterion(7, "tree and forest invariants, planted-rule importance ranking")
def test_criterion_7_trees(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(17)
    for _ in range(10):
        X = np.unique((rng.random((200, 12)) < 0.5).astype(np.uint8), axis=0)
        y = (rng.random(len(X)) < 0.5).astype(int)
        assert np.array_equal(predict_tree(fit_tree(X, y), X), y)
    for seed in range(5):
        r = np.random.default_rng(seed)
        X = (r.random((500, 10)) < 0.3).astype(np.uint8)
        y = (X[:, 0] | X[:, 3]).astype(int)
        flip = r.random(500) < 0.05
        y[flip] = 1 - y[flip]
        forest = fit_forest(X, y, n_trees=50, seed=seed)
        votes = forest.votes(X)
        majority = (2 * votes.sum(axis=0) > len(forest.trees)).astype(int)
        assert np.array_equal(forest.predict(X), majority)
        assert np.all(forest.importances >= 0)
        assert abs(forest.importances.sum() - 1.0) <= 1e-9
        top2 = set(np.argsort(-forest.importances, kind="stable")[:2].tolist())
        assert top2 == {0, 3}, seed
    record_property("note", "planted features {0, 3} ranked top-2 for seeds 0-4")
    budget(t0, 60)


@pytest.mark.criterion(8, "pipeline run on seed 7: forest and Lasso+LR near the Bayes-optimal F1")
def test_criterion_8_planted_recovery(tmp_path, record_property, capsys):
    t0 = time.perf_counter()
    out = tmp_path / "run"
    assert main(["pipeline", "run", "--out", str(out), "--seed", "7"]) == 0
    capsys.readouterr()
    _, reports, meta = generate(SynthConfig(seed=7, n_reports=600, label_noise=0.02))
    report = load_report(out / "eval_report.json")
    order = {rid: i for i, rid in enumerate(report.report_ids)}
    assert sorted(order) == sorted(r.report_id for r in reports)
    table = (out / "eval_table.txt").read_text(encoding="utf-8")
    assert "Without Lasso" in table and "With Lasso" in table
    for name in ("Logistic regression", "Decision tree", "Random forest", "SVM"):
        assert name in table
    gaps = {}
    for kind, arm in (("rf", False), ("rf", True), ("lr", True)):
        preds = report.result(kind, arm).predictions
        gap = oracle_eval(reports, [preds[order[r.report_id]] for r in reports])
        gaps[(kind, arm)] = gap
        arm_name = "with" if arm else "without"
        record_property("note", f"{kind} {arm_name} Lasso: pooled F1 {gap.model.f1:.4f}, "
                                f"Bayes F1 {gap.bayes.f1:.4f}, gap {gap.f1_gap:+.4f}")
    support = set(report.full_lasso_support)
    record_property("note", f"Lasso support {len(support)} keys, planted keys covered: "
                            f"{sum(k in support for k in meta.planted_keys)}/{len(meta.planted_keys)}")
    for key, gap in gaps.items():
        assert abs(gap.f1_gap) <= 0.05, key
    assert set(meta.planted_keys) <= support
    budget(t0, 900)


TINY = ["--n-reports", "60", "--ner-train", "120", "--ner-dev", "30", "--k", "3", "--hidden", "16",
        "--epochs", "3", "--rf-trees", "20", "--svm-epochs", "20", "--lasso-grid", "6", "--inner-k", "3"]


@pytest.mark.criterion(9, "byte-identical reruns of every stage; parallel forest equals sequential")
def test_criterion_9_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    for name in ("a", "b"):
        assert main(["pipeline", "run", "--out", str(tmp_path / name), "--seed", "11", *TINY]) == 0
        m = str(tmp_path / name / "matrix.csv")
        for kind in ("lasso", "lr", "dt", "rf", "svm"):
            assert main(["fit", "--matrix", m, "--model", kind, "--out", str(tmp_path / name / f"fit_{kind}.json"),
                         "--seed", "11", "--rf-trees", "20", "--svm-epochs", "20", "--lasso-grid", "6"]) == 0
    capsys.readouterr()
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) >= 17
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), str(f)
    matrix = load_matrix(tmp_path / "a" / "matrix.csv")
    seq = fit_forest(matrix.X, matrix.labels, n_trees=40, seed=3)
    par = fit_forest(matrix.X, matrix.labels, n_trees=40, seed=3, n_jobs=4)
    assert seq.trees == par.trees
    assert seq.importances.tobytes() == par.importances.tobytes()
    save_model(tmp_path / "seq.json", seq, matrix.keys)
    save_model(tmp_path / "par.json", par, matrix.keys)
    assert (tmp_path / "seq.json").read_bytes() == (tmp_path / "par.json").read_bytes()
    budget(t0, 300)


@pytest.mark.criterion(10, "save/load/save byte identity for models; corpus and matrix round trips")
def test_criterion_10_serialization(tmp_path):
    lex, reports, _ = generate(SynthConfig(seed=2, n_reports=40, background_templates=30))
    rng = np.random.default_rng(0)
    X = (rng.random((80, 8)) < 0.4).astype(np.uint8)
    y = (X[:, 0] | X[:, 1]).astype(int)
    keys = [f"k/{j}" for j in range(8)]
    models = {
        "lasso": fit_lasso(X, y, 0.02), "logistic": fit_logistic(X, y), "svm": fit_svm(X, y, epochs=10),
        "tree": fit_tree(X, y), "forest": fit_forest(X, y, n_trees=5),
    }
    for name, model in models.items():
        save_model(tmp_path / f"{name}1.json", model, keys)
        again, k2 = load_model(tmp_path / f"{name}1.json")
        save_model(tmp_path / f"{name}2.json", again, k2)
        assert (tmp_path / f"{name}1.json").read_bytes() == (tmp_path / f"{name}2.json").read_bytes(), name
    sents = [s for r in reports for s in r.sentences][:40]
    ner, _ = train_ner(sents, lex, NerConfig(hidden=4, char_emb_dim=4, segtag_emb_dim=2, epochs=1))
    save_ner_model(ner, tmp_path / "ner1.json")
    save_ner_model(load_ner_model(tmp_path / "ner1.json"), tmp_path / "ner2.json")
    assert (tmp_path / "ner1.json").read_bytes() == (tmp_path / "ner2.json").read_bytes()

    docs = [CorpusDoc(r.report_id, r.label, r.sentences) for r in reports]
    write_corpus(tmp_path / "c1.conll", docs)
    back = read_corpus(tmp_path / "c1.conll")
    assert [(d.report_id, d.label, [(s.chars, s.gold_tags) for s in d.sentences]) for d in back] == \
           [(d.report_id, d.label, [(s.chars, s.gold_tags) for s in d.sentences]) for d in docs]
    write_corpus(tmp_path / "c2.conll", back)
    assert (tmp_path / "c1.conll").read_bytes() == (tmp_path / "c2.conll").read_bytes()

    fm = FeatureMatrix([f"R{i}" for i in range(80)], y, ["肝脏/低密度灶", "a,b", 'q"d', "50%", *keys[4:]], X)
    save_matrix(fm, tmp_path / "m1.csv")
    fm2 = load_matrix(tmp_path / "m1.csv")
    assert fm2.keys == fm.keys and fm2.report_ids == fm.report_ids
    assert np.array_equal(fm2.X, fm.X) and np.array_equal(fm2.labels, fm.labels)
    save_matrix(fm2, tmp_path / "m2.csv")
    assert (tmp_path / "m1.csv").read_bytes() == (tmp_path / "m2.csv").read_bytes()

    save_lexicon(lex, tmp_path / "w.txt", tmp_path / "s.txt")
    assert load_lexicon(tmp_path / "w.txt", tmp_path / "s.txt") == lex

    rep = run_cv(fm, stratified_kfold(y, 3, 0), ("lr", "dt"), (False, True),
                 Hyperparams(lasso_grid=4, inner_k=3, rf_trees=5), seed=0)
    save_report(rep, tmp_path / "r1.json")
    save_report(load_report(tmp_path / "r1.json"), tmp_path / "r2.json")
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
