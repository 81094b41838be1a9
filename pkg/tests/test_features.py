import numpy as np
import pytest

from radpipe.errors import RadpipeError
from radpipe.features import FeatureMatrix, build_vocab, load_matrix, save_matrix, vectorize
from radpipe.synth import SynthConfig, generate


def test_document_frequency_threshold():
    reports = [(f"r{i}", ["肝脏/形态大小正常"] if i < 551 else []) for i in range(1089)]
    reports[0] = ("r0", ["肝脏/形态大小正常", "肝脏/形态大小正常", "肝脏/结构"])
    reports[1] = ("r1", ["肝脏/形态大小正常", "肝脏/结构"])
    vocab = build_vocab(reports, min_count=3)
    assert vocab.keys == ["肝脏/形态大小正常"] and vocab.doc_counts == [551]
    assert build_vocab(reports, min_count=1).keys == ["肝脏/形态大小正常", "肝脏/结构"]
    with pytest.raises(ValueError):
        build_vocab(reports, min_count=0)


def test_vocab_order_count_then_key():
    reports = [("a", ["y", "x", "z"]), ("b", ["y", "x"]), ("c", ["w"])]
    vocab = build_vocab(reports, 1)
    assert vocab.keys == ["x", "y", "w", "z"]
    assert vocab.doc_counts == [2, 2, 1, 1]


def test_vectorize_rows():
    reports = [("a", ["x", "y"]), ("b", []), ("c", ["x", "y", "unseen"])]
    vocab = build_vocab(reports, 1)
    m = vectorize(vocab, reports, [1, 0, 1])
    assert m.keys == ["x", "y", "unseen"]
    vocab = build_vocab(reports, 2)
    m = vectorize(vocab, reports, [1, 0, 1])
    assert m.X.tolist() == [[1, 1], [0, 0], [1, 1]]
    assert m.X.dtype == np.uint8


def test_column_sums_equal_doc_counts(rng):
    keys = [f"k{i}" for i in range(15)]
    reports = [(f"r{i}", list(rng.choice(keys, size=int(rng.integers(0, 8))))) for i in range(80)]
    vocab = build_vocab(reports, 3)
    m = vectorize(vocab, reports, [i % 2 for i in range(80)])
    assert m.X.sum(axis=0).tolist() == vocab.doc_counts


def test_order_independent(rng):
    reports = [(f"r{i}", [f"k{j}" for j in rng.choice(10, size=4)]) for i in range(30)]
    labels = [i % 2 for i in range(30)]
    vocab = build_vocab(reports, 2)
    m = vectorize(vocab, reports, labels)
    perm = rng.permutation(30)
    m2 = vectorize(build_vocab([reports[i] for i in perm], 2), [reports[i] for i in perm], [labels[i] for i in perm])
    assert m2.keys == m.keys
    back = {rid: row.tolist() for rid, row in zip(m2.report_ids, m2.X)}
    assert all(back[rid] == row.tolist() for rid, row in zip(m.report_ids, m.X))


def test_duplicate_id_rejected():
    reports = [("a", ["x"]), ("a", ["y"])]
    with pytest.raises(RadpipeError, match="'a'"):
        vectorize(build_vocab(reports, 1), reports, [0, 1])


def test_synthetic_rows_match_gold_indicators():
    _, reports, _ = generate(SynthConfig(n_reports=60))
    pairs = [(r.report_id, r.gold_keys) for r in reports]
    vocab = build_vocab(pairs, 1)
    m = vectorize(vocab, pairs, [r.label for r in reports])
    for r, row in zip(reports, m.X):
        assert {m.keys[j] for j in np.flatnonzero(row)} == set(r.gold_keys)


def test_matrix_round_trip_with_awkward_keys(tmp_path):
    keys = ["肝脏/形态大小正常", "a,b/c", "100%/x", 'q"uote/y', "plain/z"]
    m = FeatureMatrix(["r1", "r,2"], np.array([1, 0]), keys, np.array([[1, 0, 1, 0, 1], [0, 1, 1, 1, 0]]))
    path = tmp_path / "m.csv"
    save_matrix(m, path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("report_id,label,肝脏/形态大小正常,a%2Cb%2Fc,")
    back = load_matrix(path)
    assert back.keys == keys and back.report_ids == m.report_ids
    assert np.array_equal(back.X, m.X) and np.array_equal(back.labels, m.labels)
    save_matrix(back, tmp_path / "m2.csv")
    assert (tmp_path / "m2.csv").read_bytes() == path.read_bytes()


@pytest.mark.parametrize("body", ["x,y\n", "report_id,label,k\nr1,1\n", "report_id,label,k\nr1,2,0\n"])
def test_matrix_errors(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(RadpipeError):
        load_matrix(path)
