
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radpipe.errors import LexiconError
from radpipe.lexicon import Lexicon, SegTag, load_lexicon, normalize, save_lexicon, segment_fmm

B, I, E, S, N = SegTag.B, SegTag.I, SegTag.E, SegTag.S, SegTag.NONE


def brute_force_fmm(words, text):
    """Reference: at each position try every word length, keep the longest."""
    out, pos = [], 0
    while pos < len(text):
        lengths = [k for k in range(1, len(text) - pos + 1) if text[pos:pos + k] in words]
        k = max(lengths, default=0)
        if k == 0:
            out.append(N)
            pos += 1
        elif k == 1:
            out.append(S)
            pos += 1
        else:
            out += [B] + [I] * (k - 2) + [E]
            pos += k
    return out


def test_two_word_lexicon_row():
    lex = Lexicon.build(["肝脏", "轮廓规整"])
    assert lex.max_word_len == 4
    tags = segment_fmm(lex, "肝脏形态大小正常，轮廓规整")
    assert [str(t) for t in tags] == ["B", "E"] + ["None"] * 7 + ["B", "I", "I", "E"]


def test_empty_text():
    assert segment_fmm(Lexicon.build(["肝脏"]), "") == []


def test_longest_match_wins():
    lex = Lexicon.build(["肝", "肝脏"])
    assert segment_fmm(lex, "肝脏") == [B, E]
    assert segment_fmm(lex, "肝") == [S]


def test_greedy_never_backtracks():
    # "abc" + "d" is consumed before "cde" could match
    lex = Lexicon.build(["abc", "cde"])
    assert segment_fmm(lex, "abcde") == [B, I, E, N, N]


@settings(max_examples=200, deadline=None)
@given(st.sets(st.text(alphabet="abc", min_size=1, max_size=4), max_size=6),
       st.text(alphabet="abcd", max_size=12))
def test_matches_brute_force(words, text):
    lex = Lexicon.build(words)
    assert segment_fmm(lex, text) == brute_force_fmm(words, text)


def test_segtag_indices_are_distinct():
    assert sorted(t.index for t in SegTag) == list(range(5))


def test_normalize(liver_lexicon):
    assert normalize(liver_lexicon, "肝S8") == "肝脏"
    assert normalize(liver_lexicon, "肝") == "肝脏"
    assert normalize(liver_lexicon, "肝脏") == "肝脏"
    assert normalize(liver_lexicon, "脾脏") == "脾脏"
    for w in ["肝S8", "肝右叶", "脾脏"]:
        once = liver_lexicon.normalize(w)
        assert liver_lexicon.normalize(once) == once


def test_variant_in_two_groups_rejected():
    with pytest.raises(LexiconError, match="肝"):
        Lexicon.build(["肝脏", "肝叶"], [("肝脏", ["肝"]), ("肝叶", ["肝"])])


def test_slash_rejected():
    with pytest.raises(LexiconError, match="/"):
        Lexicon.build(["肝/脏"])


def test_load_files(tmp_path):
    (tmp_path / "w.txt").write_text("# comment\n肝脏  \n轮廓规整\n肝脏\n\n", encoding="utf-8")
    (tmp_path / "s.txt").write_text("肝脏\t肝\t肝S8\n", encoding="utf-8")
    lex = load_lexicon(tmp_path / "w.txt", tmp_path / "s.txt")
    assert lex.words == frozenset({"肝脏", "轮廓规整"})
    assert lex.max_word_len == 4
    assert lex.synonym_groups == (("肝脏", frozenset({"肝脏", "肝", "肝S8"})),)


def test_load_empty_synonyms(tmp_path):
    (tmp_path / "w.txt").write_text("肝脏\n轮廓规整\n", encoding="utf-8")
    (tmp_path / "s.txt").write_text("", encoding="utf-8")
    lex = load_lexicon(tmp_path / "w.txt", tmp_path / "s.txt")
    assert len(lex.words) == 2 and lex.synonym_groups == ()


def test_duplicate_variant_names_file_line_and_variant(tmp_path):
    (tmp_path / "w.txt").write_text("肝脏\n", encoding="utf-8")
    (tmp_path / "s.txt").write_text("肝脏\t肝\n肝叶\t肝\n", encoding="utf-8")
    with pytest.raises(LexiconError) as exc:
        load_lexicon(tmp_path / "w.txt", tmp_path / "s.txt")
    msg = str(exc.value)
    assert "s.txt:2" in msg and "'肝'" in msg


def test_malformed_synonym_line(tmp_path):
    (tmp_path / "w.txt").write_text("肝脏\n", encoding="utf-8")
    (tmp_path / "s.txt").write_text("肝脏\t\t肝\n", encoding="utf-8")
    with pytest.raises(LexiconError, match="s.txt:1"):
        load_lexicon(tmp_path / "w.txt", tmp_path / "s.txt")


def test_bad_utf8(tmp_path):
    (tmp_path / "w.txt").write_bytes(b"\xff\xfe\x00")
    (tmp_path / "s.txt").write_text("", encoding="utf-8")
    with pytest.raises(LexiconError, match="UTF-8"):
        load_lexicon(tmp_path / "w.txt", tmp_path / "s.txt")


def test_save_load_round_trip(tmp_path, liver_lexicon):
    save_lexicon(liver_lexicon, tmp_path / "w.txt", tmp_path / "s.txt")
    again = load_lexicon(tmp_path / "w.txt", tmp_path / "s.txt")
    assert again == liver_lexicon
    first = (tmp_path / "w.txt").read_bytes(), (tmp_path / "s.txt").read_bytes()
    save_lexicon(again, tmp_path / "w.txt", tmp_path / "s.txt")
    assert ((tmp_path / "w.txt").read_bytes(), (tmp_path / "s.txt").read_bytes()) == first
