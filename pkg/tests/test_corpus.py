import json
import random

import pytest
from hypothesis import given, strategies as st

from versebyte.corpus import (BibleVersion, CorpusError, ParallelExample, VerseId,
                              align, corpus_stats, dump_version, load_version,
                              make_split, normalize_text, parse_verse_id,
                              read_examples_jsonl, write_examples_jsonl)

from conftest import synthetic_examples


# ---------------------------------------------------------------- verse ids

def test_parse_and_render_round_trip():
    vid = parse_verse_id("01001001")
    assert (vid.book, vid.chapter, vid.verse) == (1, 1, 1)
    assert vid.render() == "01001001"
    assert str(parse_verse_id("66022021")) == "66022021"


@given(st.integers(1, 99), st.integers(1, 999), st.integers(1, 999))
def test_verse_id_round_trip_property(book, chapter, verse):
    vid = VerseId(book, chapter, verse)
    assert parse_verse_id(vid.render()) == vid
    assert len(vid.render()) == 8


def test_verse_id_ordering_matches_string_ordering():
    ids = [VerseId(2, 1, 1), VerseId(1, 30, 2), VerseId(1, 2, 999), VerseId(1, 2, 7)]
    by_value = sorted(ids)
    by_string = sorted(ids, key=lambda v: v.render())
    assert by_value == by_string


@pytest.mark.parametrize("bad", ["0100100", "010010011", "0100100a", "０１００１００１", ""])
def test_parse_verse_id_rejects_malformed(bad):
    with pytest.raises(CorpusError):
        parse_verse_id(bad)


@pytest.mark.parametrize("bad,field", [
    ("00001001", "book"), ("01000001", "chapter"), ("01001000", "verse")])
def test_parse_verse_id_zero_component_names_field(bad, field):
    with pytest.raises(CorpusError, match=field):
        parse_verse_id(bad)


@pytest.mark.parametrize("book,chapter,verse", [
    (0, 1, 1), (100, 1, 1), (1, 0, 1), (1, 1000, 1), (1, 1, 0), (1, 1, 1000)])
def test_verse_id_range_validation(book, chapter, verse):
    with pytest.raises(CorpusError):
        VerseId(book, chapter, verse)


# ---------------------------------------------------------------- loading

def test_load_version_happy_path(tmp_path):
    path = tmp_path / "kjv.txt"
    path.write_text(
        "# a comment line\n"
        "01001001\tIn the beginning God created the heaven and the earth.\n"
        "\n"
        "01001002\t  And the earth   was without form \n",
        encoding="utf-8")
    version = load_version(path, "eng", "kjv")
    assert len(version) == 2
    assert version.verses[VerseId(1, 1, 2)] == "And the earth was without form"


def test_load_version_rejects_duplicate_id(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("01001001\ta\n01001001\tb\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=r"v\.txt:2.*duplicate"):
        load_version(path, "eng", "v")


def test_load_version_rejects_missing_tab(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("01001001 no tab here\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=r":1"):
        load_version(path, "eng", "v")


def test_load_version_rejects_empty_text(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("01001001\t   \n", encoding="utf-8")
    with pytest.raises(CorpusError, match="empty"):
        load_version(path, "eng", "v")


def test_load_version_rejects_bad_verse_id_with_line_number(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("01001001\tok\n99999999x\tbad\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=":2"):
        load_version(path, "eng", "v")


def test_load_version_rejects_non_utf8(tmp_path):
    path = tmp_path / "v.txt"
    path.write_bytes(b"01001001\t\xff\xfe broken\n")
    with pytest.raises(CorpusError, match="UTF-8"):
        load_version(path, "eng", "v")


def test_load_version_rejects_bad_language_code(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("01001001\tok\n", encoding="utf-8")
    with pytest.raises(ValueError, match="language code"):
        load_version(path, "English", "v")


def test_dump_version_round_trip_sorted(tmp_path):
    version = BibleVersion("fra", "lsg", {
        VerseId(2, 1, 1): "b", VerseId(1, 1, 1): "a", VerseId(1, 1, 2): "c"})
    path = tmp_path / "out.txt"
    dump_version(version, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["01001001\ta", "01001002\tc", "02001001\tb"]
    assert load_version(path, "fra", "lsg").verses == version.verses


def test_normalize_text():
    assert normalize_text("  a\t b \n c ") == "a b c"
    assert normalize_text("\n \t") == ""


# ---------------------------------------------------------------- alignment

def _version(lang, ids_texts):
    return BibleVersion(lang, f"{lang}-v", {parse_verse_id(i): t for i, t in ids_texts})


def test_align_keeps_shared_ids_sorted():
    src = _version("eng", [("01001002", "s2"), ("01001001", "s1"), ("01001003", "s3")])
    tgt = _version("deu", [("01001003", "t3"), ("01001001", "t1"), ("02001001", "t4")])
    pairs = align(src, tgt)
    assert [p.verse_id.render() for p in pairs] == ["01001001", "01001003"]
    assert pairs[0].source_text == "s1" and pairs[0].target_text == "t1"
    assert pairs[0].source_lang == "eng" and pairs[0].target_lang == "deu"


def test_align_same_language_is_error():
    a = _version("eng", [("01001001", "x")])
    b = _version("eng", [("01001001", "y")])
    with pytest.raises(CorpusError, match="itself"):
        align(a, b)


def test_align_disjoint_versions_yield_nothing():
    a = _version("eng", [("01001001", "x")])
    b = _version("deu", [("01001002", "y")])
    assert align(a, b) == []


def test_parallel_example_validation():
    with pytest.raises(CorpusError):
        ParallelExample(VerseId(1, 1, 1), "eng", "eng", "a", "b")
    with pytest.raises(CorpusError):
        ParallelExample(VerseId(1, 1, 1), "eng", "deu", "", "b")


# ---------------------------------------------------------------- splitting

def test_make_split_partitions_completely():
    examples = synthetic_examples(100)
    split = make_split(examples, (0.8, 0.1, 0.1), seed=7)
    assert (len(split.train), len(split.validation), len(split.test)) == (80, 10, 10)
    keys = sorted(p.key() for p in split.train + split.validation + split.test)
    assert keys == sorted(p.key() for p in examples)


def test_make_split_floor_allocation_remainder_to_train():
    examples = synthetic_examples(7)
    split = make_split(examples, (0.98, 0.01, 0.01), seed=0)
    # floor(7*0.98)=6, floor(7*0.01)=0 twice; remainder 1 goes to train
    assert (len(split.train), len(split.validation), len(split.test)) == (7, 0, 0)


def test_make_split_deterministic_and_order_independent():
    examples = synthetic_examples(40)
    shuffled = list(examples)
    random.Random(99).shuffle(shuffled)
    a = make_split(examples, (0.5, 0.25, 0.25), seed=3)
    b = make_split(shuffled, (0.5, 0.25, 0.25), seed=3)
    assert [p.key() for p in a.train] == [p.key() for p in b.train]
    assert [p.key() for p in a.test] == [p.key() for p in b.test]
    c = make_split(examples, (0.5, 0.25, 0.25), seed=4)
    assert [p.key() for p in a.train] != [p.key() for p in c.train]


@given(st.integers(1, 60), st.integers(0, 2 ** 31))
def test_make_split_property_partition(n, seed):
    examples = synthetic_examples(n)
    split = make_split(examples, (0.6, 0.2, 0.2), seed=seed)
    combined = split.train + split.validation + split.test
    assert len(combined) == n
    assert len({p.key() for p in combined}) == n
    assert len(split.train) >= int(n * 0.6)


@pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.5), (1.0, 0.1, -0.1), (0.5, 0.5)])
def test_make_split_bad_ratios(ratios):
    with pytest.raises(CorpusError):
        make_split(synthetic_examples(4), ratios, seed=0)


def test_make_split_empty_is_error():
    with pytest.raises(CorpusError, match="empty"):
        make_split([], (0.8, 0.1, 0.1), seed=0)


# ---------------------------------------------------------------- stats / jsonl

def test_corpus_stats_counts_and_histogram():
    v1 = _version("eng", [("01001001", "abc"), ("01001002", "de")])
    v2 = _version("deu", [("01001001", "xyz")])
    stats = corpus_stats([v1, v2])
    assert stats.n_versions == 2 and stats.n_languages == 2
    assert stats.verse_counts == {"eng/eng-v": 2, "deu/deu-v": 1}
    assert stats.byte_length_histogram == {3: 2, 2: 1}


def test_corpus_stats_histogram_uses_byte_lengths():
    v = _version("ell", [("01001001", "αβ")])  # 2 chars, 4 UTF-8 bytes
    assert corpus_stats([v]).byte_length_histogram == {4: 1}


def test_examples_jsonl_round_trip(tmp_path):
    examples = synthetic_examples(5, source_fmt="état {i}", target_fmt="zustand {i} ære")
    path = tmp_path / "pairs.jsonl"
    write_examples_jsonl(examples, path)
    assert read_examples_jsonl(path) == examples
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert set(first) == {"verse_id", "source_lang", "target_lang",
                          "source_text", "target_text"}
    assert "état" in first["source_text"]  # ensure_ascii off


def test_read_examples_jsonl_rejects_bad_record(tmp_path):
    path = tmp_path / "pairs.jsonl"
    path.write_text('{"verse_id": "01001001"}\n', encoding="utf-8")
    with pytest.raises(CorpusError, match=":1"):
        read_examples_jsonl(path)
