import numpy as np
import pytest

from textcnn_transfer.nn import ConfigError
from textcnn_transfer.text import (PAD, UNK, DatasetFormatError, Example, VectorFileError, build_vocab, encode,
                                   load_pretrained_vectors, random_embeddings, read_dataset, tokenize,
                                   write_dataset)


class TestTokenize:
    def test_punctuation_split(self):
        assert tokenize("Good movie!") == ["good", "movie", "!"]

    def test_empty(self):
        assert tokenize("") == []

    def test_case_folding(self):
        assert tokenize("A A a") == ["a", "a", "a"]

    def test_quotes_and_parens(self):
        assert tokenize('It\'s "fine" (really).') == ["it", "'", "s", '"', "fine", '"', "(", "really", ")", "."]


class TestVocab:
    def test_counting(self):
        v = build_vocab([["a", "b"], ["a"]])
        assert v.words == ["a", "b"] and len(v) == 2

    def test_min_count(self):
        v = build_vocab([["a", "b"], ["a"]], min_count=2)
        assert v.words == ["a"] and len(v) == 1

    def test_single(self):
        assert len(build_vocab([["x"]])) == 1

    def test_reserved_ids(self):
        v = build_vocab([["a", "b"]])
        assert v.id_of("a") == 2 and v.id_of("zzz") == UNK
        assert v.num_rows == 4

    def test_frequency_then_alphabetical(self):
        v = build_vocab([["c", "b", "a", "c"]])
        assert v.words == ["c", "a", "b"]


class TestEncode:
    def test_pad_to_min_len(self):
        v = build_vocab([["good", "movie"]])
        s = encode(["good", "movie"], v, max_len=5, min_len=5)
        np.testing.assert_array_equal(s.token_ids, [v.id_of("good"), v.id_of("movie"), 0, 0, 0])
        assert s.true_length == 2

    def test_truncation(self):
        words = [f"w{i}" for i in range(250)]
        v = build_vocab([words])
        s = encode(words, v, max_len=200, min_len=5)
        assert len(s.token_ids) == 200
        np.testing.assert_array_equal(s.token_ids, [v.id_of(w) for w in words[:200]])

    def test_unknown_word(self):
        v = build_vocab([["a"]])
        assert encode(["b"], v, 10, 1).token_ids[0] == UNK

    def test_empty_becomes_unk(self):
        s = encode([], build_vocab([["a"]]), 10, 3)
        np.testing.assert_array_equal(s.token_ids, [UNK, PAD, PAD])
        assert s.true_length == 1


class TestDatasetFile:
    def test_round_trip(self, tmp_path):
        data = [Example(1, ("good", "movie", "!")), Example(0, ("bad",))]
        write_dataset(data, tmp_path / "d.tsv")
        assert read_dataset(tmp_path / "d.tsv") == data

    def test_line_numbers_in_errors(self, tmp_path):
        (tmp_path / "d.tsv").write_text("1\tok\nno tab here\n")
        with pytest.raises(DatasetFormatError, match=":2:"):
            read_dataset(tmp_path / "d.tsv")

    def test_bad_label(self, tmp_path):
        (tmp_path / "d.tsv").write_text("pos\tok\n")
        with pytest.raises(DatasetFormatError, match="label"):
            read_dataset(tmp_path / "d.tsv")


def _vector_file(path, rows, d):
    lines = [f"{len(rows)} {d}"] + [" ".join([w] + [repr(float(x)) for x in vec]) for w, vec in rows]
    path.write_text("\n".join(lines) + "\n")


class TestVectors:
    def test_full_coverage(self, tmp_path, rng):
        v = build_vocab([["a", "b", "c"]])
        rows = [(w, rng.normal(size=4)) for w in v.words]
        _vector_file(tmp_path / "v.txt", rows, 4)
        table, covered = load_pretrained_vectors(tmp_path / "v.txt", v, rng, dtype=np.float64)
        assert covered == len(v) == table.num_covered
        for w, vec in rows:
            np.testing.assert_array_equal(table.matrix.value[v.id_of(w)], vec)
        assert not table.matrix.value[PAD].any()

    def test_empty_file(self, tmp_path, rng):
        v = build_vocab([["a", "b"]])
        (tmp_path / "v.txt").write_text("0 3\n")
        table, covered = load_pretrained_vectors(tmp_path / "v.txt", v, rng)
        assert covered == 0
        assert np.all(np.abs(table.matrix.value[1:]) <= 0.25)

    def test_dimension_mismatch(self, tmp_path, rng):
        (tmp_path / "v.txt").write_text("0 3\n")
        with pytest.raises(ConfigError):
            load_pretrained_vectors(tmp_path / "v.txt", build_vocab([["a"]]), rng, d=4)

    def test_malformed_line(self, tmp_path, rng):
        (tmp_path / "v.txt").write_text("1 2\na 0.1\n")
        with pytest.raises(VectorFileError, match=":2:"):
            load_pretrained_vectors(tmp_path / "v.txt", build_vocab([["a"]]), rng)

    def test_malformed_header(self, tmp_path, rng):
        (tmp_path / "v.txt").write_text("hello\n")
        with pytest.raises(VectorFileError, match=":1:"):
            load_pretrained_vectors(tmp_path / "v.txt", build_vocab([["a"]]), rng)


def test_random_embeddings_pad_pinned(rng):
    table = random_embeddings(build_vocab([["a", "b"]]), 5, rng)
    assert not table.matrix.value[PAD].any()
    assert not table.matrix.row_mask[PAD] and table.matrix.row_mask[1:].all()
