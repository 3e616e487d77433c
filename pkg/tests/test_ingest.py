"""Transcript parsing, sentence segmentation, and corpus round-trips."""

import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiblob.errors import ParseError, ValidationError
from aiblob.ingest import (
    Sentence,
    export_corpus,
    load_corpus,
    parse_transcript,
    segment_sentences,
    sentence_id_for,
)


def doc_bytes(words, video_id="vid001", language="it"):
    return json.dumps({
        "video_id": video_id,
        "title": "Telegiornale",
        "source_uri": f"media/{video_id}.mp4",
        "language": language,
        "words": [{"w": w, "s": s, "e": e} for w, s, e in words],
    }).encode("utf-8")


class TestParseTranscript:
    def test_zero_words(self):
        doc = parse_transcript(doc_bytes([]))
        assert doc.words == []
        assert doc.video_id == "vid001"

    def test_single_word_passthrough(self):
        doc = parse_transcript(doc_bytes([("Buonasera.", 1.0, 1.6)]))
        assert len(doc.words) == 1
        assert doc.words[0].text == "Buonasera."
        assert doc.words[0].start_s == 1.0
        assert doc.words[0].end_s == 1.6

    def test_non_monotone_times_name_the_index(self):
        with pytest.raises(ValidationError, match="index 1"):
            parse_transcript(doc_bytes([("a.", 2.0, 2.5), ("b.", 1.0, 1.5)]))

    def test_malformed_json_reports_position(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_transcript(b'{"video_id": "x", ')

    def test_missing_field(self):
        payload = {"video_id": "x", "title": "t", "language": "it", "words": []}
        with pytest.raises(ParseError, match="source_uri"):
            parse_transcript(json.dumps(payload).encode())

    def test_word_with_internal_whitespace(self):
        with pytest.raises(ValidationError, match="whitespace"):
            parse_transcript(doc_bytes([("due parole", 0.0, 1.0)]))

    def test_word_ending_before_start(self):
        with pytest.raises(ValidationError, match="ends at"):
            parse_transcript(doc_bytes([("ciao", 2.0, 1.0)]))

    def test_negative_start(self):
        with pytest.raises(ValidationError, match="negative"):
            parse_transcript(doc_bytes([("ciao", -0.5, 1.0)]))

    def test_empty_video_id(self):
        with pytest.raises(ValidationError, match="video_id"):
            parse_transcript(doc_bytes([], video_id=""))


class TestSegmentSentences:
    def test_three_sentence_split(self):
        # Hand-applied splitting rule: break after '.', '?' and keep word times.
        doc = parse_transcript(doc_bytes([
            ("Ciao.", 0.0, 0.4),
            ("Come", 0.5, 0.8),
            ("stai?", 0.9, 1.2),
            ("Bene.", 1.5, 1.9),
        ]))
        result = segment_sentences(doc, min_chars=1)
        assert [(s.text, s.start_s, s.end_s) for s in result] == [
            ("Ciao.", 0.0, 0.4),
            ("Come stai?", 0.5, 1.2),
            ("Bene.", 1.5, 1.9),
        ]
        assert [s.ordinal for s in result] == [0, 1, 2]

    def test_empty_doc(self):
        doc = parse_transcript(doc_bytes([]))
        assert segment_sentences(doc) == []

    def test_trailing_words_without_punctuation(self):
        doc = parse_transcript(doc_bytes([
            ("Solo", 0.0, 0.3), ("una", 0.4, 0.6), ("frase", 0.7, 1.1),
        ]))
        result = segment_sentences(doc, min_chars=1)
        assert len(result) == 1
        assert result[0].text == "Solo una frase"
        assert result[0].start_s == 0.0
        assert result[0].end_s == 1.1

    def test_abbreviations_do_not_split(self):
        doc = parse_transcript(doc_bytes([
            ("Il", 0.0, 0.1), ("Sig.", 0.2, 0.4), ("Rossi", 0.5, 0.9),
            ("parla.", 1.0, 1.4),
        ]))
        result = segment_sentences(doc, min_chars=1)
        assert [s.text for s in result] == ["Il Sig. Rossi parla."]

    def test_short_fragments_merge_forward(self):
        doc = parse_transcript(doc_bytes([
            ("Sì.", 0.0, 0.2),
            ("Adesso", 0.3, 0.7), ("parliamo", 0.8, 1.2), ("noi.", 1.3, 1.6),
        ]))
        result = segment_sentences(doc, min_chars=12)
        assert [s.text for s in result] == ["Sì. Adesso parliamo noi."]
        assert result[0].start_s == 0.0
        assert result[0].end_s == 1.6

    def test_short_last_fragment_merges_backward(self):
        doc = parse_transcript(doc_bytes([
            ("Una", 0.0, 0.2), ("lunga", 0.3, 0.7), ("frase", 0.8, 1.2),
            ("completa.", 1.3, 1.9),
            ("Fine.", 2.0, 2.4),
        ]))
        result = segment_sentences(doc, min_chars=12)
        assert [s.text for s in result] == ["Una lunga frase completa. Fine."]

    def test_single_short_sentence_kept(self):
        doc = parse_transcript(doc_bytes([("Sì.", 0.0, 0.2)]))
        result = segment_sentences(doc, min_chars=12)
        assert [s.text for s in result] == ["Sì."]

    def test_ellipsis_splits(self):
        doc = parse_transcript(doc_bytes([
            ("Mah…", 0.0, 0.5), ("vedremo", 0.6, 1.0), ("domani.", 1.1, 1.6),
        ]))
        result = segment_sentences(doc, min_chars=1)
        assert [s.text for s in result] == ["Mah…", "vedremo domani."]

    def test_sentence_id_is_truncated_sha256(self):
        doc = parse_transcript(doc_bytes([("Buonasera.", 1.0, 1.6)]))
        [sentence] = segment_sentences(doc, min_chars=1)
        expected = hashlib.sha256("vid001\x1f0\x1fBuonasera.".encode()).digest()[:16].hex()
        assert sentence.sentence_id == expected
        assert sentence.sentence_id == sentence_id_for("vid001", 0, "Buonasera.")
        assert len(sentence.sentence_id) == 32

    @given(
        words=st.lists(
            st.tuples(
                st.text(alphabet="abcdef", min_size=1, max_size=6),
                st.sampled_from(["", ".", "!", "?", "…", ""]),
            ),
            min_size=1,
            max_size=40,
        ),
        min_chars=st.integers(min_value=1, max_value=30),
    )
    @settings(max_examples=120, deadline=None)
    def test_segmentation_is_lossless(self, words, min_chars):
        tokens = []
        t = 0.0
        for base, punct in words:
            tokens.append((base + punct, round(t, 2), round(t + 0.3, 2)))
            t += 0.5
        doc = parse_transcript(doc_bytes(tokens))
        result = segment_sentences(doc, min_chars=min_chars)

        # Every word lands in exactly one sentence; nothing dropped or duplicated.
        assert " ".join(s.text for s in result) == " ".join(w.text for w in doc.words)
        # Ordinals contiguous from zero.
        assert [s.ordinal for s in result] == list(range(len(result)))
        # Time boundaries coincide with word boundaries from the source.
        starts = {w.start_s for w in doc.words}
        ends = {w.end_s for w in doc.words}
        for s in result:
            assert s.start_s in starts
            assert s.end_s in ends
            assert s.start_s < s.end_s

    def test_determinism(self):
        raw = doc_bytes([("Ciao.", 0.0, 0.4), ("Come", 0.5, 0.8), ("stai?", 0.9, 1.2)])
        first = segment_sentences(parse_transcript(raw))
        second = segment_sentences(parse_transcript(raw))
        assert first == second


class TestCorpusRoundTrip:
    def make_sentences(self):
        return [
            Sentence(sentence_id_for("v1", 0, "Prima frase."), "v1", 0, "Prima frase.", 0.0, 1.5),
            Sentence(sentence_id_for("v1", 1, "Seconda frase."), "v1", 1, "Seconda frase.", 2.0, 3.25),
            Sentence(sentence_id_for("v2", 0, "Un'altra ancora."), "v2", 0, "Un'altra ancora.", 0.5, 2.125),
        ]

    def test_round_trip_identity(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        sentences = self.make_sentences()
        assert export_corpus(sentences, str(path)) == 3
        assert load_corpus(str(path)) == sentences

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        sentences = self.make_sentences()
        export_corpus(sentences + [sentences[0]], str(path))
        with pytest.raises(ValidationError, match=sentences[0].sentence_id):
            load_corpus(str(path))

    def test_empty_corpus(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        assert export_corpus([], str(path)) == 0
        content = path.read_text(encoding="utf-8")
        assert content.startswith('{"format":"aiblob-corpus","version":1}')
        assert load_corpus(str(path)) == []

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"format":"something-else","version":1}\n', encoding="utf-8")
        with pytest.raises(ParseError, match="not a corpus file"):
            load_corpus(str(path))

    def test_export_is_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        export_corpus(self.make_sentences(), str(a))
        export_corpus(self.make_sentences(), str(b))
        assert a.read_bytes() == b.read_bytes()
