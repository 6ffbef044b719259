import datetime
import io

import pytest

from corpus_forge.errors import ConfigError, MissingDuration, OverlapError, ParseError
from corpus_forge.segmenter import (
    Chunk,
    ChunkValidityConfig,
    MasterIndexEntry,
    SpeechSpan,
    bundle_chunks,
    extract_spans,
    is_valid,
    parse_master_index,
    spans_from_labels,
    speech_ratio,
    write_master_index,
)
from corpus_forge.vad import FrameLabel, Label

DEFAULTS = ChunkValidityConfig()


def labels(*runs):
    """labels('V', 40, 'S', 10, ...) -> FrameLabel list."""
    out = []
    kinds = {"V": Label.VOICE, "S": Label.SILENCE, "O": Label.OTHER}
    for kind, count in zip(runs[::2], runs[1::2]):
        for _ in range(count):
            out.append(FrameLabel(len(out), kinds[kind], 0.0, 0.0))
    return out


def chunk(voice, silence, other, index=0):
    return Chunk(index, 50, voice, silence, other)


class TestBundle:
    def test_uniform_voice(self):
        chunks = bundle_chunks(labels("V", 100), 50)
        assert len(chunks) == 2
        assert all(c.voice_ratio == 1.0 for c in chunks)

    def test_mixed_counts_by_hand(self):
        # 40 voice, 10 silence, 70 voice -> (0.8, 0.2, 0) and (1, 0, 0),
        # trailing 20 frames dropped
        chunks = bundle_chunks(labels("V", 40, "S", 10, "V", 70), 50)
        assert len(chunks) == 2
        assert (chunks[0].voice_ratio, chunks[0].silence_ratio, chunks[0].other_ratio) == (0.8, 0.2, 0.0)
        assert (chunks[1].voice_ratio, chunks[1].silence_ratio, chunks[1].other_ratio) == (1.0, 0.0, 0.0)

    def test_below_one_chunk(self):
        assert bundle_chunks(labels("V", 49), 50) == []

    def test_ratios_partition(self):
        chunks = bundle_chunks(labels("V", 20, "S", 15, "O", 15, "V", 50), 50)
        for c in chunks:
            assert c.voice_ratio + c.silence_ratio + c.other_ratio == pytest.approx(1.0, abs=1e-9)


class TestValidity:
    def test_pure_speech(self):
        assert is_valid(chunk(1.0, 0.0, 0.0), DEFAULTS)

    def test_any_other_content_fails(self):
        assert not is_valid(chunk(0.5, 0.3, 0.2), DEFAULTS)

    def test_voice_and_silence_bounds(self):
        assert not is_valid(chunk(0.05, 0.95, 0.0), DEFAULTS)
        assert is_valid(chunk(0.10, 0.90, 0.0), DEFAULTS)
        assert is_valid(chunk(0.5, 0.5, 0.0), DEFAULTS)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            ChunkValidityConfig(min_voice_ratio=0.8, max_voice_ratio=0.2)


class TestSpans:
    def valid_run(self, n):
        return [chunk(1.0, 0.0, 0.0, i) for i in range(n)]

    def invalid(self):
        return [chunk(0.0, 0.0, 1.0)]

    def test_run_interrupted_by_invalid_chunk(self):
        chunks = self.valid_run(31) + self.invalid() + self.valid_run(5)
        spans = extract_spans(chunks, DEFAULTS, 30000)
        assert [(s.start_ms, s.end_ms) for s in spans] == [(0, 31000)]
        assert spans[0].chunk_count == 31

    def test_29_chunks_below_minimum(self):
        assert extract_spans(self.valid_run(29), DEFAULTS, 30000) == []

    def test_exactly_30_chunks_qualify(self):
        spans = extract_spans(self.valid_run(30), DEFAULTS, 30000)
        assert [(s.start_ms, s.end_ms) for s in spans] == [(0, 30000)]

    def test_maximal_run_not_split(self):
        spans = extract_spans(self.valid_run(60), DEFAULTS, 30000)
        assert [(s.start_ms, s.end_ms) for s in spans] == [(0, 60000)]

    def test_min_span_must_align(self):
        with pytest.raises(ConfigError):
            extract_spans(self.valid_run(40), DEFAULTS, 30500)

    def test_synthetic_speech_music_speech_layout(self):
        # 35 s speech | 10 s music | 40 s speech at one chunk per second
        seq = labels("V", 35 * 50, "O", 10 * 50, "V", 40 * 50)
        spans = spans_from_labels(seq, DEFAULTS)
        assert [(s.start_ms, s.end_ms) for s in spans] == [(0, 35000), (45000, 85000)]

    def test_tightening_never_grows_coverage(self):
        import numpy as np

        rng = np.random.default_rng(21)
        chunks = []
        for i in range(200):
            v = rng.uniform(0, 1)
            s = rng.uniform(0, 1 - v)
            chunks.append(Chunk(i, 50, v, s, 1 - v - s))
        loose = ChunkValidityConfig(min_voice_ratio=0.05, max_silence_ratio=0.95, max_other_ratio=0.20)
        for tight in (
            ChunkValidityConfig(min_voice_ratio=0.20, max_silence_ratio=0.95, max_other_ratio=0.20),
            ChunkValidityConfig(min_voice_ratio=0.05, max_silence_ratio=0.60, max_other_ratio=0.20),
            ChunkValidityConfig(min_voice_ratio=0.05, max_silence_ratio=0.95, max_other_ratio=0.05),
        ):
            cover_loose = sum(s.duration_ms for s in extract_spans(chunks, loose, 5000))
            cover_tight = sum(s.duration_ms for s in extract_spans(chunks, tight, 5000))
            assert cover_tight <= cover_loose


def entry(path="p4/2019/a.wav", channel="P4 Gotland", date="2019-03-01", start=30000, end=64000):
    return MasterIndexEntry(
        path, channel, datetime.date.fromisoformat(date),
        SpeechSpan(start, end, (end - start) // 1000),
    )


class TestIndex:
    def test_round_trip_single_entry(self):
        sink = io.StringIO()
        write_master_index([entry()], sink)
        text = sink.getvalue()
        assert text.splitlines()[0] == "#corpus-forge-index v1"
        assert len([l for l in text.splitlines() if not l.startswith("#")]) == 1
        assert parse_master_index(io.StringIO(text)) == [entry()]

    def test_overlap_rejected_on_parse(self):
        text = (
            "#corpus-forge-index v1\n"
            "a.wav\tP4\t2019-03-01\t0\t31000\n"
            "a.wav\tP4\t2019-03-01\t30000\t62000\n"
        )
        with pytest.raises(OverlapError):
            parse_master_index(io.StringIO(text))

    def test_empty_index(self):
        sink = io.StringIO()
        write_master_index([], sink)
        assert parse_master_index(io.StringIO(sink.getvalue())) == []

    def test_writer_sorts(self):
        e1 = entry(start=60000, end=95000)
        e2 = entry(start=0, end=31000)
        e3 = entry(path="a/b.wav", start=0, end=30000)
        sink = io.StringIO()
        write_master_index([e1, e2, e3], sink)
        parsed = parse_master_index(io.StringIO(sink.getvalue()))
        assert parsed == [e3, e2, e1]

    def test_comment_lines_skipped(self):
        sink = io.StringIO()
        write_master_index([entry()], sink, comments=["rate=16000", "level=2"])
        parsed = parse_master_index(io.StringIO(sink.getvalue()))
        assert parsed == [entry()]

    def test_missing_header(self):
        with pytest.raises(ParseError):
            parse_master_index(io.StringIO("a.wav\tP4\t2019-03-01\t0\t31000\n"))

    def test_malformed_line_number(self):
        text = "#corpus-forge-index v1\na.wav\tP4\t2019-03-01\t0\n"
        with pytest.raises(ParseError) as err:
            parse_master_index(io.StringIO(text))
        assert err.value.line_no == 2

    def test_writer_rejects_overlaps(self):
        with pytest.raises(OverlapError):
            write_master_index([entry(start=0, end=31000), entry(start=30000, end=62000)], io.StringIO())


class TestSpeechRatio:
    def test_half_tagged(self):
        e = entry(path="f.wav", start=0, end=30000)
        assert speech_ratio([e], {"f.wav": 60000}) == pytest.approx(0.5)

    def test_file_without_spans_dilutes(self):
        e = entry(path="f.wav", start=0, end=30000)
        assert speech_ratio([e], {"f.wav": 60000, "empty.wav": 60000}) == pytest.approx(0.25)

    def test_full_coverage(self):
        e = entry(path="f.wav", start=0, end=60000)
        assert speech_ratio([e], {"f.wav": 60000}) == pytest.approx(1.0)

    def test_missing_duration(self):
        with pytest.raises(MissingDuration):
            speech_ratio([entry(path="f.wav")], {"other.wav": 1000})
