"""Chunk bundling, validity gating, span extraction and the master index.

Frame labels are bundled into fixed-size chunks (50 frames / 1000 ms at
defaults). A chunk passes the validity gate when its voice, silence and
other ratios each sit inside configured bounds. Maximal runs of valid
chunks of at least 30 s become speech spans; spans plus file metadata are
persisted to a sorted text index, one pointer per line.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass

from .errors import ConfigError, MissingDuration, OverlapError, ParseError
from .vad import FrameLabel, Label

INDEX_HEADER = "#corpus-forge-index v1"

DEFAULT_FRAMES_PER_CHUNK = 50
DEFAULT_MIN_SPAN_MS = 30000


@dataclass(frozen=True)
class Chunk:
    index: int
    frame_count: int
    voice_ratio: float
    silence_ratio: float
    other_ratio: float


@dataclass(frozen=True)
class ChunkValidityConfig:
    min_voice_ratio: float = 0.10
    max_voice_ratio: float = 1.00
    min_silence_ratio: float = 0.00
    max_silence_ratio: float = 0.90
    max_other_ratio: float = 0.00

    def __post_init__(self):
        if self.min_voice_ratio > self.max_voice_ratio:
            raise ConfigError("min_voice_ratio exceeds max_voice_ratio")
        if self.min_silence_ratio > self.max_silence_ratio:
            raise ConfigError("min_silence_ratio exceeds max_silence_ratio")
        for name in ("min_voice_ratio", "max_voice_ratio", "min_silence_ratio",
                     "max_silence_ratio", "max_other_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class SpeechSpan:
    start_ms: int
    end_ms: int
    chunk_count: int

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class MasterIndexEntry:
    file_path: str
    channel: str
    broadcast_date: datetime.date
    span: SpeechSpan


def bundle_chunks(labels: list[FrameLabel], frames_per_chunk: int = DEFAULT_FRAMES_PER_CHUNK) -> list[Chunk]:
    """Bundle labels into chunks; a trailing partial chunk is dropped."""
    if frames_per_chunk < 1:
        raise ConfigError(f"frames_per_chunk must be >= 1, got {frames_per_chunk}")
    out = []
    for c in range(len(labels) // frames_per_chunk):
        block = labels[c * frames_per_chunk : (c + 1) * frames_per_chunk]
        voice = sum(1 for lab in block if lab.label is Label.VOICE)
        silence = sum(1 for lab in block if lab.label is Label.SILENCE)
        other = frames_per_chunk - voice - silence
        out.append(
            Chunk(
                index=c,
                frame_count=frames_per_chunk,
                voice_ratio=voice / frames_per_chunk,
                silence_ratio=silence / frames_per_chunk,
                other_ratio=other / frames_per_chunk,
            )
        )
    return out


def is_valid(chunk: Chunk, cfg: ChunkValidityConfig) -> bool:
    return (
        chunk.other_ratio <= cfg.max_other_ratio
        and cfg.min_voice_ratio <= chunk.voice_ratio <= cfg.max_voice_ratio
        and cfg.min_silence_ratio <= chunk.silence_ratio <= cfg.max_silence_ratio
    )


def extract_spans(
    chunks: list[Chunk],
    cfg: ChunkValidityConfig,
    min_span_ms: int = DEFAULT_MIN_SPAN_MS,
    chunk_ms: int = 1000,
) -> list[SpeechSpan]:
    """Maximal runs of valid chunks lasting at least min_span_ms."""
    if chunk_ms <= 0 or min_span_ms % chunk_ms:
        raise ConfigError(
            f"min_span_ms ({min_span_ms}) must be a positive multiple of the "
            f"chunk duration ({chunk_ms}ms)"
        )
    min_chunks = min_span_ms // chunk_ms
    spans = []
    run_start = None
    for pos, chunk in enumerate(chunks):
        if is_valid(chunk, cfg):
            if run_start is None:
                run_start = pos
            continue
        if run_start is not None and pos - run_start >= min_chunks:
            spans.append(SpeechSpan(run_start * chunk_ms, pos * chunk_ms, pos - run_start))
        run_start = None
    if run_start is not None and len(chunks) - run_start >= min_chunks:
        spans.append(
            SpeechSpan(run_start * chunk_ms, len(chunks) * chunk_ms, len(chunks) - run_start)
        )
    return spans


def spans_from_labels(
    labels: list[FrameLabel],
    cfg: ChunkValidityConfig,
    frames_per_chunk: int = DEFAULT_FRAMES_PER_CHUNK,
    frame_ms: int = 20,
    min_span_ms: int = DEFAULT_MIN_SPAN_MS,
) -> list[SpeechSpan]:
    chunks = bundle_chunks(labels, frames_per_chunk)
    return extract_spans(chunks, cfg, min_span_ms, chunk_ms=frames_per_chunk * frame_ms)


# -- master index ------------------------------------------------------------

def _check_field(value: str, what: str) -> str:
    if not value:
        raise ConfigError(f"{what} must be non-empty")
    if "\t" in value or "\n" in value:
        raise ConfigError(f"{what} {value!r} may not contain tabs or newlines")
    return value


def _check_disjoint(entries: list[MasterIndexEntry]) -> None:
    prev: MasterIndexEntry | None = None
    for e in entries:
        if prev is not None and e.file_path == prev.file_path and e.span.start_ms < prev.span.end_ms:
            raise OverlapError(
                f"{e.file_path}: span at {e.span.start_ms}ms overlaps span "
                f"ending at {prev.span.end_ms}ms"
            )
        prev = e


def write_master_index(entries, sink, comments: list[str] | None = None) -> None:
    """Write the index sorted by (file_path, start_ms); rejects overlaps.

    Extra header comments (e.g. the effective configuration) are emitted as
    '#'-prefixed lines after the version line; parsers skip them.
    """
    ordered = sorted(entries, key=lambda e: (e.file_path, e.span.start_ms))
    _check_disjoint(ordered)
    own = not hasattr(sink, "write")
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        fh.write(INDEX_HEADER + "\n")
        for line in comments or []:
            fh.write(f"#{line}\n")
        for e in ordered:
            fh.write(
                f"{_check_field(e.file_path, 'file_path')}\t"
                f"{_check_field(e.channel, 'channel')}\t"
                f"{e.broadcast_date.isoformat()}\t"
                f"{e.span.start_ms}\t{e.span.end_ms}\n"
            )
    finally:
        if own:
            fh.close()


def parse_master_index(source, chunk_ms: int = 1000) -> list[MasterIndexEntry]:
    """Parse an index file; returns entries sorted by (file_path, start_ms).

    The file stores only span boundaries; chunk_count is re-derived from the
    chunk duration the index was built with (1000 ms at defaults).
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()

    lines = text.splitlines()
    if not lines or lines[0].strip() != INDEX_HEADER:
        raise ParseError(1, f"missing index header {INDEX_HEADER!r}")

    entries = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ParseError(line_no, f"expected 5 tab-separated fields, got {len(parts)}")
        path, channel, date_s, start_s, end_s = parts
        if not path:
            raise ParseError(line_no, "empty file_path")
        try:
            date = datetime.date.fromisoformat(date_s)
            start_ms = int(start_s)
            end_ms = int(end_s)
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        if end_ms <= start_ms:
            raise ParseError(line_no, f"span end {end_ms} not after start {start_ms}")
        entries.append(
            MasterIndexEntry(
                path, channel, date,
                SpeechSpan(start_ms, end_ms, (end_ms - start_ms) // chunk_ms),
            )
        )

    entries.sort(key=lambda e: (e.file_path, e.span.start_ms))
    _check_disjoint(entries)
    return entries


def speech_ratio(entries, durations_ms: dict[str, int]) -> float:
    """Fraction of total running time covered by indexed spans.

    Every indexed file must appear in the duration table; files without any
    span still contribute their full duration to the denominator.
    """
    for e in entries:
        if e.file_path not in durations_ms:
            raise MissingDuration(e.file_path)
    total = sum(durations_ms.values())
    if total <= 0:
        return 0.0
    tagged = sum(e.span.duration_ms for e in entries)
    return tagged / total
