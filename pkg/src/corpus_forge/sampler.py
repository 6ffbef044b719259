"""Reproducible random sampling of fixed-length cuts from the master index.

Each index span is partitioned into floor(len / span_ms) non-overlapping
placement slots. Sampling is a two-level draw without replacement: a span is
picked with probability proportional to its remaining slots, then one of its
remaining slots uniformly; this repeats until the requested hours are
covered or the slots run out (partial result plus SaturationWarning).

Determinism contract: the RNG is Philox (4x64, 10 rounds) keyed by the
SHA-256 of the request description -- seed, span length and all filters --
so identical (index, request) pairs regenerate byte-identical manifests, and
filters are part of the seed material by construction.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import DEFAULT_RATE, load_audio, write_wav
from .errors import (
    ConfigError,
    CorpusForgeError,
    CutError,
    NoCandidates,
    ParseError,
    SaturationWarning,
)
from .segmenter import MasterIndexEntry

DEFAULT_SPAN_MS = 30000

MANIFEST_KEYS = (
    "sample_id",
    "source_path",
    "channel",
    "broadcast_date",
    "cut_start_ms",
    "cut_end_ms",
    "output_path",
)


@dataclass(frozen=True)
class SampleRequest:
    target_hours: float
    seed: int = 0
    span_ms: int = DEFAULT_SPAN_MS
    channel_filter: frozenset[str] | None = None
    date_from: datetime.date | None = None
    date_to: datetime.date | None = None

    def __post_init__(self):
        if self.target_hours <= 0:
            raise ConfigError(f"target_hours must be positive, got {self.target_hours}")
        if self.span_ms <= 0:
            raise ConfigError(f"span_ms must be positive, got {self.span_ms}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class CorpusManifestEntry:
    sample_id: int
    source_path: str
    channel: str
    broadcast_date: datetime.date
    cut_start_ms: int
    cut_end_ms: int
    output_path: str


def _rng_key(req: SampleRequest) -> np.ndarray:
    channels = ",".join(sorted(req.channel_filter)) if req.channel_filter else ""
    desc = "|".join(
        [
            "corpus-forge-sample-v1",
            f"seed={req.seed}",
            f"span_ms={req.span_ms}",
            f"channels={channels}",
            f"from={req.date_from.isoformat() if req.date_from else ''}",
            f"to={req.date_to.isoformat() if req.date_to else ''}",
        ]
    )
    digest = hashlib.sha256(desc.encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype="<u8")


def _matches(entry: MasterIndexEntry, req: SampleRequest) -> bool:
    if req.channel_filter is not None and entry.channel not in req.channel_filter:
        return False
    if req.date_from is not None and entry.broadcast_date < req.date_from:
        return False
    if req.date_to is not None and entry.broadcast_date > req.date_to:
        return False
    return True


def sample_corpus(
    index: list[MasterIndexEntry],
    req: SampleRequest,
    out_dir: str = "",
) -> list[CorpusManifestEntry]:
    """Draw placements until target_hours is reached (or slots run out)."""
    candidates = [e for e in index if _matches(e, req)]
    slots = [e.span.duration_ms // req.span_ms for e in candidates]
    candidates = [e for e, k in zip(candidates, slots) if k > 0]
    slots = [k for k in slots if k > 0]
    if not candidates:
        raise NoCandidates(
            f"no span can host a {req.span_ms}ms placement after filtering"
        )

    rng = np.random.Generator(np.random.Philox(key=_rng_key(req)))
    free = [list(range(k)) for k in slots]
    remaining = sum(slots)
    target_ms = round(req.target_hours * 3_600_000)

    out = []
    total_ms = 0
    while total_ms < target_ms and remaining > 0:
        # span proportional to its remaining slots, via an integer walk
        pick = int(rng.integers(0, remaining))
        for i, f in enumerate(free):
            if pick < len(f):
                break
            pick -= len(f)
        slot = f.pop(int(rng.integers(0, len(f))))
        remaining -= 1

        entry = candidates[i]
        start = entry.span.start_ms + slot * req.span_ms
        date = entry.broadcast_date.isoformat()
        rel = f"{entry.channel}/{date}/{len(out)}.wav"
        out.append(
            CorpusManifestEntry(
                sample_id=len(out),
                source_path=entry.file_path,
                channel=entry.channel,
                broadcast_date=entry.broadcast_date,
                cut_start_ms=start,
                cut_end_ms=start + req.span_ms,
                output_path=f"{out_dir}/{rel}" if out_dir else rel,
            )
        )
        total_ms += req.span_ms

    if total_ms < target_ms:
        warnings.warn(
            SaturationWarning(
                f"candidates exhausted at {total_ms / 3_600_000:.4f}h of the "
                f"requested {req.target_hours}h"
            )
        )
    return out


def cut_samples(
    manifest: list[CorpusManifestEntry],
    audio_root,
    rate: int = DEFAULT_RATE,
) -> list[CutError]:
    """Write one WAVE per entry; per-entry failures are collected, not fatal."""
    root = Path(audio_root)
    errors = []
    for entry in manifest:
        try:
            _cut_one(entry, root, rate)
        except CutError as exc:
            errors.append(exc)
    return errors


def _cut_one(entry: CorpusManifestEntry, root: Path, rate: int) -> None:
    src = root / entry.source_path
    try:
        buf = load_audio(src, rate)
    except (OSError, CorpusForgeError) as exc:
        raise CutError(entry.sample_id, f"{src}: {exc}") from exc
    if buf.duration_ms < entry.cut_end_ms:
        raise CutError(
            entry.sample_id,
            f"{src}: file is {buf.duration_ms}ms, cut ends at {entry.cut_end_ms}ms",
        )
    cut = buf.slice_ms(entry.cut_start_ms, entry.cut_end_ms)
    dest = Path(entry.output_path)
    dest.parent.mkdir(parents=True, exist_ok=True)
    write_wav(cut, dest)


# -- manifest io ---------------------------------------------------------------

def write_manifest(manifest: list[CorpusManifestEntry], sink) -> None:
    """One JSON object per line, fixed key order, UTF-8."""
    own = not hasattr(sink, "write")
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for e in manifest:
            doc = {
                "sample_id": e.sample_id,
                "source_path": e.source_path,
                "channel": e.channel,
                "broadcast_date": e.broadcast_date.isoformat(),
                "cut_start_ms": e.cut_start_ms,
                "cut_end_ms": e.cut_end_ms,
                "output_path": e.output_path,
            }
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
    finally:
        if own:
            fh.close()


def read_manifest(source) -> list[CorpusManifestEntry]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, str(exc)) from None
        if set(doc) != set(MANIFEST_KEYS):
            raise ParseError(line_no, f"manifest keys must be exactly {MANIFEST_KEYS}")
        try:
            out.append(
                CorpusManifestEntry(
                    sample_id=int(doc["sample_id"]),
                    source_path=doc["source_path"],
                    channel=doc["channel"],
                    broadcast_date=datetime.date.fromisoformat(doc["broadcast_date"]),
                    cut_start_ms=int(doc["cut_start_ms"]),
                    cut_end_ms=int(doc["cut_end_ms"]),
                    output_path=doc["output_path"],
                )
            )
        except (ValueError, TypeError) as exc:
            raise ParseError(line_no, str(exc)) from None
    return out
