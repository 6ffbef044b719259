"""Shared fixture builders: raw WAVE bytes, synthetic archives, CLI runner.

The WAVE builder here is intentionally independent of corpus_forge.audio so
reader tests check against bytes produced by different code.
"""

import io
import struct
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np

import corpus_forge.cli


def make_wav_bytes(channels, rate, bits=16, fmt=1) -> bytes:
    """Hand-assembled RIFF/WAVE. channels: list of float arrays in [-1, 1]."""
    chans = [np.asarray(c, dtype=np.float64) for c in channels]
    n = len(chans[0])
    interleaved = np.empty(n * len(chans))
    for k, c in enumerate(chans):
        interleaved[k :: len(chans)] = c

    if fmt == 3:
        payload = interleaved.astype("<f4").tobytes()
    elif bits == 8:
        payload = (np.round(interleaved * 128.0) + 128).clip(0, 255).astype(np.uint8).tobytes()
    elif bits == 16:
        payload = np.round(interleaved * 32768.0).clip(-32768, 32767).astype("<i2").tobytes()
    elif bits == 24:
        vals = np.round(interleaved * 8388608.0).clip(-8388608, 8388607).astype(np.int32)
        b = np.empty((len(vals), 3), dtype=np.uint8)
        b[:, 0] = vals & 0xFF
        b[:, 1] = (vals >> 8) & 0xFF
        b[:, 2] = (vals >> 16) & 0xFF
        payload = b.tobytes()
    elif bits == 32:
        payload = np.round(interleaved * 2147483648.0).clip(-(2**31), 2**31 - 1).astype("<i4").tobytes()
    else:
        raise ValueError(bits)

    block_align = len(chans) * (4 if fmt == 3 else bits // 8)
    sample_bits = 32 if fmt == 3 else bits
    fmt_chunk = struct.pack(
        "<HHIIHH", fmt, len(chans), rate, rate * block_align, block_align, sample_bits
    )
    body = b"WAVE"
    body += b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def run_cli(*argv) -> tuple[int, str]:
    """Invoke the CLI in-process; returns (exit_code, stdout)."""
    out = io.StringIO()
    with redirect_stdout(out):
        code = corpus_forge.cli.main([str(a) for a in argv])
    return code, out.getvalue()


# -- synthetic archive ------------------------------------------------------------
#
# Three 120 s files with chunk-aligned interleavings of speech, music and
# silence. Speech seconds carry a 5-frame pause so chunks have realistic
# voice/silence ratios; music seconds fail the validity gate (other == 1),
# silence seconds fail it too (silence == 1 > 0.9).

FRAME_MS = 20
FRAMES_PER_SECOND = 50
RATE = 16000

ARCHIVE_PLAN = {
    "P4 Gotland/2019-03-01/a.wav": [("speech", 40), ("music", 20), ("speech", 60)],
    "P4 Malmö/2019-03-02/b.wav": [("speech", 50), ("music", 70)],
    "P4 Uppland/2019-03-03/c.wav": [
        ("speech", 30), ("music", 20), ("speech", 25), ("music", 45),
    ],
}

EXPECTED_SPANS = {
    "P4 Gotland/2019-03-01/a.wav": [(0, 40000), (60000, 120000)],
    "P4 Malmö/2019-03-02/b.wav": [(0, 50000)],
    "P4 Uppland/2019-03-03/c.wav": [(0, 30000)],
}

# (voice_prob, dbfs) written to the external label files, per frame kind
LABEL_VALUES = {
    "speech": (0.95, -13.0),
    "pause": (0.0, -55.0),
    "music": (0.02, -14.0),
    "silence": (0.0, -1000.0),
}


def build_apricot_fixture():
    """Two-word decoding toy: acoustics weakly favor 'aprik aprik', a bigram
    model trained on 'aprikos' lines strongly favors the single word.

    Frame plan (T=11): 'a p r i k' one-hot, then sep/o at 0.55/0.45, then
    a/s at 0.55/0.45, then four letter/blank frames at 0.6/0.4. Greedy and
    unfused beam give 'aprik aprik'; a large LM weight flips to 'aprikos'.
    """
    import warnings

    from corpus_forge.ctc import CtcPosteriors
    from corpus_forge.ngram import DiscountFallback, train

    alphabet = ("<b>", "a", "p", "r", "i", "k", "o", "s", "<sp>")
    sym = {s: i for i, s in enumerate(alphabet)}
    rows = np.zeros((11, len(alphabet)))
    for t, ch in enumerate("aprik"):
        rows[t, sym[ch]] = 1.0
    rows[5, sym["<sp>"]] = 0.55
    rows[5, sym["o"]] = 0.45
    rows[6, sym["a"]] = 0.55
    rows[6, sym["s"]] = 0.45
    for t, ch in zip(range(7, 11), "prik"):
        rows[t, sym[ch]] = 0.6
        rows[t, sym["<b>"]] = 0.4
    post = CtcPosteriors(rows, alphabet, blank_index=0, sep_index=sym["<sp>"])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscountFallback)
        lm = train(["aprikos"] * 20, order=2)
    return post, lm


def _second_of_audio(kind: str, rng: np.random.Generator, t0: int) -> np.ndarray:
    spf = RATE // FRAMES_PER_SECOND * FRAMES_PER_SECOND  # 16000
    if kind == "speech":
        t = (np.arange(spf) + t0) / RATE
        sec = 0.3 * np.sin(2 * np.pi * 220.0 * t)
        sec[-5 * (RATE // FRAMES_PER_SECOND):] = 0.0  # trailing 5-frame pause
        return sec
    if kind == "music":
        return rng.uniform(-0.15, 0.15, spf)
    return np.zeros(spf)


def _second_of_frames(kind: str) -> list[str]:
    if kind == "speech":
        return ["speech"] * 45 + ["pause"] * 5
    return [kind] * FRAMES_PER_SECOND


def build_synthetic_archive(root: Path) -> dict:
    """Write WAVs + external label files; return layout facts for assertions."""
    audio_root = root / "archive"
    labels_root = root / "labels"
    rng = np.random.default_rng(1234)
    durations = {}
    for rel, plan in ARCHIVE_PLAN.items():
        seconds = []
        kinds = []
        t0 = 0
        for kind, secs in plan:
            for _ in range(secs):
                seconds.append(_second_of_audio(kind, rng, t0))
                kinds.extend(_second_of_frames(kind))
                t0 += RATE
        samples = np.concatenate(seconds)
        wav_path = audio_root / rel
        wav_path.parent.mkdir(parents=True, exist_ok=True)
        wav_path.write_bytes(make_wav_bytes([samples], RATE))
        durations[rel] = round(1000 * len(samples) / RATE)

        label_path = labels_root / (rel + ".labels")
        label_path.parent.mkdir(parents=True, exist_ok=True)
        with open(label_path, "w", encoding="utf-8") as fh:
            for i, kind in enumerate(kinds):
                prob, db = LABEL_VALUES[kind]
                fh.write(f"{i}\t{prob}\t{db}\n")

    return {
        "audio_root": audio_root,
        "labels_root": labels_root,
        "durations": durations,
        "expected_spans": EXPECTED_SPANS,
        "total_ms": sum(durations.values()),
        "speech_ms": sum(
            e - s for spans in EXPECTED_SPANS.values() for s, e in spans
        ),
    }
