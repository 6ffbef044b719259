"""Per-frame voice/silence/other classification.

A frame is Voice when the detector's probability clears the voice threshold,
Silence when it is non-voice and the frame RMS sits below the silence gate
(-40 dBFS by default), and Other for everything else (music, noise, tones).

The detector is pluggable: the builtin is a classical energy/ZCR/flatness
heuristic so the pipeline runs without any model dependency; labels produced
by an external neural VAD are ingested from a text file instead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .audio import MIN_DB, AudioBuffer, FrameParams, dbfs, frame_view
from .errors import ConfigError, FrameCountMismatch, ParseError, TooShort


class Label(enum.Enum):
    VOICE = "V"
    SILENCE = "S"
    OTHER = "O"


#: level -> voice_threshold preset; higher level = more permissive detector
def _threshold_for_level(level: int) -> float:
    return 0.9 - 0.2 * level


@dataclass(frozen=True)
class VadConfig:
    level: int = 2
    voice_threshold: float | None = None
    silence_dbfs: float = -40.0

    def __post_init__(self):
        if self.level not in range(5):
            raise ConfigError(f"vad level must be in 0..4, got {self.level}")
        if self.voice_threshold is None:
            object.__setattr__(self, "voice_threshold", _threshold_for_level(self.level))
        if not 0.0 <= self.voice_threshold <= 1.0:
            raise ConfigError(
                f"voice_threshold must be in [0, 1], got {self.voice_threshold}"
            )


@dataclass(frozen=True)
class FrameLabel:
    index: int
    label: Label
    voice_prob: float
    dbfs: float


def label_for(voice_prob: float, frame_dbfs: float, config: VadConfig) -> Label:
    if voice_prob >= config.voice_threshold:
        return Label.VOICE
    if frame_dbfs < config.silence_dbfs:
        return Label.SILENCE
    return Label.OTHER


# -- detectors ---------------------------------------------------------------

class ConstantDetector:
    """Fixed probability for every frame. Test/benchmark backend."""

    thread_safe = True

    def __init__(self, prob: float):
        self.prob = float(prob)

    def spawn(self) -> "ConstantDetector":
        return self

    def score_frames(self, frames: np.ndarray) -> np.ndarray:
        return np.full(len(frames), self.prob)


class EnergyHeuristicDetector:
    """Classical voice scorer: energy over an adaptive floor, ZCR, flatness.

    Each sub-score is clamped to [0, 1] and the frame score is their mean:

    * energy: dBFS above the running noise floor, ramping 0->1 over
      +6..+30 dB. The floor starts at -60 dBFS, drops instantly to quieter
      frames and recovers at 0.5 dB per frame, bounded to [-80, 0].
    * zero crossings: full score inside the 8..80 crossings/frame speech
      band, ramping down to 0 at 0 and at 120 crossings.
    * spectral flatness: geometric/arithmetic mean ratio of the power
      spectrum (DC excluded); tonal-ish frames (flatness < 0.5) score
      (0.5 - flatness) / 0.5, flat spectra score 0.

    Stateful because of the adaptive floor: not thread-safe, callers clone
    via spawn() per file or worker.
    """

    thread_safe = False

    FLOOR_INIT = -60.0
    FLOOR_MIN = -80.0
    FLOOR_RISE = 0.5

    def __init__(self):
        self._floor = self.FLOOR_INIT

    def spawn(self) -> "EnergyHeuristicDetector":
        return EnergyHeuristicDetector()

    def score_frame(self, frame: np.ndarray) -> float:
        frame = np.asarray(frame, dtype=np.float64)
        db = dbfs(frame)
        floor = self._floor
        self._floor = min(max(min(db, floor + self.FLOOR_RISE), self.FLOOR_MIN), 0.0)
        if db == MIN_DB:
            return 0.0

        energy = _clamp01((db - floor - 6.0) / 24.0)

        signs = frame >= 0.0
        crossings = int(np.count_nonzero(signs[1:] != signs[:-1]))
        if crossings < 8:
            zcr = crossings / 8.0
        elif crossings <= 80:
            zcr = 1.0
        else:
            zcr = _clamp01((120.0 - crossings) / 40.0)

        power = np.abs(np.fft.rfft(frame)[1:]) ** 2
        mean_power = float(np.mean(power)) if power.size else 0.0
        if mean_power <= 0.0:
            flat_score = 0.0
        else:
            q = power / mean_power
            flatness = math.exp(float(np.mean(np.log(q + 1e-12))))
            flat_score = _clamp01((0.5 - flatness) / 0.5)

        return (energy + zcr + flat_score) / 3.0

    def score_frames(self, frames: np.ndarray) -> np.ndarray:
        return np.array([self.score_frame(f) for f in frames])


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def builtin_voice_detector(frame: np.ndarray) -> float:
    """One-shot score of a single frame with a fresh detector state."""
    return EnergyHeuristicDetector().score_frame(frame)


# -- classification ----------------------------------------------------------

def classify_frames(
    buffer: AudioBuffer,
    params: FrameParams,
    config: VadConfig,
    backend,
) -> list[FrameLabel]:
    """One FrameLabel per complete frame; a trailing partial frame is dropped.

    The backend is cloned via spawn() when it offers one, so stateful
    detectors start fresh per buffer and runs stay deterministic.
    """
    frames = frame_view(buffer, params)
    if len(frames) == 0:
        raise TooShort(
            f"buffer of {len(buffer.samples)} samples is shorter than one "
            f"{params.frame_ms}ms frame"
        )
    detector = backend.spawn() if hasattr(backend, "spawn") else backend
    probs = np.asarray(detector.score_frames(frames), dtype=np.float64)
    out = []
    for i, frame in enumerate(frames):
        db = dbfs(frame)
        out.append(FrameLabel(i, label_for(float(probs[i]), db, config), float(probs[i]), db))
    return out


# -- external label files ----------------------------------------------------
#
# UTF-8, one frame per line: frame_index<TAB>voice_prob<TAB>dbfs
# Indices strictly ascending from 0.

def ingest_external_labels(source, expected_frames: int, config: VadConfig) -> list[FrameLabel]:
    """Parse an external VAD label file and re-derive labels under config."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()

    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        try:
            idx = int(parts[0])
            prob = float(parts[1])
            db = float(parts[2])
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        if idx != len(out):
            raise ParseError(line_no, f"expected frame index {len(out)}, got {idx}")
        if not 0.0 <= prob <= 1.0:
            raise ParseError(line_no, f"voice_prob {prob} outside [0, 1]")
        out.append(FrameLabel(idx, label_for(prob, db, config), prob, db))

    if len(out) != expected_frames:
        raise FrameCountMismatch(
            f"label file has {len(out)} frames, audio has {expected_frames}"
        )
    return out


def write_labels(labels, sink) -> None:
    """Serialize labels in the external label format (probabilities + dBFS)."""
    own = not hasattr(sink, "write")
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for lab in labels:
            fh.write(f"{lab.index}\t{lab.voice_prob:.6f}\t{lab.dbfs:.4f}\n")
    finally:
        if own:
            fh.close()
