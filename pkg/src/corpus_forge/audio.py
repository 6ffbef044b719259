"""WAVE decoding, downmixing, resampling and level measurement.

Everything downstream operates on a canonical representation: mono float64
samples in [-1.0, 1.0] at a fixed rate (16 kHz by default). This module is
the only place that touches RIFF containers or sample formats.
"""

from __future__ import annotations

import io
import math
import struct
import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import upfirdn

from .errors import ConfigError, EmptyAudio, EmptyFrame, FormatError, UnsupportedCodec

# Sentinel for the level of digital silence. Keeps comparisons and
# serialization total; any real signal is far above this.
MIN_DB = -1000.0

DEFAULT_RATE = 16000

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


@dataclass(frozen=True)
class AudioBuffer:
    """Decoded mono audio. Samples are float64 in [-1.0, 1.0]."""

    samples: np.ndarray
    sample_rate: int
    channel_count: int = 1

    @property
    def duration_ms(self) -> int:
        return round(1000 * len(self.samples) / self.sample_rate)

    def slice_ms(self, start_ms: int, end_ms: int) -> "AudioBuffer":
        """Sample-exact cut of [start_ms, end_ms)."""
        lo = start_ms * self.sample_rate // 1000
        hi = end_ms * self.sample_rate // 1000
        return AudioBuffer(self.samples[lo:hi], self.sample_rate)


@dataclass(frozen=True)
class FrameParams:
    """Analysis framing. frame_ms must divide evenly into samples."""

    frame_ms: int = 20

    def __post_init__(self):
        if self.frame_ms <= 0:
            raise ConfigError(f"frame_ms must be positive, got {self.frame_ms}")

    def samples_per_frame(self, sample_rate: int) -> int:
        spf = sample_rate * self.frame_ms / 1000
        if spf != int(spf):
            raise ConfigError(
                f"frame of {self.frame_ms}ms is not a whole number of samples "
                f"at {sample_rate}Hz"
            )
        return int(spf)


def _parse_riff_chunks(data: bytes):
    """Yield (chunk_id, payload) pairs from a RIFF/WAVE blob."""
    if len(data) < 12 or data[0:4] != b"RIFF":
        raise FormatError("not a RIFF file")
    if data[8:12] != b"WAVE":
        raise FormatError("RIFF file is not WAVE")
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise FormatError(f"truncated {cid!r} chunk")
        yield cid, body
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def _decode_pcm(payload: bytes, fmt: int, bits: int, channels: int) -> np.ndarray:
    """Payload bytes -> (n_frames, channels) float64 in [-1, 1]."""
    if fmt == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedCodec(f"{bits}-bit float WAVE is not supported")
        x = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        x = np.clip(x, -1.0, 1.0)
    elif fmt == _WAVE_FORMAT_PCM:
        if bits == 8:
            x = (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 24:
            raw = np.frombuffer(payload, dtype=np.uint8)
            if len(raw) % 3:
                raise FormatError("24-bit payload is not a whole number of samples")
            raw = raw.reshape(-1, 3).astype(np.uint32)
            vals = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
            vals = vals.astype(np.int32)
            vals -= (vals >> 23) << 24  # sign-extend
            x = vals.astype(np.float64) / 8388608.0
        elif bits == 32:
            x = np.frombuffer(payload, dtype="<i4").astype(np.float64) / 2147483648.0
        else:
            raise UnsupportedCodec(f"{bits}-bit integer PCM is not supported")
    else:
        raise UnsupportedCodec(f"WAVE format tag {fmt} is not PCM or IEEE float")
    if len(x) % channels:
        raise FormatError("payload is not a whole number of sample frames")
    return x.reshape(-1, channels)


def load_audio(source, target_rate: int = DEFAULT_RATE) -> AudioBuffer:
    """Decode a RIFF/WAVE byte stream to canonical mono at target_rate.

    Multichannel input is downmixed by arithmetic mean before resampling.
    Accepts a path, bytes, or a binary file object.
    """
    if target_rate <= 0:
        raise ConfigError(f"target_rate must be positive, got {target_rate}")
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()

    fmt = None
    payload = None
    for cid, body in _parse_riff_chunks(data):
        if cid == b"fmt " and fmt is None:
            if len(body) < 16:
                raise FormatError("fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data" and payload is None:
            payload = body
    if fmt is None:
        raise FormatError("missing fmt chunk")
    if payload is None:
        raise FormatError("missing data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise FormatError("fmt chunk declares zero channels")
    if rate <= 0:
        raise FormatError("fmt chunk declares a non-positive sample rate")
    if len(payload) == 0:
        raise EmptyAudio("WAVE file has an empty data chunk")

    frames = _decode_pcm(payload, audio_format, bits, channels)
    mono = frames.mean(axis=1) if channels > 1 else frames[:, 0]
    out = resample(mono, rate, target_rate)
    return AudioBuffer(out, target_rate)


def _design_lowpass(up: int, down: int, taps_per_phase: int, beta: float):
    """Kaiser-windowed sinc for rational resampling, unity DC gain, x`up`."""
    half = (taps_per_phase * up) // 2
    n = np.arange(2 * half + 1, dtype=np.float64) - half
    cutoff = 1.0 / max(up, down)  # relative to the upsampled Nyquist
    h = cutoff * np.sinc(cutoff * n) * np.kaiser(2 * half + 1, beta)
    h /= h.sum()
    return h * up, half


def resample(
    samples: np.ndarray,
    in_rate: int,
    out_rate: int,
    taps_per_phase: int = 64,
    beta: float = 8.6,
) -> np.ndarray:
    """Bandlimited rational-rate conversion (polyphase windowed sinc).

    Cutoff sits at the lower of the two Nyquist frequencies. Output length
    is ceil(len * out_rate / in_rate), center-aligned with the input.
    """
    x = np.asarray(samples, dtype=np.float64)
    if in_rate == out_rate:
        return x.copy()
    g = math.gcd(in_rate, out_rate)
    up, down = out_rate // g, in_rate // g
    out_len = -(-len(x) * up // down)
    if len(x) == 0:
        return x.copy()

    h, half = _design_lowpass(up, down, taps_per_phase, beta)
    # upfirdn samples the convolution at multiples of `down` only; shift the
    # filter so the group delay lands on such a multiple, then drop it.
    d0 = (-half) % down
    h = np.concatenate([np.zeros(d0), h])
    skip = (half + d0) // down
    tail = np.zeros(len(h) // up + 2)
    y = upfirdn(h, np.concatenate([x, tail]), up=up, down=down)
    return np.clip(y[skip : skip + out_len], -1.0, 1.0)


def dbfs(frame: np.ndarray) -> float:
    """RMS level in dB relative to full scale 1.0. All-zero frames -> MIN_DB."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise EmptyFrame("cannot measure an empty frame")
    rms = math.sqrt(float(np.mean(frame * frame)))
    if rms <= 0.0:
        return MIN_DB
    return 20.0 * math.log10(rms)


def frame_view(buffer: AudioBuffer, params: FrameParams) -> np.ndarray:
    """(n_frames, samples_per_frame) view; a trailing partial frame is dropped."""
    spf = params.samples_per_frame(buffer.sample_rate)
    n = len(buffer.samples) // spf
    return buffer.samples[: n * spf].reshape(n, spf)


def write_wav(buffer: AudioBuffer, sink) -> None:
    """Write 16-bit PCM WAVE. Accepts a path or a binary file object."""
    ints = np.clip(np.rint(buffer.samples * 32768.0), -32768, 32767).astype("<i2")
    own = not hasattr(sink, "write")
    fh = open(sink, "wb") if own else sink
    try:
        with wave.open(fh, "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(buffer.sample_rate)
            w.writeframes(ints.tobytes())
    finally:
        if own:
            fh.close()


def wav_bytes(buffer: AudioBuffer) -> bytes:
    out = io.BytesIO()
    write_wav(buffer, out)
    return out.getvalue()
