"""WAV decoding/encoding, resampling and duration standardization."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import resample_poly

from .errors import ConfigError, DecodeError, EmptyInput, UnsupportedFormat

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 mono in [-1, 1]
    sample_rate: int
    source_path: Optional[str] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class IngestConfig:
    target_rate: int = 16000
    target_duration: float = 3.0
    pad_mode: str = "zero"  # zero | reflect
    trim_anchor: str = "center"  # start | center

    def __post_init__(self):
        if self.target_rate <= 0:
            raise ConfigError("target_rate must be > 0")
        if self.target_duration <= 0:
            raise ConfigError("target_duration must be > 0")
        if self.pad_mode not in ("zero", "reflect"):
            raise ConfigError(f"unknown pad_mode {self.pad_mode!r}")
        if self.trim_anchor not in ("start", "center"):
            raise ConfigError(f"unknown trim_anchor {self.trim_anchor!r}")

    @property
    def n_samples(self) -> int:
        return int(round(self.target_duration * self.target_rate))


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise DecodeError(f"chunk {cid!r} truncated: {len(body)} of {size} bytes")
        yield cid, body
        pos += 8 + size + (size & 1)  # chunks are word aligned


def decode_wav(data: bytes, source_path: Optional[str] = None) -> AudioClip:
    """Decode RIFF/WAVE bytes (PCM16 or float32, mono/stereo) to a mono clip."""
    if len(data) < 12:
        raise DecodeError("stream too short for a RIFF header")
    riff, riff_size, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise DecodeError("not a RIFF/WAVE stream")
    if riff_size + 8 > len(data):
        raise DecodeError(f"RIFF size {riff_size + 8} exceeds stream length {len(data)}")

    fmt = None
    payload = None
    for cid, body in _iter_chunks(data[: riff_size + 8]):
        if cid == b"fmt ":
            if len(body) < 16:
                raise DecodeError("fmt chunk too short")
            fmt = body
        elif cid == b"data":
            payload = body
    if fmt is None:
        raise DecodeError("missing fmt chunk")
    if payload is None:
        raise DecodeError("missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise DecodeError("extensible fmt chunk too short")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels (only mono/stereo supported)")
    if rate <= 0:
        raise DecodeError("sample rate is zero")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2").astype(np.float64)
        raw /= 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormat(f"format tag {tag:#06x} with {bits} bits per sample")

    n_frames = raw.shape[0] // channels
    raw = raw[: n_frames * channels].reshape(n_frames, channels)
    mono = raw.mean(axis=1)
    if not np.all(np.isfinite(mono)):
        raise DecodeError("non-finite sample values")
    np.clip(mono, -1.0, 1.0, out=mono)
    return AudioClip(mono, rate, source_path)


def read_wav(path) -> AudioClip:
    path = Path(path)
    return decode_wav(path.read_bytes(), source_path=str(path))


def encode_wav(clip: AudioClip, fmt: str = "pcm16") -> bytes:
    """Serialize a mono clip as RIFF/WAVE (``pcm16`` or ``float32``)."""
    x = np.clip(clip.samples, -1.0, 1.0)
    if fmt == "pcm16":
        payload = np.round(x * 32768.0).clip(-32768, 32767).astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    elif fmt == "float32":
        payload = x.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ConfigError(f"unknown wav format {fmt!r}")
    block = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, tag, 1, clip.sample_rate, clip.sample_rate * block, block, bits,
        b"data", len(payload),
    )
    return header + payload


def write_wav(path, clip: AudioClip, fmt: str = "pcm16") -> None:
    Path(path).write_bytes(encode_wav(clip, fmt))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rational resampling (polyphase windowed-sinc)."""
    if target_rate is None or int(target_rate) <= 0:
        raise ConfigError(f"invalid target rate {target_rate}")
    target_rate = int(target_rate)
    if target_rate == clip.sample_rate:
        return replace(clip, samples=clip.samples.copy())
    ratio = Fraction(target_rate, clip.sample_rate)
    y = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    np.clip(y, -1.0, 1.0, out=y)
    return AudioClip(y, target_rate, clip.source_path)


def standardize_duration(clip: AudioClip, cfg: IngestConfig) -> AudioClip:
    """Resample to ``cfg.target_rate`` and pad/trim to exactly ``cfg.n_samples``."""
    if len(clip) == 0:
        raise EmptyInput(f"empty clip {clip.source_path or ''}".strip())
    if clip.sample_rate != cfg.target_rate:
        clip = resample(clip, cfg.target_rate)
    n = cfg.n_samples
    x = clip.samples
    if len(x) == n:
        out = x.copy()
    elif len(x) < n:
        if cfg.pad_mode == "zero":
            out = np.concatenate([x, np.zeros(n - len(x))])
        else:
            # reflect repeatedly until long enough
            out = x
            while len(out) < n:
                out = np.concatenate([out, out[::-1][: n - len(out)]])
    else:
        start = 0 if cfg.trim_anchor == "start" else (len(x) - n) // 2
        out = x[start : start + n].copy()
    return AudioClip(out, cfg.target_rate, clip.source_path)


def load_clip(path, cfg: Optional[IngestConfig] = None) -> AudioClip:
    clip = read_wav(path)
    return standardize_duration(clip, cfg or IngestConfig())
