"""Gaussian noise injection and phase-vocoder pitch shifting."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np
from scipy.signal import resample as fft_resample

from .audio_io import AudioClip
from .errors import ConfigError, EmptyInput

SIGN_POLICIES = ("random", "up", "down", "both")
TAG_NONE, TAG_NOISE, TAG_PITCH_UP, TAG_PITCH_DOWN = "none", "noise", "pitch+", "pitch-"
AUGMENT_TAGS = (TAG_NONE, TAG_NOISE, TAG_PITCH_UP, TAG_PITCH_DOWN)

# phase vocoder analysis settings
PV_FRAME = 1024
PV_HOP = 256


@dataclass(frozen=True)
class AugmentConfig:
    noise_scale: float = 0.035
    semitones: int = 4
    rng_seed: int = 0
    sign_policy: str = "random"

    def __post_init__(self):
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if self.semitones < 0:
            raise ConfigError("semitones is a magnitude and must be >= 0")
        if self.semitones > 12:
            raise ConfigError("semitones must be <= 12")
        if self.sign_policy not in SIGN_POLICIES:
            raise ConfigError(f"sign_policy must be one of {SIGN_POLICIES}")


def clip_rng(seed: int, key: str, stream: str = "") -> np.random.Generator:
    """Independent generator per (seed, clip key, purpose); independent of processing order."""
    digest = hashlib.sha256(f"{key}\0{stream}".encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *words]))


def add_noise(clip: AudioClip, cfg: AugmentConfig, rng: np.random.Generator) -> AudioClip:
    if len(clip) == 0:
        raise EmptyInput("cannot add noise to an empty clip")
    x = clip.samples
    a_max = float(np.max(np.abs(x)))
    noise = rng.standard_normal(len(x))
    out = np.clip(x + cfg.noise_scale * a_max * noise, -1.0, 1.0)
    return replace(clip, samples=out)


def _stft(x: np.ndarray, n_fft: int, hop: int, window: np.ndarray) -> np.ndarray:
    pad = n_fft // 2
    xp = np.pad(x, pad)
    if len(xp) < n_fft:
        xp = np.pad(xp, (0, n_fft - len(xp)))
    frames = np.lib.stride_tricks.sliding_window_view(xp, n_fft)[::hop]
    return np.fft.rfft(frames * window, axis=-1)


def _istft(X: np.ndarray, n_fft: int, hop: int, window: np.ndarray, length: int) -> np.ndarray:
    frames = np.fft.irfft(X, n=n_fft, axis=-1) * window
    n_frames = frames.shape[0]
    total = n_fft + hop * (n_frames - 1)
    y = np.zeros(total)
    norm = np.zeros(total)
    w2 = window**2
    for i in range(n_frames):
        s = i * hop
        y[s : s + n_fft] += frames[i]
        norm[s : s + n_fft] += w2
    nz = norm > 1e-10
    y[nz] /= norm[nz]
    pad = n_fft // 2
    y = y[pad : pad + length]
    if len(y) < length:
        y = np.pad(y, (0, length - len(y)))
    return y


def time_stretch(x: np.ndarray, rate: float, n_fft: int = PV_FRAME, hop: int = PV_HOP) -> np.ndarray:
    """Phase-vocoder time stretch; output length is ``round(len(x) / rate)``."""
    if rate <= 0:
        raise ConfigError("stretch rate must be positive")
    window = np.hanning(n_fft + 1)[:-1]  # periodic Hann
    X = _stft(x, n_fft, hop, window)
    n_frames, n_bins = X.shape
    steps = np.arange(0, n_frames, rate)
    Xp = np.vstack([X, np.zeros((1, n_bins), dtype=X.dtype)])

    cols = np.floor(steps).astype(int)
    frac = (steps - cols)[:, None]
    left, right = Xp[cols], Xp[cols + 1]
    mag = (1.0 - frac) * np.abs(left) + frac * np.abs(right)

    advance = 2.0 * np.pi * hop * np.arange(n_bins) / n_fft
    dphase = np.angle(right) - np.angle(left) - advance
    dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
    increments = advance + dphase
    ref_phase = np.angle(left)

    # identity phase locking: bins follow the phase of their nearest magnitude peak
    Y = np.empty_like(mag, dtype=np.complex128)
    phase = np.angle(X[0])
    for i in range(len(steps)):
        Y[i] = mag[i] * np.exp(1j * phase)
        if i + 1 == len(steps):
            break
        propagated = phase + increments[i]
        owner = _peak_owner(mag[i + 1])
        phase = propagated[owner] + ref_phase[i + 1] - ref_phase[i + 1][owner]
    return _istft(Y, n_fft, hop, window, int(round(len(x) / rate)))


def _peak_owner(m: np.ndarray) -> np.ndarray:
    """Index of the nearest local magnitude maximum for every bin."""
    peaks = np.flatnonzero((m[1:-1] > m[:-2]) & (m[1:-1] >= m[2:])) + 1
    if peaks.size == 0:
        return np.arange(len(m))
    bounds = (peaks[:-1] + peaks[1:]) / 2.0
    return peaks[np.searchsorted(bounds, np.arange(len(m)))]


def pitch_shift(clip: AudioClip, semitones: int) -> AudioClip:
    """Shift pitch by ``semitones`` keeping length and sample rate.

    Time-stretch by ``2**(-s/12)`` and resample the result back to the
    original length, which scales every frequency by ``2**(s/12)``.
    """
    if abs(semitones) > 12:
        raise ConfigError(f"pitch shift of {semitones} semitones outside [-12, 12]")
    if len(clip) == 0:
        raise EmptyInput("cannot pitch-shift an empty clip")
    rate = 2.0 ** (-semitones / 12.0)
    stretched = time_stretch(clip.samples, rate)
    y = fft_resample(stretched, len(clip)) if len(stretched) != len(clip) else stretched
    return replace(clip, samples=np.clip(y, -1.0, 1.0))


def augment_tags(cfg: AugmentConfig, key: str) -> list[str]:
    """Transforms generated for one original clip (the original itself excluded)."""
    if cfg.sign_policy == "both":
        return [TAG_NOISE, TAG_PITCH_UP, TAG_PITCH_DOWN]
    if cfg.sign_policy == "up":
        return [TAG_NOISE, TAG_PITCH_UP]
    if cfg.sign_policy == "down":
        return [TAG_NOISE, TAG_PITCH_DOWN]
    up = clip_rng(cfg.rng_seed, key, "pitch-sign").random() < 0.5
    return [TAG_NOISE, TAG_PITCH_UP if up else TAG_PITCH_DOWN]


def expand_dataset(rows: Iterable, cfg: AugmentConfig) -> list:
    """Original rows followed (per row) by their augmented copies.

    Rows are never modified; copies differ only in ``augment_tag``.
    """
    out = []
    for row in rows:
        out.append(row)
        if row.augment_tag != TAG_NONE:
            continue
        for tag in augment_tags(cfg, row.path):
            out.append(replace(row, augment_tag=tag))
    return out


def apply_augmentation(clip: AudioClip, tag: str, cfg: AugmentConfig, key: Optional[str] = None) -> AudioClip:
    """Render the transform named by ``tag`` on an already-standardized clip."""
    key = key if key is not None else (clip.source_path or "")
    if tag == TAG_NONE:
        return clip
    if tag == TAG_NOISE:
        return add_noise(clip, cfg, clip_rng(cfg.rng_seed, key, "noise"))
    if tag == TAG_PITCH_UP:
        return pitch_shift(clip, cfg.semitones)
    if tag == TAG_PITCH_DOWN:
        return pitch_shift(clip, -cfg.semitones)
    raise ConfigError(f"unknown augment tag {tag!r}")
