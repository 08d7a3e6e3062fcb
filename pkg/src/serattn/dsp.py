"""MFCC front end: pre-emphasis, framing, power spectra, mel banding, log, DCT.

Every stage is exposed on its own so the energy bookkeeping of each step can
be checked in isolation (Plancherel for the FFT, partition of unity for the
mel bank, orthogonality for the DCT).
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .audio_io import AudioClip
from .errors import ConfigError, DecodeError, TooShort

LOG_FLOOR = 1e-10

Signal = Union[AudioClip, np.ndarray]


@dataclass(frozen=True)
class DspConfig:
    preemph_alpha: float = 0.97
    frame_len: int = 512
    hop: int = 256
    hamming_a: float = 0.54
    n_mels: int = 40
    n_coeff: int = 20
    fmin: float = 0.0
    fmax: Optional[float] = 8000.0

    def __post_init__(self):
        if not 0.9 <= self.preemph_alpha <= 1.0:
            raise ConfigError(f"preemph_alpha {self.preemph_alpha} outside [0.9, 1.0]")
        if not 0 < self.hop <= self.frame_len:
            raise ConfigError(f"need 0 < hop <= frame_len, got hop={self.hop} frame_len={self.frame_len}")
        if not 1 <= self.n_coeff <= self.n_mels:
            raise ConfigError(f"need 1 <= n_coeff <= n_mels, got {self.n_coeff}/{self.n_mels}")
        if self.fmax is not None and self.fmin >= self.fmax:
            raise ConfigError("fmin must be below fmax")
        if self.fmin < 0:
            raise ConfigError("fmin must be >= 0")

    def upper_edge(self, sample_rate: int) -> float:
        fmax = sample_rate / 2 if self.fmax is None else self.fmax
        if fmax > sample_rate / 2:
            raise ConfigError(f"fmax {fmax} Hz above Nyquist for {sample_rate} Hz")
        return float(fmax)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Spectrum:
    power: np.ndarray  # (..., N/2 + 1)
    bin_hz: float
    frame_len: int

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.power.shape[-1]) * self.bin_hz

    def full_energy(self) -> np.ndarray:
        """Sum of |X[k]|^2 over the full two-sided range k = 0..N-1."""
        p = self.power
        n = self.frame_len
        inner = p[..., 1 : (n + 1) // 2]
        total = p[..., 0] + 2.0 * inner.sum(axis=-1)
        if n % 2 == 0:
            total = total + p[..., n // 2]
        return total


@dataclass(frozen=True)
class MelFilterBank:
    weights: np.ndarray  # (K, N/2 + 1)
    centers: np.ndarray  # f_1..f_K in Hz
    edges: np.ndarray  # f_0..f_{K+1} in Hz
    bin_hz: float

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DctMatrix:
    basis: np.ndarray  # (n_coeff, K)


@dataclass
class MfccFeatures:
    matrix: np.ndarray  # (frames, n_coeff)
    clip_id: Optional[str] = None
    pooled: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.pooled is None:
            self.pooled = self.matrix.mean(axis=0)


def _samples(x: Signal) -> np.ndarray:
    return x.samples if isinstance(x, AudioClip) else np.asarray(x, dtype=np.float64)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def pre_emphasize(x: Signal, alpha: float = 0.97) -> Signal:
    if not 0.9 <= alpha <= 1.0:
        raise ConfigError(f"alpha {alpha} outside [0.9, 1.0]")
    s = _samples(x)
    out = s.copy()
    out[1:] -= alpha * s[:-1]
    if isinstance(x, AudioClip):
        return AudioClip(out, x.sample_rate, x.source_path)
    return out


def hamming(n: int, a: float = 0.54) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return a - (1.0 - a) * np.cos(2.0 * np.pi * k / (n - 1))


def frame_signal(x: Signal, frame_len: int, hop: int) -> np.ndarray:
    s = _samples(x)
    if len(s) < frame_len:
        raise TooShort(f"signal of {len(s)} samples shorter than one frame ({frame_len})")
    n_frames = 1 + (len(s) - frame_len) // hop
    view = np.lib.stride_tricks.sliding_window_view(s, frame_len)[::hop]
    return np.array(view[:n_frames])


def frame_and_window(x: Signal, cfg: DspConfig) -> np.ndarray:
    """Split into overlapping frames of ``cfg.frame_len`` and apply a Hamming window."""
    frames = frame_signal(x, cfg.frame_len, cfg.hop)
    return frames * hamming(cfg.frame_len, cfg.hamming_a)


def power_spectrum(frames: np.ndarray, sample_rate: float = 1.0) -> Spectrum:
    frames = np.asarray(frames, dtype=np.float64)
    n = frames.shape[-1]
    X = np.fft.rfft(frames, axis=-1)
    power = X.real**2 + X.imag**2
    return Spectrum(power=power, bin_hz=sample_rate / n, frame_len=n)


def build_mel_bank(cfg: DspConfig, sample_rate: int) -> MelFilterBank:
    fmax = cfg.upper_edge(sample_rate)
    K = cfg.n_mels
    n_bins = cfg.frame_len // 2 + 1
    bin_hz = sample_rate / cfg.frame_len

    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(fmax), K + 2))
    edge_bins = np.round(edges / bin_hz).astype(int)
    if np.any(np.diff(edge_bins) == 0):
        raise ConfigError(
            f"{K} mel filters too many for {bin_hz:.2f} Hz bins: adjacent centers share a bin"
        )

    f = np.arange(n_bins) * bin_hz
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (f - lo) / (mid - lo)
    falling = (hi - f) / (hi - mid)
    weights = np.where(f <= mid, rising, falling)
    weights = np.clip(weights, 0.0, None)
    weights[(f < lo) | (f > hi)] = 0.0
    return MelFilterBank(weights=weights, centers=edges[1:-1].copy(), edges=edges, bin_hz=bin_hz)


def apply_mel_bank(spec: Union[Spectrum, np.ndarray], bank: MelFilterBank) -> np.ndarray:
    power = spec.power if isinstance(spec, Spectrum) else np.asarray(spec, dtype=np.float64)
    if power.shape[-1] != bank.weights.shape[1]:
        raise ConfigError(
            f"spectrum has {power.shape[-1]} bins, filter bank expects {bank.weights.shape[1]}"
        )
    return power @ bank.weights.T


def log_compress(M: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    return np.log(np.asarray(M, dtype=np.float64) + floor)


def dct_matrix(n_coeff: int, n_mels: int) -> DctMatrix:
    n = np.arange(1, n_coeff + 1)[:, None]
    k = np.arange(1, n_mels + 1)[None, :]
    return DctMatrix(np.cos(n * (k - 0.5) * np.pi / n_mels))


def dct_project(L: np.ndarray, dct: DctMatrix) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.shape[-1] != dct.basis.shape[1]:
        raise ConfigError(f"log-mel vector has {L.shape[-1]} bands, DCT expects {dct.basis.shape[1]}")
    return L @ dct.basis.T


class MfccExtractor:
    """Reusable extractor; the filter bank and DCT basis are built once per sample rate."""

    def __init__(self, cfg: DspConfig = DspConfig()):
        self.cfg = cfg
        self.dct = dct_matrix(cfg.n_coeff, cfg.n_mels)
        self._banks: dict[int, MelFilterBank] = {}

    def bank(self, sample_rate: int) -> MelFilterBank:
        if sample_rate not in self._banks:
            self._banks[sample_rate] = build_mel_bank(self.cfg, sample_rate)
        return self._banks[sample_rate]

    def __call__(self, clip: AudioClip, clip_id: Optional[str] = None) -> MfccFeatures:
        cfg = self.cfg
        emphasized = pre_emphasize(clip.samples, cfg.preemph_alpha)
        frames = frame_and_window(emphasized, cfg)
        spec = power_spectrum(frames, clip.sample_rate)
        M = apply_mel_bank(spec, self.bank(clip.sample_rate))
        coeffs = dct_project(log_compress(M), self.dct)
        return MfccFeatures(coeffs, clip_id=clip_id if clip_id is not None else clip.source_path)


def extract_mfcc(clip: AudioClip, cfg: DspConfig = DspConfig()) -> MfccFeatures:
    return MfccExtractor(cfg)(clip)


def log_band_energies(clip: AudioClip, cfg: DspConfig = DspConfig()) -> MfccFeatures:
    """Baseline features without the MFCC chain.

    Rectangular frames, no pre-emphasis; each frame's power spectrum is summed
    into ``cfg.n_coeff`` equal-width linear bands and log-compressed, giving the
    same shape as :func:`extract_mfcc`.
    """
    frames = frame_signal(clip, cfg.frame_len, cfg.hop)
    power = power_spectrum(frames, clip.sample_rate).power
    bands = np.array_split(np.arange(power.shape[-1]), cfg.n_coeff)
    energies = np.stack([power[:, b].sum(axis=1) for b in bands], axis=1)
    return MfccFeatures(log_compress(energies), clip_id=clip.source_path)


# -- demo: spectral peaks survive pre-emphasis and windowing -------------------

DEMO_TONES_HZ = (100.0, 500.0, 1000.0, 2000.0)


@dataclass
class DemoSpectra:
    raw: Spectrum
    emphasized: Spectrum
    windowed: Spectrum
    peaks: dict  # name -> list of 4 peak bins, ascending

    def items(self):
        return (("raw", self.raw), ("emphasized", self.emphasized), ("windowed", self.windowed))

    def power_at(self, name: str, bins) -> list[float]:
        spec = dict(self.items())[name]
        return [float(spec.power[b]) for b in bins]


def demo_signal(sample_rate: int = 16000, n_samples: int = 16000) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate
    s = sum(np.sin(2 * np.pi * f * t) for f in DEMO_TONES_HZ)
    return s / np.max(s)


def dominant_peaks(power: np.ndarray, count: int = 4) -> list[int]:
    p = np.asarray(power)
    interior = np.flatnonzero((p[1:-1] > p[:-2]) & (p[1:-1] >= p[2:])) + 1
    top = interior[np.argsort(p[interior])[::-1][:count]]
    return sorted(int(b) for b in top)


def demo_spectra(sample_rate: int = 16000, frame_len: int = 512, hop: int = 256,
                 alpha: float = 0.97) -> DemoSpectra:
    """Frame-averaged power spectra of the four-tone test signal.

    Returns the raw, pre-emphasized, and pre-emphasized + Hamming-windowed
    spectra at ``sample_rate / frame_len`` Hz per bin, plus the four dominant
    local maxima of each.
    """
    x = demo_signal(sample_rate)
    emph = pre_emphasize(x, alpha)
    window = hamming(frame_len)

    def avg(sig, w=None):
        frames = frame_signal(sig, frame_len, hop)
        if w is not None:
            frames = frames * w
        spec = power_spectrum(frames, sample_rate)
        return Spectrum(spec.power.mean(axis=0), spec.bin_hz, frame_len)

    raw, emphasized, windowed = avg(x), avg(emph), avg(emph, window)
    peaks = {
        "raw": dominant_peaks(raw.power),
        "emphasized": dominant_peaks(emphasized.power),
        "windowed": dominant_peaks(windowed.power),
    }
    return DemoSpectra(raw, emphasized, windowed, peaks)


# -- feature cache record ------------------------------------------------------

_MAGIC = b"MFCC"
_VERSION = 1
_HEADER = struct.Struct("<4sHII")


def pack_features(matrix: np.ndarray) -> bytes:
    """Binary record: magic, u16 version, u32 rows, u32 cols, f64 LE row-major."""
    m = np.ascontiguousarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise ConfigError("feature record must be 2-D")
    return _HEADER.pack(_MAGIC, _VERSION, m.shape[0], m.shape[1]) + m.tobytes()


def unpack_features(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise DecodeError("feature record shorter than header")
    magic, version, rows, cols = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise DecodeError(f"bad feature record magic {magic!r}")
    if version != _VERSION:
        raise DecodeError(f"unsupported feature record version {version}")
    body = data[_HEADER.size :]
    if len(body) != rows * cols * 8:
        raise DecodeError(f"feature record body is {len(body)} bytes, expected {rows * cols * 8}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
