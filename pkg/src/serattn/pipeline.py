"""Manifest rows -> feature matrices, with an on-disk content-addressed cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from filelock import FileLock

from .audio_io import IngestConfig, read_wav, standardize_duration
from .augment import TAG_NONE, TAG_NOISE, AugmentConfig, apply_augmentation
from .dsp import DspConfig, MfccExtractor, log_band_energies, pack_features, unpack_features
from .errors import ConfigError, SerError

log = logging.getLogger(__name__)

FEATURE_MODES = ("mfcc", "log-energy")
INPUT_MODES = ("pooled", "sequence")


@dataclass(frozen=True)
class FeatureSpec:
    ingest: IngestConfig = IngestConfig()
    dsp: DspConfig = DspConfig()
    augment: AugmentConfig = AugmentConfig()
    mode: str = "mfcc"

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ConfigError(f"feature mode must be one of {FEATURE_MODES}")

    def to_dict(self) -> dict:
        return {"ingest": asdict(self.ingest), "dsp": asdict(self.dsp),
                "augment": asdict(self.augment), "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(IngestConfig(**d["ingest"]), DspConfig(**d["dsp"]),
                   AugmentConfig(**d["augment"]), d["mode"])


class ExtractionError(SerError):
    def __init__(self, path: str, cause: Exception):
        self.path = path
        self.cause = cause
        super().__init__(f"{path}: {type(cause).__name__}: {cause}")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cache_key(row, spec: FeatureSpec, digest: str) -> str:
    payload = {
        "file": digest,
        "ingest": asdict(spec.ingest),
        "dsp": asdict(spec.dsp),
        "mode": spec.mode,
        "tag": row.augment_tag,
    }
    if row.augment_tag != TAG_NONE:
        aug = asdict(spec.augment)
        aug.pop("sign_policy")
        payload["augment"] = aug
        if row.augment_tag == TAG_NOISE:
            payload["noise_key"] = row.path
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


class FeatureCache:
    """One ``<key>.mfcc`` record per (file content, config, transform)."""

    suffix = ".mfcc"

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.lock = FileLock(str(self.root / ".lock"))

    def path(self, key: str) -> Path:
        return self.root / (key + self.suffix)

    def get(self, key: str) -> Optional[np.ndarray]:
        p = self.path(key)
        if not p.exists():
            return None
        return unpack_features(p.read_bytes())

    def put(self, key: str, matrix: np.ndarray) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(pack_features(matrix))
        os.replace(tmp, self.path(key))

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*" + self.suffix))


def compute_features(row, spec: FeatureSpec, extractor: Optional[MfccExtractor] = None) -> np.ndarray:
    clip = standardize_duration(read_wav(row.path), spec.ingest)
    clip = apply_augmentation(clip, row.augment_tag, spec.augment, key=row.path)
    if spec.mode == "mfcc":
        extractor = extractor or MfccExtractor(spec.dsp)
        return extractor(clip).matrix
    return log_band_energies(clip, spec.dsp).matrix


@dataclass
class ExtractStats:
    extracted: int = 0
    cached: int = 0
    failures: list = field(default_factory=list)


def extract_rows(rows: Sequence, spec: FeatureSpec, cache: Optional[FeatureCache] = None,
                 strict: bool = True) -> tuple[list, ExtractStats]:
    """Feature matrix per row (``None`` for failed rows when ``strict`` is off)."""
    extractor = MfccExtractor(spec.dsp)
    stats = ExtractStats()
    out = []
    digests: dict[str, str] = {}

    def run():
        for row in rows:
            try:
                key = None
                if cache is not None:
                    if row.path not in digests:
                        digests[row.path] = file_digest(row.path)
                    key = cache_key(row, spec, digests[row.path])
                    hit = cache.get(key)
                    if hit is not None:
                        stats.cached += 1
                        out.append(hit)
                        continue
                matrix = compute_features(row, spec, extractor)
                if cache is not None:
                    cache.put(key, matrix)
                stats.extracted += 1
                out.append(matrix)
            except (OSError, SerError, ValueError) as exc:
                err = ExtractionError(row.path, exc)
                if strict:
                    raise err from exc
                log.error("%s", err)
                stats.failures.append(err)
                out.append(None)

    if cache is None:
        run()
    else:
        with cache.lock:
            run()
    return out, stats


def model_inputs(matrices: Sequence[np.ndarray], input_mode: str = "pooled") -> np.ndarray:
    """Stack feature matrices into ``(n, channels, length)`` model inputs.

    ``pooled``: time-averaged coefficient vector, one channel.
    ``sequence``: coefficients as channels, frames as length.
    """
    if input_mode == "pooled":
        return np.stack([m.mean(axis=0)[None, :] for m in matrices])
    if input_mode == "sequence":
        return np.stack([m.T for m in matrices])
    raise ConfigError(f"input mode must be one of {INPUT_MODES}")


@dataclass
class RunMeta:
    """Everything besides the weights needed to reuse a checkpoint (stored as JSON next to it)."""

    labels: list
    input_mode: str
    spec: FeatureSpec

    def to_json(self) -> str:
        return json.dumps({"labels": self.labels, "input_mode": self.input_mode,
                           "features": self.spec.to_dict()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunMeta":
        d = json.loads(text)
        return cls(d["labels"], d["input_mode"], FeatureSpec.from_dict(d["features"]))

    @staticmethod
    def path_for(checkpoint) -> Path:
        return Path(str(checkpoint) + ".json")
