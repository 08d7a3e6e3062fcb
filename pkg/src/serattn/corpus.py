"""Manifests for the six emotional speech corpora.

Each corpus encodes the emotion label in its file or folder names; the code
tables below map those tokens to label strings. Corpora are user-supplied.
"""

from __future__ import annotations

import csv
import logging
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import ConfigError, EmptyCorpus, ParseError

log = logging.getLogger(__name__)

DATASETS = ("SAVEE", "RAVDESS", "CREMA-D", "TESS", "EMO-DB", "EMOVO")
SPLITS = ("train", "test", "unassigned")
MANIFEST_FIELDS = ("path", "label", "dataset", "speaker", "split", "augment_tag")

RAVDESS_CODES = {
    "01": "neutral", "02": "calm", "03": "happy", "04": "sad",
    "05": "angry", "06": "fearful", "07": "disgust", "08": "surprised",
}
SAVEE_CODES = {
    "a": "anger", "d": "disgust", "f": "fear", "h": "happiness",
    "n": "neutral", "sa": "sadness", "su": "surprise",
}
CREMA_CODES = {
    "ANG": "anger", "DIS": "disgust", "FEA": "fear",
    "HAP": "happy", "NEU": "neutral", "SAD": "sad",
}
# EMO-DB: German initial of the emotion at position 6 of the stem
EMODB_CODES = {
    "W": "anger", "L": "boredom", "E": "disgust", "A": "fear",
    "F": "happiness", "T": "sadness", "N": "neutral",
}
EMOVO_CODES = {
    "rab": "anger", "dis": "disgust", "pau": "fear", "gio": "joy",
    "neu": "neutral", "tri": "sadness", "sor": "surprise",
}
TESS_LABELS = ("angry", "disgust", "fear", "happy", "neutral", "pleasant_surprise", "sad")
_TESS_ALIASES = {
    "angry": "angry", "anger": "angry", "disgust": "disgust", "fear": "fear",
    "happy": "happy", "happiness": "happy", "neutral": "neutral", "sad": "sad",
    "sadness": "sad", "ps": "pleasant_surprise", "pleasant_surprise": "pleasant_surprise",
    "pleasant_surprised": "pleasant_surprise", "surprise": "pleasant_surprise",
    "surprised": "pleasant_surprise",
}

LABELS = {
    "RAVDESS": tuple(RAVDESS_CODES.values()),
    "SAVEE": tuple(sorted(SAVEE_CODES.values())),
    "CREMA-D": tuple(sorted(CREMA_CODES.values())),
    "TESS": TESS_LABELS,
    "EMO-DB": tuple(sorted(EMODB_CODES.values())),
    "EMOVO": tuple(sorted(EMOVO_CODES.values())),
}
EXPECTED_COUNTS = {"RAVDESS": 1440, "TESS": 2800, "CREMA-D": 7442, "EMO-DB": 535}

_ALIASES = {"CREMAD": "CREMA-D", "CREMA": "CREMA-D", "EMODB": "EMO-DB"}


def canonical_dataset(name: str) -> str:
    key = name.strip().upper().replace("_", "-")
    key = _ALIASES.get(key.replace("-", ""), key)
    if key not in DATASETS:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {', '.join(DATASETS)}")
    return key


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: str
    dataset: str
    speaker: str = ""
    split: str = "unassigned"
    augment_tag: str = "none"


@dataclass(frozen=True)
class LabelScheme:
    dataset: str
    labels: tuple

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("labels must be unique")
        if len(self.labels) < 2:
            raise ConfigError("a label scheme needs at least two classes")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


def label_scheme(dataset: str) -> LabelScheme:
    ds = canonical_dataset(dataset)
    return LabelScheme(ds, LABELS[ds])


@dataclass
class Manifest:
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # paths that could not be labeled

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def labels(self) -> list[str]:
        """Distinct labels in first-seen order of the dataset's scheme where known."""
        present = {r.label for r in self.rows}
        ordered = []
        for ds in dict.fromkeys(r.dataset for r in self.rows):
            for lab in LABELS.get(ds, ()):
                if lab in present and lab not in ordered:
                    ordered.append(lab)
        ordered += sorted(present - set(ordered))
        return ordered


# -- filename parsers: return (label, speaker) or None when the name does not
#    follow the corpus convention; raise ParseError when it does but is invalid.

_RAVDESS_RE = re.compile(r"^(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})$")
_SAVEE_RE = re.compile(r"^(?:([A-Za-z]{2})_)?(sa|su|a|d|f|h|n)(\d{2})$", re.IGNORECASE)
_CREMA_RE = re.compile(r"^(\d{4})_([A-Z]{3})_([A-Z]{3})_([A-Z]{1,2})$")
_EMODB_RE = re.compile(r"^(\d{2})([a-b]\d{2})([A-Z])([a-z])$")
_EMOVO_RE = re.compile(r"^([a-z]{3})-([fm]\d)-([a-z]\d)$", re.IGNORECASE)


def _parse_ravdess(path: Path):
    m = _RAVDESS_RE.match(path.stem)
    if not m:
        return None
    code = m.group(3)
    if code not in RAVDESS_CODES:
        raise ParseError(path, f"unknown RAVDESS emotion code {code!r}")
    return RAVDESS_CODES[code], m.group(7)


def _parse_savee(path: Path):
    m = _SAVEE_RE.match(path.stem)
    if not m:
        return None
    speaker = m.group(1) or path.parent.name
    return SAVEE_CODES[m.group(2).lower()], speaker.upper()


def _parse_crema(path: Path):
    m = _CREMA_RE.match(path.stem)
    if not m:
        return None
    code = m.group(3)
    if code not in CREMA_CODES:
        raise ParseError(path, f"unknown CREMA-D emotion code {code!r}")
    return CREMA_CODES[code], m.group(1)


def _parse_emodb(path: Path):
    m = _EMODB_RE.match(path.stem)
    if not m:
        return None
    code = m.group(3)
    if code not in EMODB_CODES:
        raise ParseError(path, f"unknown EMO-DB emotion letter {code!r}")
    return EMODB_CODES[code], m.group(1)


def _parse_emovo(path: Path):
    m = _EMOVO_RE.match(path.stem)
    if not m:
        return None
    code = m.group(1).lower()
    if code not in EMOVO_CODES:
        raise ParseError(path, f"unknown EMOVO emotion code {code!r}")
    return EMOVO_CODES[code], m.group(2).lower()


def _tess_token(token: str) -> Optional[str]:
    return _TESS_ALIASES.get(token.lower())


def _parse_tess(path: Path):
    # files: OAF_back_angry.wav; folders: OAF_angry, YAF_pleasant_surprised
    parts = path.stem.split("_")
    if len(parts) < 3 or parts[0].upper() not in ("OAF", "YAF"):
        return None
    from_file = _tess_token(parts[-1])
    folder = path.parent.name.split("_", 1)
    from_folder = None
    if len(folder) == 2 and folder[0].upper() in ("OAF", "YAF"):
        from_folder = _tess_token(folder[1])
    if from_file is None and from_folder is None:
        raise ParseError(path, f"unrecognized TESS emotion {parts[-1]!r}")
    if from_file and from_folder and from_file != from_folder:
        raise ParseError(path, f"folder says {from_folder!r} but file name says {from_file!r}")
    return from_folder or from_file, parts[0].upper()


_PARSERS = {
    "RAVDESS": _parse_ravdess,
    "SAVEE": _parse_savee,
    "CREMA-D": _parse_crema,
    "TESS": _parse_tess,
    "EMO-DB": _parse_emodb,
    "EMOVO": _parse_emovo,
}


def parse_path(path, dataset: str):
    """``(label, speaker)`` for a corpus file, or ``None`` if the name is foreign."""
    return _PARSERS[canonical_dataset(dataset)](Path(path))


def scan_dataset(root, dataset: str) -> Manifest:
    """Walk ``root`` and label every audio file by the corpus naming convention."""
    ds = canonical_dataset(dataset)
    root = Path(root)
    if not root.is_dir():
        raise EmptyCorpus(f"dataset root {root} does not exist or is not a directory")
    parse = _PARSERS[ds]
    rows, skipped = [], []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        for name in sorted(filenames):
            if name.startswith("."):
                continue
            p = Path(dirpath) / name
            parsed = parse(p) if p.suffix.lower() == ".wav" else None
            if parsed is None:
                skipped.append(str(p))
                continue
            label, speaker = parsed
            rows.append(ManifestRow(str(p), label, ds, speaker))
    rows.sort(key=lambda r: r.path)
    skipped.sort()
    if not rows:
        raise EmptyCorpus(f"no parseable {ds} files under {root}")
    if skipped:
        log.warning("skipped %d file(s) not matching the %s naming convention", len(skipped), ds)
    expected = EXPECTED_COUNTS.get(ds)
    if expected is not None and len(rows) != expected:
        log.warning("%s: found %d clips, full corpus has %d", ds, len(rows), expected)
    return Manifest(rows, skipped)


def write_manifest(manifest: Iterable[ManifestRow], path) -> None:
    rows = manifest.rows if isinstance(manifest, Manifest) else list(manifest)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for r in rows:
            writer.writerow([getattr(r, f) for f in MANIFEST_FIELDS])


def read_manifest(path) -> Manifest:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty manifest file (missing header)") from None
        if tuple(header) != MANIFEST_FIELDS:
            raise ConfigError(f"{path}: unexpected manifest header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(MANIFEST_FIELDS):
                raise ConfigError(f"{path}:{lineno}: expected {len(MANIFEST_FIELDS)} fields, got {len(rec)}")
            row = ManifestRow(*rec)
            if row.augment_tag == "pitch−":
                row = ManifestRow(*rec[:-1], "pitch-")
            rows.append(row)
    return Manifest(rows)


def with_split(rows: Iterable[ManifestRow], split: str) -> list[ManifestRow]:
    return [replace(r, split=split) for r in rows]
