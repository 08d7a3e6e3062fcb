"""Command-line entry point: scan, augment, extract, train, eval, predict, demo-spectra.

Exit codes: 0 success, 1 internal error, 2 bad user input.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import read_wav, standardize_duration, write_wav
from .augment import AugmentConfig, apply_augmentation, expand_dataset, SIGN_POLICIES
from .corpus import DATASETS, Manifest, read_manifest, scan_dataset, write_manifest
from .dsp import DspConfig, MfccExtractor, demo_spectra, log_band_energies
from .errors import SerError
from .learn import TrainConfig, encode_labels, evaluate, split_dataset, train
from .nn.model import AttentionCNN, ModelConfig, load_checkpoint, save_checkpoint
from .pipeline import (
    INPUT_MODES,
    FeatureCache,
    FeatureSpec,
    RunMeta,
    extract_rows,
    model_inputs,
)
from .audio_io import IngestConfig

log = logging.getLogger("serattn")

EXIT_OK, EXIT_INTERNAL, EXIT_USER = 0, 1, 2


class UsageError(SerError):
    pass


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


# -- shared option groups --------------------------------------------------------

def _add_augment_opts(p):
    g = p.add_argument_group("augmentation")
    g.add_argument("--noise-scale", type=float, default=0.035, help="noise std as a fraction of peak amplitude")
    g.add_argument("--semitones", type=int, default=4, help="pitch shift magnitude")
    g.add_argument("--sign-policy", choices=SIGN_POLICIES, default="random")
    g.add_argument("--seed", type=int, default=0)


def _add_feature_opts(p):
    g = p.add_argument_group("features")
    g.add_argument("--cache-dir", default=os.environ.get("SER_CACHE_DIR"),
                   help="feature cache directory (default: $SER_CACHE_DIR)")
    g.add_argument("--no-mfcc", action="store_true", help="use per-frame log band energies instead of MFCCs")
    g.add_argument("--sample-rate", type=int, default=16000)
    g.add_argument("--duration", type=float, default=3.0, help="clip length in seconds after pad/trim")
    g.add_argument("--frame-len", type=int, default=512)
    g.add_argument("--hop", type=int, default=256)
    g.add_argument("--n-mels", type=int, default=40)
    g.add_argument("--n-coeff", type=int, default=20)
    g.add_argument("--preemph", type=float, default=0.97)


def _spec(args) -> FeatureSpec:
    return FeatureSpec(
        ingest=IngestConfig(target_rate=args.sample_rate, target_duration=args.duration),
        dsp=DspConfig(preemph_alpha=args.preemph, frame_len=args.frame_len, hop=args.hop,
                      n_mels=args.n_mels, n_coeff=args.n_coeff, fmax=args.sample_rate / 2),
        augment=AugmentConfig(noise_scale=args.noise_scale, semitones=args.semitones,
                              rng_seed=args.seed, sign_policy=args.sign_policy),
        mode="log-energy" if args.no_mfcc else "mfcc",
    )


def _cache(cache_dir):
    return FeatureCache(cache_dir) if cache_dir else None


def _features(rows, spec, cache_dir):
    matrices, stats = extract_rows(rows, spec, _cache(cache_dir))
    log.info("features: %d extracted, %d from cache", stats.extracted, stats.cached)
    return matrices


# -- subcommands ------------------------------------------------------------------

def cmd_scan(args) -> int:
    manifest = scan_dataset(args.root, args.dataset)
    write_manifest(manifest, args.manifest)
    print(f"{len(manifest)} clips -> {args.manifest}")
    if manifest.skipped:
        print(f"warning: skipped {len(manifest.skipped)} unrecognized file(s):", file=sys.stderr)
        for p in manifest.skipped:
            print(f"  {p}", file=sys.stderr)
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = AugmentConfig(noise_scale=args.noise_scale, semitones=args.semitones,
                        rng_seed=args.seed, sign_policy=args.sign_policy)
    rows = expand_dataset(read_manifest(args.manifest).rows, cfg)
    if args.audio_dir:
        out_dir = Path(args.audio_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ingest = IngestConfig(target_rate=args.sample_rate, target_duration=args.duration)
        rendered = []
        for row in rows:
            if row.augment_tag == "none":
                rendered.append(row)
                continue
            clip = standardize_duration(read_wav(row.path), ingest)
            clip = apply_augmentation(clip, row.augment_tag, cfg, key=row.path)
            tag = {"noise": "noise", "pitch+": "pitchup", "pitch-": "pitchdown"}[row.augment_tag]
            target = out_dir / f"{Path(row.path).stem}.{tag}.wav"
            write_wav(target, clip)
            # rendered audio already carries the transform
            rendered.append(replace(row, path=str(target), augment_tag="none"))
        rows = rendered
    write_manifest(rows, args.out)
    print(f"{len(rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    if not args.cache_dir:
        raise UsageError("no cache directory: pass --cache-dir or set SER_CACHE_DIR")
    rows = read_manifest(args.manifest).rows
    _, stats = extract_rows(rows, _spec(args), FeatureCache(args.cache_dir), strict=False)
    print(f"{stats.extracted} extracted, {stats.cached} cached, {len(stats.failures)} failed")
    for err in stats.failures:
        print(f"  failed: {err}", file=sys.stderr)
    return EXIT_USER if stats.failures else EXIT_OK


def _prepare_splits(rows, args, aug_cfg, tcfg):
    presplit = rows and all(r.split in ("train", "test") for r in rows)
    if presplit:
        train_rows = [r for r in rows if r.split == "train"]
        test_rows = [r for r in rows if r.split == "test"]
        if not args.no_augment:
            train_rows = expand_dataset(train_rows, aug_cfg)
    elif args.augment_before_split and not args.no_augment:
        train_rows, test_rows = split_dataset(expand_dataset(rows, aug_cfg), tcfg)
    else:
        train_rows, test_rows = split_dataset(rows, tcfg)
        if not args.no_augment:
            train_rows = expand_dataset(train_rows, aug_cfg)
    return train_rows, test_rows


def cmd_train(args) -> int:
    spec = _spec(args)
    tcfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                       split_ratio=args.split_ratio, seed=args.seed)
    manifest = read_manifest(args.manifest)
    if not manifest.rows:
        raise UsageError(f"{args.manifest} has no rows")
    labels = manifest.labels()
    originals = [r for r in manifest.rows if r.augment_tag == "none"] or manifest.rows
    train_rows, test_rows = _prepare_splits(originals, args, spec.augment, tcfg)

    ckpt = Path(args.checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(train_rows + test_rows, str(ckpt) + ".split.csv")

    X = model_inputs(_features(train_rows, spec, args.cache_dir), args.input_mode)
    y = encode_labels([r.label for r in train_rows], labels)
    X_val = y_val = None
    if test_rows:
        X_val = model_inputs(_features(test_rows, spec, args.cache_dir), args.input_mode)
        y_val = encode_labels([r.label for r in test_rows], labels)

    mcfg = ModelConfig(n_classes=len(labels), length=X.shape[2], in_channels=X.shape[1],
                       channels=args.channels, n_blocks=args.blocks, reduction=args.reduction,
                       seed=args.seed)
    model = AttentionCNN(mcfg)
    log_path = Path(args.log) if args.log else Path(str(ckpt) + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_epoch(entry):
            fh.write(entry.to_json() + "\n")
            fh.flush()
            if not args.quiet:
                val = "" if entry.val_acc is None else f" val_loss {entry.val_loss:.4f} val_acc {entry.val_acc:.4f}"
                print(f"epoch {entry.epoch:3d} loss {entry.train_loss:.4f} acc {entry.train_acc:.4f}{val}")
        result = train(model, X, y, tcfg, X_val, y_val, on_epoch=on_epoch)

    save_checkpoint(model, ckpt)
    RunMeta.path_for(ckpt).write_text(RunMeta(labels, args.input_mode, spec).to_json() + "\n")
    print(f"train {len(train_rows)} / test {len(test_rows)} clips; best epoch {result.best_epoch}")
    if result.best_val_acc is not None:
        print(f"test accuracy {100 * result.best_val_acc:.2f}%")
    print(f"checkpoint -> {ckpt}")
    return EXIT_OK


def _load_run(checkpoint):
    meta_path = RunMeta.path_for(checkpoint)
    if not meta_path.exists():
        raise UsageError(f"missing checkpoint metadata {meta_path}")
    return load_checkpoint(checkpoint), RunMeta.from_json(meta_path.read_text())


def cmd_eval(args) -> int:
    model, meta = _load_run(args.checkpoint)
    rows = read_manifest(args.manifest).rows
    if any(r.split == "test" for r in rows):
        rows = [r for r in rows if r.split == "test"]
    if not rows:
        raise UsageError("no rows to evaluate")
    y = encode_labels([r.label for r in rows], meta.labels)
    X = model_inputs(_features(rows, meta.spec, args.cache_dir), meta.input_mode)
    report = evaluate(model, X, y, meta.labels)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.checkpoint).name
    report.write(out_dir / f"{stem}.eval.json", out_dir / f"{stem}.confusion.csv")
    print(f"accuracy {100 * report.accuracy:.2f}% on {report.total} clips")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, meta = _load_run(args.checkpoint)
    clip = standardize_duration(read_wav(args.wav), meta.spec.ingest)
    if meta.spec.mode == "mfcc":
        matrix = MfccExtractor(meta.spec.dsp)(clip).matrix
    else:
        matrix = log_band_energies(clip, meta.spec.dsp).matrix
    probs = model.predict_proba(model_inputs([matrix], meta.input_mode))[0]
    best = int(np.argmax(probs))
    print(meta.labels[best])
    for lab, p in zip(meta.labels, probs):
        print(f"  {lab}\t{p:.6f}")
    return EXIT_OK


def cmd_demo_spectra(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    demo = demo_spectra()
    tone_bins = [3, 16, 32, 64]
    for name, spec in demo.items():
        with open(out / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_index", "frequency_hz", "power"])
            for k, (f, p) in enumerate(zip(spec.frequencies, spec.power)):
                w.writerow([k, f"{f:.2f}", repr(float(p))])
        powers = demo.power_at(name, tone_bins)
        ranking = [b for _, b in sorted(zip(powers, tone_bins), reverse=True)]
        print(f"{name:10s} peaks at bins {demo.peaks[name]}; power order (high->low) bins {ranking}")
    print(f"CSV spectra -> {out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="serattn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="build a manifest from a corpus directory")
    p.add_argument("--dataset", required=True, type=str.upper, help="one of " + ", ".join(DATASETS))
    p.add_argument("--root", required=True)
    p.add_argument("--manifest", required=True, help="output CSV")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("augment", help="expand a manifest with noisy and pitch-shifted copies")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audio-dir", help="also render augmented clips as WAV files here")
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--duration", type=float, default=3.0)
    _add_augment_opts(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("extract", help="fill the feature cache for a manifest")
    p.add_argument("--manifest", required=True)
    _add_feature_opts(p)
    _add_augment_opts(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="split, augment, extract and train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", help="JSON-lines epoch log (default: <checkpoint>.log.jsonl)")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--augment-before-split", action="store_true",
                   help="augment the whole corpus before splitting (augmented copies may land in the test set)")
    p.add_argument("--input-mode", choices=INPUT_MODES, default="pooled")
    p.add_argument("--channels", type=int, default=256)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--reduction", type=int, default=8)
    p.add_argument("-q", "--quiet", action="store_true")
    _add_feature_opts(p)
    _add_augment_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy and confusion matrix on a manifest's test rows")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--cache-dir", default=os.environ.get("SER_CACHE_DIR"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wav")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("demo-spectra", help="write raw / pre-emphasized / windowed spectra of the four-tone signal")
    p.add_argument("--out-dir", default="demo_spectra")
    p.set_defaults(func=cmd_demo_spectra)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SerError, OSError) as exc:
        _err(str(exc))
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        _err(f"internal error: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
