"""Command-line front door: synth, mix, extract, train, identify, evaluate,
report.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  All data goes to
stdout or files; diagnostics (including the resolved seed) go to stderr,
with verbosity controlled by CEPSTRA_LOG in {error, warn, info, debug}.
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

from . import experiment as exp
from . import features as feat
from .audio import derive_seed, load_wav, resample, save_wav, synth_corpus
from .gmm import read_gmm, train_em, write_gmm
from .noise import NOISE_KINDS, SnrGrid, load_inventory, mix_at_snr, synth_noise

log = logging.getLogger("cepstra")


class UsageError(Exception):
    """Bad invocation detected after argparse (maps to exit code 2)."""


def _setup_logging():
    level = os.environ.get("CEPSTRA_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(stream=sys.stderr, level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve_seed(args) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int.from_bytes(os.urandom(4), "little")
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _parse_snr_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise UsageError(f"--snr expects comma-separated numbers: {exc}") from None


def cmd_synth(args) -> int:
    seed = _resolve_seed(args)
    config = exp.parse_config_file(args.spec)
    if config.synth_spec is None:
        raise UsageError(f"{args.spec}: no synthetic corpus spec in [corpus]")
    out = Path(args.out)
    rows = []
    for speaker, utt, buf in synth_corpus(config.synth_spec, seed):
        rel = Path(speaker) / f"{utt}.wav"
        save_wav(buf, out / rel)
        rows.append((speaker, utt, str(rel), buf.sample_rate, f"{buf.duration_s:.3f}"))
    with open(out / "manifest.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["speaker", "utterance", "path", "sample_rate", "duration_s"])
        writer.writerows(rows)
    if args.noise_dir:
        for kind in NOISE_KINDS:
            buf = synth_noise(kind, args.noise_seconds, config.sample_rate,
                              derive_seed(seed, "noise-source", kind))
            save_wav(buf, Path(args.noise_dir) / f"{kind}.wav")
    print(f"wrote {len(rows)} utterances to {out}")
    return 0


def cmd_mix(args) -> int:
    seed = _resolve_seed(args)
    levels = _parse_snr_list(args.snr)
    SnrGrid(tuple(sorted(levels)))  # validates distinctness
    sources = {}
    for spec in args.noise:
        name, _, path = spec.rpartition("=")
        if not name:
            name, path = Path(path).stem, path
        sources[name] = path
    speech = exp.load_corpus_dir(args.speech_dir, args.rate)
    inventory = load_inventory(sources, args.rate)
    out = Path(args.out)
    n_written = 0
    for name in inventory.names():
        noise_buf = inventory.entries[name]
        for snr in levels:
            cell_dir = out / name / f"{snr:g}dB"
            for speaker, utt, buf in speech:
                mixed = mix_at_snr(buf, noise_buf, snr,
                                   derive_seed(seed, name, snr, speaker, utt))
                peak = float(np.abs(mixed.samples).max())
                if peak > 1.0:
                    log.info("peak %.3f > 1 at %s/%s/%s_%s; rescaling", peak, name, snr, speaker, utt)
                    mixed = type(mixed)(mixed.samples / peak, mixed.sample_rate)
                save_wav(mixed, cell_dir / f"{speaker}_{utt}.wav")
                n_written += 1
    print(f"wrote {n_written} corrupted files to {out}")
    return 0


def cmd_extract(args) -> int:
    _resolve_seed(args)
    in_dir = Path(args.in_dir)
    wavs = sorted(in_dir.rglob("*.wav"))
    if not wavs:
        raise UsageError(f"no .wav files under {in_dir}")
    cfg = feat.DEFAULT_CONFIG
    out = Path(args.out)
    for wav in wavs:
        buf = load_wav(wav)
        if buf.sample_rate != cfg.sample_rate:
            buf = resample(buf, cfg.sample_rate)
        fm = feat.extract(buf, args.feature, cfg)
        rel = wav.relative_to(in_dir)
        if args.csv:
            feat.write_feature_csv(fm, (out / rel).with_suffix(".csv"))
        else:
            feat.write_feature(fm, (out / rel).with_suffix(".cbfm"))
    print(f"extracted {args.feature} for {len(wavs)} files into {out}")
    return 0


def _speaker_of(path: Path, root: Path) -> str:
    rel = path.relative_to(root)
    if len(rel.parts) > 1:
        return rel.parts[0]
    stem = rel.stem
    return stem.rsplit("_", 1)[0] if "_" in stem else stem


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    root = Path(args.features_dir)
    files = sorted(root.rglob("*.cbfm"))
    if not files:
        raise UsageError(f"no .cbfm files under {root}")
    by_speaker = {}
    for path in files:
        by_speaker.setdefault(_speaker_of(path, root), []).append(feat.read_feature(path))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for speaker in sorted(by_speaker):
        X = np.vstack([fm.values for fm in by_speaker[speaker]])
        model, report = train_em(X, args.k, derive_seed(seed, "gmm", "cli", speaker))
        write_gmm(model, out / f"{speaker}.cbgm")
        log.info("%s: %d frames, %d iterations, converged=%s",
                 speaker, X.shape[0], report.iterations, report.converged)
    print(f"trained {len(by_speaker)} speaker models into {out}")
    return 0


def cmd_identify(args) -> int:
    _resolve_seed(args)
    models_dir = Path(args.models)
    models = {p.stem: read_gmm(p) for p in sorted(models_dir.glob("*.cbgm"))}
    if len(models) < 2:
        raise UsageError(f"need >= 2 .cbgm models under {models_dir}, found {len(models)}")
    fm = feat.read_feature(args.features)
    speaker, margin = exp.identify(models, fm)
    print(f"{speaker}\t{margin:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    config = exp.parse_config_file(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.jobs is not None:
        config = replace(config, jobs=args.jobs)
    print(f"seed: {config.seed}", file=sys.stderr)
    report = exp.run_grid(config)
    out = exp.write_outputs(report, config)
    sys.stdout.write(exp.render_report(report, "markdown"))
    log.info("report written to %s", out)
    return 0


def cmd_report(args) -> int:
    path = Path(args.in_path)
    if path.is_dir():
        path = path / "report.json"
    report = exp.report_from_json(path.read_text())
    sys.stdout.write(exp.render_report(report, args.format))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cepstra",
        description="Speaker-identification workbench: synthetic corpora, SNR "
                    "mixing, auditory features, GMM speaker models, and the "
                    "noise x SNR x feature evaluation grid.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed; drawn and printed when omitted")

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--spec", required=True, help="experiment config with a [corpus] synth spec")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--noise-dir", default=None, help="also synthesize noise WAVs here")
    p.add_argument("--noise-seconds", type=float, default=10.0)
    add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mix", help="corrupt a corpus at fixed SNRs")
    p.add_argument("--speech-dir", required=True, help="corpus directory (<speaker>/<utt>.wav)")
    p.add_argument("--noise", action="append", required=True, metavar="NAME=PATH",
                   help="noise WAV (repeatable); bare PATH uses the file stem as name")
    p.add_argument("--snr", required=True, help="comma-separated SNR levels in dB")
    p.add_argument("--rate", type=int, default=16000, help="working sample rate")
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("extract", help="extract features for a directory of WAVs")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--feature", required=True, choices=feat.FEATURE_KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", action="store_true", help="write CSV instead of .cbfm")
    add_seed(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train per-speaker GMMs from feature files")
    p.add_argument("--features", dest="features_dir", required=True)
    p.add_argument("--k", type=int, default=16, help="mixture count")
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("identify", help="closed-set identification of one feature file")
    p.add_argument("--models", required=True, help="directory of .cbgm files")
    p.add_argument("--features", required=True, help="a .cbfm feature file")
    add_seed(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", help="run the full noise x SNR x feature grid")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: all cores)")
    add_seed(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-render a stored report")
    p.add_argument("--in", dest="in_path", required=True,
                   help="output directory or report.json path")
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    add_seed(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cepstra: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.debug("traceback", exc_info=True)
        print(f"cepstra: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
