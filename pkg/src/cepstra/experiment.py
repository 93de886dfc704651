"""Enrollment, closed-set identification, the noise x SNR x feature
evaluation grid, and report rendering.

The grid trains per-speaker GMMs on clean speech only and corrupts the test
half at each (noise, snr) cell.  Everything downstream of the config and
seed is deterministic, so a rerun reproduces report.csv byte for byte.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import features as feat
from .audio import CorpusSpec, derive_seed, load_wav, resample, synth_corpus
from .gmm import score_utterance, train_em
from .noise import CLEAN_KEY, NoiseInventory, SnrGrid, load_inventory, mix_at_snr, synth_noise

DEFAULT_SYNTH_NOISE_SECONDS = 10.0

TRIAL_MODES = ("concat", "per-utterance")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment description (see parse_config for the file format)."""

    features: tuple
    train_utts: tuple
    test_utts: tuple
    mixtures: int
    seed: int
    output_dir: Path
    corpus_dir: Path | None = None
    synth_spec: CorpusSpec | None = None
    noise_sources: dict = field(default_factory=dict)
    snr_grid: SnrGrid = field(default_factory=SnrGrid)
    sample_rate: int = 16000
    trials: str = "concat"
    jobs: int = 0

    def __post_init__(self):
        if not self.features:
            raise ValueError("feature list must be nonempty")
        unknown = [k for k in self.features if k not in feat.FEATURE_KINDS]
        if unknown:
            raise ValueError(f"unknown feature kinds {unknown}; valid: {feat.FEATURE_KINDS}")
        if (self.corpus_dir is None) == (self.synth_spec is None):
            raise ValueError("config needs exactly one corpus source: a directory or a synth spec")
        if set(self.train_utts) & set(self.test_utts):
            raise ValueError("train/test utterance indices overlap")
        if not self.train_utts or not self.test_utts:
            raise ValueError("both train and test splits must be nonempty")
        if self.trials not in TRIAL_MODES:
            raise ValueError(f"trials must be one of {TRIAL_MODES}, got {self.trials!r}")
        if self.mixtures < 1:
            raise ValueError("mixtures must be >= 1")


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse the flat key-value config with section headers.

    Relative paths are resolved against base_dir (the config file location).
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read_string(text)
    base = Path(base_dir) if base_dir is not None else Path(".")

    def ints(s):
        return tuple(int(v) for v in s.replace(",", " ").split())

    corpus = parser["corpus"] if parser.has_section("corpus") else {}
    corpus_dir = None
    synth_spec = None
    sample_rate = int(corpus.get("sample_rate", 16000))
    if "dir" in corpus:
        corpus_dir = base / corpus["dir"]
    if "synth_speakers" in corpus:
        synth_spec = CorpusSpec(
            n_speakers=int(corpus["synth_speakers"]),
            n_utterances=int(corpus["synth_utterances"]),
            duration_s=float(corpus.get("synth_duration_s", 2.0)),
            sample_rate=sample_rate,
        )

    split = parser["split"] if parser.has_section("split") else {}
    train_utts = ints(split.get("train", "0"))
    test_utts = ints(split.get("test", "1"))

    feats = tuple(
        k.strip() for k in parser.get("features", "list", fallback="").split(",") if k.strip())

    noise_sources = {}
    if parser.has_section("noise"):
        for name, value in parser.items("noise"):
            value = value.strip()
            noise_sources[name] = value if value.startswith("synth:") else str(base / value)

    levels = parser.get("snr", "levels_db", fallback="-6, 0, 6, 12, 18")
    snr_grid = SnrGrid(tuple(float(v) for v in levels.replace(",", " ").split()))

    return ExperimentConfig(
        features=feats,
        train_utts=train_utts,
        test_utts=test_utts,
        mixtures=int(parser.get("model", "mixtures", fallback="16")),
        seed=int(parser.get("run", "seed", fallback="0")),
        output_dir=base / parser.get("run", "output_dir", fallback="out"),
        corpus_dir=corpus_dir,
        synth_spec=synth_spec,
        noise_sources=noise_sources,
        snr_grid=snr_grid,
        sample_rate=sample_rate,
        trials=parser.get("run", "trials", fallback="concat"),
        jobs=int(parser.get("run", "jobs", fallback="0")),
    )


def parse_config_file(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def render_config(config: ExperimentConfig) -> str:
    """Canonical text form of a resolved config (written as config.lock)."""
    lines = ["[corpus]"]
    if config.corpus_dir is not None:
        lines.append(f"dir = {config.corpus_dir}")
    else:
        s = config.synth_spec
        lines += [f"synth_speakers = {s.n_speakers}", f"synth_utterances = {s.n_utterances}",
                  f"synth_duration_s = {s.duration_s}"]
    lines.append(f"sample_rate = {config.sample_rate}")
    lines += ["", "[split]",
              "train = " + ",".join(map(str, config.train_utts)),
              "test = " + ",".join(map(str, config.test_utts))]
    lines += ["", "[features]", "list = " + ",".join(config.features)]
    lines += ["", "[noise]"] + [f"{n} = {src}" for n, src in sorted(config.noise_sources.items())]
    lines += ["", "[snr]", "levels_db = " + ",".join(f"{v:g}" for v in config.snr_grid.levels)]
    lines += ["", "[model]", f"mixtures = {config.mixtures}"]
    lines += ["", "[run]", f"seed = {config.seed}", f"output_dir = {config.output_dir}",
              f"trials = {config.trials}", f"jobs = {config.jobs}", ""]
    return "\n".join(lines)


@dataclass(frozen=True)
class CellResult:
    ir: float
    trials: int
    correct: int

    def __post_init__(self):
        if not 0.0 <= self.ir <= 100.0 or self.correct > self.trials:
            raise ValueError(f"inconsistent cell: ir={self.ir}, {self.correct}/{self.trials}")


@dataclass
class EvalReport:
    """IR per (noise, snr, feature) cell plus run metadata."""

    cells: dict                 # (noise, snr|None, feature) -> CellResult
    features: tuple
    conditions: tuple           # ordered (noise, snr|None) pairs, clean first
    decisions: dict = field(default_factory=dict)  # same key -> [(speaker, predicted, margin)]
    config_hash: str = ""
    seed: int = 0
    timestamp: str = ""


def load_corpus_dir(path, sample_rate: int) -> list:
    """Read <dir>/<speaker>/<utt>.wav into (speaker, utt, buffer) triples."""
    path = Path(path)
    out = []
    for spk_dir in sorted(p for p in path.iterdir() if p.is_dir()):
        for wav in sorted(spk_dir.glob("*.wav")):
            out.append((spk_dir.name, wav.stem, resample(load_wav(wav), sample_rate)))
    if not out:
        raise ValueError(f"no <speaker>/<utt>.wav files under {path}")
    return out


def resolve_corpus(config: ExperimentConfig) -> list:
    if config.synth_spec is not None:
        return synth_corpus(config.synth_spec, config.seed)
    return load_corpus_dir(config.corpus_dir, config.sample_rate)


def resolve_inventory(config: ExperimentConfig) -> NoiseInventory:
    """Noise entries are WAV paths or synth:<kind>[:<seconds>] specs."""
    entries = {}
    paths = {}
    for name, source in config.noise_sources.items():
        if source.startswith("synth:"):
            parts = source.split(":")
            kind = parts[1]
            seconds = float(parts[2]) if len(parts) > 2 else DEFAULT_SYNTH_NOISE_SECONDS
            entries[name] = synth_noise(kind, seconds, config.sample_rate,
                                        derive_seed(config.seed, "noise-source", name))
        else:
            paths[name] = source
    if paths:
        entries.update(load_inventory(paths, config.sample_rate).entries)
    return NoiseInventory(entries)


def split_corpus(corpus, train_utts, test_utts):
    """Split utterances per speaker by index into the sorted utterance list."""
    by_speaker = {}
    for speaker, utt, buf in corpus:
        by_speaker.setdefault(speaker, []).append((utt, buf))
    train, test = [], []
    for speaker in sorted(by_speaker):
        utts = sorted(by_speaker[speaker])
        covered = set(train_utts) | set(test_utts)
        if covered != set(range(len(utts))):
            raise ValueError(
                f"split does not cover speaker {speaker}: {sorted(covered)} vs {len(utts)} utterances")
        train += [(speaker, utts[i][0], utts[i][1]) for i in train_utts]
        test += [(speaker, utts[i][0], utts[i][1]) for i in test_utts]
    return train, test


def _pmap(fn, items, jobs):
    if jobs == 0:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _bases_for(kinds) -> tuple:
    bases = []
    for kind in kinds:
        for base in kind.split("+"):
            if base not in bases:
                bases.append(base)
    return tuple(bases)


def _assemble(kind: str, statics: dict, cfg: feat.FeatureConfig) -> feat.FeatureMatrix:
    """Final per-utterance feature for a kind, from its cached static parts."""
    if "+" in kind:
        first, second = kind.split("+")
        return feat.concat_static(statics[first], statics[second])
    if kind == "lsf":
        return statics["lsf"]
    return feat.add_deltas(statics[kind], cfg.delta_window)


def _train_models(features_by_speaker: dict, kind: str, K: int, seed: int) -> dict:
    models = {}
    for speaker in sorted(features_by_speaker):
        X = np.vstack([fm.values for fm in features_by_speaker[speaker]])
        model, _ = train_em(X, K, derive_seed(seed, "gmm", kind, speaker))
        models[speaker] = model
    return models


def enroll(train_corpus, feature_kind: str, K: int, seed: int,
           cfg: feat.FeatureConfig = feat.DEFAULT_CONFIG) -> dict:
    """Train one GMM per speaker on the concatenation of its training features."""
    features_by_speaker = {}
    for speaker, utt, buf in train_corpus:
        features_by_speaker.setdefault(speaker, []).append(feat.extract(buf, feature_kind, cfg))
    return _train_models(features_by_speaker, feature_kind, K, seed)


def identify(models: dict, test_features) -> tuple:
    """Best-scoring speaker and the margin over the runner-up.

    Ties break toward the lexicographically smallest speaker id.
    """
    if len(models) < 2:
        raise ValueError(f"need at least 2 enrolled models, got {len(models)}")
    scores = [(speaker, score_utterance(models[speaker], test_features))
              for speaker in sorted(models)]
    best_speaker, best = scores[0]
    for speaker, value in scores[1:]:  # strict > keeps the smallest id on ties
        if value > best:
            best_speaker, best = speaker, value
    runner_up = max(v for s, v in scores if s != best_speaker)
    return best_speaker, best - runner_up


def identification_rate(decisions) -> float:
    """Percentage of trials whose predicted speaker equals the true one."""
    decisions = list(decisions)
    if not decisions:
        raise ValueError("no decisions to score")
    correct = sum(1 for predicted, true in decisions if predicted == true)
    return 100.0 * correct / len(decisions)


def run_grid(config: ExperimentConfig, cfg: feat.FeatureConfig | None = None) -> EvalReport:
    """Enroll on clean training data, then measure IR per (noise, snr, feature).

    Static 13-dim features are extracted once per (base, condition, utterance)
    and reused by deltas and combos.
    """
    if cfg is None:
        cfg = feat.FeatureConfig(sample_rate=config.sample_rate)
    corpus = resolve_corpus(config)
    train, test = split_corpus(corpus, config.train_utts, config.test_utts)
    inventory = resolve_inventory(config)
    conditions = [CLEAN_KEY] + [(name, snr) for name in inventory.names()
                                for snr in config.snr_grid.levels]
    bases = _bases_for(config.features)

    test_audio = {CLEAN_KEY: test}
    for name, snr in conditions[1:]:
        noise_buf = inventory.entries[name]
        test_audio[(name, snr)] = [
            (speaker, utt, mix_at_snr(buf, noise_buf, snr,
                                      derive_seed(config.seed, name, snr, speaker, utt)))
            for speaker, utt, buf in test
        ]

    def extract_statics(utterances):
        def one(item):
            speaker, utt, buf = item
            return speaker, utt, {base: feat.extract_static(buf, base, cfg) for base in bases}
        return _pmap(one, utterances, config.jobs)

    train_statics = extract_statics(train)
    test_statics = {cond: extract_statics(test_audio[cond]) for cond in conditions}

    cells, decisions_log = {}, {}
    for kind in config.features:
        per_speaker = {}
        for speaker, utt, statics in train_statics:
            per_speaker.setdefault(speaker, []).append(_assemble(kind, statics, cfg))
        models = _train_models(per_speaker, kind, config.mixtures, config.seed)

        for cond in conditions:
            noise_name, snr = cond
            trials = []
            if config.trials == "concat":
                grouped = {}
                for speaker, utt, statics in test_statics[cond]:
                    grouped.setdefault(speaker, []).append(_assemble(kind, statics, cfg))
                for speaker in sorted(grouped):
                    trials.append((speaker, np.vstack([fm.values for fm in grouped[speaker]])))
            else:
                for speaker, utt, statics in test_statics[cond]:
                    trials.append((speaker, _assemble(kind, statics, cfg).values))
            try:
                rows = [(speaker,) + identify(models, X) for speaker, X in trials]
            except Exception as exc:
                raise RuntimeError(
                    f"grid cell failed (noise={noise_name}, snr={snr}, feature={kind}): {exc}") from exc
            correct = sum(1 for speaker, predicted, _ in rows if predicted == speaker)
            key = (noise_name, snr, kind)
            cells[key] = CellResult(100.0 * correct / len(rows), len(rows), correct)
            decisions_log[key] = rows

    lock_text = render_config(config)
    return EvalReport(
        cells=cells,
        features=tuple(config.features),
        conditions=tuple(conditions),
        decisions=decisions_log,
        config_hash=hashlib.sha256(lock_text.encode()).hexdigest(),
        seed=config.seed,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def _condition_label(cond) -> tuple:
    noise, snr = cond
    return (noise, "" if snr is None else f"{snr:g}")


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    """Wide table: one row per (noise, snr), one column per feature, 2 decimals."""
    header = ["noise", "snr_db"] + list(report.features)
    rows = []
    for cond in report.conditions:
        noise, snr = _condition_label(cond)
        values = [report.cells[(cond[0], cond[1], kind)].ir for kind in report.features]
        rows.append((noise, snr, values))

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for noise, snr, values in rows:
            writer.writerow([noise, snr] + [f"{v:.2f}" for v in values])
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join(["---"] * len(header)) + "|"]
        for noise, snr, values in rows:
            peak = max(values)
            cells = [f"**{v:.2f}**" if v == peak else f"{v:.2f}" for v in values]
            lines.append("| " + " | ".join([noise, snr] + cells) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected csv or markdown")


def report_to_json(report: EvalReport) -> str:
    payload = {
        "features": list(report.features),
        "conditions": [[n, s] for n, s in report.conditions],
        "cells": [
            {"noise": n, "snr_db": s, "feature": k,
             "ir": c.ir, "trials": c.trials, "correct": c.correct}
            for (n, s, k), c in sorted(report.cells.items(), key=lambda kv: str(kv[0]))
        ],
        "config_hash": report.config_hash,
        "seed": report.seed,
        "timestamp": report.timestamp,
    }
    return json.dumps(payload, indent=2)


def report_from_json(text: str) -> EvalReport:
    payload = json.loads(text)
    cells = {}
    for cell in payload["cells"]:
        snr = cell["snr_db"]
        cells[(cell["noise"], snr, cell["feature"])] = CellResult(
            cell["ir"], cell["trials"], cell["correct"])
    return EvalReport(
        cells=cells,
        features=tuple(payload["features"]),
        conditions=tuple((n, s) for n, s in payload["conditions"]),
        config_hash=payload.get("config_hash", ""),
        seed=payload.get("seed", 0),
        timestamp=payload.get("timestamp", ""),
    )


def write_outputs(report: EvalReport, config: ExperimentConfig) -> Path:
    """Write report.csv/.md/.json, config.lock, and per-cell decision logs."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(render_report(report, "csv"))
    (out / "report.md").write_text(render_report(report, "markdown"))
    (out / "report.json").write_text(report_to_json(report))
    (out / "config.lock").write_text(render_config(config))
    dec_dir = out / "decisions"
    dec_dir.mkdir(exist_ok=True)
    for (noise, snr, kind), rows in report.decisions.items():
        tag = "clean" if snr is None else f"{noise}_{snr:g}dB"
        with open(dec_dir / f"{tag}_{kind}.csv", "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["speaker", "predicted", "margin"])
            for speaker, predicted, margin in rows:
                writer.writerow([speaker, predicted, f"{margin:.6f}"])
    return out
