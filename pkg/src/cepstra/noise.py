"""SNR-controlled additive-noise corruption and synthetic noise sources.

Mixing follows the usual corpus-corruption recipe: cut a noise segment at a
seeded random offset (wrapping), scale it so the speech-to-noise power ratio
hits the target exactly, add.  Power is full-utterance RMS; a future config
flag may add an active-speech-level mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer, CorpusSpec, derive_seed, resample, synth_utterance

SILENT_DB = -math.inf

DEFAULT_SNR_LEVELS = (-6.0, 0.0, 6.0, 12.0, 18.0)

CLEAN_KEY = ("clean", None)

NOISE_KINDS = ("white", "babble", "machine")


@dataclass(frozen=True)
class SnrGrid:
    """Strictly increasing SNR levels in dB."""

    levels: tuple = DEFAULT_SNR_LEVELS

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"SNR levels must be strictly increasing, got {levels}")
        object.__setattr__(self, "levels", levels)


@dataclass(frozen=True)
class NoiseInventory:
    """Named noise buffers, all at one sample rate and at least 1 s long."""

    entries: dict

    def __post_init__(self):
        rates = {buf.sample_rate for buf in self.entries.values()}
        if len(rates) > 1:
            raise ValueError(f"noise entries disagree on sample rate: {sorted(rates)}")
        for name, buf in self.entries.items():
            if buf.duration_s < 1.0:
                raise ValueError(f"noise {name!r} is {buf.duration_s:.3f} s; need >= 1 s")

    def names(self):
        return sorted(self.entries)


def load_inventory(paths: dict, sample_rate: int) -> NoiseInventory:
    """Load noise WAVs and resample them to the speech rate."""
    from .audio import load_wav

    entries = {}
    for name, path in paths.items():
        entries[name] = resample(load_wav(path), sample_rate)
    return NoiseInventory(entries)


def measure_power_db(buffer: AudioBuffer) -> float:
    """Mean-square power in dB; all-zero input returns the SILENT_DB marker."""
    if len(buffer) == 0:
        raise ValueError("cannot measure power of an empty buffer")
    p = float(np.mean(buffer.samples**2))
    if p == 0.0:
        return SILENT_DB
    return 10.0 * math.log10(p)


def mix_at_snr(speech: AudioBuffer, noise: AudioBuffer, snr_db: float, seed: int) -> AudioBuffer:
    """Add a scaled noise segment so that P_speech - P_noise = snr_db exactly.

    The output is not re-normalized and may exceed [-1, 1]; callers writing
    WAVs must rescale after a peak check.
    """
    if speech.sample_rate != noise.sample_rate:
        raise ValueError(f"sample-rate mismatch: speech {speech.sample_rate}, noise {noise.sample_rate}")
    p_speech = measure_power_db(speech)
    if p_speech == SILENT_DB:
        raise ValueError("speech is silent; SNR undefined")
    if measure_power_db(noise) == SILENT_DB:
        raise ValueError("noise is silent; SNR undefined")
    rng = np.random.default_rng(derive_seed(seed))
    offset = int(rng.integers(0, len(noise)))
    segment = np.take(noise.samples, np.arange(offset, offset + len(speech)), mode="wrap")
    p_segment = float(np.mean(segment**2))
    if p_segment == 0.0:
        raise ValueError("selected noise segment is silent; pick a longer or denser noise")
    gain = 10.0 ** ((p_speech - 10.0 * math.log10(p_segment) - snr_db) / 20.0)
    return AudioBuffer(speech.samples + gain * segment, speech.sample_rate)


def corrupt_corpus(corpus, inventory: NoiseInventory, grid: SnrGrid, seed: int) -> dict:
    """Corrupt every utterance at every (noise, snr) cell.

    Returns {(noise_name, snr_db): [(speaker, utt, buffer), ...]} with the
    untouched originals under CLEAN_KEY.  Per-utterance seeds are derived
    from (seed, noise, snr, speaker, utt) so parallel order cannot matter.
    """
    corpus = list(corpus)
    out = {CLEAN_KEY: corpus}
    for name in inventory.names():
        noise_buf = inventory.entries[name]
        for snr in grid.levels:
            cell = []
            for speaker, utt, buf in corpus:
                sub_seed = derive_seed(seed, name, snr, speaker, utt)
                cell.append((speaker, utt, mix_at_snr(buf, noise_buf, snr, sub_seed)))
            out[(name, snr)] = cell
    return out


def synth_noise(kind: str, duration_s: float, sample_rate: int, seed: int) -> AudioBuffer:
    """Deterministic synthetic noise: white, babble (voice mixture), or machine.

    Stand-ins for licensed noise inventories; peak-normalized to 0.5.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = np.random.default_rng(derive_seed(seed, "noise", kind))
    n = int(round(duration_s * sample_rate))
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "babble":
        spec = CorpusSpec(n_speakers=6, n_utterances=1, duration_s=duration_s,
                          sample_rate=sample_rate)
        x = np.zeros(n)
        for v in range(spec.n_speakers):
            x += synth_utterance(spec, derive_seed(seed, "babble-voice", v), v, 0).samples
    elif kind == "machine":
        # broadband rumble plus a rotating-hum component
        x = lfilter([1.0], [1.0, -0.95], rng.standard_normal(n))
        t = np.arange(n) / sample_rate
        hum = rng.uniform(40.0, 120.0)
        x += 2.0 * np.std(x) * (np.sin(2 * np.pi * hum * t) + 0.5 * np.sin(2 * np.pi * 2 * hum * t))
    else:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    peak = np.abs(x).max()
    return AudioBuffer(0.5 * x / peak if peak > 0 else x, sample_rate)
