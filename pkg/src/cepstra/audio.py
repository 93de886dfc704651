"""Audio I/O, resampling, framing, and the synthetic desk-scale corpus.

All functions are pure; AudioBuffer is immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import firwin, lfilter, resample_poly

PCM_SCALE = 32768.0

# polyphase resampler design: 64 taps per phase, ~90 dB stopband
RESAMPLE_TAPS_PER_PHASE = 64
RESAMPLE_KAISER_BETA = 8.6


class AudioError(Exception):
    """Base class for audio I/O failures."""


class UnsupportedWavError(AudioError):
    """File is not RIFF/WAVE PCM 16-bit."""


class TruncatedWavError(AudioError):
    """WAV header or sample data is shorter than declared."""


class EmptyAudioError(AudioError):
    """WAV file declares zero samples."""


def derive_seed(*parts) -> int:
    """Stable sub-seed from arbitrary labels; independent of process hash salt."""
    h = hashlib.blake2s(repr(parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class AudioBuffer:
    """Mono sample sequence with its sample rate.

    Samples are float64; nominal range is [-1, 1] but intermediate
    products (e.g. unnormalized noise mixtures) may exceed it.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameSequence:
    """Windowed frames: (n_frames, frame_len) matrix plus the framing geometry."""

    frames: np.ndarray
    frame_len: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise ValueError(f"need 0 < hop <= frame_len, got hop={self.hop} frame_len={self.frame_len}")
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != self.frame_len:
            raise ValueError(f"frames must be (n, {self.frame_len}), got {frames.shape}")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop


def _read_exact(f, n, what):
    data = f.read(n)
    if len(data) < n:
        raise TruncatedWavError(f"unexpected end of file while reading {what}")
    return data


def load_wav(path) -> AudioBuffer:
    """Load a RIFF/WAVE PCM 16-bit file; multi-channel input is averaged to mono.

    Integer samples are scaled by 1/32768 into [-1, 1).
    """
    path = Path(path)
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) < 12:
            raise TruncatedWavError(f"{path}: file shorter than RIFF header")
        if header[0:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise UnsupportedWavError(f"{path}: not a RIFF/WAVE file")

        fmt = None
        data = None
        while True:
            chunk_hdr = f.read(8)
            if len(chunk_hdr) == 0:
                break
            if len(chunk_hdr) < 8:
                raise TruncatedWavError(f"{path}: truncated chunk header")
            chunk_id = chunk_hdr[0:4]
            size = int.from_bytes(chunk_hdr[4:8], "little")
            if chunk_id == b"fmt ":
                body = _read_exact(f, size, "fmt chunk")
                if size < 16:
                    raise TruncatedWavError(f"{path}: fmt chunk too small")
                audio_format = int.from_bytes(body[0:2], "little")
                n_channels = int.from_bytes(body[2:4], "little")
                rate = int.from_bytes(body[4:8], "little")
                bits = int.from_bytes(body[14:16], "little")
                fmt = (audio_format, n_channels, rate, bits)
            elif chunk_id == b"data":
                data = _read_exact(f, size, "data chunk")
            else:
                f.seek(size + (size & 1), 1)
            if fmt is not None and data is not None:
                break

    if fmt is None:
        raise TruncatedWavError(f"{path}: missing fmt chunk")
    if data is None:
        raise TruncatedWavError(f"{path}: missing data chunk")
    audio_format, n_channels, rate, bits = fmt
    if audio_format != 1 or bits != 16:
        raise UnsupportedWavError(f"{path}: only PCM 16-bit supported (format={audio_format}, bits={bits})")
    if n_channels < 1:
        raise UnsupportedWavError(f"{path}: invalid channel count {n_channels}")
    if len(data) == 0:
        raise EmptyAudioError(f"{path}: zero samples")
    if len(data) % (2 * n_channels) != 0:
        raise TruncatedWavError(f"{path}: data chunk not a whole number of sample frames")

    raw = np.frombuffer(data, dtype="<i2").astype(np.float64) / PCM_SCALE
    if n_channels > 1:
        raw = raw.reshape(-1, n_channels).mean(axis=1)
    return AudioBuffer(raw, rate)


def save_wav(buffer: AudioBuffer, path) -> None:
    """Write PCM 16-bit little-endian mono. Rejects samples outside [-1, 1]."""
    x = buffer.samples
    if len(x) and (x.min() < -1.0 or x.max() > 1.0):
        raise ValueError(f"samples outside [-1, 1] (peak {np.abs(x).max():.4f}); refusing to clip")
    pcm = np.clip(np.round(x * PCM_SCALE), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    n = len(data)
    header = b"".join([
        b"RIFF", (36 + n).to_bytes(4, "little"), b"WAVE",
        b"fmt ", (16).to_bytes(4, "little"),
        (1).to_bytes(2, "little"),                      # PCM
        (1).to_bytes(2, "little"),                      # mono
        buffer.sample_rate.to_bytes(4, "little"),
        (buffer.sample_rate * 2).to_bytes(4, "little"),  # byte rate
        (2).to_bytes(2, "little"),                      # block align
        (16).to_bytes(2, "little"),                     # bits per sample
        b"data", n.to_bytes(4, "little"),
    ])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(data)


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited polyphase resampling (windowed-sinc, Kaiser).

    Identity when rates match; output length is round(n * target / source).
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    src = buffer.sample_rate
    if target_rate == src:
        return buffer
    g = gcd(src, int(target_rate))
    up, down = target_rate // g, src // g
    max_rate = max(up, down)
    half_len = (RESAMPLE_TAPS_PER_PHASE // 2) * max_rate
    h = firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", RESAMPLE_KAISER_BETA))
    y = resample_poly(buffer.samples, up, down, window=h)
    n_target = round(len(buffer) * target_rate / src)
    return AudioBuffer(y[:n_target], int(target_rate))


def pre_emphasize(buffer: AudioBuffer, alpha: float = 0.97) -> AudioBuffer:
    """First-difference emphasis: y[0] = x[0], y[n] = x[n] - alpha * x[n-1]."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    x = buffer.samples
    y = np.empty_like(x)
    if len(x):
        y[0] = x[0]
        y[1:] = x[1:] - alpha * x[:-1]
    return AudioBuffer(y, buffer.sample_rate)


_WINDOWS = {
    "hamming": np.hamming,
    "hann": np.hanning,
    "rect": np.ones,
}


def frame_signal(buffer: AudioBuffer, frame_ms: float, hop_ms: float,
                 window: str = "hamming") -> FrameSequence:
    """Slice into overlapping windowed frames; the trailing partial frame is dropped.

    A signal shorter than one frame yields an empty FrameSequence.
    """
    if not 0 < hop_ms <= frame_ms:
        raise ValueError(f"need frame_ms >= hop_ms > 0, got frame_ms={frame_ms} hop_ms={hop_ms}")
    if window not in _WINDOWS:
        raise ValueError(f"unknown window {window!r}; expected one of {sorted(_WINDOWS)}")
    sr = buffer.sample_rate
    frame_len = int(round(frame_ms * sr / 1000.0))
    hop = int(round(hop_ms * sr / 1000.0))
    x = buffer.samples
    if len(x) < frame_len:
        return FrameSequence(np.zeros((0, frame_len)), frame_len, hop, sr)
    n_frames = (len(x) - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * _WINDOWS[window](frame_len)
    return FrameSequence(frames, frame_len, hop, sr)


@dataclass(frozen=True)
class CorpusSpec:
    """Shape of the synthetic corpus: speakers x utterances of fixed duration."""

    n_speakers: int
    n_utterances: int
    duration_s: float = 2.0
    sample_rate: int = 16000

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ValueError(f"need at least 2 speakers, got {self.n_speakers}")
        if self.n_utterances < 1:
            raise ValueError(f"need at least 1 utterance per speaker, got {self.n_utterances}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")


def _speaker_voice(spec: CorpusSpec, seed: int, speaker_idx: int):
    """Fixed per-speaker vocal tract (stable AR(10) filter) and pitch."""
    rng = np.random.default_rng(derive_seed(seed, "speaker", speaker_idx))
    # one pole pair per formant band; bands keep voices spectrally distinct
    nyq = spec.sample_rate / 2.0
    bands = [(250, 900), (900, 1800), (1800, 2900), (2900, 4200), (4200, min(6500, nyq * 0.9))]
    poles = []
    for lo, hi in bands:
        freq = rng.uniform(lo, hi)
        radius = rng.uniform(0.90, 0.975)
        theta = 2 * np.pi * freq / spec.sample_rate
        poles.extend([radius * np.exp(1j * theta), radius * np.exp(-1j * theta)])
    ar_poly = np.real(np.poly(poles))
    f0 = rng.uniform(85.0, 280.0)
    return ar_poly, f0


def synth_utterance(spec: CorpusSpec, seed: int, speaker_idx: int, utt_idx: int) -> AudioBuffer:
    """One utterance: pulse train + noise excitation through the speaker's filter."""
    ar_poly, f0 = _speaker_voice(spec, seed, speaker_idx)
    rng = np.random.default_rng(derive_seed(seed, "utt", speaker_idx, utt_idx))
    n = int(round(spec.duration_s * spec.sample_rate))
    period = max(2, int(round(spec.sample_rate / f0)))
    excitation = rng.standard_normal(n) * 0.05
    excitation[rng.integers(0, period)::period] += 1.0
    # slow amplitude contour so utterances are not strictly stationary
    t = np.arange(n) / spec.sample_rate
    contour = 0.75 + 0.25 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
    x = lfilter([1.0], ar_poly, excitation * contour)
    peak = np.abs(x).max()
    if peak > 0:
        x = 0.5 * x / peak
    return AudioBuffer(x, spec.sample_rate)


def synth_corpus(spec: CorpusSpec, seed: int) -> list[tuple[str, str, AudioBuffer]]:
    """Deterministic synthetic corpus: (speaker_id, utterance_id, buffer) triples.

    Each speaker is a fixed random stable all-pole filter (order 10) excited
    by a pulse train at a speaker-specific pitch plus noise.
    """
    out = []
    for s in range(spec.n_speakers):
        for u in range(spec.n_utterances):
            out.append((f"spk{s:03d}", f"u{u:02d}", synth_utterance(spec, seed, s, u)))
    return out
