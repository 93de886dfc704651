"""The five acoustic front-ends (MFCC, GFCC, PNCC, PLP, LSF), dynamic-feature
augmentation, static fusion, and the feature file format.

Every extractor maps an AudioBuffer to a FeatureMatrix and is deterministic:
identical audio and config give bit-identical values.  All five share one
framing geometry so their frame counts agree for fusion.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev

from .audio import AudioBuffer, FrameSequence, frame_signal, pre_emphasize
from .dsp import (
    FilterBank,
    _levinson_batch,
    apply_filterbank,
    dct_ii,
    gammatone_filterbank,
    mel_filterbank,
    power_spectrum,
)

LABELS = ("mfcc", "gfcc", "pncc", "plp", "lsf", "combo")

# experiment-facing feature kinds; combos fuse two 13-dim static front-ends
FEATURE_KINDS = ("mfcc", "gfcc", "pncc", "plp", "lsf", "gfcc+pncc", "plp+gfcc", "plp+pncc")

_LABEL_TAGS = {label: i for i, label in enumerate(LABELS)}

FEATURE_MAGIC = b"CBFM"
FEATURE_VERSION = 1


class FeatureExtractionError(RuntimeError):
    """Unrecoverable failure inside an extractor (e.g. LSF root bracketing)."""


@dataclass(frozen=True)
class FeatureConfig:
    """Per-extractor parameters. Defaults reproduce the 13/10-coefficient,
    39-dim-with-deltas setup used throughout the evaluation grid."""

    sample_rate: int = 16000
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    window: str = "hamming"
    fft_size: int = 512
    preemph_alpha: float = 0.97

    n_mel: int = 26
    n_ceps: int = 13
    log_floor: float = 1e-10

    n_gammatone_gfcc: int = 64
    n_gammatone_pncc: int = 40
    gammatone_f_min: float = 50.0

    plp_order: int = 12
    lsf_order: int = 10

    pncc_medium_frames: int = 2      # M: medium-time average over 2M+1 frames
    pncc_lambda_a: float = 0.999     # noise-floor tracking when power rises
    pncc_lambda_b: float = 0.5       # noise-floor tracking when power falls
    pncc_masking_decay: float = 0.85
    pncc_masking_floor: float = 0.2
    pncc_excitation_factor: float = 2.0  # frames below factor*floor count as noise
    pncc_channel_smooth: int = 4     # S: transfer-ratio averaging across channels
    pncc_mean_forget: float = 0.999
    pncc_power_exponent: float = 1.0 / 15.0

    delta_window: int = 2

    def __post_init__(self):
        for name in ("n_mel", "n_ceps", "n_gammatone_gfcc", "n_gammatone_pncc",
                     "plp_order", "lsf_order", "delta_window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_ceps > self.n_mel:
            raise ValueError(f"n_ceps {self.n_ceps} exceeds n_mel {self.n_mel}")
        if self.n_ceps > min(self.n_gammatone_gfcc, self.n_gammatone_pncc):
            raise ValueError("n_ceps exceeds gammatone channel count")

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_samples


DEFAULT_CONFIG = FeatureConfig()


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-frame feature vectors: (n_frames, dim) with a feature-kind label."""

    values: np.ndarray
    label: str
    frame_rate: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {v.shape}")
        if v.size and not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}; expected one of {LABELS}")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# shared front half

def _check_audio(audio: AudioBuffer, cfg: FeatureConfig):
    if len(audio) == 0:
        raise ValueError("cannot extract features from empty audio")
    if audio.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"audio rate {audio.sample_rate} != config rate {cfg.sample_rate}; resample first")


def _frames(audio: AudioBuffer, cfg: FeatureConfig, preemph: bool) -> FrameSequence:
    _check_audio(audio, cfg)
    x = pre_emphasize(audio, cfg.preemph_alpha) if preemph else audio
    return frame_signal(x, cfg.frame_ms, cfg.hop_ms, cfg.window)


def _power(audio: AudioBuffer, cfg: FeatureConfig, preemph: bool):
    frames = _frames(audio, cfg, preemph)
    return frames, power_spectrum(frames, cfg.fft_size)


@lru_cache(maxsize=8)
def _mel_bank(cfg: FeatureConfig) -> FilterBank:
    return mel_filterbank(cfg.n_mel, cfg.fft_size, cfg.sample_rate, 0.0, cfg.sample_rate / 2.0)


@lru_cache(maxsize=8)
def _gammatone_bank(cfg: FeatureConfig, n_channels: int) -> FilterBank:
    return gammatone_filterbank(n_channels, cfg.sample_rate, cfg.gammatone_f_min,
                                cfg.sample_rate / 2.0, fft_size=cfg.fft_size)


# ---------------------------------------------------------------------------
# MFCC

def extract_mfcc(audio: AudioBuffer, cfg: FeatureConfig = DEFAULT_CONFIG) -> FeatureMatrix:
    """Log-mel cepstra c1..c12 with log frame energy prepended (13-dim)."""
    frames, power = _power(audio, cfg, preemph=True)
    mel_energy = apply_filterbank(power, _mel_bank(cfg))
    log_mel = np.log(np.maximum(mel_energy, cfg.log_floor))
    ceps = dct_ii(log_mel, cfg.n_ceps)[:, 1:]
    energy = np.log(np.maximum((frames.frames**2).sum(axis=1), cfg.log_floor))
    values = np.column_stack([energy, ceps]) if frames.n_frames else np.zeros((0, cfg.n_ceps))
    return FeatureMatrix(values, "mfcc", cfg.frame_rate)


# ---------------------------------------------------------------------------
# GFCC

def _gfcc_compressed(audio: AudioBuffer, cfg: FeatureConfig) -> np.ndarray:
    """Cubic-root-compressed gammatone channel energies (the pre-DCT stage)."""
    _, power = _power(audio, cfg, preemph=False)
    energy = apply_filterbank(power, _gammatone_bank(cfg, cfg.n_gammatone_gfcc))
    return np.cbrt(energy)


def extract_gfcc(audio: AudioBuffer, cfg: FeatureConfig = DEFAULT_CONFIG) -> FeatureMatrix:
    """Cubic-root gammatone channels decorrelated by DCT; c0 is kept (13-dim)."""
    compressed = _gfcc_compressed(audio, cfg)
    return FeatureMatrix(dct_ii(compressed, cfg.n_ceps), "gfcc", cfg.frame_rate)


# ---------------------------------------------------------------------------
# PNCC

def power_law(x, exponent: float = 1.0 / 15.0):
    """The rate-intensity nonlinearity applied before the final DCT."""
    return np.asarray(x, dtype=np.float64) ** exponent


def _clipped_mean(values: np.ndarray, half_width: int, axis: int) -> np.ndarray:
    """Moving average over a +-half_width window clipped at the edges."""
    n = values.shape[axis]
    moved = np.moveaxis(values, axis, 0)
    csum = np.concatenate([np.zeros((1,) + moved.shape[1:]), np.cumsum(moved, axis=0)])
    lo = np.maximum(np.arange(n) - half_width, 0)
    hi = np.minimum(np.arange(n) + half_width + 1, n)
    out = (csum[hi] - csum[lo]) / (hi - lo).reshape((-1,) + (1,) * (moved.ndim - 1))
    return np.moveaxis(out, 0, axis)


def _asymmetric_lowpass(x: np.ndarray, lam_rise: float, lam_fall: float) -> np.ndarray:
    """First-order tracker that rises slowly and falls fast: a lower envelope."""
    out = np.empty_like(x)
    out[0] = 0.9 * x[0]
    for t in range(1, x.shape[0]):
        prev = out[t - 1]
        rising = x[t] >= prev
        out[t] = np.where(rising, lam_rise * prev + (1 - lam_rise) * x[t],
                          lam_fall * prev + (1 - lam_fall) * x[t])
    return out


def _pncc_environmental(channel_power: np.ndarray, cfg: FeatureConfig):
    """Medium-time noise suppression: returns (transfer_ratio, normalized_power).

    Stages: medium-time average, asymmetric-lowpass noise floor, floor
    subtraction with half-wave rectification, temporal masking via a decaying
    peak tracker (frames below the excitation threshold fall back to the
    rectified signal's own lower envelope), transfer-ratio smoothing across
    channels, and running mean-power normalization.  State never crosses
    utterance boundaries.
    """
    n, _ = channel_power.shape
    if n == 0:
        return channel_power.copy(), channel_power.copy()
    tiny = np.finfo(np.float64).tiny

    medium = _clipped_mean(channel_power, cfg.pncc_medium_frames, axis=0)

    floor = _asymmetric_lowpass(medium, cfg.pncc_lambda_a, cfg.pncc_lambda_b)
    rectified = np.maximum(medium - floor, 0.0)
    residual_floor = _asymmetric_lowpass(rectified, cfg.pncc_lambda_a, cfg.pncc_lambda_b)

    masked = np.empty_like(rectified)
    masked[0] = rectified[0]
    peak = rectified[0].copy()
    decay, mask_floor = cfg.pncc_masking_decay, cfg.pncc_masking_floor
    for t in range(1, n):
        decayed = decay * peak
        masked[t] = np.where(rectified[t] >= decayed, rectified[t], mask_floor * peak)
        peak = np.maximum(decayed, rectified[t])

    excited = medium >= cfg.pncc_excitation_factor * floor
    suppressed = np.where(excited, np.maximum(masked, residual_floor), residual_floor)

    ratio = suppressed / np.maximum(medium, tiny)
    ratio = _clipped_mean(ratio, cfg.pncc_channel_smooth, axis=1)

    excitation = channel_power * ratio
    mu = np.empty(n)
    mu[0] = excitation[0].mean()
    lam = cfg.pncc_mean_forget
    for t in range(1, n):
        mu[t] = lam * mu[t - 1] + (1 - lam) * excitation[t].mean()
    normalized = excitation / np.maximum(mu, tiny)[:, None]
    return ratio, normalized


def extract_pncc(audio: AudioBuffer, cfg: FeatureConfig = DEFAULT_CONFIG) -> FeatureMatrix:
    """Gammatone power with medium-time noise suppression and 1/15 power law."""
    _, power = _power(audio, cfg, preemph=True)
    channel_power = apply_filterbank(power, _gammatone_bank(cfg, cfg.n_gammatone_pncc))
    _, normalized = _pncc_environmental(channel_power, cfg)
    values = dct_ii(power_law(normalized, cfg.pncc_power_exponent), cfg.n_ceps)
    if values.size and not np.all(np.isfinite(values)):
        raise FeatureExtractionError("non-finite PNCC intermediate")
    return FeatureMatrix(values, "pncc", cfg.frame_rate)


# ---------------------------------------------------------------------------
# PLP

def _bark(f):
    # critical-band rate: 6 * asinh(f / 600)
    return 6.0 * np.arcsinh(np.asarray(f, dtype=np.float64) / 600.0)


def _equal_loudness(f):
    # 40-dB equal-loudness weighting, rational approximation in omega = 2*pi*f
    w2 = (2.0 * np.pi * np.asarray(f, dtype=np.float64)) ** 2
    return ((w2 + 56.8e6) * w2**2) / ((w2 + 6.3e6) ** 2 * (w2 + 0.38e9))


def intensity_to_loudness(x):
    """Perceived loudness grows as the cube root of intensity."""
    return np.cbrt(x)


@lru_cache(maxsize=8)
def _bark_bank(cfg: FeatureConfig):
    """Trapezoidal critical-band masking curves on the FFT bin grid, plus the
    equal-loudness weight at each band center."""
    nyq = cfg.sample_rate / 2.0
    n_bands = int(np.ceil(_bark(nyq))) + 1
    centers_bark = np.linspace(0.0, _bark(nyq), n_bands)
    bins_bark = _bark(np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size)
    d = bins_bark[None, :] - centers_bark[:, None]
    weights = np.select(
        [d < -1.3, d <= -0.5, d < 0.5, d <= 2.5],
        [0.0, 10.0 ** (2.5 * (d + 0.5)), 1.0, 10.0 ** (-(d - 0.5))],
        default=0.0,
    )
    centers_hz = 600.0 * np.sinh(centers_bark / 6.0)
    return weights, _equal_loudness(centers_hz)


def _lpc_to_cepstra(lpc: np.ndarray, gain: float, n_ceps: int) -> np.ndarray:
    """Cepstra of the all-pole model 1/(1 - sum lpc_k z^-k); c0 = ln(gain)."""
    a = -np.asarray(lpc, dtype=np.float64)  # inverse-filter coefficients a_1..a_p
    p = len(a)
    c = np.zeros(n_ceps)
    c[0] = np.log(gain)
    for m in range(1, n_ceps):
        acc = a[m - 1] if m <= p else 0.0
        for k in range(1, m):
            if m - k <= p:
                acc += (k / m) * c[k] * a[m - k - 1]
        c[m] = -acc
    return c


def extract_plp(audio: AudioBuffer, cfg: FeatureConfig = DEFAULT_CONFIG) -> FeatureMatrix:
    """Bark-integrated, equal-loudness-weighted, cube-root-compressed spectrum
    fit by an order-12 all-pole model; reported as 13 cepstra.

    The rare unstable frame reuses the previous frame's cepstra; the count is
    reported in meta["unstable_frames"].
    """
    _, power = _power(audio, cfg, preemph=False)
    bank, loudness = _bark_bank(cfg)
    auditory = (power.values @ bank.T) * loudness
    compressed = intensity_to_loudness(np.maximum(auditory, cfg.log_floor))
    # duplicate edge bands to blunt the weighting roll-off at DC/Nyquist
    compressed[:, 0] = compressed[:, 1]
    compressed[:, -1] = compressed[:, -2]

    n_frames, n_bands = compressed.shape
    r = np.fft.irfft(compressed, n=2 * (n_bands - 1), axis=1)[:, :cfg.plp_order + 1]
    lpc, gain, ok = _levinson_batch(r) if n_frames else (None, None, np.zeros(0, bool))
    ok = ok & (gain > 0) if n_frames else ok

    values = np.zeros((n_frames, cfg.n_ceps))
    previous = np.zeros(cfg.n_ceps)
    unstable = 0
    for t in range(n_frames):
        if ok[t]:
            previous = _lpc_to_cepstra(lpc[t], gain[t], cfg.n_ceps)
        else:
            unstable += 1
        values[t] = previous
    return FeatureMatrix(values, "plp", cfg.frame_rate, meta={"unstable_frames": unstable})


# ---------------------------------------------------------------------------
# LSF

def _symmetric_to_chebyshev(sym: np.ndarray) -> np.ndarray:
    """Chebyshev-basis coefficients (one column per row of sym) of
    z^m * S(z) on the unit circle, for symmetric polynomials of degree 2m."""
    m = (sym.shape[1] - 1) // 2
    coeffs = np.empty((m + 1, sym.shape[0]))
    coeffs[0] = sym[:, m]
    coeffs[1:] = 2.0 * sym[:, m - 1::-1].T
    return coeffs


def _deflate(poly: np.ndarray, root: float) -> np.ndarray:
    """Exact synthetic division of z^-1 polynomials (rows) by (1 - root*z^-1)."""
    out = np.empty((poly.shape[0], poly.shape[1] - 1))
    acc = np.zeros(poly.shape[0])
    for i in range(poly.shape[1] - 1):
        acc = poly[:, i] + root * acc
        out[:, i] = acc
    return out


def _chebyshev_roots_on_circle(coeffs: np.ndarray, n_roots: int,
                               n_grid: int = 4096) -> np.ndarray:
    """Angles w in (0, pi) where each Chebyshev series (columns of coeffs)
    crosses zero in x = cos(w): sign-change scan plus vectorized bisection.

    Every series must bracket exactly n_roots crossings.
    """
    n_series = coeffs.shape[1]
    w_grid = np.linspace(0.0, np.pi, n_grid + 1)
    values = chebyshev.chebval(np.cos(w_grid), coeffs)
    values = np.where(values == 0.0, 1e-300, values)  # grid hits become brackets
    bracket = values[:, :-1] * values[:, 1:] < 0
    counts = bracket.sum(axis=1)
    if np.any(counts != n_roots):
        bad = np.nonzero(counts != n_roots)[0]
        raise FeatureExtractionError(
            f"bracketed {counts[bad[0]]} of {n_roots} LSF roots (series {bad.tolist()[:8]})")
    series_idx, grid_idx = np.nonzero(bracket)  # grid-ascending within each series
    lo, hi = w_grid[grid_idx], w_grid[grid_idx + 1]
    f_lo = values[series_idx, grid_idx]
    c_sel = coeffs[:, series_idx]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f_mid = chebyshev.chebval(np.cos(mid), c_sel, tensor=False)
        take_low = f_lo * f_mid <= 0
        hi = np.where(take_low, mid, hi)
        lo = np.where(take_low, lo, mid)
        f_lo = np.where(take_low, f_lo, f_mid)
    return (0.5 * (lo + hi)).reshape(n_series, n_roots)


def _lsf_batch(lpc: np.ndarray) -> np.ndarray:
    """lpc_to_lsf across rows: (n, p) predictors to (n, p) ascending angles."""
    lpc = np.atleast_2d(np.asarray(lpc, dtype=np.float64))
    n, p = lpc.shape
    if p % 2:
        raise ValueError(f"LSF conversion needs an even order, got {p}")
    a = np.concatenate([np.ones((n, 1)), -lpc], axis=1)
    pad = np.zeros((n, 1))
    p_poly = np.concatenate([a, pad], axis=1) + np.concatenate([pad, a[:, ::-1]], axis=1)
    q_poly = np.concatenate([a, pad], axis=1) - np.concatenate([pad, a[:, ::-1]], axis=1)
    w_p = _chebyshev_roots_on_circle(_symmetric_to_chebyshev(_deflate(p_poly, -1.0)), p // 2)
    w_q = _chebyshev_roots_on_circle(_symmetric_to_chebyshev(_deflate(q_poly, 1.0)), p // 2)
    lsf = np.empty((n, p))
    lsf[:, 0::2] = w_p  # sum-polynomial roots come first and interlace
    lsf[:, 1::2] = w_q
    if np.any(np.diff(lsf, axis=1) <= 0):
        raise FeatureExtractionError("LSF roots do not interlace")
    return lsf


def lpc_to_lsf(lpc: np.ndarray) -> np.ndarray:
    """Line spectral frequencies (radians, ascending in (0, pi)) of a stable
    even-order predictor, via sum/difference polynomials and Chebyshev-domain
    bisection."""
    return _lsf_batch(np.asarray(lpc, dtype=np.float64)[None, :])[0]


def lsf_to_lpc(lsf: np.ndarray) -> np.ndarray:
    """Inverse of lpc_to_lsf: rebuild P and Q from their unit-circle roots."""
    lsf = np.asarray(lsf, dtype=np.float64)
    p = len(lsf)
    if p % 2:
        raise ValueError(f"need an even number of frequencies, got {p}")

    def from_roots(ws, unit_root):
        poly = np.array([1.0, -unit_root])
        for w in ws:
            poly = np.convolve(poly, [1.0, -2.0 * np.cos(w), 1.0])
        return poly

    p_poly = from_roots(lsf[0::2], -1.0)
    q_poly = from_roots(lsf[1::2], 1.0)
    a = 0.5 * (p_poly + q_poly)[:p + 1]
    return -a[1:]


def extract_lsf(audio: AudioBuffer, cfg: FeatureConfig = DEFAULT_CONFIG) -> FeatureMatrix:
    """Per-frame line spectral frequencies of an order-10 predictor (10-dim).

    Unstable/silent frames reuse the previous frame's LSFs (counted in meta);
    a frame whose roots cannot be bracketed raises with its index.
    """
    frames = _frames(audio, cfg, preemph=True)
    order = cfg.lsf_order
    n = frames.n_frames
    if n == 0:
        return FeatureMatrix(np.zeros((0, order)), "lsf", cfg.frame_rate,
                             meta={"unstable_frames": 0})
    F = frames.frames
    r = np.stack([np.einsum("tn,tn->t", F[:, :F.shape[1] - k], F[:, k:])
                  for k in range(order + 1)], axis=1)
    lpc, _, ok = _levinson_batch(r)
    frame_ids = np.nonzero(ok)[0]
    try:
        stable_lsf = _lsf_batch(lpc[ok]) if frame_ids.size else np.zeros((0, order))
    except FeatureExtractionError:
        for t in frame_ids:  # locate the offender for the error message
            try:
                _lsf_batch(lpc[t][None])
            except FeatureExtractionError as exc:
                raise FeatureExtractionError(f"frame {t}: {exc}") from None
        raise

    values = np.zeros((n, order))
    # neutral fallback until the first stable frame: evenly spaced LSFs
    previous = np.arange(1, order + 1) * np.pi / (order + 1)
    j = 0
    for t in range(n):
        if ok[t]:
            previous = stable_lsf[j]
            j += 1
        values[t] = previous
    return FeatureMatrix(values, "lsf", cfg.frame_rate,
                         meta={"unstable_frames": int(n - frame_ids.size)})


# ---------------------------------------------------------------------------
# dynamic features and fusion

def add_deltas(static: FeatureMatrix, window: int = 2) -> FeatureMatrix:
    """Append regression deltas and delta-deltas: (static, d, dd), 13 -> 39."""
    if static.dim != 13:
        raise ValueError(f"deltas are defined for 13-dim static features, got dim {static.dim}")
    if window < 1:
        raise ValueError("window must be >= 1")

    def regression(x):
        if x.shape[0] == 0:
            return x.copy()
        padded = np.concatenate([np.repeat(x[:1], window, axis=0), x,
                                 np.repeat(x[-1:], window, axis=0)])
        denom = 2.0 * sum(n * n for n in range(1, window + 1))
        out = np.zeros_like(x)
        for n in range(1, window + 1):
            out += n * (padded[window + n:window + n + len(x)] -
                        padded[window - n:window - n + len(x)])
        return out / denom

    d = regression(static.values)
    dd = regression(d)
    return FeatureMatrix(np.hstack([static.values, d, dd]), static.label,
                         static.frame_rate, meta=dict(static.meta))


def concat_static(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    """Framewise fusion of two 13-dim static features into a 26-dim combo."""
    if a.dim != 13 or b.dim != 13:
        raise ValueError(f"combos fuse 13-dim statics, got dims {a.dim} and {b.dim}")
    if a.n_frames != b.n_frames:
        raise ValueError(
            f"frame-count mismatch ({a.n_frames} vs {b.n_frames}); "
            "both inputs must come from the same framing")
    if a.frame_rate != b.frame_rate:
        raise ValueError(f"frame-rate mismatch ({a.frame_rate} vs {b.frame_rate})")
    return FeatureMatrix(np.hstack([a.values, b.values]), "combo", a.frame_rate)


_STATIC_EXTRACTORS = {
    "mfcc": extract_mfcc,
    "gfcc": extract_gfcc,
    "pncc": extract_pncc,
    "plp": extract_plp,
    "lsf": extract_lsf,
}


def extract_static(audio: AudioBuffer, base: str, cfg: FeatureConfig = DEFAULT_CONFIG) -> FeatureMatrix:
    """Static features for one base extractor name."""
    try:
        return _STATIC_EXTRACTORS[base](audio, cfg)
    except KeyError:
        raise ValueError(f"unknown extractor {base!r}; expected one of {sorted(_STATIC_EXTRACTORS)}") from None


def extract(audio: AudioBuffer, kind: str, cfg: FeatureConfig = DEFAULT_CONFIG) -> FeatureMatrix:
    """Extract a full feature kind: cepstral front-ends get deltas (39-dim),
    LSF stays static (10-dim), combos fuse two statics (26-dim)."""
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}; expected one of {FEATURE_KINDS}")
    if "+" in kind:
        first, second = kind.split("+")
        return concat_static(extract_static(audio, first, cfg), extract_static(audio, second, cfg))
    if kind == "lsf":
        return extract_lsf(audio, cfg)
    return add_deltas(extract_static(audio, kind, cfg), cfg.delta_window)


# ---------------------------------------------------------------------------
# feature files

def write_feature(fm: FeatureMatrix, path) -> None:
    """Binary feature file: magic, version u16, label u8, dim u32, n_frames
    u32, frame_rate f32, then row-major f32 values (all little-endian)."""
    header = FEATURE_MAGIC + struct.pack(
        "<HBII f", FEATURE_VERSION, _LABEL_TAGS[fm.label], fm.dim, fm.n_frames, fm.frame_rate)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(fm.values.astype("<f4").tobytes())


def read_feature(path) -> FeatureMatrix:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FEATURE_MAGIC:
            raise ValueError(f"{path}: not a feature file (magic {magic!r})")
        version, tag, dim, n_frames, frame_rate = struct.unpack("<HBII f", f.read(15))
        if version != FEATURE_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(f.read(4 * dim * n_frames), dtype="<f4")
    if data.size != dim * n_frames:
        raise ValueError(f"{path}: truncated feature data")
    return FeatureMatrix(data.reshape(n_frames, dim).astype(np.float64), LABELS[tag], frame_rate)


def write_feature_csv(fm: FeatureMatrix, path) -> None:
    """CSV escape hatch: one header line of <label>_NN column names."""
    header = ",".join(f"{fm.label}_{i:02d}" for i in range(fm.dim))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, fm.values, delimiter=",", header=header, comments="", fmt="%.9g")
