"""Shared transforms: STFT power spectrum, DCT-II, mel and gammatone
filterbanks, ERB scale, autocorrelation, Levinson-Durbin.

Everything here is stateless; FilterBank values are immutable and shareable.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.fft

from .audio import FrameSequence

DEFAULT_FFT_SIZE = 512


class UnstableFilterError(ValueError):
    """Levinson-Durbin hit a reflection coefficient with |k| >= 1."""


@dataclass(frozen=True)
class FilterBank:
    """Bank of frequency-domain weight rows on an FFT bin grid."""

    weights: np.ndarray       # (n_channels, n_bins), nonnegative
    center_freqs: np.ndarray  # Hz, strictly increasing
    kind: str                 # "mel-triangular" | "gammatone-magnitude"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        cf = np.asarray(self.center_freqs, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != cf.shape[0]:
            raise ValueError(f"weights {w.shape} inconsistent with {cf.shape[0]} center freqs")
        if np.any(w < 0):
            raise ValueError("filterbank weights must be nonnegative")
        if np.any(np.diff(cf) <= 0):
            raise ValueError("center frequencies must be strictly increasing")
        if np.any(w.max(axis=1) <= 0):
            raise ValueError("every filter row needs at least one positive weight")
        w.setflags(write=False)
        cf.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "center_freqs", cf)

    @property
    def n_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class PowerSpectrumSequence:
    """|DFT|^2 per frame for bins 0..fft_size/2."""

    values: np.ndarray  # (n_frames, n_bins)
    bin_hz: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-D, got {v.shape}")
        if v.size and (not np.all(np.isfinite(v)) or np.any(v < 0)):
            raise ValueError("power spectrum values must be finite and nonnegative")
        object.__setattr__(self, "values", v)


def power_spectrum(frames: FrameSequence, fft_size: int = DEFAULT_FFT_SIZE) -> PowerSpectrumSequence:
    """Squared-magnitude rfft of each frame, zero-padded to fft_size."""
    if fft_size < frames.frame_len:
        raise ValueError(f"fft_size {fft_size} < frame length {frames.frame_len}")
    if fft_size & (fft_size - 1):
        raise ValueError(f"fft_size must be a power of two, got {fft_size}")
    spec = np.fft.rfft(frames.frames, n=fft_size, axis=1)
    power = spec.real**2 + spec.imag**2
    return PowerSpectrumSequence(power, frames.sample_rate / fft_size)


def dct_ii(x: np.ndarray, n_out: int) -> np.ndarray:
    """Orthonormal DCT-II along the last axis, truncated to n_out coefficients."""
    x = np.asarray(x, dtype=np.float64)
    if n_out > x.shape[-1]:
        raise ValueError(f"n_out {n_out} exceeds input length {x.shape[-1]}")
    return scipy.fft.dct(x, type=2, norm="ortho", axis=-1)[..., :n_out]


def mel_scale(f):
    """Hz to mel: 2595 * log10(1 + f/700)."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be nonnegative")
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_inverse(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, fft_size: int, sample_rate: int,
                   f_min: float = 0.0, f_max: float | None = None) -> FilterBank:
    """Triangular filters with apexes equally spaced on the mel scale."""
    if f_max is None:
        f_max = sample_rate / 2.0
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    if not 0 <= f_min < f_max <= sample_rate / 2.0:
        raise ValueError(f"need 0 <= f_min < f_max <= Nyquist, got ({f_min}, {f_max}) at rate {sample_rate}")
    edges_mel = np.linspace(mel_scale(f_min), mel_scale(f_max), n_filters + 2)
    edges_hz = _mel_inverse(edges_mel)
    bins_hz = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, center, hi = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    up = (bins_hz - lo) / (center - lo)
    down = (hi - bins_hz) / (hi - center)
    weights = np.maximum(0.0, np.minimum(up, down))
    return FilterBank(weights, edges_hz[1:-1], "mel-triangular")


def erb(f):
    """Equivalent rectangular bandwidth in Hz: 24.7 * (4.37*f/1000 + 1)."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be nonnegative")
    return 24.7 * (4.37 * f / 1000.0 + 1.0)


_ERB_C = 24.7 * 4.37 / 1000.0


def _erb_rate(f):
    # integral of 1/erb(f) df
    return np.log1p(np.asarray(f, dtype=np.float64) * 4.37 / 1000.0) / _ERB_C


def _erb_rate_inverse(e):
    return np.expm1(np.asarray(e, dtype=np.float64) * _ERB_C) * 1000.0 / 4.37


def gammatone_filterbank(n_channels: int, sample_rate: int, f_min: float = 50.0,
                         f_max: float | None = None, order: int = 4,
                         fft_size: int = DEFAULT_FFT_SIZE) -> FilterBank:
    """Magnitude responses of gammatone filters sampled on the FFT bin grid.

    Center frequencies sit at interior points equally spaced on the ERB-rate
    scale between f_min and f_max; each channel's decay is 1.019*ERB(fc) and
    its row is peak-normalized to 1.  The response is the analytic Fourier
    transform of t^(order-1) * exp(-2 pi b t) * cos(2 pi fc t) for t >= 0.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    if f_max is None:
        f_max = sample_rate / 2.0
    if not 0 <= f_min < f_max <= sample_rate / 2.0:
        raise ValueError(f"need 0 <= f_min < f_max <= Nyquist, got ({f_min}, {f_max}) at rate {sample_rate}")
    e_lo, e_hi = _erb_rate(f_min), _erb_rate(f_max)
    centers = _erb_rate_inverse(e_lo + np.arange(1, n_channels + 1) * (e_hi - e_lo) / (n_channels + 1))
    bins_hz = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    b = 1.019 * erb(centers)
    two_pi = 2.0 * np.pi
    pos = (two_pi * b[:, None] + 1j * two_pi * (bins_hz - centers[:, None])) ** (-order)
    neg = (two_pi * b[:, None] + 1j * two_pi * (bins_hz + centers[:, None])) ** (-order)
    mag = np.abs(0.5 * factorial(order - 1) * (pos + neg))
    weights = mag / mag.max(axis=1, keepdims=True)
    return FilterBank(weights, centers, "gammatone-magnitude")


def apply_filterbank(spec: PowerSpectrumSequence, bank: FilterBank) -> np.ndarray:
    """Per-frame channel energies: (n_frames, n_channels) matrix product."""
    if spec.values.shape[1] != bank.n_bins:
        raise ValueError(f"spectrum has {spec.values.shape[1]} bins, bank expects {bank.n_bins}")
    return spec.values @ bank.weights.T


def autocorrelation(frame: np.ndarray, max_lag: int) -> np.ndarray:
    """Raw autocorrelation r[k] = sum_n x[n] x[n+k] for k = 0..max_lag."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[0]
    if max_lag >= n:
        raise ValueError(f"max_lag {max_lag} must be < frame length {n}")
    return np.array([frame[:n - k] @ frame[k:] for k in range(max_lag + 1)])


def _levinson_batch(r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """levinson_durbin across rows of r (n, order+1): (lpc, gain, ok).

    Rows with r[0] <= 0 or a reflection coefficient at or beyond 1 are
    flagged False in ok and hold unusable coefficients.
    """
    r = np.asarray(r, dtype=np.float64)
    n, p1 = r.shape
    order = p1 - 1
    a = np.zeros((n, order + 1))
    a[:, 0] = 1.0
    err = r[:, 0].copy()
    ok = err > 0
    err[~ok] = 1.0  # keep the arithmetic finite on dead rows
    for i in range(1, order + 1):
        acc = r[:, i] + np.einsum("nj,nj->n", a[:, 1:i], r[:, i - 1:0:-1])
        k = -acc / err
        ok &= np.isfinite(k) & (np.abs(k) < 1.0)
        k = np.where(ok, k, 0.0)
        a[:, 1:i + 1] = np.concatenate(
            [a[:, 1:i] + k[:, None] * a[:, i - 1:0:-1], k[:, None]], axis=1)
        err *= 1.0 - k * k
    return -a[:, 1:], err, ok


def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve the Toeplitz normal equations for an order-p forward predictor.

    Returns (lpc, reflection, gain) where x[n] ~ sum_k lpc[k] x[n-k-1] and
    gain is the final prediction error energy.  The inverse filter
    1 - sum_k lpc[k] z^-(k+1) is minimum phase for positive-definite r.
    """
    r = np.asarray(r, dtype=np.float64)
    if len(r) < order + 1:
        raise ValueError(f"need {order + 1} autocorrelation lags, got {len(r)}")
    if r[0] <= 0:
        raise ValueError(f"r[0] must be positive, got {r[0]}")
    a = np.zeros(order + 1)  # A(z) = 1 + a[1] z^-1 + ... (inverse-filter convention)
    a[0] = 1.0
    reflection = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + a[1:i] @ r[1:i][::-1]
        k = -acc / err
        if not np.isfinite(k) or abs(k) >= 1.0:
            raise UnstableFilterError(f"reflection coefficient |k|={abs(k):.6g} >= 1 at stage {i}")
        reflection[i - 1] = k
        a[1:i + 1] = np.concatenate([a[1:i] + k * a[1:i][::-1], [k]])
        err *= 1.0 - k * k
    return -a[1:], reflection, err
