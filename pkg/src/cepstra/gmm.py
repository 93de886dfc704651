"""Diagonal-covariance Gaussian mixture modeling: density evaluation,
k-means++ initialization, EM training, utterance scoring, model files.

Trained models are immutable and shareable; training is deterministic for a
fixed seed (fixed-order reductions only).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

GMM_MAGIC = b"CBGM"
GMM_VERSION = 1

DEGENERATE_WEIGHT = 1e-8


@dataclass(frozen=True)
class GmmModel:
    """K mixture weights, means, and diagonal covariances over d dimensions."""

    weights: np.ndarray    # (K,)
    means: np.ndarray      # (K, d)
    variances: np.ndarray  # (K, d), all positive

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if w.ndim != 1 or m.ndim != 2 or v.shape != m.shape or m.shape[0] != w.shape[0]:
            raise ValueError(f"inconsistent shapes: weights {w.shape}, means {m.shape}, variances {v.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        for arr in (w, m, v):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class TrainReport:
    iterations: int
    log_likelihoods: list
    converged: bool
    reseeded_components: int = 0


def _as_matrix(X) -> np.ndarray:
    values = getattr(X, "values", X)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    return values


def gaussian_logpdf(x, mean, variance) -> float:
    """Log density of a diagonal-covariance Gaussian at x."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance <= 0):
        raise ValueError("variances must be positive")
    d = x.shape[-1]
    quad = np.sum((x - mean) ** 2 / variance, axis=-1)
    return float(-0.5 * (d * np.log(2.0 * np.pi) + np.sum(np.log(variance)) + quad))


def _component_logpdfs(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """(n, K) matrix of log w_j + log N(x | mu_j, var_j)."""
    const = -0.5 * (model.dim * np.log(2.0 * np.pi) + np.sum(np.log(model.variances), axis=1))
    quad = -0.5 * np.sum((X[:, None, :] - model.means[None]) ** 2 / model.variances[None], axis=2)
    return np.log(model.weights)[None, :] + const[None, :] + quad


def gmm_logpdf(model: GmmModel, x) -> float:
    """Log mixture density: log sum_j w_j N(x | mu_j, var_j)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"dimension mismatch: x has {x.shape[-1]}, model has {model.dim}")
    return float(logsumexp(_component_logpdfs(model, x[None, :]), axis=1)[0])


def score_utterance(model: GmmModel, X) -> float:
    """Average per-frame log mixture density over an utterance."""
    X = _as_matrix(X)
    if X.shape[0] == 0:
        raise ValueError("cannot score an empty feature matrix")
    if X.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: features have {X.shape[1]}, model has {model.dim}")
    return float(np.mean(logsumexp(_component_logpdfs(model, X), axis=1)))


def _variance_floor(X: np.ndarray, rel_floor: float) -> np.ndarray:
    global_var = X.var(axis=0)
    positive = global_var[global_var > 0]
    fallback = positive.mean() if positive.size else 1.0
    return rel_floor * np.where(global_var > 0, global_var, fallback)


def kmeans_init(X, K: int, seed: int, n_iter: int = 10, var_floor: float = 1e-4) -> GmmModel:
    """k-means++ seeding plus a few Lloyd iterations; variances come from
    within-cluster scatter, weights from cluster occupancy."""
    X = _as_matrix(X)
    n, d = X.shape
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > n:
        raise ValueError(f"K={K} exceeds {n} data points")
    rng = np.random.default_rng(seed)
    floor = _variance_floor(X, var_floor)

    centers = np.empty((K, d))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.uniform() * total))
            idx = min(idx, n - 1)
        else:  # all remaining points coincide with chosen centers
            idx = int(rng.integers(n))
        centers[k] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))

    for _ in range(n_iter):
        dist = np.sum((X[:, None, :] - centers[None]) ** 2, axis=2)
        assign = dist.argmin(axis=1)
        for k in range(K):
            members = X[assign == k]
            if len(members):
                centers[k] = members.mean(axis=0)
            else:  # re-seed an empty cluster on the globally farthest point
                centers[k] = X[dist.min(axis=1).argmax()]

    dist = np.sum((X[:, None, :] - centers[None]) ** 2, axis=2)
    assign = dist.argmin(axis=1)
    counts = np.bincount(assign, minlength=K).astype(np.float64)
    weights = np.maximum(counts, 1.0)
    weights /= weights.sum()
    variances = np.empty((K, d))
    for k in range(K):
        members = X[assign == k]
        scatter = members.var(axis=0) if len(members) else np.zeros(d)
        variances[k] = np.maximum(scatter, floor)
    return GmmModel(weights, centers, variances)


def train_em(X, K: int, seed: int, max_iter: int = 100, tol: float = 1e-5,
             var_floor: float = 1e-4) -> tuple[GmmModel, TrainReport]:
    """Fit a K-component diagonal GMM by EM with k-means initialization.

    Stops when the average per-frame log-likelihood improves by less than tol
    or after max_iter iterations.  Variances are floored at var_floor times
    the per-dimension global variance; components whose weight collapses are
    re-seeded from the highest-variance component.
    """
    X = _as_matrix(X)
    n, d = X.shape
    if n == 0:
        raise ValueError("no training data")
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < 10 * K:
        raise ValueError(f"only {n} frames for K={K}; need >= {10 * K} (use a smaller K)")
    floor = _variance_floor(X, var_floor)
    rng = np.random.default_rng(seed)

    model = kmeans_init(X, K, seed, var_floor=var_floor)
    weights = model.weights.copy()
    means = model.means.copy()
    variances = model.variances.copy()

    history = []
    converged = False
    reseeded = 0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        model = GmmModel(weights, means, variances)
        log_joint = _component_logpdfs(model, X)
        log_norm = logsumexp(log_joint, axis=1)
        history.append(float(log_norm.mean()))

        resp = np.exp(log_joint - log_norm[:, None])
        nk = resp.sum(axis=0)
        weights = nk / n
        safe_nk = np.maximum(nk, np.finfo(np.float64).tiny)
        means = (resp.T @ X) / safe_nk[:, None]
        variances = (resp.T @ X**2) / safe_nk[:, None] - means**2
        variances = np.maximum(variances, floor)

        for k in np.nonzero(weights < DEGENERATE_WEIGHT)[0]:
            donor = int(np.argmax(variances.sum(axis=1)))
            means[k] = means[donor] + rng.standard_normal(d) * np.sqrt(variances[donor]) * 0.1
            variances[k] = variances[donor]
            weights[k] = weights[donor] / 2.0
            weights[donor] /= 2.0
            reseeded += 1
        weights = weights / weights.sum()

        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break

    final = GmmModel(weights, means, variances)
    return final, TrainReport(iterations, history, converged, reseeded)


def write_gmm(model: GmmModel, path) -> None:
    """Binary model file: magic, version u16, K u32, d u32, then weights,
    means, variances as row-major little-endian f64."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(GMM_MAGIC + struct.pack("<HII", GMM_VERSION, model.n_components, model.dim))
        f.write(model.weights.astype("<f8").tobytes())
        f.write(model.means.astype("<f8").tobytes())
        f.write(model.variances.astype("<f8").tobytes())


def read_gmm(path) -> GmmModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != GMM_MAGIC:
            raise ValueError(f"{path}: not a GMM model file (magic {magic!r})")
        version, K, d = struct.unpack("<HII", f.read(10))
        if version != GMM_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = f.read(8 * (K + 2 * K * d))
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != K + 2 * K * d:
        raise ValueError(f"{path}: truncated model data")
    weights = data[:K]
    means = data[K:K + K * d].reshape(K, d)
    variances = data[K + K * d:].reshape(K, d)
    return GmmModel(weights, means, variances)
