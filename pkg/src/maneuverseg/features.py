"""Fixed-length segment features and a PCA fitted by deflated power iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, SegmentTooShort, ShapeMismatch
from .telemetry import Segment

N_FEATURES = 50


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    source_segment: Segment | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (N_FEATURES,):
            raise ShapeMismatch(f"feature vector must have {N_FEATURES} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def resample(signal, n_points: int = N_FEATURES) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.size < 2:
        raise SegmentTooShort(f"need at least 2 samples to resample, got {x.size}")
    if x.size == n_points:
        return x.copy()
    pos = np.linspace(0.0, x.size - 1, n_points)
    return np.interp(pos, np.arange(x.size), x)


def resample_to_fixed(segment_signal, source_segment: Segment | None = None) -> FeatureVector:
    """Linear interpolation onto 50 evenly spaced points from the first to the last sample."""
    return FeatureVector(resample(segment_signal), source_segment)


def segment_features(signal, segments) -> np.ndarray:
    """Stack the resampled slices of ``signal`` into an ``(n, 50)`` matrix."""
    x = np.asarray(signal, dtype=np.float64)
    rows = [resample(x[s.start_idx : s.end_idx]) for s in segments]
    return np.array(rows).reshape(len(rows), N_FEATURES)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows orthonormal
    explained_variance: np.ndarray
    total_variance: float = 0.0

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.size:
            raise ShapeMismatch(f"expected {self.mean.size} features, got {x.shape[-1]}")
        return (x - self.mean) @ self.components.T

    def inverse_transform(self, y) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) @ self.components + self.mean

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance


def _as_matrix(vectors) -> np.ndarray:
    rows = [v.values if isinstance(v, FeatureVector) else v for v in vectors]
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)


def top_eigenpairs(cov: np.ndarray, k: int, tol: float = 1e-10, max_iter: int = 10_000):
    """Leading ``k`` eigenpairs of a symmetric PSD matrix by power iteration with deflation.

    Iteration stops once the eigen-residual ``|C v - lambda v|`` falls below
    ``tol`` times the trace. Each vector is re-orthogonalized against the ones
    already found, so repeated eigenvalues still yield an orthonormal set.
    """
    d = cov.shape[0]
    scale = max(float(np.trace(cov)), 1e-300)
    vals = np.zeros(k)
    vecs = np.zeros((k, d))

    def deflate(v, i):
        for _ in range(2):
            v = v - vecs[:i].T @ (vecs[:i] @ v)
        return v

    # deterministic start that is unlikely to be orthogonal to any eigenvector
    start = np.cos(np.arange(1, d + 1) * 0.7) + 1.0 / d
    for i in range(k):
        v = deflate(start, i)
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = deflate(cov @ v, i)
            lam = float(v @ w)
            if np.linalg.norm(w) <= 1e-13 * scale:
                break  # v lies in the null space
            if np.linalg.norm(w - lam * v) <= tol * scale:
                break
            v = w / np.linalg.norm(w)
        v = deflate(v, i)
        n = np.linalg.norm(v)
        if n < 0.5:
            # round-off swallowed v: fall back to any direction orthogonal to the found ones
            for e in np.eye(d):
                cand = deflate(e, i)
                if np.linalg.norm(cand) > 0.5:
                    v, n = cand, np.linalg.norm(cand)
                    break
        v /= n
        vals[i] = max(float(v @ cov @ v), 0.0)
        vecs[i] = v
    # power iteration finds pairs in magnitude order; make the ordering explicit
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[order]
    for row in vecs:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return vals, vecs


def pca_fit(vectors, n_components: int) -> PcaModel:
    x = _as_matrix(vectors)
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if x.shape[0] < n_components or x.shape[0] < 2:
        raise InsufficientData(f"{x.shape[0]} vectors cannot support {n_components} components")
    if n_components > x.shape[1]:
        raise ValueError(f"n_components exceeds dimension {x.shape[1]}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    vals, vecs = top_eigenpairs(cov, n_components)
    return PcaModel(mean, vecs, vals, float(np.trace(cov)))


def pca_transform(model: PcaModel, v) -> np.ndarray:
    return model.transform(v.values if isinstance(v, FeatureVector) else v)
