"""Kernel maximum mean discrepancy and the character-level matching loss.

The two-sample statistic is the biased squared MMD: mean kernel within
each sample plus mean kernel within the other, minus twice the cross
mean.  With the linear kernel this collapses to the squared distance
between the sample means, so the default configuration is O(n).  All
values come back with closed-form gradients with respect to every input
vector, ready to be injected into a gradient tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import CharSet
from .errors import (
    EmptyDomainError,
    InvalidShapeError,
    InvalidTranscriptError,
    NoOverlapError,
)

LINEAR = "linear"
RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    kind: str = LINEAR
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in (LINEAR, RBF):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == RBF:
            if self.bandwidth is None or not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise ValueError(f"rbf kernel needs a positive finite bandwidth, got {self.bandwidth}")

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse a config string: "linear" or "rbf:<bandwidth>"."""
        if text == LINEAR:
            return cls(LINEAR)
        if text.startswith("rbf:"):
            return cls(RBF, bandwidth=float(text[4:]))
        raise ValueError(f"unknown kernel spec {text!r}; use 'linear' or 'rbf:<bandwidth>'")

    def __str__(self) -> str:
        return LINEAR if self.kind == LINEAR else f"rbf:{self.bandwidth!r}"


@dataclass(frozen=True)
class LabeledFeatureBag:
    """Feature vectors with parallel character labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.intp)
        if feats.ndim != 2:
            raise InvalidShapeError(f"features must be n x D, got {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise InvalidShapeError("labels must parallel the feature rows")
        if not np.all(np.isfinite(feats)):
            raise InvalidShapeError("features must be finite")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    @classmethod
    def empty(cls, dim: int) -> "LabeledFeatureBag":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.intp))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Kernel value between two vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InvalidShapeError(f"kernel operands {x.shape} vs {y.shape}")
    if spec.kind == LINEAR:
        return float(np.dot(x, y))
    d = x - y
    return float(np.exp(-np.dot(d, d) / (2.0 * spec.bandwidth ** 2)))


def mmd_sq_biased(xs, xt, spec: KernelSpec) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Biased squared MMD between two samples, with gradients.

    Returns (value, (d/dxs, d/dxt)).  The value is clamped below at zero;
    a clamped result carries zero gradients.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    xt = np.atleast_2d(np.asarray(xt, dtype=np.float64))
    if xs.shape[0] == 0 or xt.shape[0] == 0:
        raise EmptyDomainError("mmd needs non-empty samples on both sides")
    if xs.shape[1] != xt.shape[1]:
        raise InvalidShapeError(f"feature dims differ: {xs.shape[1]} vs {xt.shape[1]}")
    m, n = xs.shape[0], xt.shape[0]

    if spec.kind == LINEAR:
        diff = xs.mean(axis=0) - xt.mean(axis=0)
        value = float(np.dot(diff, diff))
        if value <= 0.0:
            return 0.0, (np.zeros_like(xs), np.zeros_like(xt))
        gs = np.tile(2.0 * diff / m, (m, 1))
        gt = np.tile(-2.0 * diff / n, (n, 1))
        return value, (gs, gt)

    bw2 = spec.bandwidth ** 2
    kss = _rbf_matrix(xs, xs, bw2)
    ktt = _rbf_matrix(xt, xt, bw2)
    kst = _rbf_matrix(xs, xt, bw2)
    value = float(kss.mean() + ktt.mean() - 2.0 * kst.mean())
    if value <= 0.0:
        return 0.0, (np.zeros_like(xs), np.zeros_like(xt))
    # d k(x, y)/dx = k * (y - x)/bw^2; within-sample terms appear twice.
    gs = (2.0 / (m * m)) * _rbf_pull(kss, xs, xs, bw2)
    gs -= (2.0 / (m * n)) * _rbf_pull(kst, xs, xt, bw2)
    gt = (2.0 / (n * n)) * _rbf_pull(ktt, xt, xt, bw2)
    gt -= (2.0 / (m * n)) * _rbf_pull(kst.T, xt, xs, bw2)
    return value, (gs, gt)


def _rbf_matrix(a: np.ndarray, b: np.ndarray, bw2: float) -> np.ndarray:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * bw2))


def _rbf_pull(k: np.ndarray, a: np.ndarray, b: np.ndarray, bw2: float) -> np.ndarray:
    """Rows of d(sum k(a_i, b_j))/da_i: sum_j k_ij (b_j - a_i) / bw2."""
    return (k @ b - k.sum(axis=1, keepdims=True) * a) / bw2


def cmatch_loss(src: LabeledFeatureBag, tgt: LabeledFeatureBag, cs: CharSet,
                spec: KernelSpec) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Average per-character squared MMD over characters present in both bags.

    The denominator is the number of matched characters, not the full
    inventory, so sparse batches do not deflate the loss.  Characters
    present on only one side contribute nothing.  Raises NoOverlapError
    when no character appears in both bags.
    """
    if np.any(src.labels == cs.blank_index) or np.any(tgt.labels == cs.blank_index):
        raise InvalidTranscriptError("blank-labeled frames may not enter distribution matching")
    if src.features.shape[1] != tgt.features.shape[1]:
        raise InvalidShapeError(
            f"feature dims differ: {src.features.shape[1]} vs {tgt.features.shape[1]}")

    matched = [c for c in range(cs.size)
               if c != cs.blank_index
               and np.any(src.labels == c) and np.any(tgt.labels == c)]
    if not matched:
        raise NoOverlapError("no character present in both bags")

    total = 0.0
    gs = np.zeros_like(src.features)
    gt = np.zeros_like(tgt.features)
    inv = 1.0 / len(matched)
    for c in matched:
        si = np.flatnonzero(src.labels == c)
        ti = np.flatnonzero(tgt.labels == c)
        value, (dgs, dgt) = mmd_sq_biased(src.features[si], tgt.features[ti], spec)
        total += value
        gs[si] += inv * dgs
        gt[ti] += inv * dgt
    return total * inv, (gs, gt)
