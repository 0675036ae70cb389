"""Metric primitives the detector formulas are assembled from.

All functions are pure and deterministic (the mutual-information estimator
is seeded through its config), so they can be mapped over records in
parallel without coordination.

Similarity is cosine. Detector thresholds operate on the clamped scale
(1 + cos)/2 in [0, 1]: 0 antipodal, 0.5 orthogonal, 1 identical.
"""

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI_E = math.log(2.0 * math.pi * math.e)


class MetricError(ValueError):
    """Metric preconditions violated (zero vector, empty input, ...)."""


class InsufficientDataError(MetricError):
    """Too few samples for the requested estimate."""


@dataclass(frozen=True)
class SimilarityConfig:
    kind: str = "cosine"
    clamp: bool = True

    def __post_init__(self):
        if self.kind != "cosine":
            raise MetricError(f"unsupported similarity kind {self.kind!r}")


@dataclass(frozen=True)
class MIEstimatorConfig:
    """Random projection followed by equal-width binning and a plug-in
    estimate. Adequate for the near-zero versus clearly-positive decisions
    the detectors make; not a calibrated MI estimator."""

    num_bins_per_axis: int = 4
    projection_dims: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_bins_per_axis < 2:
            raise MetricError("need at least 2 bins per axis")
        if self.projection_dims < 1:
            raise MetricError("projection_dims must be positive")

    @property
    def joint_cells(self):
        return self.num_bins_per_axis ** self.projection_dims

    @property
    def min_samples(self):
        return 4 * self.joint_cells ** 2


def clamp01(x):
    return float(min(1.0, max(0.0, x)))


def sim(a, b, cfg=SimilarityConfig()):
    """Cosine similarity; clamped to [0,1] via (1+cos)/2 when cfg.clamp."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise MetricError("similarity undefined for a zero vector")
    c = float(np.dot(a, b) / (na * nb))
    c = min(1.0, max(-1.0, c))
    return (1.0 + c) / 2.0 if cfg.clamp else c


def fluency(token_logprobs):
    """Geometric-mean token probability exp(mean log p) in (0, 1]."""
    lp = np.asarray(token_logprobs, dtype=float)
    if lp.size == 0:
        raise MetricError("fluency of an empty token sequence")
    if np.any(lp > 0.0) or not np.all(np.isfinite(lp)):
        raise MetricError("log-probabilities must be finite and <= 0")
    return float(math.exp(lp.mean()))


def _as_sample_matrix(xs):
    arr = np.asarray(xs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise MetricError("expected a sequence of vectors")
    return arr


def _bin_indices(projected, bins):
    n, k = projected.shape
    idx = np.zeros(n, dtype=np.int64)
    for j in range(k):
        col = projected[:, j]
        lo, hi = float(col.min()), float(col.max())
        if hi <= lo:
            b = np.zeros(n, dtype=np.int64)
        else:
            b = np.minimum((bins * (col - lo) / (hi - lo)).astype(np.int64),
                           bins - 1)
        idx = idx * bins + b
    return idx


def mutual_information(xs, ys, cfg=MIEstimatorConfig()):
    """Plug-in MI (nats) of jointly binned random projections of paired
    samples. Nonnegative; deterministic given cfg.seed."""
    X = _as_sample_matrix(xs)
    Y = _as_sample_matrix(ys)
    if X.shape[0] != Y.shape[0]:
        raise MetricError("paired samples must have equal length")
    n = X.shape[0]
    if n < cfg.min_samples:
        raise InsufficientDataError(
            f"need >= {cfg.min_samples} samples for "
            f"{cfg.num_bins_per_axis} bins x {cfg.projection_dims} dims, "
            f"got {n}")
    rng = np.random.default_rng(cfg.seed)
    px = rng.standard_normal((X.shape[1], cfg.projection_dims))
    py = rng.standard_normal((Y.shape[1], cfg.projection_dims))
    iu = _bin_indices(X @ px, cfg.num_bins_per_axis)
    iv = _bin_indices(Y @ py, cfg.num_bins_per_axis)
    cells = cfg.joint_cells
    joint = np.bincount(iu * cells + iv, minlength=cells * cells) / n
    pu = joint.reshape(cells, cells).sum(axis=1)
    pv = joint.reshape(cells, cells).sum(axis=0)
    mask = joint > 0
    outer = np.outer(pu, pv).ravel()
    mi = float(np.sum(joint[mask] * np.log(joint[mask] / outer[mask])))
    return max(0.0, mi)


def coherence(claim_embeddings, kb, cfg=SimilarityConfig()):
    """Mean over claims of the max clamped similarity to any KB entry.

    Always computed on the clamped [0,1] scale so the score is a coherence
    fraction comparable to tau_C.
    """
    claims = list(claim_embeddings)
    if not claims:
        raise MetricError("coherence needs at least one claim")
    matrix = kb.embedding_matrix()
    if matrix.size == 0:
        raise MetricError("coherence against an empty knowledge base")
    clamped = SimilarityConfig(kind=cfg.kind, clamp=True)
    total = 0.0
    for claim in claims:
        total += max(sim(claim, entry, clamped) for entry in matrix)
    return total / len(claims)


def avg_pairwise_similarity(vectors):
    """Mean raw cosine over all unordered pairs; needs >= 2 vectors."""
    vecs = list(vectors)
    t = len(vecs)
    if t < 2:
        raise MetricError("average pairwise similarity needs >= 2 vectors")
    raw = SimilarityConfig(clamp=False)
    total = 0.0
    for i in range(t):
        for j in range(i + 1, t):
            total += sim(vecs[i], vecs[j], raw)
    return total * 2.0 / (t * (t - 1))


def semantic_entropy(embeddings, ridge=0.0):
    """Gaussian differential entropy 0.5 log((2 pi e)^d det(Sigma + ridge I))
    of the sample covariance. May be negative; callers that need a
    monotone signal use its slope over time."""
    E = _as_sample_matrix(embeddings)
    n, d = E.shape
    if ridge < 0.0:
        raise MetricError("ridge must be >= 0")
    if ridge == 0.0 and n < d + 1:
        raise InsufficientDataError(
            f"need >= d+1 = {d + 1} samples for a full-rank covariance "
            f"(got {n}); pass ridge > 0 otherwise")
    if n < 2:
        cov = np.zeros((d, d))
    else:
        cov = np.atleast_2d(np.cov(E, rowvar=False, ddof=1))
    sigma = cov + ridge * np.eye(d)
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0 or not math.isfinite(logdet):
        raise MetricError("singular covariance; pass ridge > 0")
    return float(0.5 * (d * LOG_2PI_E + logdet))


def contextual_distance(c_t, c_tk):
    """Euclidean distance between two context vectors."""
    a = np.asarray(c_t, dtype=float)
    b = np.asarray(c_tk, dtype=float)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def windowed_slope(series, window=5):
    """Least-squares slope of the last `window` points of a series.

    Robust single-number time derivative; used wherever a detector needs
    the sign of dD_avg/dt or dH_t/dt.
    """
    y = np.asarray(series, dtype=float)
    if y.size < 2:
        raise InsufficientDataError("slope needs >= 2 points")
    if window >= 2:
        y = y[-window:]
    x = np.arange(y.size, dtype=float)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
