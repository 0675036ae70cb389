"""Holonorm map, holonorm transformer block, and numerical verification of
its determinant and density-transformation identities.

The holonorm map hn(x) = x / (1 + ||x||) is a bijection from R^D onto the
open unit ball; it serves both as the pre-attention normalization and as
the feedforward nonlinearity of the block

    z_l = (id + f o hn) o (id + MHA o hn)(z_{l-1}),

with f(x) = W2 hn(W1 x + b1) + b2 and MHA standard scaled dot-product
multihead self-attention. No positional encoding is added, so the forward
map is permutation equivariant.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class HolonormError(ValueError):
    pass


def hn(x):
    """x / (1 + ||x||); maps R^D into the open unit ball, preserving
    direction. Total function; hn(0) = 0."""
    x = np.asarray(x, dtype=float)
    return x / (1.0 + np.linalg.norm(x))


def hn_rows(matrix):
    """Row-wise holonorm of an (n, d) matrix."""
    m = np.asarray(matrix, dtype=float)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / (1.0 + norms)


def inverse_hn(y, guard=1e-12):
    """y / (1 - ||y||), the inverse of hn, valid for ||y|| < 1."""
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(y))
    if r >= 1.0 - guard:
        raise HolonormError(f"inverse holonorm undefined at ||y|| = {r} "
                            f">= 1 - {guard}")
    return y / (1.0 - r)


def det_jacobian_inverse_hn(y):
    """det of the Jacobian of inverse_hn at y: (1 - ||y||)^-(D+1)."""
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(y))
    if r >= 1.0:
        raise HolonormError(f"||y|| = {r} outside the unit ball")
    d = y.size
    return (1.0 - r) ** (-(d + 1))


def finite_difference_jacobian_det(func, y, h=1e-6):
    """Central-difference Jacobian determinant; the independent oracle for
    det_jacobian_inverse_hn."""
    y = np.asarray(y, dtype=float)
    d = y.size
    jac = np.empty((d, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        jac[:, j] = (func(y + step) - func(y - step)) / (2.0 * h)
    return float(np.linalg.det(jac))


def matrix_determinant_lemma_check(alpha, beta, u):
    """Compare det(alpha I + beta u u^T) computed densely (LU) against the
    rank-one update identity alpha^(D-1) (alpha + beta ||u||^2).

    Returns (lhs, rhs, absolute error).
    """
    if alpha == 0.0:
        raise HolonormError("alpha must be nonzero")
    u = np.asarray(u, dtype=float)
    d = u.size
    dense = alpha * np.eye(d) + beta * np.outer(u, u)
    lhs = float(np.linalg.det(dense))
    rhs = float(alpha ** (d - 1) * (alpha + beta * float(u @ u)))
    return lhs, rhs, abs(lhs - rhs)


# --- the transformer block ----------------------------------------------------


@dataclass(eq=False)
class HolonormLayer:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray   # (d_ff, D)
    b1: np.ndarray
    w2: np.ndarray   # (D, d_ff)
    b2: np.ndarray


@dataclass(eq=False)
class HolonormModel:
    """Parameters of an L-layer holonorm transformer.

    degenerate_qkv replaces every token's query/key/value vectors with the
    fixed constants const_q/k/v, making the attention sublayer an
    input-independent map (the degeneracy the constant-parameter checks
    exercise). Parameters are seeded uniform(-1/sqrt(D), 1/sqrt(D)).
    """

    num_layers: int
    model_dim: int
    num_heads: int
    ff_dim: int
    layers: tuple
    seed: int
    degenerate_qkv: bool = False
    const_q: Optional[np.ndarray] = None
    const_k: Optional[np.ndarray] = None
    const_v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.model_dim % self.num_heads != 0:
            raise HolonormError(f"num_heads {self.num_heads} must divide "
                                f"model_dim {self.model_dim}")
        for layer in self.layers:
            if layer.wq.shape != (self.model_dim, self.model_dim):
                raise HolonormError("attention projection shape mismatch")
            if layer.w1.shape != (self.ff_dim, self.model_dim):
                raise HolonormError("w1 shape mismatch")
            if layer.w2.shape != (self.model_dim, self.ff_dim):
                raise HolonormError("w2 shape mismatch")

    @classmethod
    def build(cls, num_layers, model_dim, num_heads, ff_dim, seed,
              degenerate_qkv=False):
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(model_dim)

        def mat(rows, cols):
            return rng.uniform(-scale, scale, size=(rows, cols))

        layers = []
        for _ in range(num_layers):
            layers.append(HolonormLayer(
                wq=mat(model_dim, model_dim), wk=mat(model_dim, model_dim),
                wv=mat(model_dim, model_dim), wo=mat(model_dim, model_dim),
                w1=mat(ff_dim, model_dim),
                b1=rng.uniform(-scale, scale, size=ff_dim),
                w2=mat(model_dim, ff_dim),
                b2=rng.uniform(-scale, scale, size=model_dim)))
        return cls(num_layers=num_layers, model_dim=model_dim,
                   num_heads=num_heads, ff_dim=ff_dim, layers=tuple(layers),
                   seed=seed, degenerate_qkv=degenerate_qkv,
                   const_q=rng.uniform(-scale, scale, size=model_dim),
                   const_k=rng.uniform(-scale, scale, size=model_dim),
                   const_v=rng.uniform(-scale, scale, size=model_dim))


def _softmax_rows(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def multihead_attention(layer, inputs, num_heads, degenerate=False,
                        constants=None):
    """Scaled dot-product multihead self-attention with output projection.

    inputs: (n, D) already holonorm-normalized rows. In degenerate mode
    the per-token q/k/v vectors are replaced by the fixed constants, so
    the result does not depend on the inputs.
    """
    n, d = inputs.shape
    if degenerate:
        cq, ck, cv = constants
        q = np.tile(cq, (n, 1))
        k = np.tile(ck, (n, 1))
        v = np.tile(cv, (n, 1))
    else:
        q = inputs @ layer.wq.T
        k = inputs @ layer.wk.T
        v = inputs @ layer.wv.T
    head_dim = d // num_heads
    out = np.empty_like(q)
    for h in range(num_heads):
        sl = slice(h * head_dim, (h + 1) * head_dim)
        scores = (q[:, sl] @ k[:, sl].T) / math.sqrt(head_dim)
        out[:, sl] = _softmax_rows(scores) @ v[:, sl]
    return out @ layer.wo.T


def feedforward(layer, x):
    """Pointwise two-layer map W2 hn(W1 x + b1) + b2 on a (n, D) batch."""
    pre = x @ layer.w1.T + layer.b1
    return hn_rows(pre) @ layer.w2.T + layer.b2


def attention_sublayer_output(model, layer_index, tokens):
    """The MHA o hn sublayer value (before the residual add) at one layer;
    the quantity the degeneracy check compares across probe inputs."""
    z = np.asarray(tokens, dtype=float)
    layer = model.layers[layer_index]
    constants = (model.const_q, model.const_k, model.const_v)
    return multihead_attention(layer, hn_rows(z), model.num_heads,
                               degenerate=model.degenerate_qkv,
                               constants=constants)


def forward(model, tokens):
    """Apply all layers: z <- z + MHA(hn(z)); z <- z + f(hn(z))."""
    z = np.asarray(tokens, dtype=float)
    if z.ndim != 2 or z.shape[0] == 0:
        raise HolonormError("tokens must be a nonempty (n, D) array")
    if z.shape[1] != model.model_dim:
        raise HolonormError(f"token dim {z.shape[1]} != model dim "
                            f"{model.model_dim}")
    constants = (model.const_q, model.const_k, model.const_v)
    for layer in model.layers:
        z = z + multihead_attention(layer, hn_rows(z), model.num_heads,
                                    degenerate=model.degenerate_qkv,
                                    constants=constants)
        z = z + feedforward(layer, hn_rows(z))
    return z


def constant_param_degeneracy_check(model, probe_inputs, tol=1e-12):
    """Evaluate the input-insensitivity of the degenerate attention sublayer.

    In degenerate mode the MHA o hn sublayer must emit identical values on
    all equal-length probes (max abs difference <= tol); with live
    parameters the same probes must produce distinct sublayer outputs. The
    residual path still transmits the input, so full-block outputs are
    reported separately rather than asserted constant. The feedforward
    sublayer is pointwise: a token's value must be unchanged when the
    other tokens are permuted around it.
    """
    probes = [np.asarray(p, dtype=float) for p in probe_inputs]
    if len(probes) < 2:
        raise HolonormError("need >= 2 probe inputs")
    lengths = {p.shape for p in probes}
    if len(lengths) > 1:
        raise HolonormError(f"probe shapes differ: {sorted(lengths)}")

    degenerate = HolonormModel(
        num_layers=model.num_layers, model_dim=model.model_dim,
        num_heads=model.num_heads, ff_dim=model.ff_dim, layers=model.layers,
        seed=model.seed, degenerate_qkv=True, const_q=model.const_q,
        const_k=model.const_k, const_v=model.const_v)
    live = HolonormModel(
        num_layers=model.num_layers, model_dim=model.model_dim,
        num_heads=model.num_heads, ff_dim=model.ff_dim, layers=model.layers,
        seed=model.seed, degenerate_qkv=False, const_q=model.const_q,
        const_k=model.const_k, const_v=model.const_v)

    deg_outputs = [attention_sublayer_output(degenerate, 0, p)
                   for p in probes]
    max_deg_diff = max(float(np.abs(a - deg_outputs[0]).max())
                       for a in deg_outputs[1:])

    live_outputs = [attention_sublayer_output(live, 0, p) for p in probes]
    min_live_diff = min(float(np.abs(live_outputs[i] - live_outputs[j]).max())
                        for i in range(len(probes))
                        for j in range(i + 1, len(probes)))

    full_outputs = [forward(degenerate, p) for p in probes]
    max_full_diff = max(float(np.abs(a - full_outputs[0]).max())
                        for a in full_outputs[1:])

    # pointwise feedforward: permuting the other tokens must not move a
    # token's sublayer value
    probe = probes[0]
    n = probe.shape[0]
    perm = np.roll(np.arange(n), 1)
    ff_base = feedforward(model.layers[0], hn_rows(probe))
    ff_perm = feedforward(model.layers[0], hn_rows(probe[perm]))
    ff_consistent = float(np.abs(ff_perm - ff_base[perm]).max()) == 0.0

    return {"probes": len(probes),
            "degenerate_mha_constant": max_deg_diff <= tol,
            "max_degenerate_mha_diff": max_deg_diff,
            "live_mha_distinct": min_live_diff > tol,
            "min_live_mha_diff": min_live_diff,
            "max_degenerate_full_block_diff": max_full_diff,
            "residual_path_transmits_input": max_full_diff > tol,
            "feedforward_pointwise_consistent": ff_consistent,
            "tolerance": tol}


# --- density transformation ----------------------------------------------------


@dataclass(frozen=True)
class DensityCheckConfig:
    """Monte-Carlo check of the pushforward density of hn under a standard
    normal source."""

    dimension: int
    samples: int = 100_000
    bins_per_axis: Optional[int] = None
    seed: int = 0
    tolerance: float = 0.1
    min_bin_count: int = 50

    def __post_init__(self):
        if self.dimension < 1:
            raise HolonormError("dimension must be >= 1")
        if self.samples < 10_000:
            raise HolonormError("acceptance runs need >= 10^4 samples")

    def default_bins(self):
        if self.bins_per_axis is not None:
            return self.bins_per_axis
        return {1: 40, 2: 20}.get(self.dimension, 8)


def standard_normal_logpdf_radius2(r2, d):
    return -0.5 * (d * math.log(2.0 * math.pi) + r2)


def holonorm_density(y):
    """The transformed density p_Y(y) = p_X(y/(1-||y||)) (1-||y||)^-(D+1)
    for X standard normal, y inside the unit ball."""
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(y))
    if r >= 1.0:
        return 0.0
    d = y.size
    x = y / (1.0 - r)
    log_px = standard_normal_logpdf_radius2(float(x @ x), d)
    return math.exp(log_px) * (1.0 - r) ** (-(d + 1))


def density_transform_check(cfg):
    """Histogram Y = hn(X) over the unit ball and compare the empirical bin
    densities against the closed-form transformed density at bin centers.

    The error statistic is the mean absolute relative error over bins
    holding at least min_bin_count samples; the check passes when it is
    at or below cfg.tolerance. If no bin reaches the count floor the bins
    are widened (halved per axis) and the report notes it.
    """
    start = time.perf_counter()
    d = cfg.dimension
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((cfg.samples, d))
    y = x / (1.0 + np.linalg.norm(x, axis=1, keepdims=True))
    inside = float(np.mean(np.linalg.norm(y, axis=1) < 1.0))

    bins = cfg.default_bins()
    widened = False
    notes = []
    while True:
        edges = [np.linspace(-1.0, 1.0, bins + 1)] * d
        counts, _ = np.histogramdd(y, bins=edges)
        width = 2.0 / bins
        volume = width ** d
        centers_1d = np.linspace(-1.0 + width / 2.0, 1.0 - width / 2.0, bins)
        grids = np.meshgrid(*([centers_1d] * d), indexing="ij")
        centers = np.stack([g.ravel() for g in grids], axis=1)
        flat_counts = counts.ravel()
        mask = flat_counts >= cfg.min_bin_count
        if mask.any() or bins <= 4:
            break
        bins //= 2
        widened = True
        notes.append(f"no bin reached {cfg.min_bin_count} samples; "
                     f"widened to {bins} bins per axis")
    if not mask.any():
        raise HolonormError("density check: no bin holds enough samples")

    rel_errors = []
    for count, center in zip(flat_counts[mask], centers[mask]):
        theory = holonorm_density(center)
        if theory <= 0.0:
            continue
        empirical = count / (cfg.samples * volume)
        rel_errors.append(abs(empirical - theory) / theory)
    mean_rel_error = float(np.mean(rel_errors))
    return {"dimension": d,
            "samples": cfg.samples,
            "bins_per_axis": bins,
            "bins_used": int(mask.sum()),
            "mean_abs_rel_error": mean_rel_error,
            "passes": mean_rel_error <= cfg.tolerance,
            "tolerance": cfg.tolerance,
            "mass_inside_unit_ball": inside,
            "widened": widened,
            "notes": notes,
            "runtime_s": time.perf_counter() - start}
