"""Conditional invertible transform stack with exact log-determinant tracking.

Affine coupling layers alternate with fixed seeded permutations. The
normalizing direction maps data to a standard-normal latent for likelihood
training; the generative direction maps latent draws back to data space for
sampling. Both directions are single-pass. Conditioner output layers start
at zero, so a freshly initialized stack is the identity up to permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .neural import ParamStore, glorot

LOG_SCALE_CLAMP = 5.0


class FlowNumericsError(FloatingPointError):
    """A layer produced a non-finite intermediate value."""


@dataclass(frozen=True)
class FlowStack:
    """Structure of a coupling stack; parameters live in a ParamStore."""

    prefix: str
    dim: int
    cond_dim: int
    n_layers: int
    hidden: int
    perm_seed: int

    def __post_init__(self):
        if self.dim < 1 or self.n_layers < 1 or self.hidden < 1 or self.cond_dim < 0:
            raise ValueError("flow dimensions must be positive (cond_dim may be 0)")

    @property
    def d_keep(self) -> int:
        return self.dim // 2

    @property
    def d_move(self) -> int:
        return self.dim - self.dim // 2

    def permutations(self) -> list[np.ndarray]:
        rng = np.random.default_rng(self.perm_seed)
        return [rng.permutation(self.dim) for _ in range(self.n_layers)]

    def param_names(self, k: int) -> tuple[str, str, str, str]:
        base = f"{self.prefix}.k{k}"
        return (f"{base}.w1", f"{base}.b1", f"{base}.w2", f"{base}.b2")


def init_flow(store: ParamStore, flow: FlowStack, rng: np.random.Generator) -> None:
    """Register conditioner parameters; output layers zero so F starts as identity."""
    in_dim = flow.d_keep + flow.cond_dim
    for k in range(flow.n_layers):
        w1, b1, w2, b2 = flow.param_names(k)
        store.add(w1, glorot(rng, in_dim, flow.hidden))
        store.add(b1, np.zeros(flow.hidden))
        store.add(w2, np.zeros((flow.hidden, 2 * flow.d_move)))
        store.add(b2, np.zeros(2 * flow.d_move))


def _conditioner(u_keep, cond, flow: FlowStack, k: int, params: Mapping):
    w1, b1, w2, b2 = (params[n] for n in flow.param_names(k))
    inp = u_keep if cond is None else ad.concat([u_keep, cond], axis=-1)
    hidden = ad.tanh(inp @ w1 + b1)
    out = hidden @ w2 + b2
    raw_scale = out[..., : flow.d_move]
    shift = out[..., flow.d_move :]
    # soft clamp keeps per-layer volume change bounded (exp(+-5) each way)
    log_scale = LOG_SCALE_CLAMP * ad.tanh(raw_scale * (1.0 / LOG_SCALE_CLAMP))
    return log_scale, shift


def _check_finite(x, layer: int, direction: str) -> None:
    if not np.all(np.isfinite(ad.value_of(x))):
        raise FlowNumericsError(f"non-finite value after layer {layer} ({direction})")


def _validate(y, cond, flow: FlowStack) -> None:
    if ad.value_of(y).shape[-1] != flow.dim:
        raise ValueError(f"input dim {ad.value_of(y).shape[-1]} != flow dim {flow.dim}")
    if flow.cond_dim == 0:
        return
    if cond is None or ad.value_of(cond).shape[-1] != flow.cond_dim:
        got = None if cond is None else ad.value_of(cond).shape[-1]
        raise ValueError(f"conditioning dim {got} != flow cond_dim {flow.cond_dim}")


def forward_normalize(y, cond, flow: FlowStack, params: Mapping):
    """Data -> latent; returns (z, logdet of the normalizing map at y).

    Accepts a vector (dim,) or a batch (B, dim); cond follows suit.
    """
    _validate(y, cond, flow)
    x = y
    logdet = None
    for k, perm in enumerate(flow.permutations()):
        x = x[..., perm]
        u_keep = x[..., : flow.d_keep]
        u_move = x[..., flow.d_keep :]
        log_scale, shift = _conditioner(u_keep, cond, flow, k, params)
        moved = u_move * ad.exp(log_scale) + shift
        x = ad.concat([u_keep, moved], axis=-1)
        _check_finite(x, k, "normalizing")
        contrib = ad.sum_last(log_scale)
        logdet = contrib if logdet is None else logdet + contrib
    return x, logdet


def inverse_generate(z, cond, flow: FlowStack, params: Mapping):
    """Latent -> data; exact inverse of forward_normalize."""
    _validate(z, cond, flow)
    x = z
    perms = flow.permutations()
    for k in range(flow.n_layers - 1, -1, -1):
        z_keep = x[..., : flow.d_keep]
        z_move = x[..., flow.d_keep :]
        log_scale, shift = _conditioner(z_keep, cond, flow, k, params)
        restored = (z_move - shift) * ad.exp(-log_scale)
        x = ad.concat([z_keep, restored], axis=-1)
        x = x[..., np.argsort(perms[k])]
        _check_finite(x, k, "generative")
    return x


def log_prob(y, cond, flow: FlowStack, params: Mapping):
    """log p(y | cond) via change of variables against a standard normal."""
    z, logdet = forward_normalize(y, cond, flow, params)
    base = -0.5 * ad.sum_last(z * z) - 0.5 * flow.dim * math.log(2.0 * math.pi)
    return base + logdet


def nll_loss(batch: Sequence, flow: FlowStack, params: Mapping):
    """Mean negative log-likelihood over a batch of (y, cond) pairs."""
    if len(batch) == 0:
        raise ValueError("nll_loss needs a nonempty batch")
    if not any(isinstance(y, ad.Var) or isinstance(c, ad.Var) for y, c in batch):
        # constant inputs stack into one batched pass
        ys = np.stack([ad.value_of(y) for y, _ in batch])
        conds = (
            np.stack([ad.value_of(c) for _, c in batch])
            if flow.cond_dim > 0
            else None
        )
        lp = log_prob(ys, conds, flow, params)
        return -lp.mean() if isinstance(lp, ad.Var) else -np.mean(lp)
    total = None
    for y, cond in batch:
        term = -log_prob(y, cond, flow, params)
        total = term if total is None else total + term
    return total * (1.0 / len(batch))


def sample(
    cond,
    flow: FlowStack,
    params: Mapping,
    count: int,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Draw `count` vectors from the conditional flow; (count, dim)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((count, flow.dim))
    if cond is None:
        tiled = None
    else:
        cond = ad.value_of(cond)
        tiled = np.broadcast_to(cond, (count,) + cond.shape)
    return ad.value_of(inverse_generate(z, tiled, flow, params))
