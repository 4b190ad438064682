"""Parameter store, dense/recurrent layers, losses, optimizer, grad checker.

All parameters live in a ParamStore as named float64 arrays with matching
gradient slots. A Binding lifts parameters into the autodiff tape for one
forward/backward episode and harvests the resulting gradients back into the
store, so training code reads as plain math while evaluation code can pass
the store itself (plain arrays) through the very same layer functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Var

CHECKPOINT_FORMAT_VERSION = 1


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class ParamStore:
    """Named parameter arrays with same-shape gradient accumulators."""

    params: dict = field(default_factory=dict)
    grads: dict = field(default_factory=dict)
    step: int = 0
    _opt: dict = field(default_factory=dict, repr=False)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        arr = np.asarray(value, dtype=np.float64)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def clone(self) -> "ParamStore":
        out = ParamStore(step=self.step)
        for name, v in self.params.items():
            out.params[name] = v.copy()
            out.grads[name] = self.grads[name].copy()
        return out

    def load_values(self, other: "ParamStore") -> None:
        for name, v in other.params.items():
            self.params[name][...] = v

    def subset(self, prefix: str) -> "ParamStore":
        out = ParamStore(step=self.step)
        for name, v in self.params.items():
            if name.startswith(prefix):
                out.params[name] = v.copy()
                out.grads[name] = np.zeros_like(v)
        return out

    def merge(self, other: "ParamStore") -> None:
        for name, v in other.params.items():
            self.add(name, v.copy())


class Binding:
    """One tape episode over a store: leaf Vars plus gradient harvesting."""

    def __init__(self, store: ParamStore):
        self.store = store
        self._leaves: dict[str, Var] = {}

    def __getitem__(self, name: str):
        if name not in self._leaves:
            self._leaves[name] = Var(self.store.params[name])
        return self._leaves[name]

    def __contains__(self, name: str) -> bool:
        return name in self.store

    def harvest(self) -> None:
        """Accumulate leaf gradients into the store's gradient slots."""
        for name, leaf in self._leaves.items():
            if leaf.grad is not None:
                self.store.grads[name] += leaf.grad


# -- initializers ----------------------------------------------------------


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


# -- layers ----------------------------------------------------------------

_ACTIVATIONS = {
    "identity": lambda x: x,
    "tanh": ad.tanh,
    "relu": ad.relu,
}


def dense_forward(x, w, b, activation: str = "identity"):
    """y = act(x @ w + b); differentiable in x, w and b.

    Accepts a single vector (in,) or a batch (B, in).
    """
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    x_shape = ad.value_of(x).shape
    w_shape = ad.value_of(w).shape
    if x_shape[-1] != w_shape[0]:
        raise ValueError(f"shape mismatch: x {x_shape} vs w {w_shape}")
    return _ACTIVATIONS[activation](x @ w + b)


class GruCell(NamedTuple):
    """Packed gated recurrent cell: w (in, 3H), u (H, 3H), b (3H,).

    Column blocks are [update | reset | candidate].
    """

    w: object
    u: object
    b: object


def gru_param_names(prefix: str) -> tuple[str, str, str]:
    return (f"{prefix}.w", f"{prefix}.u", f"{prefix}.b")


def init_gru(store: ParamStore, prefix: str, in_dim: int, hidden: int,
             rng: np.random.Generator) -> None:
    wn, un, bn = gru_param_names(prefix)
    store.add(wn, np.concatenate([glorot(rng, in_dim, hidden) for _ in range(3)], axis=1))
    store.add(un, np.concatenate([orthogonal(rng, hidden) for _ in range(3)], axis=1))
    store.add(bn, np.zeros(3 * hidden))


def gru_cell_from(params: Mapping, prefix: str) -> GruCell:
    wn, un, bn = gru_param_names(prefix)
    return GruCell(params[wn], params[un], params[bn])


def _gru_step(x_t, h, cell: GruCell, hidden: int):
    gates_x = x_t @ cell.w + cell.b
    gates_h = h @ cell.u
    z = ad.sigmoid(gates_x[..., :hidden] + gates_h[..., :hidden])
    r = ad.sigmoid(gates_x[..., hidden : 2 * hidden] + gates_h[..., hidden : 2 * hidden])
    n = ad.tanh(gates_x[..., 2 * hidden :] + (r * h) @ cell.u[..., 2 * hidden :])
    return (1.0 - z) * n + z * h


def gru_encode(seq, cell: GruCell):
    """Run the cell over a sequence from a zero hidden state; final state out.

    `seq` is (T, in) for one sequence or (T, B, in) for a batch.
    """
    arr = ad.value_of(seq)
    if arr.shape[0] < 1:
        raise ValueError("gru_encode needs a nonempty sequence")
    hidden = ad.value_of(cell.u).shape[0]
    h = np.zeros(hidden) if arr.ndim == 2 else np.zeros((arr.shape[1], hidden))
    steps = [seq[t] for t in range(arr.shape[0])] if isinstance(seq, Var) else list(arr)
    for x_t in steps:
        h = _gru_step(x_t, h, cell, hidden)
    return h


def gru_decode(h, steps: int, cell: GruCell, w_out, b_out):
    """Autoregressive rollout emitting one output vector per step.

    The first input is a zero vector; afterwards each step consumes its own
    previous emission. Returns a list of per-step outputs (so gradients flow
    through the whole rollout).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    hidden = ad.value_of(cell.u).shape[0]
    out_dim = ad.value_of(w_out).shape[1]
    h_arr = ad.value_of(h)
    x = np.zeros(out_dim) if h_arr.ndim == 1 else np.zeros((h_arr.shape[0], out_dim))
    outputs = []
    for _ in range(steps):
        h = _gru_step(x, h, cell, hidden)
        x = h @ w_out + b_out
        outputs.append(x)
    return outputs


# -- probability utilities ---------------------------------------------------


def softmax(x):
    """Stable softmax over the trailing axis (max-subtracted)."""
    shift = ad.value_of(x).max(axis=-1, keepdims=True)
    e = ad.exp(x - shift)
    if isinstance(e, Var):
        denom = e.sum(axis=-1)
        if e.value.ndim > 1:
            denom = denom.reshape(*denom.shape, 1)
        return e / denom
    return e / e.sum(axis=-1, keepdims=True)


def weighted_cross_entropy(probs, true_class: int, class_weights: np.ndarray):
    """-w_c * log(p_c) for the true class; p floored at 1e-12 before the log."""
    w = np.asarray(class_weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("class weights must be positive")
    p = ad.clip_min(probs[int(true_class)], 1e-12)
    return -float(w[int(true_class)]) * ad.log(p)


# -- optimizer ---------------------------------------------------------------


def adam_step(
    store: ParamStore,
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """Bias-corrected adaptive moment update; zeroes gradients afterwards.

    Parameters update independently, so the result does not depend on slot
    iteration order. Non-finite gradients reject the whole step.
    """
    b1, b2 = betas
    for name in store.names():
        if not np.all(np.isfinite(store.grads[name])):
            raise NonFiniteGradientError(f"non-finite gradient in {name!r}")
    store.step += 1
    t = store.step
    for name in store.names():
        g = store.grads[name]
        m, v = store._opt.get(name, (np.zeros_like(g), np.zeros_like(g)))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        store._opt[name] = (m, v)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        store.params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grads()


# -- gradient checking --------------------------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_errors: dict
    tol: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_errors.values()) if self.max_rel_errors else 0.0

    @property
    def passed(self) -> bool:
        return self.worst < self.tol


def grad_check(
    loss_fn: Callable[[Binding], Var],
    store: ParamStore,
    tol: float = 1e-4,
    fd_step: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    `max_entries` caps the number of probed entries per parameter (sampled
    deterministically) to bound runtime on large stores.
    """
    store.zero_grads()
    binding = Binding(store)
    loss = loss_fn(binding)
    loss.backward()
    binding.harvest()
    analytic = {name: store.grads[name].copy() for name in store.names()}
    store.zero_grads()

    def eval_loss() -> float:
        return float(ad.value_of(loss_fn(Binding(store))))

    errors = {}
    rng = rng or np.random.default_rng(0)
    for name in store.names():
        arr = store.params[name]
        flat_idx = np.arange(arr.size)
        if max_entries is not None and arr.size > max_entries:
            flat_idx = np.sort(rng.choice(arr.size, size=max_entries, replace=False))
        worst = 0.0
        flat = arr.reshape(-1)
        for k in flat_idx:
            orig = flat[k]
            flat[k] = orig + fd_step
            up = eval_loss()
            flat[k] = orig - fd_step
            down = eval_loss()
            flat[k] = orig
            numeric = (up - down) / (2.0 * fd_step)
            a = analytic[name].reshape(-1)[k]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        errors[name] = worst
    return GradCheckReport(errors, tol)


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(store: ParamStore, path: str | Path) -> None:
    """Write parameters to an .npz with an embedded shape/version manifest."""
    path = Path(path)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": store.step,
        "shapes": {name: list(store.params[name].shape) for name in store.names()},
    }
    arrays = {f"param:{name}": store.params[name] for name in store.names()}
    arrays["manifest"] = np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> ParamStore:
    path = Path(path)
    with np.load(path) as data:
        manifest = json.loads(bytes(data["manifest"]).decode())
        if manifest["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"checkpoint format {manifest['format_version']} unsupported "
                f"(expected {CHECKPOINT_FORMAT_VERSION})"
            )
        store = ParamStore(step=int(manifest["step"]))
        for name, shape in manifest["shapes"].items():
            arr = data[f"param:{name}"]
            if list(arr.shape) != shape:
                raise ValueError(f"checkpoint shape mismatch for {name!r}")
            store.add(name, arr)
    return store
