"""Minimal neural building blocks with hand-derived gradients.

Single-instance LSTM / attention / dense operations live here, together
with parameter initialization, the step-decay SGD update, and the weight
container format. The batched training path runs on the kernel backends;
these reference implementations are what the kernels are checked against.

Model parameters travel as a flat dict of named float64 arrays. Names:
lstm.W_f, lstm.W_i, lstm.W_o, lstm.W_c, lstm.b_f, lstm.b_i, lstm.b_o,
lstm.b_c, attn.w, attn.v, dense.<k>.W, dense.<k>.b.
"""

from dataclasses import dataclass

import numpy as np

from duracd.errors import NumericError
from duracd.rng import SplitMix64

WEIGHTS_FORMAT_VERSION = 1


def sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class LstmWeights:
    """Gate weights acting on the concatenation [h_prev, x]."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def to_dict(self) -> dict:
        return {f"lstm.{k}": getattr(self, k)
                for k in ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c")}

    @classmethod
    def from_dict(cls, params: dict) -> "LstmWeights":
        return cls(**{k: params[f"lstm.{k}"]
                      for k in ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c")})


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(h=np.zeros(hidden), c=np.zeros(hidden))


@dataclass
class AttentionParams:
    w: np.ndarray  # (attention_size, hidden)
    v: np.ndarray  # (attention_size,)

    def to_dict(self) -> dict:
        return {"attn.w": self.w, "attn.v": self.v}

    @classmethod
    def from_dict(cls, params: dict) -> "AttentionParams":
        return cls(w=params["attn.w"], v=params["attn.v"])


@dataclass
class DenseParams:
    """Affine-tanh hidden layers, affine identity output."""

    layers: list  # of (W, b)

    def to_dict(self) -> dict:
        out = {}
        for k, (W, b) in enumerate(self.layers):
            out[f"dense.{k}.W"] = W
            out[f"dense.{k}.b"] = b
        return out

    @classmethod
    def from_dict(cls, params: dict) -> "DenseParams":
        layers = []
        k = 0
        while f"dense.{k}.W" in params:
            layers.append((params[f"dense.{k}.W"], params[f"dense.{k}.b"]))
            k += 1
        return cls(layers=layers)


@dataclass
class SgdSchedule:
    start_lr: float = 0.5
    decay_steps: int = 1000
    decay_rate: float = 0.5
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.start_lr <= 0 or not 0 < self.decay_rate <= 1 or self.clip_norm <= 0:
            raise ValueError("bad schedule: need start_lr > 0, 0 < decay_rate <= 1, "
                             "clip_norm > 0")


# ---------------------------------------------------------------------------
# forward / backward primitives


@dataclass
class LstmStepCache:
    z: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_step(w: LstmWeights, x: np.ndarray, prev: LstmState):
    """One LSTM step. Returns (new state, cache for the backward pass)."""
    if x.shape[0] != w.input_dim:
        raise ValueError(f"input dim {x.shape[0]} != expected {w.input_dim}")
    z = np.concatenate([prev.h, x])
    f = sigmoid(w.W_f @ z + w.b_f)
    i = sigmoid(w.W_i @ z + w.b_i)
    o = sigmoid(w.W_o @ z + w.b_o)
    g = np.tanh(w.W_c @ z + w.b_c)
    c = f * prev.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = LstmStepCache(z=z, f=f, i=i, o=o, g=g, c_prev=prev.c, c=c, tanh_c=tanh_c)
    return LstmState(h=h, c=c), cache


def lstm_backward(w: LstmWeights, caches, dh_seq):
    """Backpropagation through time over one window.

    caches: per-step caches from lstm_step, in time order.
    dh_seq: (T, H) upstream gradients on each hidden state.
    Returns (weight grads dict in lstm.* naming, dx (T, D), dh0, dc0).
    """
    H = w.hidden
    T = len(caches)
    dh_seq = np.asarray(dh_seq)
    if dh_seq.shape != (T, H):
        raise ValueError(f"dh_seq shape {dh_seq.shape} != {(T, H)}")
    grads = {k: np.zeros_like(v) for k, v in w.to_dict().items()}
    dx = np.empty((T, w.input_dim))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        cc = caches[t]
        dh = dh_seq[t] + dh_next
        dc = dc_next + dh * cc.o * (1.0 - cc.tanh_c ** 2)
        dpre_f = dc * cc.c_prev * cc.f * (1.0 - cc.f)
        dpre_i = dc * cc.g * cc.i * (1.0 - cc.i)
        dpre_o = dh * cc.tanh_c * cc.o * (1.0 - cc.o)
        dpre_g = dc * cc.i * (1.0 - cc.g ** 2)
        grads["lstm.W_f"] += np.outer(dpre_f, cc.z)
        grads["lstm.W_i"] += np.outer(dpre_i, cc.z)
        grads["lstm.W_o"] += np.outer(dpre_o, cc.z)
        grads["lstm.W_c"] += np.outer(dpre_g, cc.z)
        grads["lstm.b_f"] += dpre_f
        grads["lstm.b_i"] += dpre_i
        grads["lstm.b_o"] += dpre_o
        grads["lstm.b_c"] += dpre_g
        dz = (w.W_f.T @ dpre_f + w.W_i.T @ dpre_i
              + w.W_o.T @ dpre_o + w.W_c.T @ dpre_g)
        dh_next = dz[:H]
        dx[t] = dz[H:]
        dc_next = dc * cc.f
    return grads, dx, dh_next, dc_next


def attention_context(hidden_states, params: AttentionParams):
    """Scores e_k = v . tanh(w h_k), weights by stable softmax, context
    c = sum_k weights_k h_k. Returns (c, weights) over the T states."""
    h = np.atleast_2d(np.asarray(hidden_states, dtype=np.float64))
    u = np.tanh(h @ params.w.T)          # (T, A)
    e = u @ params.v                     # (T,)
    e = e - e.max()
    expe = np.exp(e)
    weights = expe / expe.sum()
    return weights @ h, weights


def attention_backward(hidden_states, params: AttentionParams, dc):
    """Gradients of a scalar loss through attention_context given the
    upstream gradient on the context. Returns (dw, dv, dh (T, H))."""
    h = np.atleast_2d(np.asarray(hidden_states, dtype=np.float64))
    u = np.tanh(h @ params.w.T)
    e = u @ params.v
    e = e - e.max()
    expe = np.exp(e)
    weights = expe / expe.sum()
    dalpha = h @ dc                                   # (T,)
    dscores = weights * (dalpha - weights @ dalpha)   # softmax Jacobian
    dv = u.T @ dscores
    dpre = np.outer(dscores, params.v) * (1.0 - u ** 2)  # (T, A)
    dw = dpre.T @ h
    dh = np.outer(weights, dc) + dpre @ params.w
    return dw, dv, dh


def attention_context_batch(h, params: AttentionParams):
    """attention_context vectorized over a batch: h (B, T, H) ->
    (contexts (B, H), weights (B, T))."""
    u = np.tanh(h @ params.w.T)                       # (B, T, A)
    e = u @ params.v                                  # (B, T)
    e = e - e.max(axis=1, keepdims=True)
    expe = np.exp(e)
    weights = expe / expe.sum(axis=1, keepdims=True)
    ctx = np.einsum("bt,bth->bh", weights, h)
    return ctx, weights


def attention_backward_batch(h, params: AttentionParams, weights, dctx):
    """attention_backward vectorized over a batch; weights come from the
    forward pass. Returns (dw, dv, dh (B, T, H))."""
    u = np.tanh(h @ params.w.T)
    dalpha = np.einsum("bth,bh->bt", h, dctx)
    dscores = weights * (dalpha - np.sum(weights * dalpha, axis=1, keepdims=True))
    dv = np.einsum("bta,bt->a", u, dscores)
    dpre = dscores[:, :, None] * params.v[None, None, :] * (1.0 - u ** 2)
    dw = np.einsum("bta,bth->ah", dpre, h)
    dh = weights[:, :, None] * dctx[:, None, :] + dpre @ params.w
    return dw, dv, dh


def dense_forward(params: DenseParams, x):
    """tanh hidden layers, identity output. Returns (y, activations)."""
    acts = [np.asarray(x, dtype=np.float64)]
    n_layers = len(params.layers)
    for k, (W, b) in enumerate(params.layers):
        z = W @ acts[-1] + b
        acts.append(z if k == n_layers - 1 else np.tanh(z))
    return acts[-1], acts


def dense_backward(params: DenseParams, acts, dy):
    """Returns (grads list of (dW, db) aligned with layers, dx)."""
    grads = [None] * len(params.layers)
    delta = np.asarray(dy, dtype=np.float64)
    for k in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[k]
        if k < len(params.layers) - 1:
            delta = delta * (1.0 - acts[k + 1] ** 2)
        grads[k] = (np.outer(delta, acts[k]), delta.copy())
        delta = W.T @ delta
    return grads, delta


# ---------------------------------------------------------------------------
# initialization and the SGD update


def glorot_uniform(rng: SplitMix64, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    size = int(np.prod(shape))
    return ((rng.uniform(size) * 2.0 - 1.0) * bound).reshape(shape)


def init_lstm_weights(rng: SplitMix64, hidden: int, input_dim: int) -> LstmWeights:
    """Glorot-uniform gate matrices, zero biases except forget bias 1."""
    d = hidden + input_dim
    mats = {k: glorot_uniform(rng, (hidden, d), d, hidden)
            for k in ("W_f", "W_i", "W_o", "W_c")}
    return LstmWeights(**mats,
                       b_f=np.ones(hidden), b_i=np.zeros(hidden),
                       b_o=np.zeros(hidden), b_c=np.zeros(hidden))


def init_attention_params(rng: SplitMix64, attention_size: int, hidden: int) -> AttentionParams:
    w = glorot_uniform(rng, (attention_size, hidden), hidden, attention_size)
    v = glorot_uniform(rng, (attention_size,), attention_size, 1)
    return AttentionParams(w=w, v=v)


def init_dense_params(rng: SplitMix64, sizes) -> DenseParams:
    """sizes: (in, hidden..., out); biases start at zero."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = glorot_uniform(rng, (fan_out, fan_in), fan_in, fan_out)
        layers.append((W, np.zeros(fan_out)))
    return DenseParams(layers=layers)


def learning_rate(schedule: SgdSchedule, step_index: int) -> float:
    """Staircase decay: the rate drops by decay_rate every decay_steps."""
    return schedule.start_lr * schedule.decay_rate ** (step_index // schedule.decay_steps)


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values())))


def sgd_update(params: dict, grads: dict, step_index: int, schedule: SgdSchedule) -> dict:
    """In-place SGD step with global-norm gradient clipping."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter block {name!r}")
    lr = learning_rate(schedule, step_index)
    norm = global_norm(grads)
    scale = schedule.clip_norm / norm if norm > schedule.clip_norm else 1.0
    for name, g in grads.items():
        params[name] -= lr * scale * g
    return params


# ---------------------------------------------------------------------------
# weight container


def save_weights(path, params: dict) -> None:
    """Self-describing container of named shaped arrays (npz)."""
    np.savez(path, __format_version__=np.int64(WEIGHTS_FORMAT_VERSION),
             **{k: np.asarray(v) for k, v in params.items()})


def load_weights(path) -> dict:
    with np.load(path) as payload:
        version = int(payload["__format_version__"])
        if version != WEIGHTS_FORMAT_VERSION:
            raise ValueError(f"unsupported weight container version {version}")
        return {k: payload[k].copy() for k in payload.files
                if k != "__format_version__"}
