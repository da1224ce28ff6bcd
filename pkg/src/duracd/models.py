"""Hybrid duration models: LSTM and attention-LSTM conditional-mean
networks trained by exponential maximum likelihood.

The network predicts ln mu (positivity by construction). Within a
window the input at each step is the feature row plus the model's own
previous-step ln mu output (recursive feedback, no teacher forcing);
the window's first step receives the seed value, 0 in scaled space.
For the attention variants the final prediction applies the shared
scalar head to the attention context over all hidden states; the
per-step head outputs only drive the feedback channel.
"""

from dataclasses import dataclass, field

import numpy as np

from duracd import _kernels as K
from duracd import nn
from duracd.acd import exp_quantile
from duracd.data import (DurationSeries, ScalingStats, Splits, apply_scaling,
                         fit_scaling, make_windows)
from duracd.errors import DataError, NumericError
from duracd.nn import SgdSchedule
from duracd.rng import SplitMix64

__all__ = [
    "MODEL_NAMES",
    "HybridModelSpec",
    "TrainConfig",
    "TrainedModel",
    "Prediction",
    "EarlyStopper",
    "init_model_params",
    "forward_window",
    "batch_nll",
    "train",
    "predict_series",
    "quantile_series",
    "save_checkpoint",
    "load_checkpoint",
]

_VARIANTS = ("lstm_acd", "attn_lstm_acd")

# user-facing model names -> (variant, input feature count)
_NAME_MAP = {
    "lstm_acd": ("lstm_acd", 1),
    "attn_lstm_acd": ("attn_lstm_acd", 1),
    "lstm_acd_m": ("lstm_acd", 3),
    "attn_lstm_acd_m": ("attn_lstm_acd", 3),
}
MODEL_NAMES = ("acd",) + tuple(_NAME_MAP)


@dataclass
class HybridModelSpec:
    variant: str
    input_features: int = 1
    timesteps: int = 50
    hidden: int = 5
    attention_size: int | None = None
    dense_hidden: int = 2

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {_VARIANTS}")
        if min(self.input_features, self.timesteps, self.hidden, self.dense_hidden) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.uses_attention:
            if self.attention_size is None or self.attention_size <= 0:
                raise ValueError("attention variant needs a positive attention_size")
        elif self.attention_size is not None:
            raise ValueError("attention_size only applies to attention variants")

    @property
    def uses_attention(self) -> bool:
        return self.variant == "attn_lstm_acd"

    @property
    def input_dim(self) -> int:
        # feature columns plus the ln-mu feedback channel
        return self.input_features + 1

    @property
    def name(self) -> str:
        return self.variant + ("_m" if self.input_features == 3 else "")

    @classmethod
    def from_name(cls, name: str, **overrides) -> "HybridModelSpec":
        if name not in _NAME_MAP:
            raise ValueError(f"unknown model {name!r}; expected one of {sorted(_NAME_MAP)}")
        variant, nfeat = _NAME_MAP[name]
        kwargs = dict(variant=variant, input_features=nfeat)
        if variant == "attn_lstm_acd":
            kwargs["attention_size"] = 2
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class TrainConfig:
    batch_size: int = 300
    schedule: SgdSchedule = field(default_factory=SgdSchedule)
    eval_every: int = 100
    patience: int = 10
    max_steps: int = 20000
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.eval_every, self.patience, self.max_steps) <= 0:
            raise ValueError("batch_size, eval_every, patience, max_steps must be positive")


@dataclass
class TrainedModel:
    spec: HybridModelSpec
    params: dict
    scaling: ScalingStats
    history: list  # of (step, train_nll, validation_nll)
    best_step: int
    diverged: bool = False


@dataclass
class Prediction:
    """mu_hat in original units; log_mu_hat in scaled space; attention
    rows (when present) in window time order, last entry = lag 1."""

    mu_hat: np.ndarray
    log_mu_hat: np.ndarray
    attention: np.ndarray | None
    origins: np.ndarray


class EarlyStopper:
    """Strict-improvement early stopping: stop after ``patience``
    consecutive evaluations without a new minimum."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_index = 0
        self.count = 0
        self.bad = 0

    def update(self, value: float) -> bool:
        """Record one evaluation; True means stop now."""
        self.count += 1
        if value < self.best:
            self.best = value
            self.best_index = self.count
            self.bad = 0
            return False
        self.bad += 1
        return self.bad >= self.patience

    @property
    def just_improved(self) -> bool:
        return self.best_index == self.count


# ---------------------------------------------------------------------------
# parameter plumbing


def init_model_params(spec: HybridModelSpec, rng: SplitMix64) -> dict:
    """Draw order is fixed: LSTM gates, attention (if any), dense head."""
    params = nn.init_lstm_weights(rng, spec.hidden, spec.input_dim).to_dict()
    if spec.uses_attention:
        params.update(nn.init_attention_params(rng, spec.attention_size, spec.hidden).to_dict())
    params.update(nn.init_dense_params(rng, (spec.hidden, spec.dense_hidden, 1)).to_dict())
    return params


def _kernel_args(params: dict):
    return (params["lstm.W_f"], params["lstm.W_i"], params["lstm.W_o"], params["lstm.W_c"],
            params["lstm.b_f"], params["lstm.b_i"], params["lstm.b_o"], params["lstm.b_c"],
            params["dense.0.W"], params["dense.0.b"],
            params["dense.1.W"][0], float(params["dense.1.b"][0]))


_KERNEL_GRAD_NAMES = {
    "Wf": "lstm.W_f", "Wi": "lstm.W_i", "Wo": "lstm.W_o", "Wc": "lstm.W_c",
    "bf": "lstm.b_f", "bi": "lstm.b_i", "bo": "lstm.b_o", "bc": "lstm.b_c",
    "W1": "dense.0.W", "b1": "dense.0.b",
}


def forward_batch(spec: HybridModelSpec, params: dict, feats, seeds):
    """(predictions (B,), attention (B, T) or None, cache bundle)."""
    kcache = K.hybrid_forward(feats, seeds, *_kernel_args(params))
    if not spec.uses_attention:
        pred = kcache["y"][:, -1].copy()
        return pred, None, (kcache, None, None, None)
    attn = nn.AttentionParams.from_dict(params)
    ctx, weights = nn.attention_context_batch(kcache["h"], attn)
    a2 = np.tanh(ctx @ params["dense.0.W"].T + params["dense.0.b"])
    pred = a2 @ params["dense.1.W"][0] + params["dense.1.b"][0]
    return pred, weights, (kcache, ctx, a2, weights)


def backward_batch(spec: HybridModelSpec, params: dict, bundle, feats, seeds, dpred):
    """Gradients of a scalar loss given its gradient on the predictions."""
    kcache, ctx, a2, weights = bundle
    B, T, _ = feats.shape
    H = spec.hidden
    dy_ext = np.zeros((B, T))
    dh_ext = np.zeros((B, T, H))
    extra = {}
    if not spec.uses_attention:
        dy_ext[:, -1] = dpred
    else:
        w2 = params["dense.1.W"][0]
        extra["dense.1.W"] = (a2.T @ dpred)[None, :]
        extra["dense.1.b"] = np.array([float(dpred.sum())])
        dz1 = (dpred[:, None] * w2) * (1.0 - a2 * a2)
        extra["dense.0.W"] = dz1.T @ ctx
        extra["dense.0.b"] = dz1.sum(axis=0)
        dctx = dz1 @ params["dense.0.W"]
        attn = nn.AttentionParams.from_dict(params)
        dw, dv, dh_ext = nn.attention_backward_batch(kcache["h"], attn, weights, dctx)
        dh_ext = np.ascontiguousarray(dh_ext)
        extra["attn.w"] = dw
        extra["attn.v"] = dv
    kg = K.hybrid_backward(feats, seeds, *_kernel_args(params), kcache, dh_ext, dy_ext)
    grads = {full: np.asarray(kg[short]) for short, full in _KERNEL_GRAD_NAMES.items()}
    grads["dense.1.W"] = np.asarray(kg["w2"])[None, :]
    grads["dense.1.b"] = np.array([float(kg["b2"])])
    for name, g in extra.items():
        if name in grads:
            grads[name] = grads[name] + g
        else:
            grads[name] = g
    return grads


def forward_window(spec: HybridModelSpec, params: dict, inputs, log_mu_seed: float):
    """Single-window forward pass.

    inputs: (T, nf) feature rows, nf >= spec.input_features.
    Returns (ln mu at the target, attention weights or None, per-step
    ln-mu trace). The trace holds the feedback values; for attention
    variants the final prediction differs from the last trace entry.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] != spec.timesteps:
        raise DataError(f"window must have exactly {spec.timesteps} rows")
    if inputs.shape[1] < spec.input_features:
        raise DataError(f"window has {inputs.shape[1]} feature column(s), "
                        f"model needs {spec.input_features}")
    feats = np.ascontiguousarray(inputs[None, :, :spec.input_features])
    seeds = np.array([log_mu_seed])
    pred, attn, bundle = forward_batch(spec, params, feats, seeds)
    trace = bundle[0]["y"][0].copy()
    if not np.all(np.isfinite(trace)):
        bad = int(np.flatnonzero(~np.isfinite(trace))[0])
        raise NumericError(f"non-finite activation at window step {bad}")
    return float(pred[0]), None if attn is None else attn[0].copy(), trace


def batch_nll(log_mu_hats, targets) -> float:
    """Mean over the batch of [ln mu + target * exp(-ln mu)], the
    exponential negative log-likelihood parameterized in ln mu."""
    lm = np.asarray(log_mu_hats, dtype=np.float64)
    tg = np.asarray(targets, dtype=np.float64)
    if lm.shape != tg.shape:
        raise DataError("log_mu_hats and targets must have equal length")
    if np.any(tg <= 0):
        raise DataError("targets must be strictly positive")
    with np.errstate(over="ignore"):
        value = float(np.mean(lm + tg * np.exp(-lm)))
    if not np.isfinite(value):
        raise NumericError("non-finite negative log-likelihood")
    return value


# ---------------------------------------------------------------------------
# training protocol


def _validation_nll(spec, params, windows, origins, input_features, chunk=1024):
    """Full-pass NLL, accumulated in index order for determinism."""
    total = 0.0
    for start in range(0, origins.shape[0], chunk):
        sel = origins[start:start + chunk]
        feats, targets, seeds = windows.gather(sel)
        feats = np.ascontiguousarray(feats[:, :, :input_features])
        pred, _, _ = forward_batch(spec, params, feats, seeds)
        with np.errstate(over="ignore"):
            total += float(np.sum(pred + targets * np.exp(-pred)))
    return total / origins.shape[0]


def train(spec: HybridModelSpec, series: DurationSeries, splits: Splits,
          config: TrainConfig) -> TrainedModel:
    """The fixed training protocol: scale on the training range, sample
    batches with replacement, SGD with step decay and gradient clipping,
    validation every ``eval_every`` steps, early stopping with strict
    improvement, weights restored from the best evaluation."""
    if spec.input_features > 1 and series.features is None:
        raise DataError(f"model {spec.name} needs a feature matrix")
    stats = fit_scaling(series, splits.train)
    scaled = apply_scaling(series, stats)
    windows = make_windows(scaled, spec.timesteps, log_mu_seed=0.0)
    train_origins = windows.origins[(windows.origins >= splits.train.start)
                                    & (windows.origins < splits.train.stop)]
    val_origins = windows.origins[(windows.origins >= splits.validation.start)
                                  & (windows.origins < splits.validation.stop)]
    if train_origins.shape[0] == 0 or val_origins.shape[0] == 0:
        raise DataError("training or validation range has no complete windows")

    rng = SplitMix64(config.seed)
    params = init_model_params(spec, rng)
    stopper = EarlyStopper(config.patience)
    history = []
    best_params = None
    best_step = 0
    diverged = False
    n_train = train_origins.shape[0]

    for step in range(config.max_steps):
        batch = train_origins[rng.integers(n_train, config.batch_size)]
        feats, targets, seeds = windows.gather(batch)
        feats = np.ascontiguousarray(feats[:, :, :spec.input_features])
        pred, _, bundle = forward_batch(spec, params, feats, seeds)
        try:
            loss = batch_nll(pred, targets)
        except NumericError:
            diverged = True
            break
        dpred = (1.0 - targets * np.exp(-pred)) / targets.shape[0]
        grads = backward_batch(spec, params, bundle, feats, seeds, dpred)
        try:
            nn.sgd_update(params, grads, step, config.schedule)
        except NumericError:
            diverged = True
            break
        if (step + 1) % config.eval_every == 0:
            val_nll = _validation_nll(spec, params, windows, val_origins,
                                      spec.input_features)
            history.append((step + 1, loss, val_nll))
            if not np.isfinite(val_nll):
                diverged = True
                break
            stop = stopper.update(val_nll)
            if stopper.just_improved:
                best_params = {k: v.copy() for k, v in params.items()}
                best_step = step + 1
            if stop:
                break

    if best_params is None:  # no completed evaluation: keep the last state
        best_params = params
        best_step = history[-1][0] if history else 0
    return TrainedModel(spec=spec, params=best_params, scaling=stats,
                        history=history, best_step=best_step, diverged=diverged)


# ---------------------------------------------------------------------------
# prediction


def predict_series(model: TrainedModel, series: DurationSeries, indices,
                   chunk: int = 2048) -> Prediction:
    """One-step-ahead predictions at the given indices of an unscaled
    series (scaled with the model's training statistics internally)."""
    spec = model.spec
    if spec.input_features > 1 and series.features is None:
        raise DataError(f"model {spec.name} needs a feature matrix")
    origins = np.asarray(indices, dtype=np.int64)
    if origins.shape[0] == 0:
        raise DataError("no indices to predict")
    if origins.min() < spec.timesteps or origins.max() >= len(series):
        raise DataError(f"prediction indices must lie in [{spec.timesteps}, {len(series)})")
    scaled = apply_scaling(series, model.scaling)
    windows = make_windows(scaled, spec.timesteps, log_mu_seed=0.0)
    log_mu = np.empty(origins.shape[0])
    attention = np.empty((origins.shape[0], spec.timesteps)) if spec.uses_attention else None
    for start in range(0, origins.shape[0], chunk):
        sel = origins[start:start + chunk]
        feats, _, seeds = windows.gather(sel)
        feats = np.ascontiguousarray(feats[:, :, :spec.input_features])
        pred, attn, _ = forward_batch(spec, model.params, feats, seeds)
        log_mu[start:start + sel.shape[0]] = pred
        if attention is not None:
            attention[start:start + sel.shape[0]] = attn
    if not np.all(np.isfinite(log_mu)):
        raise NumericError("non-finite prediction")
    mu_hat = np.exp(log_mu) * model.scaling.duration_mean
    return Prediction(mu_hat=mu_hat, log_mu_hat=log_mu,
                      attention=attention, origins=origins)


def quantile_series(model: TrainedModel, series: DurationSeries, indices,
                    alpha: float, tail: str = "lower") -> np.ndarray:
    """Time-at-risk forecasts: the alpha-quantile of the predicted
    exponential distribution at each index."""
    pred = predict_series(model, series, indices)
    return exp_quantile(pred.mu_hat, alpha, tail=tail)


# ---------------------------------------------------------------------------
# checkpoints: weight container plus a key-value sidecar


def _fmt_floats(arr) -> str:
    values = np.atleast_1d(np.asarray(arr, dtype=np.float64))
    return ",".join(repr(float(v)) for v in values) if values.size else ""


def save_checkpoint(base_path, model: TrainedModel, extra: dict | None = None) -> None:
    """Write <base>.npz (weights) and <base>.meta (spec, scaling, ...)."""
    base = str(base_path)
    nn.save_weights(base + ".npz", model.params)
    spec = model.spec
    lines = [
        "format = duracd-checkpoint-1",
        f"model = {spec.name}",
        f"variant = {spec.variant}",
        f"input_features = {spec.input_features}",
        f"timesteps = {spec.timesteps}",
        f"hidden = {spec.hidden}",
        f"attention_size = {'' if spec.attention_size is None else spec.attention_size}",
        f"dense_hidden = {spec.dense_hidden}",
        f"duration_mean = {model.scaling.duration_mean!r}",
        f"feature_means = {_fmt_floats(model.scaling.feature_means)}",
        f"feature_stds = {_fmt_floats(model.scaling.feature_stds)}",
        f"best_step = {model.best_step}",
        f"diverged = {int(model.diverged)}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    with open(base + ".meta", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(base_path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns (model, extra) where ``extra`` maps any additional meta keys
    to their string values; the training history is not persisted.
    """
    base = str(base_path)
    fields = {}
    with open(base + ".meta") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            if key.strip():
                fields[key.strip()] = value.strip()
    if fields.get("format") != "duracd-checkpoint-1":
        raise DataError(f"{base}.meta: not a duracd checkpoint")
    spec = HybridModelSpec(
        variant=fields["variant"],
        input_features=int(fields["input_features"]),
        timesteps=int(fields["timesteps"]),
        hidden=int(fields["hidden"]),
        attention_size=int(fields["attention_size"]) if fields["attention_size"] else None,
        dense_hidden=int(fields["dense_hidden"]),
    )
    def _floats(text):
        return (np.array([float(v) for v in text.split(",")])
                if text else np.empty(0))
    scaling = ScalingStats(duration_mean=float(fields["duration_mean"]),
                           feature_means=_floats(fields["feature_means"]),
                           feature_stds=_floats(fields["feature_stds"]))
    params = nn.load_weights(base + ".npz")
    model = TrainedModel(spec=spec, params=params, scaling=scaling, history=[],
                         best_step=int(fields["best_step"]),
                         diverged=bool(int(fields.get("diverged", "0"))))
    known = {"format", "model", "variant", "input_features", "timesteps", "hidden",
             "attention_size", "dense_hidden", "duration_mean", "feature_means",
             "feature_stds", "best_step", "diverged"}
    extra = {k: v for k, v in fields.items() if k not in known}
    return model, extra
