"""Recurrent fusion classifier with analytic gradients, trained with AdamW.

The gaze sequence runs through a single LSTM layer whose final hidden state
is concatenated with small ReLU branches over personality, stimulus one-hot
and environment. A ReLU fusion layer, dropout and a softmax head follow.
Everything is batched numpy in float64.
"""

from __future__ import annotations

import base64
import copy
import hashlib
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import TARGETS
from .dataset import class_weights, perturb_traits
from .errors import TrainingDivergedError, ValidationError
from .evaluation import confusion, macro_f1, per_class_f1
from .features import CHANNELS, N_STEPS, ScalerParams, apply_scalers, fit_scalers

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
N_CLASSES = 3

# the stated search grid, plus the rates that won per model
SEARCH_LEARNING_RATES = (1e-3, 1e-4, 1e-5)
SELECTED_LEARNING_RATES = (2e-4, 3e-4, 3.5e-4, 4e-4, 7e-4)
DEFAULT_LEARNING_RATES = tuple(sorted(set(SEARCH_LEARNING_RATES + SELECTED_LEARNING_RATES)))
DEFAULT_DROPOUTS = (0.2, 0.3, 0.5)
DEFAULT_WEIGHT_DECAYS = (0.0, 1e-4)

# model variants compared in the results table
FEATURE_SETS = {
    "eye-no-env": dict(include_personality=False, include_stimulus=False, include_environment=False),
    "eye": dict(include_personality=False, include_stimulus=False, include_environment=True),
    "eye+personality": dict(include_personality=True, include_stimulus=False, include_environment=True),
    "eye+stimulus": dict(include_personality=False, include_stimulus=True, include_environment=True),
    "eye+personality+stimulus": dict(include_personality=True, include_stimulus=True, include_environment=True),
}


@dataclass(frozen=True)
class ModelConfig:
    lstm_hidden: int = 32
    personality_width: int = 8
    stimulus_width: int = 8
    environment_width: int = 4
    fusion_width: int = 32
    dropout_rate: float = 0.3
    include_personality: bool = True
    include_stimulus: bool = True
    include_environment: bool = True
    n_channels: int = len(CHANNELS)

    def __post_init__(self):
        for name in ("lstm_hidden", "personality_width", "stimulus_width", "environment_width",
                     "fusion_width", "n_channels"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ValidationError("dropout_rate must lie in [0, 1)")

    @classmethod
    def for_feature_set(cls, name: str, **kw) -> "ModelConfig":
        if name not in FEATURE_SETS:
            raise ValidationError(f"unknown feature set {name!r}; choose from {sorted(FEATURE_SETS)}")
        return cls(**FEATURE_SETS[name], **kw)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 32
    noise_sigma: float = 0.02
    seed: int = 0
    target_label: str = "perceived_valence"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValidationError("patience, max_epochs and batch_size must be >= 1")
        if self.noise_sigma < 0 or self.weight_decay < 0:
            raise ValidationError("noise_sigma and weight_decay must be non-negative")
        if self.target_label not in TARGETS:
            raise ValidationError(f"unknown target label {self.target_label!r}")


@dataclass
class Batch:
    sequence: np.ndarray     # (B, T, C)
    personality: np.ndarray  # (B, 5)
    stimulus: np.ndarray     # (B, 6)
    environment: np.ndarray  # (B, 2)
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.sequence)

    def subset(self, idx) -> "Batch":
        return Batch(self.sequence[idx], self.personality[idx], self.stimulus[idx],
                     self.environment[idx], None if self.labels is None else self.labels[idx])

    @classmethod
    def from_records(cls, records, target: str | None = None) -> "Batch":
        records = list(records)
        if not records:
            raise ValidationError("empty record set")
        labels = None
        if target is not None:
            labels = np.array([int(r.labels[target]) for r in records], dtype=int)
        return cls(np.stack([r.sequence for r in records]).astype(float),
                   np.stack([r.personality for r in records]).astype(float),
                   np.stack([r.stimulus for r in records]).astype(float),
                   np.stack([r.environment for r in records]).astype(float),
                   labels)


# -- primitives --------------------------------------------------------------

def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def relu(z):
    return np.maximum(z, 0.0)


def dense_forward(x, W, b, activation="relu"):
    z = x @ W + b
    if activation == "relu":
        return relu(z), (x, z, activation)
    if activation == "identity":
        return z, (x, z, activation)
    raise ValidationError(f"unknown activation {activation!r}")


def dense_backward(dout, cache, W):
    """Returns (dx, dW, db)."""
    x, z, activation = cache
    dz = dout * (z > 0) if activation == "relu" else dout
    return dz @ W.T, x.T @ dz, dz.sum(axis=0)


def lstm_forward(seq, Wx, Wh, b):
    """Run the LSTM over ``seq`` of shape (B, T, C) or (T, C).

    Gate layout along the 4H axis is [input, forget, output, candidate].
    Returns the final hidden state and the cache for :func:`lstm_backward`.
    """
    seq = np.asarray(seq, dtype=float)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    B, T, C = seq.shape
    H = Wh.shape[0]
    if Wx.shape != (C, 4 * H) or Wh.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ValidationError(f"LSTM parameter shapes do not match input with {C} channels")
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    xw = seq @ Wx + b  # (B, T, 4H)
    steps = []
    for t in range(T):
        z = xw[:, t] + h @ Wh
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((h_prev, c_prev, i, f, o, g, tc))
    cache = (seq, steps, single)
    return (h[0] if single else h), cache


def lstm_backward(dh_last, cache, Wx, Wh):
    """Backpropagation through time from a gradient on the final hidden state.

    Returns (dseq, dWx, dWh, db).
    """
    seq, steps, single = cache
    dh = np.atleast_2d(dh_last).astype(float)
    B, T, C = seq.shape
    H = Wh.shape[0]
    dc = np.zeros((B, H))
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H)
    dseq = np.zeros_like(seq)
    for t in range(T - 1, -1, -1):
        h_prev, c_prev, i, f, o, g, tc = steps[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=1)
        dWx += seq[:, t].T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dseq[:, t] = dz @ Wx.T
        dh = dz @ Wh.T
        dc = dc * f
    return (dseq[0] if single else dseq), dWx, dWh, db


def loss_weighted_ce(probs, labels, weights) -> float:
    """Mean over the batch of -w_y log(max(p_y, 1e-12))."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    w = np.asarray(weights, dtype=float)[labels]
    p = probs[np.arange(len(labels)), labels]
    return float(np.mean(-w * np.log(np.maximum(p, PROB_FLOOR))))


# -- model -------------------------------------------------------------------

BRANCHES = {
    "personality": ("include_personality", "personality_width", 5),
    "stimulus": ("include_stimulus", "stimulus_width", 6),
    "environment": ("include_environment", "environment_width", 2),
}


def _active_branches(cfg: ModelConfig):
    return [name for name, (flag, _, _) in BRANCHES.items() if getattr(cfg, flag)]


def fusion_input_width(cfg: ModelConfig) -> int:
    return cfg.lstm_hidden + sum(getattr(cfg, BRANCHES[b][1]) for b in _active_branches(cfg))


def init_params(cfg: ModelConfig, rng) -> dict:
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""

    def glorot(n_in, n_out):
        lim = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-lim, lim, size=(n_in, n_out))

    H = cfg.lstm_hidden
    p = {"lstm_Wx": glorot(cfg.n_channels, 4 * H), "lstm_Wh": glorot(H, 4 * H), "lstm_b": np.zeros(4 * H)}
    p["lstm_b"][H:2 * H] = 1.0
    for name in _active_branches(cfg):
        _, width_attr, n_in = BRANCHES[name]
        width = getattr(cfg, width_attr)
        p[f"{name}_W"] = glorot(n_in, width)
        p[f"{name}_b"] = np.zeros(width)
    p["fuse_W"] = glorot(fusion_input_width(cfg), cfg.fusion_width)
    p["fuse_b"] = np.zeros(cfg.fusion_width)
    p["out_W"] = glorot(cfg.fusion_width, N_CLASSES)
    p["out_b"] = np.zeros(N_CLASSES)
    return p


def parameter_count(cfg: ModelConfig) -> int:
    return sum(v.size for v in init_params(cfg, np.random.default_rng(0)).values())


def branch_parameter_count(cfg: ModelConfig, branch: str) -> int:
    """Branch dense layer plus the fusion-weight rows it feeds."""
    _, width_attr, n_in = BRANCHES[branch]
    width = getattr(cfg, width_attr)
    return n_in * width + width + width * cfg.fusion_width


class FusionNet:
    def __init__(self, cfg: ModelConfig, params: dict | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, np.random.default_rng(seed))
        expected = init_params(cfg, np.random.default_rng(0))
        if set(expected) != set(self.params) or any(
                expected[k].shape != np.shape(self.params[k]) for k in expected):
            raise ValidationError("parameter shapes inconsistent with model config")

    def draw_stochastic(self, n, rng, noise_sigma):
        """Noise and dropout draws for one training forward pass, in a fixed order."""
        cfg = self.cfg
        draws = {}
        if cfg.include_personality:
            draws["personality_noise"] = rng.normal(0.0, 1.0, size=(n, 5)) * noise_sigma
        if cfg.include_environment:
            draws["environment_noise"] = rng.normal(0.0, 1.0, size=(n, 2)) * noise_sigma
        if cfg.dropout_rate > 0:
            keep = rng.random((n, cfg.fusion_width)) >= cfg.dropout_rate
            draws["dropout_mask"] = keep / (1.0 - cfg.dropout_rate)
        return draws

    def forward(self, batch: Batch, mode="eval", rng=None, noise_sigma=0.0, draws=None):
        """Class probabilities (B, 3) and the cache needed by :meth:`backward`.

        Train mode perturbs personality (clamped to [0, 1]) and environment
        inputs with Gaussian noise and applies inverted dropout after fusion.
        ``draws`` pins those random quantities, e.g. for gradient checks.
        """
        cfg, p = self.cfg, self.params
        if batch.sequence.shape[1:] != (batch.sequence.shape[1], cfg.n_channels):
            raise ValidationError(
                f"sequence has {batch.sequence.shape[-1]} channels, model expects {cfg.n_channels}")
        if mode == "train" and draws is None:
            draws = self.draw_stochastic(len(batch), rng, noise_sigma)
        draws = draws if mode == "train" else {}
        h, lstm_cache = lstm_forward(batch.sequence, p["lstm_Wx"], p["lstm_Wh"], p["lstm_b"])
        parts, caches = [h], {}
        inputs = {
            "personality": batch.personality,
            "stimulus": batch.stimulus,
            "environment": batch.environment,
        }
        if "personality_noise" in draws:
            inputs["personality"] = np.clip(inputs["personality"] + draws["personality_noise"], 0.0, 1.0)
        if "environment_noise" in draws:
            inputs["environment"] = inputs["environment"] + draws["environment_noise"]
        for name in _active_branches(cfg):
            a, caches[name] = dense_forward(inputs[name], p[f"{name}_W"], p[f"{name}_b"], "relu")
            parts.append(a)
        fused_in = np.concatenate(parts, axis=1)
        u, fuse_cache = dense_forward(fused_in, p["fuse_W"], p["fuse_b"], "relu")
        mask = draws.get("dropout_mask")
        u_drop = u * mask if mask is not None else u
        logits, out_cache = dense_forward(u_drop, p["out_W"], p["out_b"], "identity")
        probs = softmax(logits)
        cache = dict(lstm=lstm_cache, branches=caches, fuse=fuse_cache, out=out_cache,
                     mask=mask, probs=probs)
        return probs, cache

    def backward(self, cache, labels, weights) -> dict:
        """Exact gradients of the mean weighted cross-entropy w.r.t. every parameter."""
        if cache is None:
            raise ValidationError("backward called without a forward cache")
        cfg, p = self.cfg, self.params
        probs = cache["probs"]
        labels = np.atleast_1d(np.asarray(labels, dtype=int))
        B = len(labels)
        w = np.asarray(weights, dtype=float)[labels]
        onehot = np.eye(N_CLASSES)[labels]
        # floored probabilities have zero derivative
        live = probs[np.arange(B), labels] >= PROB_FLOOR
        dlogits = (w * live)[:, None] * (probs - onehot) / B
        grads = {}
        du_drop, grads["out_W"], grads["out_b"] = dense_backward(dlogits, cache["out"], p["out_W"])
        du = du_drop * cache["mask"] if cache["mask"] is not None else du_drop
        dfused, grads["fuse_W"], grads["fuse_b"] = dense_backward(du, cache["fuse"], p["fuse_W"])
        H = cfg.lstm_hidden
        offset = H
        for name in _active_branches(cfg):
            width = getattr(cfg, BRANCHES[name][1])
            da = dfused[:, offset:offset + width]
            offset += width
            _, grads[f"{name}_W"], grads[f"{name}_b"] = dense_backward(da, cache["branches"][name],
                                                                      p[f"{name}_W"])
        _, grads["lstm_Wx"], grads["lstm_Wh"], grads["lstm_b"] = lstm_backward(
            dfused[:, :H], cache["lstm"], p["lstm_Wx"], p["lstm_Wh"])
        return grads

    def loss(self, batch, weights, **kw) -> float:
        probs, _ = self.forward(batch, **kw)
        return loss_weighted_ce(probs, batch.labels, weights)

    def predict_proba(self, batch: Batch) -> np.ndarray:
        return self.forward(batch, mode="eval")[0]


def fused_forward(record, model: FusionNet, mode="eval", rng=None, noise_sigma=0.0):
    """Probability 3-vector for a single (already scaled) record."""
    probs, _ = model.forward(Batch.from_records([record]), mode=mode, rng=rng, noise_sigma=noise_sigma)
    return probs[0]


def backward(record, label, model: FusionNet, weights, draws=None) -> dict:
    """Gradients for one record; eval-mode forward unless ``draws`` pins train-mode noise."""
    batch = Batch.from_records([record])
    mode = "train" if draws is not None else "eval"
    _, cache = model.forward(batch, mode=mode, draws=draws)
    return model.backward(cache, [int(label)], weights)


# -- optimisation --------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay; biases are not decayed."""

    def __init__(self, params, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            if self.wd and not k.endswith("_b"):
                update = update + self.wd * params[k]
            params[k] -= self.lr * update


@dataclass
class Checkpoint:
    params: dict
    model_config: ModelConfig
    train_config: TrainConfig
    scalers: ScalerParams
    history: list = field(default_factory=list)
    best_epoch: int = 0
    class_weights: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    meta: dict = field(default_factory=dict)   # free-form provenance (feature set, split)

    def model(self) -> FusionNet:
        return FusionNet(self.model_config, self.params)

    def to_json(self) -> str:
        tensors = {}
        for name in sorted(self.params):
            arr = np.ascontiguousarray(self.params[name], dtype="<f8")
            tensors[name] = {"shape": list(arr.shape),
                             "data": base64.b64encode(arr.tobytes()).decode("ascii")}
        envelope = {
            "format": "gazeaffect-checkpoint/1",
            "config": {"model": asdict(self.model_config), "train": asdict(self.train_config)},
            "scalers": self.scalers.to_dict(),
            "class_weights": [float(w) for w in self.class_weights],
            "history": self.history,
            "best_epoch": self.best_epoch,
            "tensors": tensors,
            "meta": self.meta,
        }
        return json.dumps(envelope, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        d = json.loads(text)
        params = {}
        for name, t in d["tensors"].items():
            raw = base64.b64decode(t["data"])
            params[name] = np.frombuffer(raw, dtype="<f8").astype(float).reshape(t["shape"])
        return cls(params=params,
                   model_config=ModelConfig(**d["config"]["model"]),
                   train_config=TrainConfig(**d["config"]["train"]),
                   scalers=ScalerParams.from_dict(d["scalers"]),
                   history=d["history"], best_epoch=d["best_epoch"],
                   class_weights=d["class_weights"], meta=d.get("meta", {}))

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _rng_streams(seed):
    init, shuffle, noise = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(noise))


def evaluate_batch(model: FusionNet, batch: Batch):
    pred = np.argmax(model.predict_proba(batch), axis=1)
    cm = confusion(batch.labels, pred)
    return cm, pred


def train(train_set, val_set, model_cfg: ModelConfig, train_cfg: TrainConfig,
          scalers: ScalerParams | None = None) -> Checkpoint:
    """Fit one model on unscaled records; validation macro F1 drives early stopping.

    Scalers are fitted on ``train_set`` unless given. Returns the parameters of
    the best validation epoch (the earliest one on ties).
    """
    train_set, val_set = list(train_set), list(val_set)
    if not train_set or not val_set:
        raise ValidationError("train and validation sets must be non-empty")
    target = train_cfg.target_label
    scalers = scalers or fit_scalers(train_set)
    tr = Batch.from_records([apply_scalers(r, scalers) for r in train_set], target)
    va = Batch.from_records([apply_scalers(r, scalers) for r in val_set], target)
    weights = class_weights(tr.labels)
    init_rng, shuffle_rng, noise_rng = _rng_streams(train_cfg.seed)
    model = FusionNet(model_cfg, init_params(model_cfg, init_rng))
    opt = AdamW(model.params, train_cfg.learning_rate, train_cfg.weight_decay)

    best_f1, best_epoch, best_params, wait = -np.inf, 0, None, 0
    history = []
    for epoch in range(1, train_cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(tr))
        total = 0.0
        for start in range(0, len(tr), train_cfg.batch_size):
            mb = tr.subset(order[start:start + train_cfg.batch_size])
            probs, cache = model.forward(mb, mode="train", rng=noise_rng, noise_sigma=train_cfg.noise_sigma)
            loss = loss_weighted_ce(probs, mb.labels, weights)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (lr={train_cfg.learning_rate}, "
                    f"dropout={model_cfg.dropout_rate}, weight_decay={train_cfg.weight_decay})")
            opt.step(model.params, model.backward(cache, mb.labels, weights))
            total += loss * len(mb)
        if not all(np.isfinite(v).all() for v in model.params.values()):
            raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}")
        cm, _ = evaluate_batch(model, va)
        val_f1 = macro_f1(cm)
        history.append({"epoch": epoch, "train_loss": total / len(tr), "val_macro_f1": val_f1})
        if val_f1 > best_f1:
            best_f1, best_epoch, wait = val_f1, epoch, 0
            best_params = copy.deepcopy(model.params)
        else:
            wait += 1
            if wait >= train_cfg.patience:
                log.debug("early stop at epoch %d (best %d, F1 %.4f)", epoch, best_epoch, best_f1)
                break
    return Checkpoint(best_params, model_cfg, train_cfg, scalers, history, best_epoch,
                      [float(w) for w in weights])


def predict_batch(checkpoint: Checkpoint, records):
    """Eval-mode class indices and probabilities for unscaled records."""
    records = list(records)
    expected = (N_STEPS, checkpoint.model_config.n_channels)
    for r in records:
        if r.sequence.shape != expected or len(checkpoint.scalers.seq_loc) != expected[1]:
            raise ValidationError(
                f"feature dimension mismatch: checkpoint expects {expected[0]}x{expected[1]} "
                f"(scalers {len(checkpoint.scalers.seq_loc)} channels), "
                f"found {r.sequence.shape[0]}x{r.sequence.shape[1]}")
    model = checkpoint.model()
    batch = Batch.from_records([apply_scalers(r, checkpoint.scalers) for r in records])
    probs = model.predict_proba(batch)
    return np.argmax(probs, axis=1), probs


def predict(checkpoint: Checkpoint, record):
    """ClassBin and probability vector for one unscaled record; ties go to the lower class."""
    from .dataset import ClassBin

    pred, probs = predict_batch(checkpoint, [record])
    return ClassBin(int(pred[0])), probs[0]


# -- grid search ---------------------------------------------------------------

@dataclass
class GridResult:
    learning_rate: float
    dropout: float
    weight_decay: float
    per_class_f1: list
    macro_f1: float
    checkpoint: Checkpoint | None = None


def grid_search(train_set, val_set, model_cfg: ModelConfig, train_cfg: TrainConfig,
                learning_rates=DEFAULT_LEARNING_RATES, dropouts=DEFAULT_DROPOUTS,
                weight_decays=DEFAULT_WEIGHT_DECAYS):
    """Train every (learning rate, dropout, weight decay) cell.

    Returns (best_result, results, failures). Cells that raise are recorded
    in ``failures`` and skipped. Best = highest validation macro F1, ties to
    lower learning rate, then lower dropout, then lower weight decay.
    """
    grid = list(itertools.product(learning_rates, dropouts, weight_decays))
    if not grid:
        raise ValidationError("hyperparameter grid is empty")
    train_set, val_set = list(train_set), list(val_set)
    scalers = fit_scalers(train_set)
    results, failures = [], []
    for lr, dr, wd in grid:
        try:
            ckpt = train(train_set, val_set, replace(model_cfg, dropout_rate=dr),
                         replace(train_cfg, learning_rate=lr, weight_decay=wd), scalers)
        except (TrainingDivergedError, ValidationError, FloatingPointError) as exc:
            log.warning("grid cell lr=%g dropout=%g wd=%g failed: %s", lr, dr, wd, exc)
            failures.append({"learning_rate": lr, "dropout": dr, "weight_decay": wd, "error": str(exc)})
            continue
        pred, _ = predict_batch(ckpt, val_set)
        cm = confusion([int(r.labels[train_cfg.target_label]) for r in val_set], pred)
        f1, _ = per_class_f1(cm)
        results.append(GridResult(lr, dr, wd, f1.tolist(), float(f1.mean()), ckpt))
    if not results:
        return None, results, failures
    best = min(results, key=lambda r: (-r.macro_f1, r.learning_rate, r.dropout, r.weight_decay))
    return best, results, failures
