"""Feed-forward head on precomputed utterance features.

The model is a stack of fully-connected layers with ReLU between them and a
selectable output activation:

* ``softmax``: class probabilities (losses take gradients in the logits);
* ``relu_evidence``, ``softplus_evidence``, ``exp_evidence``: non-negative
  evidence, with ``alpha = evidence + 1`` (losses take gradients in alpha).

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of
shape ``(N, D)`` maps through ``x @ W + b``.  Forward and backward passes,
Adam/SGD, the mini-batch trainer, MC-dropout and bagged ensembles are all
plain numpy.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotations import Dataset
from .losses import IncompatibleTargetError, LossKind, LossSpec, total_loss
from .special_math import stable_softmax

__all__ = [
    "ACTIVATIONS",
    "EVIDENCE_ACTIVATIONS",
    "ModelConfig",
    "TrainConfig",
    "Model",
    "ForwardCache",
    "DimensionError",
    "StaleCacheError",
    "ModelFileError",
    "TrainingError",
    "TrainResult",
    "activate",
    "targets_for",
    "train",
    "mc_dropout_predict",
    "train_ensemble",
    "ensemble_predict",
    "ensemble_train_predict",
    "save_model",
    "load_model",
    "load_models",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
EVIDENCE_ACTIVATIONS = ("relu_evidence", "softplus_evidence", "exp_evidence")
ACTIVATIONS = ("softmax",) + EVIDENCE_ACTIVATIONS
EXP_CLAMP = 10.0


class DimensionError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_outputs: int
    hidden_dims: tuple[int, ...] = (256,)
    output_activation: str = "softmax"
    dropout_rate: float = 0.0
    seed: int = 0
    # initial output bias of evidential heads; keeps ReLU evidence units from starting dead
    evidence_bias: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not np.isfinite(self.evidence_bias):
            raise ValueError("evidence_bias must be finite")
        if self.input_dim < 1 or self.num_outputs < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("layer dimensions must be positive")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(
                f"unknown output activation {self.output_activation!r}; expected one of {ACTIVATIONS}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def is_evidential(self) -> bool:
        return self.output_activation in EVIDENCE_ACTIVATIONS

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.num_outputs]


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec
    batch_size: int = 64
    epochs: int = 20
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    balanced_sampling: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "softmax":
        return stable_softmax(z)
    if name == "relu_evidence":
        return np.maximum(z, 0.0)
    if name == "softplus_evidence":
        return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    if name == "exp_evidence":
        return np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP))
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Elementwise derivative of an evidence activation."""
    if name == "relu_evidence":
        return (z > 0).astype(np.float64)
    if name == "softplus_evidence":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "exp_evidence":
        return np.where(np.abs(z) <= EXP_CLAMP, out, 0.0)
    raise ValueError(f"no elementwise derivative for {name!r}")


@dataclass(eq=False)
class ForwardCache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    masks: list[np.ndarray | None]
    logits: np.ndarray
    output: np.ndarray
    single: bool
    model_id: int
    version: int


class Model:
    """Parameters plus forward/backward passes for a :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig, weights=None, biases=None):
        self.config = config
        dims = config.layer_dims
        if weights is None:
            rng = np.random.default_rng(config.seed)
            weights, biases = [], []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                biases.append(np.zeros(fan_out))
            if config.is_evidential:
                biases[-1][:] = config.evidence_bias
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise DimensionError(
                    f"layer {i}: expected w {(dims[i], dims[i + 1])}, b {(dims[i + 1],)}; "
                    f"got {w.shape}, {b.shape}"
                )
        if len(self.weights) != len(dims) - 1:
            raise DimensionError(f"expected {len(dims) - 1} layers, got {len(self.weights)}")
        self._version = 0

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def touch(self) -> None:
        """Mark parameters as modified; invalidates outstanding caches."""
        self._version += 1

    def copy(self) -> "Model":
        return Model(self.config, copy.deepcopy(self.weights), copy.deepcopy(self.biases))

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.config.input_dim:
            raise DimensionError(
                f"expected input dimension {self.config.input_dim}, got shape {np.shape(x)}"
            )
        return arr, single

    def forward_cached(self, x, dropout_on: bool = False, rng=None) -> ForwardCache:
        a, single = self._as_batch(x)
        cfg = self.config
        rate = cfg.dropout_rate if dropout_on else 0.0
        if rate > 0 and rng is None:
            rng = np.random.default_rng(cfg.seed)
        n_layers = len(self.weights)
        inputs, pre, masks = [], [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            # dropout acts on hidden activations, or on the input of a single-layer head
            if rate > 0 and (i > 0 or n_layers == 1):
                mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
                a = a * mask
            else:
                mask = None
            inputs.append(a)
            masks.append(mask)
            z = a @ w + b
            if i < n_layers - 1:
                pre.append(z)
                a = np.maximum(z, 0.0)
            else:
                logits = z
        output = activate(cfg.output_activation, logits)
        return ForwardCache(inputs, pre, masks, logits, output, single, id(self), self._version)

    def forward(self, x, dropout_on: bool = False, rng=None) -> np.ndarray:
        """Evidence (evidential heads) or probabilities (softmax head)."""
        c = self.forward_cached(x, dropout_on, rng)
        return c.output[0] if c.single else c.output

    def predict_proba(self, x, dropout_on: bool = False, rng=None) -> np.ndarray:
        out = self.forward(x, dropout_on, rng)
        if self.config.is_evidential:
            alpha = out + 1.0
            return alpha / alpha.sum(axis=-1, keepdims=True)
        return out

    def backward(self, cache: ForwardCache, upstream) -> list[np.ndarray]:
        """Parameter gradients, ordered like :attr:`params`.

        ``upstream`` is the loss gradient with respect to the logits for a
        softmax head and with respect to alpha (equivalently evidence) for
        an evidential head.
        """
        if cache.model_id != id(self) or cache.version != self._version:
            raise StaleCacheError("forward cache does not belong to the current parameters")
        g = np.asarray(upstream, dtype=np.float64)
        if cache.single:
            g = g[None, :]
        if g.shape != cache.logits.shape:
            raise DimensionError(f"upstream grad shape {g.shape} != output {cache.logits.shape}")
        if self.config.is_evidential:
            g = g * _activation_grad(self.config.output_activation, cache.logits, cache.output)

        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = cache.inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i == 0:
                break
            g = g @ self.weights[i].T
            if cache.masks[i] is not None:
                g = g * cache.masks[i]
            g = g * (cache.pre[i - 1] > 0)
        return grads


# -- optimisers --------------------------------------------------------------


class _SGD:
    def __init__(self, params, lr):
        self.params, self.lr = params, lr

    def step(self, grads):
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr = params, lr
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training ----------------------------------------------------------------


def targets_for(kind: LossKind, d: Dataset) -> np.ndarray:
    """Training target matrix for a loss kind.

    One-hot majority labels for the classification losses, annotation counts
    for the EDL* losses and soft labels for ``KL_SOFT_LABEL``.
    """
    kind = LossKind(kind)
    if kind in (LossKind.EDL, LossKind.CE_MAJORITY, LossKind.CE_MAJORITY_PLUS):
        labels = d.majority_labels
        if np.any(labels < 0):
            raise IncompatibleTargetError(
                f"{kind.value} needs a majority label for every example; "
                f"{int(np.sum(labels < 0))} examples have tied votes"
            )
        return np.eye(d.num_classes)[labels]
    if kind in (LossKind.EDL_STAR_R1, LossKind.EDL_STAR_R2):
        return d.counts.astype(np.float64)
    return d.soft_labels


def _check_pairing(config: ModelConfig, kind: LossKind, num_targets: int) -> None:
    if kind.is_evidential != config.is_evidential:
        raise IncompatibleTargetError(
            f"loss {kind.value} cannot train a {config.output_activation} head"
        )
    if num_targets != config.num_outputs:
        raise IncompatibleTargetError(
            f"targets have {num_targets} classes but the model has {config.num_outputs} outputs"
        )


def _balanced_batches(groups: np.ndarray, n_batches: int, batch_size: int, rng):
    classes = np.unique(groups)
    members = [np.flatnonzero(groups == c) for c in classes]
    for _ in range(n_batches):
        picks = rng.integers(len(classes), size=batch_size)
        yield np.array([members[c][rng.integers(len(members[c]))] for c in picks])


@dataclass
class TrainResult:
    model: Model
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def _mean_loss(model: Model, spec: LossSpec, x, y, step: int) -> float:
    c = model.forward_cached(x)
    pred = c.output + 1.0 if model.config.is_evidential else c.logits
    return float(np.mean(total_loss(spec, pred, y, step).value))


def train(model: Model, d: Dataset, tc: TrainConfig, val: Dataset | None = None) -> TrainResult:
    """Mini-batch training on a private copy of ``model``.

    Deterministic given ``tc.seed`` and the model's initial parameters.

    Raises:
        IncompatibleTargetError: loss, head and dataset do not fit together.
        TrainingError: the loss became non-finite.
    """
    if len(d) == 0:
        raise ValueError("cannot train on an empty dataset")
    spec = tc.loss
    y = targets_for(spec.kind, d)
    _check_pairing(model.config, spec.kind, y.shape[1])
    y_val = targets_for(spec.kind, val) if val is not None and len(val) else None

    m = model.copy()
    x = d.features
    rng = np.random.default_rng(tc.seed)
    opt = (_Adam if tc.optimizer == "adam" else _SGD)(m.params, tc.learning_rate)
    dropout_on = m.config.dropout_rate > 0
    n = len(d)
    n_batches = math.ceil(n / tc.batch_size)
    result = TrainResult(m)
    step = 0

    for epoch in range(tc.epochs):
        if tc.balanced_sampling:
            batches = _balanced_batches(d.majority_labels, n_batches, tc.batch_size, rng)
        else:
            perm = rng.permutation(n)
            batches = (perm[i : i + tc.batch_size] for i in range(0, n, tc.batch_size))
        total, seen = 0.0, 0
        for idx in batches:
            cache = m.forward_cached(x[idx], dropout_on=dropout_on, rng=rng)
            pred = cache.output + 1.0 if m.config.is_evidential else cache.logits
            finite = bool(np.all(np.isfinite(pred)))
            if finite:
                lv = total_loss(spec, pred, y[idx], step)
                finite = bool(np.all(np.isfinite(lv.value)) and np.all(np.isfinite(lv.grad)))
            if not finite:
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step} "
                    f"(loss={spec.kind.value}, lr={tc.learning_rate}, "
                    f"max |logit|={np.max(np.abs(cache.logits)):.3g})"
                )
            grads = m.backward(cache, lv.grad / len(idx))
            opt.step(grads)
            m.touch()
            total += float(np.sum(lv.value))
            seen += len(idx)
            step += 1
        result.train_loss.append(total / seen)
        if y_val is not None:
            result.val_loss.append(_mean_loss(m, spec, val.features, y_val, step))
    return result


# -- MC dropout and ensembles -------------------------------------------------


def mc_dropout_predict(model: Model, x, passes: int = 100, rng=None):
    """Average of ``passes`` stochastic forward passes with dropout active.

    Returns:
        ``(mean_probs, per_pass_probs)``, the latter with a leading axis of
        length ``passes``.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if rng is None:
        rng = np.random.default_rng(model.config.seed)
    samples = np.stack([model.predict_proba(x, dropout_on=True, rng=rng) for _ in range(passes)])
    return samples.mean(axis=0), samples


def train_ensemble(
    config: ModelConfig,
    d: Dataset,
    tc: TrainConfig,
    members: int = 10,
    bootstrap: bool = True,
) -> list[Model]:
    """Train ``members`` models, each on a seeded bootstrap resample of ``d``."""
    if members < 2:
        raise ValueError("an ensemble needs at least two members")
    if len(d) == 0:
        raise ValueError("cannot train an ensemble on an empty dataset")
    models = []
    for i in range(members):
        if bootstrap:
            rng = np.random.default_rng([tc.seed, i])
            idx = rng.integers(len(d), size=len(d))
            data = d.subset(d.examples[j] for j in idx)
            member_cfg = replace(config, seed=config.seed + i)
            member_tc = replace(tc, seed=tc.seed + i)
        else:
            data, member_cfg, member_tc = d, config, tc
        models.append(train(Model(member_cfg), data, member_tc).model)
    return models


def ensemble_predict(models: Sequence[Model], x) -> np.ndarray:
    return np.mean([m.predict_proba(x) for m in models], axis=0)


def ensemble_train_predict(config, d, tc, x, members: int = 10, bootstrap: bool = True):
    return ensemble_predict(train_ensemble(config, d, tc, members, bootstrap), x)


# -- persistence --------------------------------------------------------------


def _model_dict(m: Model) -> dict:
    cfg = asdict(m.config)
    cfg["hidden_dims"] = list(cfg["hidden_dims"])
    return {
        "config": cfg,
        "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(m.weights, m.biases)],
    }


def _model_from_dict(obj: dict) -> Model:
    try:
        cfg = ModelConfig(**obj["config"])
        layers = obj["layers"]
        weights = [np.asarray(layer["w"], dtype=np.float64) for layer in layers]
        biases = [np.asarray(layer["b"], dtype=np.float64) for layer in layers]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model record: {exc}") from None
    try:
        return Model(cfg, weights, biases)
    except DimensionError as exc:
        raise ModelFileError(f"shape mismatch: {exc}") from None


def save_model(path, model, method: str | None = None) -> None:
    """Write one model, or a list of ensemble members, as JSON."""
    doc: dict = {"format_version": FORMAT_VERSION}
    if method is not None:
        doc["method"] = method
    if isinstance(model, Model):
        doc.update(_model_dict(model))
    else:
        doc["members"] = [_model_dict(m) for m in model]
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def _read(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFileError("model file must hold a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(
            f"unsupported format_version {doc.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    return doc


def load_models(path) -> tuple[list[Model], str | None]:
    """All models in a file (one, or every ensemble member) and the method tag."""
    doc = _read(path)
    if "members" in doc:
        return [_model_from_dict(m) for m in doc["members"]], doc.get("method")
    return [_model_from_dict(doc)], doc.get("method")


def load_model(path) -> Model:
    models, _ = load_models(path)
    if len(models) != 1:
        raise ModelFileError(f"{path} holds {len(models)} ensemble members; use load_models")
    return models[0]
